#pragma once

#include <cstdint>
#include <string>

#include "langseg/trainer.hpp"

namespace langseg {

// Covers everything that must agree between training and evaluation for a
// checkpoint to make sense: architecture dims and the vocabulary size.
std::uint64_t model_config_hash(const ModelConfig& cfg, std::size_t vocab_size);

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamState& adam, std::size_t step,
                     std::uint64_t config_hash);

// Restores parameters and optimizer state in place. Throws
// ArtifactMismatchError when the stored hash differs from expected_hash.
std::size_t load_checkpoint(const std::string& path, ParamStore& params,
                            AdamState& adam, std::uint64_t expected_hash);

}  // namespace langseg
