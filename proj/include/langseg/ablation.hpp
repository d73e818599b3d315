#pragma once

#include <string>
#include <vector>

#include "langseg/metrics.hpp"
#include "langseg/trainer.hpp"

namespace langseg {

// Canonical row order of the variant table.
const std::vector<std::string>& ablation_variants();

// Applies one variant's config delta in place:
//   full                 -> no change
//   no_language_loss     -> lambda_triplet = 0
//   no_multi_scale       -> levels = 1, lambda_multi_scale = 0
//   no_language_guidance -> zero_language = true, lambda_triplet = 0
// ConfigError on an unknown name.
void apply_variant(const std::string& name, ModelConfig& model,
                   TrainConfig& train);

// First index of the held-out tail (last 20% of the dataset by index).
std::size_t holdout_begin(std::size_t n);

// Fresh parameters for a run, drawn from the seed's init stream. Shared by
// the train command and the ablation runner so "full" matches a plain run.
void init_run_params(ParamStore& params, const ModelConfig& model,
                     std::size_t vocab_size, std::uint64_t seed);

// Trains each variant from the same seed on the leading 80% of the dataset,
// evaluates on the held-out tail, and leaves per-variant artifacts in
// out_dir/<variant>/. Returns one row per requested variant, in order.
std::vector<ReportRow> run_ablation(const TrainConfig& base_train,
                                    const ModelConfig& base_model,
                                    const std::vector<SegSample>& dataset,
                                    const Vocabulary& vocab,
                                    const std::vector<std::string>& variants,
                                    const std::string& out_dir);

}  // namespace langseg
