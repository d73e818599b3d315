#pragma once

#include <cstddef>
#include <vector>

#include "langseg/autodiff.hpp"

namespace langseg {

struct EncoderConfig {
  std::size_t feature_width = 32;  // F
  std::size_t levels = 3;          // K
};

// level 0: [F x H x W]; level k halves the spatial dims of level k-1.
using FeaturePyramid = std::vector<Var>;

// Registers image_encoder.level<k>.{weight,bias}; uniform [-a, a] with
// a = sqrt(6 / (fan_in + fan_out)).
void init_image_encoder(ParamStore& params, const EncoderConfig& cfg,
                        SplitMix64& rng);

// level 0 = relu(conv 3->F, 3x3, s1, p1); level k = relu(conv F->F, 3x3, s2, p1).
// img is [3 x H x W] with H, W divisible by 2^(K-1) (checked up front).
FeaturePyramid encode_image(const Var& img, const EncoderConfig& cfg,
                            ParamStore& params);

}  // namespace langseg
