#include "langseg/image_encoder.hpp"

#include <cmath>
#include <string>

#include "langseg/errors.hpp"
#include "langseg/ops.hpp"

namespace langseg {

namespace {

Tensor conv_init(std::size_t cout, std::size_t cin, std::size_t k, SplitMix64& rng) {
  double fan_in = double(cin * k * k), fan_out = double(cout * k * k);
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  return Tensor::uniform({cout, cin, k, k}, -a, a, rng);
}

}  // namespace

void init_image_encoder(ParamStore& params, const EncoderConfig& cfg,
                        SplitMix64& rng) {
  if (cfg.levels < 1) throw ConfigError("image encoder needs at least one level");
  for (std::size_t k = 0; k < cfg.levels; ++k) {
    std::size_t cin = k == 0 ? 3 : cfg.feature_width;
    std::string base = "image_encoder.level" + std::to_string(k);
    params.add(base + ".weight", conv_init(cfg.feature_width, cin, 3, rng));
    params.add(base + ".bias", Tensor({cfg.feature_width}));
  }
}

FeaturePyramid encode_image(const Var& img, const EncoderConfig& cfg,
                            ParamStore& params) {
  const Shape& s = img->value.shape();
  if (s.size() != 3 || s[0] != 3) {
    throw ShapeError("encode_image expects [3 x H x W], got " +
                     shape_to_string(s));
  }
  std::size_t div = std::size_t{1} << (cfg.levels - 1);
  if (s[1] % div != 0 || s[2] % div != 0) {
    throw ShapeError("image dims " + std::to_string(s[1]) + "x" +
                     std::to_string(s[2]) + " not divisible by 2^" +
                     std::to_string(cfg.levels - 1));
  }
  FeaturePyramid levels;
  levels.reserve(cfg.levels);
  Var cur = img;
  for (std::size_t k = 0; k < cfg.levels; ++k) {
    std::string base = "image_encoder.level" + std::to_string(k);
    std::size_t stride = k == 0 ? 1 : 2;
    Var conv = conv2d(cur, params.var(base + ".weight"), stride, 1);
    cur = relu(add_channel_bias(conv, params.var(base + ".bias")));
    levels.push_back(cur);
  }
  return levels;
}

}  // namespace langseg
