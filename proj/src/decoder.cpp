#include "langseg/decoder.hpp"

#include <cmath>
#include <string>

#include "langseg/errors.hpp"
#include "langseg/ops.hpp"

namespace langseg {

namespace {

Tensor linear_init(std::size_t rows, std::size_t cols, SplitMix64& rng) {
  double a = std::sqrt(6.0 / double(rows + cols));
  return Tensor::uniform({rows, cols}, -a, a, rng);
}

}  // namespace

void init_decoder(ParamStore& params, const ModelConfig& cfg, SplitMix64& rng) {
  const std::size_t f = cfg.feature_width, d = cfg.embed_dim, c = cfg.num_classes;
  for (std::size_t k = 0; k < cfg.levels; ++k) {
    std::string base = "decoder.fuse" + std::to_string(k);
    params.add(base + ".weight", linear_init(f, f + d, rng));
    // slightly positive so the relus start mostly open; dead units rarely
    // recover within a short training budget
    Tensor fuse_bias({f});
    for (auto& v : fuse_bias.values()) v = 0.2;
    params.add(base + ".bias", std::move(fuse_bias));
  }
  params.add("decoder.scale_logits", Tensor({cfg.levels}));
  params.add("decoder.head.weight", linear_init(c, f, rng));
  params.add("decoder.head.bias", Tensor({c}));
  for (std::size_t k = 0; k < cfg.levels; ++k) {
    std::string base = "decoder.aux_head" + std::to_string(k);
    params.add(base + ".weight", linear_init(c, f, rng));
    params.add(base + ".bias", Tensor({c}));
  }
  params.add("triplet.img_proj.weight", linear_init(f, d, rng));
  params.add("triplet.img_proj.bias", Tensor({d}));
}

void init_model(ParamStore& params, const ModelConfig& cfg, std::size_t vocab_size,
                SplitMix64& rng) {
  init_text_encoder(params, vocab_size, cfg.embed_dim, rng);
  init_image_encoder(params, cfg.encoder(), rng);
  init_decoder(params, cfg, rng);
}

Var fuse_level(const Var& feat, const Var& text, ParamStore& params,
               std::size_t level) {
  std::string base = "decoder.fuse" + std::to_string(level);
  return relu(fuse_text_conv(feat, text, params.var(base + ".weight"),
                             params.var(base + ".bias")));
}

Var effective_scale_weights(ParamStore& params, std::size_t levels) {
  Var logits = params.var("decoder.scale_logits");
  if (logits->value.size() != levels) {
    throw ShapeError("decoder.scale_logits has " +
                     std::to_string(logits->value.size()) + " entries, expected " +
                     std::to_string(levels));
  }
  return softmax_channels(reshape(logits, {levels, 1, 1}));
}

Var combine_scales(const std::vector<Var>& fused, ParamStore& params) {
  if (fused.empty()) throw ContractError("combine_scales: empty level list");
  const std::size_t h = fused[0]->value.dim(1), w = fused[0]->value.dim(2);
  std::vector<Var> resized;
  resized.reserve(fused.size());
  for (const Var& level : fused) {
    resized.push_back(bilinear_resize(level, h, w));
  }
  return scale_combine(resized, effective_scale_weights(params, fused.size()));
}

namespace {

Var class_head(const Var& feat, ParamStore& params, const std::string& base) {
  Var w = params.var(base + ".weight");  // [C x F]
  const std::size_t c = w->value.dim(0), f = w->value.dim(1);
  Var logits = add_channel_bias(conv2d(feat, reshape(w, {c, f, 1, 1}), 1, 0),
                                params.var(base + ".bias"));
  return softmax_channels(logits);
}

}  // namespace

DecoderOutputs forward_model(const Var& img, const TokenSequence& seq,
                             const ModelConfig& cfg, ParamStore& params) {
  Var text = cfg.zero_language ? make_leaf(Tensor({cfg.embed_dim}))
                               : encode_text(seq, params);
  FeaturePyramid pyramid = encode_image(img, cfg.encoder(), params);

  std::vector<Var> fused;
  fused.reserve(pyramid.size());
  for (std::size_t k = 0; k < pyramid.size(); ++k) {
    fused.push_back(fuse_level(pyramid[k], text, params, k));
  }

  DecoderOutputs out;
  Var combined = combine_scales(fused, params);
  out.mask = class_head(combined, params, "decoder.head");
  for (std::size_t k = 0; k < fused.size(); ++k) {
    out.aux_masks.push_back(
        class_head(fused[k], params, "decoder.aux_head" + std::to_string(k)));
  }
  out.image_embed = linear(global_avg_pool(pyramid[0]),
                           params.var("triplet.img_proj.weight"),
                           params.var("triplet.img_proj.bias"));
  out.text_embed = text;
  return out;
}

Tensor predict_mask(const Tensor& img, const TokenSequence& seq,
                    const ModelConfig& cfg, ParamStore& params) {
  DecoderOutputs out =
      forward_model(make_leaf(img), seq, cfg, params);
  return out.mask->value;
}

Tensor hard_mask(const Tensor& probs) {
  if (probs.rank() != 3) {
    throw ShapeError("hard_mask expects [C x H x W], got " +
                     shape_to_string(probs.shape()));
  }
  const std::size_t c = probs.dim(0), hw = probs.dim(1) * probs.dim(2);
  Tensor out({probs.dim(1), probs.dim(2)});
  for (std::size_t i = 0; i < hw; ++i) {
    std::size_t best = 0;
    double best_p = probs[i];
    for (std::size_t ch = 1; ch < c; ++ch) {
      double p = probs[ch * hw + i];
      if (p > best_p) {  // strict: ties keep the lower id
        best_p = p;
        best = ch;
      }
    }
    out[i] = double(best);
  }
  return out;
}

}  // namespace langseg
