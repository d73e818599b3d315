#pragma once

#include <cstddef>
#include <vector>

#include "langseg/image_encoder.hpp"
#include "langseg/text_encoder.hpp"

namespace langseg {

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t feature_width = 32;  // F
  std::size_t embed_dim = 64;      // D
  std::size_t levels = 3;          // K
  std::size_t num_classes = 13;    // C, background = 0
  bool zero_language = false;      // severs the language path when set

  EncoderConfig encoder() const { return {feature_width, levels}; }
};

// Everything the losses need from one forward pass.
struct DecoderOutputs {
  Var mask;                    // [C x H x W] probabilities
  std::vector<Var> aux_masks;  // per level k: [C x H/2^k x W/2^k] probabilities
  Var image_embed;             // [D], pooled level-0 features projected
  Var text_embed;              // [D]
};

// Registers decoder.fuse<k>.{weight,bias}, decoder.scale_logits,
// decoder.head.{weight,bias}, decoder.aux_head<k>.{weight,bias} and
// triplet.img_proj.{weight,bias}.
void init_decoder(ParamStore& params, const ModelConfig& cfg, SplitMix64& rng);

// Registers the complete model: text encoder, image encoder, decoder.
void init_model(ParamStore& params, const ModelConfig& cfg, std::size_t vocab_size,
                SplitMix64& rng);

// Broadcast text across the map, concat on channels, 1x1 conv to F, relu.
Var fuse_level(const Var& feat, const Var& text, ParamStore& params,
               std::size_t level);

// Bilinear-resize every fused level to level-0 resolution and take the
// softmax-weighted sum.
Var combine_scales(const std::vector<Var>& fused, ParamStore& params);

// Softmax-normalized copy of decoder.scale_logits, shape [K x 1 x 1].
Var effective_scale_weights(ParamStore& params, std::size_t levels);

// Full forward pass; requires all init_* parameters present.
DecoderOutputs forward_model(const Var& img, const TokenSequence& seq,
                             const ModelConfig& cfg, ParamStore& params);

// Probability map only (no tape kept by the caller beyond the returned value).
Tensor predict_mask(const Tensor& img, const TokenSequence& seq,
                    const ModelConfig& cfg, ParamStore& params);

// Per-pixel argmax of a [C x H x W] distribution; ties take the lower class id.
Tensor hard_mask(const Tensor& probs);

}  // namespace langseg
