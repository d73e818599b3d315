#pragma once

#include <cstdint>
#include <vector>

#include "langseg/autodiff.hpp"
#include "langseg/tensor.hpp"

namespace langseg {

// ---------------------------------------------------------------------------
// Plain forward kernels (no tape). Shared by the differentiable ops below and
// by code that never needs gradients (augmentation, rendering, evaluation).
// ---------------------------------------------------------------------------
namespace kern {

// a: [m,k], b: [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [Cin,H,W], w: [Cout,Cin,kh,kw], odd kh/kw, stride >= 1, zero padding.
// Cross-correlation; H' = (H + 2p - kh) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad);

// x: [C,H,W] -> [C,outH,outW], align-corners bilinear; same size is a copy.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

// x: [C,H,W] -> [C,outH,outW], nearest neighbor via floor(i * H / outH).
Tensor nearest_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

// mask: [H,W] -> [outH,outW], same index rule as nearest_resize.
Tensor nearest_resize_mask(const Tensor& mask, std::size_t out_h, std::size_t out_w);

// Per-pixel softmax over the channel axis of [C,H,W], max-subtracted.
Tensor softmax_channels(const Tensor& x);

// feat: [F,h,w], text: [D], w: [Co,F+D], b: [Co].
// Equivalent to broadcasting text to every pixel, concatenating along
// channels and applying a 1x1 convolution with bias.
Tensor fuse_text_conv(const Tensor& feat, const Tensor& text, const Tensor& w, const Tensor& b);

}  // namespace kern

// ---------------------------------------------------------------------------
// Differentiable ops. Each registers its backward rule on the tape.
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t pad);
Var bilinear_resize(const Var& x, std::size_t out_h, std::size_t out_w);
Var softmax_channels(const Var& x);

Var add(const Var& a, const Var& b);       // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);       // elementwise
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var add_n(const std::vector<Var>& xs);     // elementwise sum, n >= 1
Var relu(const Var& a);
Var tanh(const Var& a);
Var sum_all(const Var& a);                 // -> scalar
Var reshape(const Var& a, Shape shape);    // size-preserving view copy

// x: [C,H,W], b: [C]; adds b[c] to every pixel of channel c.
Var add_channel_bias(const Var& x, const Var& b);

// x: [n], w: [n,m], b: [m] -> [m]
Var linear(const Var& x, const Var& w, const Var& b);

// table: [V,D]; mean of rows selected by non-pad ids (all-pad -> zeros).
// Throws DataError when an id is out of range.
Var embed_mean(const Var& table, const std::vector<std::size_t>& ids, std::size_t pad_id);

// Broadcast-concat fusion, see kern::fuse_text_conv.
Var fuse_text_conv(const Var& feat, const Var& text, const Var& w, const Var& b);

// x: [F,h,w] -> [F], spatial mean per channel.
Var global_avg_pool(const Var& x);

// maps: K tensors of identical shape, weights: [K] -> weighted sum.
Var scale_combine(const std::vector<Var>& maps, const Var& weights);

// probs: [C,H,W], gt: [H,W] integer class ids.
// -(1/N) * sum_i log(max(probs[gt_i, i], eps)).
Var nll_mask(const Var& probs, const Tensor& gt, double eps);

// u, v: [n] -> scalar in [0,2]; 1 - cos(u,v), exactly 1 when a norm < 1e-12.
Var cosine_distance(const Var& u, const Var& v);

}  // namespace langseg
