#pragma once

#include <vector>

#include "langseg/decoder.hpp"

namespace langseg {

struct LossWeights {
  double lambda_gen = 0.5;
  double lambda_triplet = 1.0;
  double lambda_seg = 1.0;
  double lambda_multi_scale = 0.25;
  double margin = 0.5;  // triplet alpha
  double eps = 1e-7;    // probability floor inside log

  void validate() const;  // ConfigError on negative lambda, bad margin or eps
};

struct LossBreakdown {
  double gen = 0, triplet = 0, seg = 0, multi_scale = 0, total = 0;
};

struct EmbeddingPair {
  Tensor image_embed;  // [D]
  Tensor text_embed;   // [D]
};

// d(u, v) = 1 - cos(u, v); 1 if either norm < 1e-12.
double cosine_dist(const Tensor& u, const Tensor& v);

// Mean pixel cross-entropy -(1/N) sum log(max(p[gt], eps)).
Var seg_ce(const Var& probs, const Tensor& gt, double eps);

// Identical estimator to seg_ce under the per-pixel factorization of
// P(M | I, L); kept as a separate name so both weights stay tunable.
Var gen_nll(const Var& probs, const Tensor& gt, double eps);

// max(0, d(pos) - d(neg) + alpha) on plain embeddings.
double triplet(const EmbeddingPair& pos, const EmbeddingPair& neg, double alpha);

// Tape version of one triplet term.
Var triplet_term(const Var& pos_image, const Var& pos_text, const Var& neg_image,
                 const Var& neg_text, double alpha);

// (1/K) sum_k seg_ce(pred_k, nearest-downsampled gt, eps).
Var multi_scale_loss(const std::vector<Var>& per_level_preds, const Tensor& gt,
                     double eps);

// total = l1*gen + l2*triplet + l3*seg + l4*multi_scale.
LossBreakdown total_loss(double gen, double triplet, double seg,
                         double multi_scale, const LossWeights& weights);

// One optimization target for a whole batch. gen and seg share a node, so
// their reported values agree bitwise.
struct BatchLoss {
  Var gen, triplet, seg, multi_scale, total;
  LossBreakdown values(const LossWeights& weights) const;
};

// In-batch negatives: sample i pairs its image with the text of sample
// (i+1) mod B; the triplet component is the mean over samples.
BatchLoss batch_loss(const std::vector<DecoderOutputs>& outputs,
                     const std::vector<Tensor>& gts, const LossWeights& weights);

}  // namespace langseg
