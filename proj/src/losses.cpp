#include "langseg/losses.hpp"

#include <cmath>

#include "langseg/errors.hpp"
#include "langseg/ops.hpp"

namespace langseg {

void LossWeights::validate() const {
  if (lambda_gen < 0 || lambda_triplet < 0 || lambda_seg < 0 ||
      lambda_multi_scale < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(margin > 0)) throw ConfigError("triplet margin must be positive");
  if (!(eps > 0) || eps >= 1e-3) throw ConfigError("eps must lie in (0, 1e-3)");
}

double cosine_dist(const Tensor& u, const Tensor& v) {
  if (!u.same_shape(v)) {
    throw ShapeError("cosine_dist: " + shape_to_string(u.shape()) + " vs " +
                     shape_to_string(v.shape()));
  }
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  if (nu < 1e-12 || nv < 1e-12) return 1.0;
  return 1.0 - dot / (nu * nv);
}

Var seg_ce(const Var& probs, const Tensor& gt, double eps) {
  return nll_mask(probs, gt, eps);
}

Var gen_nll(const Var& probs, const Tensor& gt, double eps) {
  return seg_ce(probs, gt, eps);
}

double triplet(const EmbeddingPair& pos, const EmbeddingPair& neg, double alpha) {
  double d_pos = cosine_dist(pos.image_embed, pos.text_embed);
  double d_neg = cosine_dist(neg.image_embed, neg.text_embed);
  return std::max(0.0, d_pos - d_neg + alpha);
}

Var triplet_term(const Var& pos_image, const Var& pos_text, const Var& neg_image,
                 const Var& neg_text, double alpha) {
  Var d_pos = cosine_distance(pos_image, pos_text);
  Var d_neg = cosine_distance(neg_image, neg_text);
  return relu(add_const(sub(d_pos, d_neg), alpha));
}

Var multi_scale_loss(const std::vector<Var>& per_level_preds, const Tensor& gt,
                     double eps) {
  if (per_level_preds.empty()) {
    throw ContractError("multi_scale_loss: no level predictions");
  }
  std::vector<Var> terms;
  terms.reserve(per_level_preds.size());
  for (const Var& pred : per_level_preds) {
    Tensor gt_k = kern::nearest_resize_mask(gt, pred->value.dim(1),
                                            pred->value.dim(2));
    terms.push_back(nll_mask(pred, gt_k, eps));
  }
  return scale(add_n(terms), 1.0 / double(terms.size()));
}

LossBreakdown total_loss(double gen, double triplet, double seg,
                         double multi_scale, const LossWeights& weights) {
  weights.validate();
  LossBreakdown b;
  b.gen = gen;
  b.triplet = triplet;
  b.seg = seg;
  b.multi_scale = multi_scale;
  b.total = weights.lambda_gen * gen + weights.lambda_triplet * triplet +
            weights.lambda_seg * seg + weights.lambda_multi_scale * multi_scale;
  return b;
}

LossBreakdown BatchLoss::values(const LossWeights& weights) const {
  return total_loss(gen->value.item(), triplet->value.item(), seg->value.item(),
                    multi_scale->value.item(), weights);
}

BatchLoss batch_loss(const std::vector<DecoderOutputs>& outputs,
                     const std::vector<Tensor>& gts, const LossWeights& weights) {
  weights.validate();
  if (outputs.empty() || outputs.size() != gts.size()) {
    throw ContractError("batch_loss: outputs and ground truths must align");
  }
  const std::size_t b = outputs.size();
  std::vector<Var> ce_terms, trip_terms, ms_terms;
  for (std::size_t i = 0; i < b; ++i) {
    ce_terms.push_back(seg_ce(outputs[i].mask, gts[i], weights.eps));
    const DecoderOutputs& neg = outputs[(i + 1) % b];
    trip_terms.push_back(triplet_term(outputs[i].image_embed,
                                      outputs[i].text_embed,
                                      outputs[i].image_embed, neg.text_embed,
                                      weights.margin));
    ms_terms.push_back(multi_scale_loss(outputs[i].aux_masks, gts[i], weights.eps));
  }
  BatchLoss loss;
  double inv = 1.0 / double(b);
  loss.seg = scale(add_n(ce_terms), inv);
  loss.gen = loss.seg;  // same estimator, same node
  loss.triplet = scale(add_n(trip_terms), inv);
  loss.multi_scale = scale(add_n(ms_terms), inv);
  loss.total = add_n({scale(loss.gen, weights.lambda_gen),
                      scale(loss.triplet, weights.lambda_triplet),
                      scale(loss.seg, weights.lambda_seg),
                      scale(loss.multi_scale, weights.lambda_multi_scale)});
  return loss;
}

}  // namespace langseg
