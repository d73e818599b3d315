#include "doctest.h"

#include <cmath>

#include "langseg/gradcheck.hpp"
#include "langseg/losses.hpp"
#include "langseg/ops.hpp"

using namespace langseg;

namespace {

// [C x H x W] distribution putting probability p on class `hot` and the
// remainder evenly on the others, at every pixel.
Tensor peaked(std::size_t c, std::size_t h, std::size_t w, std::size_t hot,
              double p) {
  Tensor t({c, h, w});
  double rest = c > 1 ? (1.0 - p) / double(c - 1) : 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) {
      t[ch * h * w + i] = ch == hot ? p : rest;
    }
  }
  return t;
}

Tensor unit2(double x, double y) {
  double n = std::sqrt(x * x + y * y);
  return Tensor({2}, {x / n, y / n});
}

}  // namespace

TEST_CASE("seg_ce is zero for a perfect prediction") {
  Tensor pred = peaked(4, 3, 3, 2, 1.0);
  Tensor gt = Tensor::full({3, 3}, 2.0);
  CHECK(seg_ce(make_leaf(pred), gt, 1e-7)->value.item() == 0.0);
}

TEST_CASE("seg_ce of the uniform prediction is ln C") {
  Tensor pred = peaked(4, 2, 2, 0, 0.25);
  Tensor gt({2, 2});
  double v = seg_ce(make_leaf(pred), gt, 1e-7)->value.item();
  CHECK(v == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(v == doctest::Approx(1.3862943611198906).epsilon(1e-12));
}

TEST_CASE("seg_ce floors zero probabilities at eps") {
  Tensor pred = peaked(3, 2, 2, 1, 1.0);  // class 0 gets probability 0
  Tensor gt({2, 2});
  double v = seg_ce(make_leaf(pred), gt, 1e-7)->value.item();
  CHECK(v == doctest::Approx(-std::log(1e-7)).epsilon(1e-12));
  CHECK(v == doctest::Approx(16.11809565095832).epsilon(1e-10));
}

TEST_CASE("seg_ce rejects out-of-range ids naming the pixel") {
  Tensor pred = peaked(3, 2, 2, 0, 1.0);
  Tensor gt({2, 2});
  gt.at(1, 1) = 7.0;
  try {
    seg_ce(make_leaf(pred), gt, 1e-7);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("(1,1)") != std::string::npos);
  }
}

TEST_CASE("gen_nll is seg_ce by definition") {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = Tensor::uniform({5, 4, 4}, -3, 3, rng);
    Tensor pred = kern::softmax_channels(logits);
    Tensor gt({4, 4});
    for (double& v : gt.values()) v = double(rng.next_below(5));
    double a = gen_nll(make_leaf(pred), gt, 1e-7)->value.item();
    double b = seg_ce(make_leaf(pred), gt, 1e-7)->value.item();
    CHECK(a == b);
  }
  Tensor uniform2 = peaked(2, 2, 2, 0, 0.5);
  Tensor gt({2, 2});
  CHECK(gen_nll(make_leaf(uniform2), gt, 1e-7)->value.item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("triplet worked examples") {
  // cos = 0.8 -> d = 0.2; cos = 0.1 -> d = 0.9
  EmbeddingPair pos{unit2(1, 0), unit2(0.8, 0.6)};
  EmbeddingPair neg{unit2(1, 0), unit2(0.1, std::sqrt(0.99))};
  CHECK(triplet(pos, neg, 0.5) == 0.0);

  EmbeddingPair same{unit2(1, 1), unit2(2, -1)};
  CHECK(triplet(same, same, 0.5) == doctest::Approx(0.5).epsilon(1e-12));

  EmbeddingPair parallel{Tensor({2}, {1, 0}), Tensor({2}, {2, 0})};   // d = 0
  EmbeddingPair orthogonal{Tensor({2}, {1, 0}), Tensor({2}, {0, 1})};  // d = 1
  CHECK(triplet(parallel, orthogonal, 0.5) == 0.0);
  CHECK(triplet(orthogonal, parallel, 0.5) ==
        doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("triplet dead zone") {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    EmbeddingPair pos{Tensor::uniform({4}, -1, 1, rng),
                      Tensor::uniform({4}, -1, 1, rng)};
    EmbeddingPair neg{Tensor::uniform({4}, -1, 1, rng),
                      Tensor::uniform({4}, -1, 1, rng)};
    double d_pos = cosine_dist(pos.image_embed, pos.text_embed);
    double d_neg = cosine_dist(neg.image_embed, neg.text_embed);
    double t = triplet(pos, neg, 0.5);
    CHECK(t >= 0.0);
    if (d_neg >= d_pos + 0.5) CHECK(t == 0.0);
  }
}

TEST_CASE("cosine distance bounds and self distance") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor u = Tensor::uniform({5}, -2, 2, rng);
    Tensor v = Tensor::uniform({5}, -2, 2, rng);
    double d = cosine_dist(u, v);
    CHECK(d >= 0.0);
    CHECK(d <= 2.0 + 1e-15);
    CHECK(cosine_dist(u, u) == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK(cosine_dist(Tensor({3}), Tensor({3}, {1, 2, 3})) == 1.0);
}

TEST_CASE("multi_scale_loss with one level matches seg_ce") {
  SplitMix64 rng(4);
  Tensor pred = kern::softmax_channels(Tensor::uniform({3, 4, 4}, -2, 2, rng));
  Tensor gt({4, 4});
  for (double& v : gt.values()) v = double(rng.next_below(3));
  double ms = multi_scale_loss({make_leaf(pred)}, gt, 1e-7)->value.item();
  double ce = seg_ce(make_leaf(pred), gt, 1e-7)->value.item();
  CHECK(ms == doctest::Approx(ce).epsilon(1e-15));
}

TEST_CASE("multi_scale_loss is zero for perfect levels") {
  Tensor gt({4, 4});  // all class 0
  std::vector<Var> preds = {make_leaf(peaked(3, 4, 4, 0, 1.0)),
                            make_leaf(peaked(3, 2, 2, 0, 1.0))};
  CHECK(multi_scale_loss(preds, gt, 1e-7)->value.item() == 0.0);
}

TEST_CASE("multi_scale_loss averages level losses") {
  // constant per-pixel probability e^-1 at level 0 and e^-1/2 at level 1
  // gives per-level CE exactly 1.0 and 0.5, mean 0.75
  Tensor gt({4, 4});
  Tensor l0 = peaked(2, 4, 4, 0, std::exp(-1.0));
  Tensor l1 = peaked(2, 2, 2, 0, std::exp(-0.5));
  double ms =
      multi_scale_loss({make_leaf(l0), make_leaf(l1)}, gt, 1e-7)->value.item();
  CHECK(ms == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("multi_scale_loss downsamples ground truth by nearest neighbor") {
  // gt has class 1 only in the top-left 2x2 block; at level 1 (2x2) the
  // nearest rule maps block corners, so pixel (0,0) keeps class 1
  Tensor gt({4, 4});
  gt.at(0, 0) = 1.0;
  gt.at(0, 1) = 1.0;
  gt.at(1, 0) = 1.0;
  gt.at(1, 1) = 1.0;
  Tensor l1 = peaked(2, 2, 2, 1, 1.0);  // predicts class 1 everywhere
  double ms = multi_scale_loss({make_leaf(l1)}, gt, 1e-7)->value.item();
  // only pixel (0,0) of the downsampled gt is class 1; other three are hit
  // with the eps floor
  double expected = (0.0 + 3.0 * -std::log(1e-7)) / 4.0;
  CHECK(ms == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("total_loss worked examples") {
  LossWeights w;
  w.lambda_gen = 0;
  w.lambda_triplet = 0;
  w.lambda_seg = 0;
  w.lambda_multi_scale = 0;
  CHECK(total_loss(5, 4, 3, 2, w).total == 0.0);

  w = LossWeights{};
  w.lambda_gen = 1;
  w.lambda_triplet = 0;
  w.lambda_seg = 0;
  w.lambda_multi_scale = 0;
  CHECK(total_loss(2.5, 9, 9, 9, w).total == 2.5);

  w.lambda_gen = 0.5;
  w.lambda_triplet = 1;
  w.lambda_seg = 1;
  w.lambda_multi_scale = 0.1;
  LossBreakdown b = total_loss(2, 0.5, 1, 3, w);
  CHECK(b.total == doctest::Approx(2.8).epsilon(1e-12));
  CHECK(std::abs(b.total - (0.5 * b.gen + 1 * b.triplet + 1 * b.seg +
                            0.1 * b.multi_scale)) <= 1e-12);
}

TEST_CASE("total_loss rejects negative weights") {
  LossWeights w;
  w.lambda_triplet = -0.1;
  CHECK_THROWS_AS(total_loss(1, 1, 1, 1, w), ConfigError);
  LossWeights bad_eps;
  bad_eps.eps = 0.5;
  CHECK_THROWS_AS(bad_eps.validate(), ConfigError);
}

TEST_CASE("seg_ce rewards mass on the true class") {
  Tensor gt({1, 1});
  double prev = 1e9;
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    double v = seg_ce(make_leaf(peaked(3, 1, 1, 0, p)), gt, 1e-7)->value.item();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("batch_loss ties the breakdown together") {
  ModelConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.feature_width = 4;
  cfg.embed_dim = 3;
  cfg.levels = 2;
  cfg.num_classes = 3;
  ParamStore params;
  SplitMix64 rng(5);
  init_model(params, cfg, 11, rng);
  LossWeights w;

  std::vector<DecoderOutputs> outs;
  std::vector<Tensor> gts;
  for (int i = 0; i < 3; ++i) {
    TokenSequence seq;
    seq.ids = {2 + std::size_t(i), 5};
    outs.push_back(forward_model(make_leaf(Tensor::uniform({3, 8, 8}, 0, 1, rng)),
                                 seq, cfg, params));
    Tensor gt({8, 8});
    for (double& v : gt.values()) v = double(rng.next_below(3));
    gts.push_back(gt);
  }
  BatchLoss loss = batch_loss(outs, gts, w);
  LossBreakdown b = loss.values(w);

  CHECK(loss.gen.get() == loss.seg.get());  // same node, not merely equal
  CHECK(b.gen == b.seg);
  double expected = w.lambda_gen * b.gen + w.lambda_triplet * b.triplet +
                    w.lambda_seg * b.seg + w.lambda_multi_scale * b.multi_scale;
  CHECK(std::abs(loss.total->value.item() - expected) <= 1e-12);
  CHECK(b.gen >= 0.0);
  CHECK(b.triplet >= 0.0);
  CHECK(b.multi_scale >= 0.0);
}

TEST_CASE("gradients are sound through every loss and the total") {
  ModelConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.feature_width = 3;
  cfg.embed_dim = 3;
  cfg.levels = 2;
  cfg.num_classes = 3;
  ParamStore params;
  SplitMix64 rng(6);
  init_model(params, cfg, 9, rng);
  LossWeights w;

  std::vector<TokenSequence> seqs(2);
  seqs[0].ids = {2, 4};
  seqs[1].ids = {5, 7};
  std::vector<Tensor> imgs = {Tensor::uniform({3, 8, 8}, 0, 1, rng),
                              Tensor::uniform({3, 8, 8}, 0, 1, rng)};
  std::vector<Tensor> gts;
  for (int i = 0; i < 2; ++i) {
    Tensor gt({8, 8});
    for (double& v : gt.values()) v = double(rng.next_below(3));
    gts.push_back(gt);
  }
  auto forward = [&](ParamStore& p) {
    std::vector<DecoderOutputs> outs;
    for (int i = 0; i < 2; ++i) {
      outs.push_back(forward_model(make_leaf(imgs[i]), seqs[i], cfg, p));
    }
    return batch_loss(outs, gts, w);
  };

  GradCheckOptions opts;
  opts.samples_per_param = 10;
  for (int which = 0; which < 4; ++which) {
    auto rep = grad_check(
        [&](ParamStore& p) {
          BatchLoss l = forward(p);
          switch (which) {
            case 0: return l.gen;
            case 1: return l.triplet;
            case 2: return l.multi_scale;
            default: return l.total;
          }
        },
        params, opts);
    CHECK_MESSAGE(rep.pass, format_report(rep));
  }
}
