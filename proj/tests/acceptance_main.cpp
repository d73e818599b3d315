// End-to-end acceptance harness. Prints one [PASS]/[FAIL] line per numbered
// criterion and exits nonzero if any fail. The training block (criteria 5-7)
// runs twelve full configurations and dominates the runtime; progress goes to
// stderr so the stdout table stays one line per criterion.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "langseg/ablation.hpp"
#include "langseg/checkpoint.hpp"
#include "langseg/gradcheck.hpp"
#include "langseg/metrics.hpp"
#include "langseg/ops.hpp"
#include "langseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace langseg;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// --- micro model shared by criteria 1 and 2 -------------------------------

struct MicroFixture {
  ModelConfig cfg;
  Vocabulary vocab = builtin_vocabulary();
  ParamStore params;
  std::vector<Tensor> images, gts;
  std::vector<TokenSequence> seqs;
  LossWeights weights;

  explicit MicroFixture(std::uint64_t seed = 42) {
    cfg.height = 8;
    cfg.width = 8;
    cfg.feature_width = 6;
    cfg.embed_dim = 8;
    cfg.levels = 2;
    cfg.num_classes = 3;
    init_run_params(params, cfg, vocab.size(), seed);
    SplitMix64 rng(derive_seed(seed, 99));
    const std::vector<std::string> prompts = {"a scene with red circle",
                                              "a scene with blue square"};
    for (std::size_t i = 0; i < 2; ++i) {
      Tensor img({3, cfg.height, cfg.width});
      for (auto& v : img.values()) v = rng.next_double();
      Tensor gt({cfg.height, cfg.width});
      for (auto& v : gt.values()) v = double(rng.next_below(cfg.num_classes));
      images.push_back(std::move(img));
      gts.push_back(std::move(gt));
      seqs.push_back(tokenize(prompts[i], vocab));
    }
  }

  BatchLoss batch(ParamStore& p) {
    std::vector<DecoderOutputs> outs;
    for (std::size_t i = 0; i < images.size(); ++i)
      outs.push_back(forward_model(make_leaf(images[i]), seqs[i], cfg, p));
    return batch_loss(outs, gts, weights);
  }
};

// --- criterion 1 ----------------------------------------------------------

void criterion_gradcheck() {
  const double t0 = now_seconds();
  MicroFixture fx;
  struct Target {
    const char* name;
    std::function<Var(ParamStore&)> fn;
  };
  const std::vector<Target> targets = {
      {"gen", [&](ParamStore& p) { return fx.batch(p).gen; }},
      {"triplet", [&](ParamStore& p) { return fx.batch(p).triplet; }},
      {"seg", [&](ParamStore& p) { return fx.batch(p).seg; }},
      {"multi_scale", [&](ParamStore& p) { return fx.batch(p).multi_scale; }},
      {"total", [&](ParamStore& p) { return fx.batch(p).total; }},
  };
  double worst = 0;
  std::string worst_name;
  bool pass = true;
  for (const Target& t : targets) {
    GradCheckReport r = grad_check(t.fn, fx.params);
    if (r.worst > worst) {
      worst = r.worst;
      worst_name = t.name;
    }
    pass = pass && r.pass;
  }
  const double secs = now_seconds() - t0;
  pass = pass && secs < 60.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "worst rel err %.2e on %s, %.1f s", worst,
                worst_name.c_str(), secs);
  report(1, "gradients match finite differences", pass, buf);
}

// --- criterion 2 ----------------------------------------------------------

void criterion_loss_identities() {
  MicroFixture fx;
  BatchLoss loss = fx.batch(fx.params);
  bool pass = loss.gen.get() == loss.seg.get();
  pass = pass && loss.gen->value[0] == loss.seg->value[0];

  LossWeights w;
  w.lambda_gen = 0.5;
  w.lambda_triplet = 1.0;
  w.lambda_seg = 1.0;
  w.lambda_multi_scale = 0.25;
  LossBreakdown b = loss.values(w);
  const double resum = w.lambda_gen * b.gen + w.lambda_triplet * b.triplet +
                       w.lambda_seg * b.seg + w.lambda_multi_scale * b.multi_scale;
  pass = pass && std::fabs(b.total - resum) <= 1e-12;

  // hinge dead zone: identical positive pair, orthogonal negative pair
  EmbeddingPair pos{Tensor({2}, {1.0, 0.0}), Tensor({2}, {1.0, 0.0})};
  EmbeddingPair neg{Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0})};
  pass = pass && triplet(pos, neg, 0.5) == 0.0;
  // equal distances leave exactly the margin
  pass = pass && triplet(pos, pos, 0.5) == 0.5;

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "gen==seg node, |total-resum|=%.1e, hinge cases exact",
                std::fabs(b.total - resum));
  report(2, "loss identities", pass, buf);
}

// --- criterion 3 ----------------------------------------------------------

void criterion_metric_oracle() {
  SplitMix64 rng(0xacce97);
  bool pass = true;
  std::string why = "200 random pairs match the set oracle";
  for (int trial = 0; trial < 200 && pass; ++trial) {
    const std::size_t h = 1 + rng.next_below(8), w = 1 + rng.next_below(8);
    const std::size_t classes = 2 + rng.next_below(3);
    Tensor gt({h, w}), pred({h, w});
    for (auto& v : gt.values()) v = double(rng.next_below(classes));
    for (auto& v : pred.values()) v = double(rng.next_below(classes));

    ConfusionMatrix cm(classes);
    cm.accumulate(pred, gt);
    MetricReport got = metrics(cm);

    // brute force from pixel sets
    double iou_sum = 0, fg_sum = 0;
    std::size_t present = 0, fg_present = 0, agree = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      std::uint64_t inter = 0, gt_n = 0, pred_n = 0;
      for (std::size_t i = 0; i < h * w; ++i) {
        const bool a = gt[i] == double(c), b = pred[i] == double(c);
        inter += a && b;
        gt_n += a;
        pred_n += b;
      }
      if (gt_n == 0) {
        if (got.class_iou[c] != -1.0) pass = false;
        continue;
      }
      const double iou = double(inter) / double(gt_n + pred_n - inter);
      if (got.class_iou[c] != iou) pass = false;
      iou_sum += iou;
      ++present;
      if (c != 0) {
        fg_sum += iou;
        ++fg_present;
      }
    }
    for (std::size_t i = 0; i < h * w; ++i) agree += gt[i] == pred[i];
    if (got.miou != iou_sum / double(present)) pass = false;
    if (got.pixel_accuracy != double(agree) / double(h * w)) pass = false;
    if (fg_present > 0 && got.mean_class_iou != fg_sum / double(fg_present))
      pass = false;
    if (!pass) why = "mismatch on trial " + std::to_string(trial);
  }

  // worked 2x2 example
  ConfusionMatrix cm(2);
  cm.accumulate(Tensor({2, 2}, {0, 1, 1, 1}), Tensor({2, 2}, {0, 0, 1, 1}));
  MetricReport r = metrics(cm);
  if (r.miou != 7.0 / 12.0 || r.pixel_accuracy != 0.75) {
    pass = false;
    why = "worked 2x2 example off";
  }
  report(3, "metrics equal the brute-force oracle", pass, why);
}

// --- criterion 4 ----------------------------------------------------------

void criterion_normalization() {
  bool pass = true;
  double worst_pixel = 0, worst_weights = 0, worst_hull = 0;

  ModelConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  Vocabulary vocab = builtin_vocabulary();
  ParamStore params;
  init_run_params(params, cfg, vocab.size(), 3);
  SplitMix64 rng(1234);
  Tensor img({3, cfg.height, cfg.width});
  for (auto& v : img.values()) v = rng.next_double();
  DecoderOutputs out = forward_model(make_leaf(img), tokenize("a scene with green triangle", vocab), cfg, params);

  auto check_dist = [&](const Tensor& probs) {
    const std::size_t c = probs.shape()[0], hw = probs.shape()[1] * probs.shape()[2];
    for (std::size_t p = 0; p < hw; ++p) {
      double s = 0;
      for (std::size_t ch = 0; ch < c; ++ch) s += probs[ch * hw + p];
      worst_pixel = std::max(worst_pixel, std::fabs(s - 1.0));
    }
  };
  check_dist(out.mask->value);
  for (const Var& aux : out.aux_masks) check_dist(aux->value);
  pass = pass && worst_pixel <= 1e-12;

  for (std::size_t k = 1; k <= 4; ++k) {
    ParamStore local;
    SplitMix64 r2(derive_seed(77, k));
    local.add("decoder.scale_logits", Tensor::uniform({k}, -2.0, 2.0, r2));
    Tensor w = effective_scale_weights(local, k)->value;
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += w[i];
    worst_weights = std::max(worst_weights, std::fabs(s - 1.0));
  }
  pass = pass && worst_weights <= 1e-12;

  // convexity on random pyramids
  for (int trial = 0; trial < 100; ++trial) {
    SplitMix64 r3(derive_seed(4242, std::uint64_t(trial)));
    const std::size_t k = 1 + r3.next_below(4);
    const std::size_t f = 1 + r3.next_below(3);
    const std::size_t h = 4 + r3.next_below(6), w = 4 + r3.next_below(6);
    ParamStore local;
    local.add("decoder.scale_logits", Tensor::uniform({k}, -2.0, 2.0, r3));
    std::vector<Var> levels;
    std::vector<Tensor> resized;
    for (std::size_t lv = 0; lv < k; ++lv) {
      const std::size_t lh = std::max<std::size_t>(1, h >> lv);
      const std::size_t lw = std::max<std::size_t>(1, w >> lv);
      Tensor t = Tensor::uniform({f, lh, lw}, -5.0, 5.0, r3);
      resized.push_back(kern::bilinear_resize(t, h, w));
      levels.push_back(make_leaf(t));
    }
    Tensor combined = combine_scales(levels, local)->value;
    for (std::size_t i = 0; i < combined.size(); ++i) {
      double lo = resized[0][i], hi = resized[0][i];
      for (std::size_t lv = 1; lv < k; ++lv) {
        lo = std::min(lo, resized[lv][i]);
        hi = std::max(hi, resized[lv][i]);
      }
      const double excess =
          std::max({0.0, lo - combined[i], combined[i] - hi});
      worst_hull = std::max(worst_hull, excess);
    }
  }
  pass = pass && worst_hull <= 1e-9;

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "pixel sum off %.1e, weight sum off %.1e, hull excess %.1e",
                worst_pixel, worst_weights, worst_hull);
  report(4, "distributions and scale weights normalized", pass, buf);
}

// --- criteria 5-7: the training block -------------------------------------

std::vector<SegSample> make_set(std::uint64_t base, std::size_t n, Scenario s) {
  std::vector<SegSample> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i)
    out.push_back(generate_scene(base + i, 64, 64, s));
  return out;
}

struct RunOutcome {
  double clean = 0, occluded = 0, cluttered = 0, lowres = 0;
  double train_seconds = 0;
};

RunOutcome run_case(const std::string& variant, std::uint64_t seed,
                    const std::vector<SegSample>& train_set,
                    const Vocabulary& vocab, const fs::path& dir,
                    const std::vector<SegSample>& holdout,
                    const std::vector<SegSample>& occluded,
                    const std::vector<SegSample>& cluttered,
                    const std::vector<SegSample>& lowres) {
  ModelConfig model;
  TrainConfig tcfg;
  tcfg.seed = seed;
  tcfg.checkpoint_interval = 0;
  apply_variant(variant, model, tcfg);

  ParamStore params;
  init_run_params(params, model, vocab.size(), seed);
  AdamState adam;
  fs::remove_all(dir);

  const double t0 = now_seconds();
  train(tcfg, model, train_set, vocab, params, adam, dir.string(), 0, nullptr);
  RunOutcome out;
  out.train_seconds = now_seconds() - t0;
  out.clean = evaluate(params, model, holdout, vocab).miou;
  out.occluded = evaluate(params, model, occluded, vocab).miou;
  out.cluttered = evaluate(params, model, cluttered, vocab).miou;
  out.lowres = evaluate(params, model, lowres, vocab).miou;
  std::fprintf(stderr,
               "[accept] %-22s seed %llu  clean %.4f occ %.4f clut %.4f low "
               "%.4f  (%.0f s)\n",
               variant.c_str(), (unsigned long long)seed, out.clean,
               out.occluded, out.cluttered, out.lowres, out.train_seconds);
  return out;
}

void criteria_training_block() {
  Vocabulary vocab = builtin_vocabulary();
  const std::vector<SegSample> all = make_set(100, 320, Scenario::clean);
  const std::vector<SegSample> train_set(all.begin(), all.begin() + 256);
  const std::vector<SegSample> holdout(all.begin() + 256, all.end());
  // perturbed twins of the held-out scenes
  const std::vector<SegSample> occluded = make_set(356, 64, Scenario::occluded);
  const std::vector<SegSample> cluttered = make_set(356, 64, Scenario::cluttered);
  const std::vector<SegSample> lowres = make_set(356, 64, Scenario::lowres);

  const fs::path root = fs::temp_directory_path() / "langseg_acceptance";
  const std::vector<std::uint64_t> seeds = {7, 8, 9};
  std::map<std::string, std::map<std::uint64_t, RunOutcome>> runs;
  for (std::uint64_t seed : seeds) {
    for (const std::string& variant : ablation_variants()) {
      runs[variant][seed] =
          run_case(variant, seed, train_set, vocab,
                   root / (variant + "_" + std::to_string(seed)), holdout,
                   occluded, cluttered, lowres);
    }
  }

  // criterion 5: learnability of the full model under the pinned recipe
  {
    const RunOutcome& full7 = runs["full"][7];
    const bool pass = full7.clean >= 0.85 && full7.train_seconds < 1800.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "held-out mIoU %.4f in %.0f s", full7.clean,
                  full7.train_seconds);
    report(5, "full model reaches 0.85 mIoU", pass, buf);
  }

  auto avg = [&](const std::string& variant, auto field) {
    double s = 0;
    for (std::uint64_t seed : seeds) s += runs[variant][seed].*field;
    return s / double(seeds.size());
  };

  // criterion 6: ablation ordering with 0.01 average gaps
  {
    const double full = avg("full", &RunOutcome::clean);
    const double no_ms = avg("no_multi_scale", &RunOutcome::clean);
    const double no_ll = avg("no_language_loss", &RunOutcome::clean);
    const double no_lg = avg("no_language_guidance", &RunOutcome::clean);
    const bool pass = full - no_ms >= 0.01 && full - no_ll >= 0.01 &&
                      no_ll - no_lg >= 0.01;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "full %.4f, no_multi_scale %.4f, no_language_loss %.4f, "
                  "no_language_guidance %.4f",
                  full, no_ms, no_ll, no_lg);
    report(6, "ablation ordering with 0.01 gaps", pass, buf);
  }

  // criterion 7: scenario degradation and the occlusion language gap
  {
    const RunOutcome& full7 = runs["full"][7];
    bool pass = full7.occluded < full7.clean && full7.cluttered < full7.clean &&
                full7.lowres < full7.clean;
    const double occ_gap = avg("full", &RunOutcome::occluded) -
                           avg("no_language_guidance", &RunOutcome::occluded);
    pass = pass && occ_gap >= 0.01;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "clean %.4f vs occ %.4f clut %.4f low %.4f; occluded "
                  "language gap %.4f",
                  full7.clean, full7.occluded, full7.cluttered, full7.lowres,
                  occ_gap);
    report(7, "perturbed scenarios degrade, language helps occlusion", pass, buf);
  }
}

// --- criterion 8 ----------------------------------------------------------

void criterion_determinism() {
  Vocabulary vocab = builtin_vocabulary();
  const std::vector<SegSample> data = make_set(900, 24, Scenario::clean);
  ModelConfig model;
  TrainConfig tcfg;
  tcfg.steps = 30;
  tcfg.seed = 13;
  tcfg.checkpoint_interval = 15;

  const fs::path root = fs::temp_directory_path() / "langseg_accept_det";
  auto run_fresh = [&](const fs::path& dir) {
    ParamStore params;
    init_run_params(params, model, vocab.size(), tcfg.seed);
    AdamState adam;
    fs::remove_all(dir);
    train(tcfg, model, data, vocab, params, adam, dir.string(), 0, nullptr);
  };
  run_fresh(root / "a");
  run_fresh(root / "b");

  bool pass =
      read_bytes(root / "a" / "train_log.csv") == read_bytes(root / "b" / "train_log.csv");
  pass = pass && !read_bytes(root / "a" / "ckpt_30.bin").empty();
  pass = pass && read_bytes(root / "a" / "ckpt_30.bin") == read_bytes(root / "b" / "ckpt_30.bin");

  // resume from the midpoint checkpoint and compare against the straight run
  const fs::path cdir = root / "c";
  fs::remove_all(cdir);
  fs::create_directories(cdir);
  fs::copy_file(root / "a" / "ckpt_15.bin", cdir / "ckpt_15.bin");
  {
    ParamStore params;
    init_run_params(params, model, vocab.size(), tcfg.seed);
    AdamState adam;
    const std::size_t at = load_checkpoint(
        (cdir / "ckpt_15.bin").string(), params, adam,
        model_config_hash(model, vocab.size()));
    // reproduce the log prefix so the resumed file is byte-comparable
    std::ofstream(cdir / "train_log.csv", std::ios::binary)
        << [&] {
             std::string full = read_bytes(root / "a" / "train_log.csv");
             std::size_t lines = 0, cut = 0;
             for (std::size_t i = 0; i < full.size(); ++i)
               if (full[i] == '\n' && ++lines == at + 1) {
                 cut = i + 1;
                 break;
               }
             return full.substr(0, cut);
           }();
    train(tcfg, model, data, vocab, params, adam, cdir.string(), at, nullptr);
  }
  pass = pass && read_bytes(cdir / "ckpt_30.bin") == read_bytes(root / "a" / "ckpt_30.bin");
  pass = pass && read_bytes(cdir / "train_log.csv") == read_bytes(root / "a" / "train_log.csv");
  report(8, "bitwise deterministic training and resume", pass,
         pass ? "logs and checkpoints identical" : "byte mismatch");
}

// --- criterion 9 ----------------------------------------------------------

void criterion_roundtrips() {
  bool pass = true;
  std::string why = "mask bits, image quantization, checkpoint bits all exact";

  std::vector<SegSample> samples;
  for (Scenario s : {Scenario::clean, Scenario::occluded, Scenario::cluttered,
                     Scenario::lowres})
    for (std::uint64_t i = 0; i < 3; ++i)
      samples.push_back(generate_scene(7000 + i, 64, 64, s));

  const fs::path dir = fs::temp_directory_path() / "langseg_accept_rt";
  fs::remove_all(dir);
  write_dataset(samples, dir.string());
  const std::vector<SegSample> back = load_dataset(dir.string());
  if (back.size() != samples.size()) {
    pass = false;
    why = "sample count changed";
  }
  double worst_img = 0;
  for (std::size_t i = 0; pass && i < samples.size(); ++i) {
    if (!tensors_equal(back[i].mask, samples[i].mask)) {
      pass = false;
      why = "mask bits changed";
      break;
    }
    for (std::size_t j = 0; j < samples[i].image.size(); ++j)
      worst_img = std::max(worst_img,
                           std::fabs(back[i].image[j] - samples[i].image[j]));
  }
  if (pass && worst_img > 1.0 / 255.0 + 1e-12) {
    pass = false;
    why = "image error above 1/255";
  }

  // checkpoint roundtrip, with optimizer state populated by a few steps
  if (pass) {
    MicroFixture fx(11);
    TrainConfig tcfg;
    tcfg.steps = 3;
    tcfg.batch_size = 2;
    AdamState adam;
    for (std::size_t step = 1; step <= 3; ++step) {
      BatchLoss loss = fx.batch(fx.params);
      backward(loss.total, fx.params);
      adam.step(fx.params, tcfg);
    }
    const fs::path ck = dir / "rt.bin";
    save_checkpoint(ck.string(), fx.params, adam, 3,
                    model_config_hash(fx.cfg, fx.vocab.size()));
    ParamStore params2;
    init_run_params(params2, fx.cfg, fx.vocab.size(), 11);
    AdamState adam2;
    const std::size_t at = load_checkpoint(
        ck.string(), params2, adam2, model_config_hash(fx.cfg, fx.vocab.size()));
    pass = pass && at == 3 && adam2.t() == adam.t();
    for (const std::string& name : fx.params.names())
      pass = pass && tensors_equal(params2.value(name), fx.params.value(name));
    for (const auto& [name, m] : adam.first_moments())
      pass = pass && tensors_equal(adam2.first_moments().at(name), m);
    for (const auto& [name, v] : adam.second_moments())
      pass = pass && tensors_equal(adam2.second_moments().at(name), v);
    if (!pass) why = "checkpoint state drifted";
  }
  report(9, "dataset and checkpoint roundtrips", pass, why);
}

}  // namespace

int main() {
  criterion_gradcheck();
  criterion_loss_identities();
  criterion_metric_oracle();
  criterion_normalization();
  criteria_training_block();
  criterion_determinism();
  criterion_roundtrips();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
