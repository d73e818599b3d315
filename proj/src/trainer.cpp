#include "langseg/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "langseg/checkpoint.hpp"
#include "langseg/errors.hpp"
#include "langseg/ops.hpp"

namespace langseg {

namespace fs = std::filesystem;

namespace {

// sub-stream tags; data_synth owns 1..4
constexpr std::uint64_t kStreamShuffle = 11;
constexpr std::uint64_t kStreamAugment = 12;

}  // namespace

const char* schedule_name(Schedule s) {
  return s == Schedule::joint ? "joint" : "alternating";
}

Schedule parse_schedule(const std::string& name) {
  if (name == "joint") return Schedule::joint;
  if (name == "alternating") return Schedule::alternating;
  throw ConfigError("unknown schedule: " + name);
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 2) {
    throw ConfigError("batch size must be at least 2 for in-batch negatives");
  }
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("Adam epsilon must be positive");
  if (!(clip_norm > 0)) throw ConfigError("gradient clip norm must be positive");
  loss.validate();
}

void AdamState::step(ParamStore& params, const TrainConfig& cfg) {
  double sq_norm = 0;
  for (const auto& [name, var] : params) {
    const Tensor& g = params.grad(name);
    for (double v : g.values()) {
      if (!std::isfinite(v)) {
        throw DataError("non-finite gradient in " + name);
      }
      sq_norm += v * v;
    }
  }
  const double norm = std::sqrt(sq_norm);
  const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t_));
  for (const auto& [name, var] : params) {
    Tensor& theta = var->value;
    const Tensor& g = params.grad(name);
    Tensor& m = m_.try_emplace(name, theta.shape()).first->second;
    Tensor& v = v_.try_emplace(name, theta.shape()).first->second;
    if (!m.same_shape(theta)) {
      throw ContractError("Adam moment shape drifted for " + name);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
  params.zero_grad();
}

void AdamState::restore(std::map<std::string, Tensor> m,
                        std::map<std::string, Tensor> v, std::size_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n,
                                       std::size_t batch, std::size_t step) {
  if (n == 0 || batch == 0) throw ContractError("batch_indices: empty input");
  std::vector<std::size_t> out(batch);
  std::vector<std::size_t> perm;
  std::size_t perm_epoch = std::size_t(-1);
  for (std::size_t j = 0; j < batch; ++j) {
    const std::size_t global = step * batch + j;
    const std::size_t epoch = global / n;
    if (epoch != perm_epoch) {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      SplitMix64 rng(derive_seed(seed, kStreamShuffle, epoch));
      for (std::size_t i = n; i > 1; --i) {  // Fisher-Yates
        std::swap(perm[i - 1], perm[rng.next_below(i)]);
      }
      perm_epoch = epoch;
    }
    out[j] = perm[global % n];
  }
  return out;
}

SegSample augment(const SegSample& sample, const AugmentOptions& opts,
                  SplitMix64& rng) {
  SegSample out = sample;
  const std::size_t h = sample.mask.dim(0), w = sample.mask.dim(1);
  const std::size_t hw = h * w;

  if (opts.flip && rng.next_below(2) == 1) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          out.image[c * hw + y * w + x] = sample.image[c * hw + y * w + (w - 1 - x)];
        }
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out.mask[y * w + x] = sample.mask[y * w + (w - 1 - x)];
      }
    }
  }

  if (opts.crop) {
    const std::size_t ch = h * 7 / 8, cw = w * 7 / 8;
    const std::size_t oy = rng.next_below(h - ch + 1);
    const std::size_t ox = rng.next_below(w - cw + 1);
    Tensor img_crop({3, ch, cw});
    Tensor mask_crop({ch, cw});
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < ch; ++y) {
        for (std::size_t x = 0; x < cw; ++x) {
          img_crop[c * ch * cw + y * cw + x] =
              out.image[c * hw + (oy + y) * w + (ox + x)];
        }
      }
    }
    for (std::size_t y = 0; y < ch; ++y) {
      for (std::size_t x = 0; x < cw; ++x) {
        mask_crop[y * cw + x] = out.mask[(oy + y) * w + (ox + x)];
      }
    }
    out.image = kern::bilinear_resize(img_crop, h, w);
    out.mask = kern::nearest_resize_mask(mask_crop, h, w);
  }

  if (opts.jitter) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double s = 0.8 + 0.4 * rng.next_double();
      for (std::size_t i = 0; i < hw; ++i) {
        double v = out.image[c * hw + i] * s;
        out.image[c * hw + i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      }
    }
  }
  return out;
}

namespace {

Var schedule_objective(const BatchLoss& loss, const TrainConfig& cfg,
                       std::size_t step) {
  const LossWeights& w = cfg.loss;
  if (cfg.schedule == Schedule::joint) return loss.total;
  switch ((step - 1) % 3) {
    case 0:  // mask-likelihood phase; multi-scale supervises the same target
      return add(scale(loss.gen, w.lambda_gen),
                 scale(loss.multi_scale, w.lambda_multi_scale));
    case 1:
      return scale(loss.triplet, w.lambda_triplet);
    default:
      return scale(loss.seg, w.lambda_seg);
  }
}

std::string checkpoint_name(std::size_t step) {
  return "ckpt_" + std::to_string(step) + ".bin";
}

}  // namespace

TrainResult train(const TrainConfig& config, const ModelConfig& model,
                  const std::vector<SegSample>& dataset, const Vocabulary& vocab,
                  ParamStore& params, AdamState& adam, const std::string& out_dir,
                  std::size_t start_step, const StepCallback& callback) {
  config.validate();
  if (dataset.empty()) throw DataError("training dataset is empty");
  if (start_step > config.steps) {
    throw ConfigError("resume step is beyond the configured step count");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  const fs::path log_path = fs::path(out_dir) / "train_log.csv";
  std::ofstream log(log_path,
                    start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + log_path.string());
  if (start_step == 0) log << "step,gen,triplet,seg,multi_scale,total\n";

  const std::uint64_t hash = model_config_hash(model, vocab.size());
  const std::size_t n = dataset.size();

  TrainResult result;
  char line[256];
  for (std::size_t step = start_step + 1; step <= config.steps; ++step) {
    const std::vector<std::size_t> idx =
        batch_indices(config.seed, n, config.batch_size, step - 1);
    AugmentOptions aug_opts{config.augment_flip, config.augment_crop,
                            config.augment_jitter};
    std::vector<DecoderOutputs> outputs;
    std::vector<Tensor> gts;
    outputs.reserve(config.batch_size);
    for (std::size_t j = 0; j < config.batch_size; ++j) {
      const std::size_t sample_counter = (step - 1) * config.batch_size + j;
      SplitMix64 rng(derive_seed(config.seed, kStreamAugment, sample_counter));
      SegSample aug = augment(dataset[idx[j]], aug_opts, rng);
      TokenSequence seq = tokenize(aug.prompt, vocab);
      outputs.push_back(
          forward_model(make_leaf(aug.image), seq, model, params));
      gts.push_back(std::move(aug.mask));
    }

    BatchLoss loss = batch_loss(outputs, gts, config.loss);
    LossBreakdown breakdown = loss.values(config.loss);
    if (!std::isfinite(breakdown.total)) {
      std::snprintf(line, sizeof line,
                    "gen=%g triplet=%g seg=%g multi_scale=%g total=%g",
                    breakdown.gen, breakdown.triplet, breakdown.seg,
                    breakdown.multi_scale, breakdown.total);
      throw DataError("non-finite loss at step " + std::to_string(step) + ": " +
                      line);
    }

    backward(schedule_objective(loss, config, step), params);
    adam.step(params, config);

    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  step, breakdown.gen, breakdown.triplet, breakdown.seg,
                  breakdown.multi_scale, breakdown.total);
    log << line;
    if (callback) callback(step, breakdown);

    result.final_step = step;
    result.last = breakdown;
    if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 &&
        step != config.steps) {
      save_checkpoint((fs::path(out_dir) / checkpoint_name(step)).string(),
                      params, adam, step, hash);
    }
  }
  log.flush();

  const std::string final_path =
      (fs::path(out_dir) / checkpoint_name(config.steps)).string();
  save_checkpoint(final_path, params, adam, config.steps, hash);
  result.final_step = config.steps;
  result.checkpoint_path = final_path;
  return result;
}

}  // namespace langseg
