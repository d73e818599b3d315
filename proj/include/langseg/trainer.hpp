#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "langseg/data_synth.hpp"
#include "langseg/losses.hpp"

namespace langseg {

enum class Schedule { joint, alternating };

const char* schedule_name(Schedule s);
Schedule parse_schedule(const std::string& name);  // ConfigError on unknown

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 8;
  std::size_t steps = 3000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 7;
  LossWeights loss;
  bool augment_flip = true;
  bool augment_crop = true;
  bool augment_jitter = true;
  Schedule schedule = Schedule::joint;
  std::size_t checkpoint_interval = 1000;  // 0 writes only the final checkpoint
  double clip_norm = 10.0;

  void validate() const;
};

class AdamState {
 public:
  // Clips gradients to the global norm bound, applies one bias-corrected
  // Adam update, zeroes gradients. DataError names any non-finite gradient.
  void step(ParamStore& params, const TrainConfig& cfg);

  std::size_t t() const { return t_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
               std::size_t t);

 private:
  std::map<std::string, Tensor> m_, v_;
  std::size_t t_ = 0;
};

// Deterministic sample order: seeded per-epoch shuffle, consumed batch_size
// at a time with wraparound. Pure function of (seed, n, batch, step).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t n,
                                       std::size_t batch, std::size_t step);

struct AugmentOptions {
  bool flip = true, crop = true, jitter = true;
};

// Flip (p = 0.5, image and mask together), crop to 7/8 and resize back
// (image bilinear, mask nearest), per-channel color jitter in [0.8, 1.2]
// on the image only. Draws come from the supplied stream.
SegSample augment(const SegSample& sample, const AugmentOptions& opts,
                  SplitMix64& rng);

struct TrainResult {
  std::size_t final_step = 0;
  LossBreakdown last;
  std::string checkpoint_path;
};

using StepCallback =
    std::function<void(std::size_t step, const LossBreakdown& loss)>;

// Runs steps start_step+1 .. config.steps, appending to out_dir/train_log.csv
// (fresh header when start_step == 0) and writing out_dir/ckpt_<step>.bin at
// each interval and at the end. The callback, when set, observes every step.
TrainResult train(const TrainConfig& config, const ModelConfig& model,
                  const std::vector<SegSample>& dataset, const Vocabulary& vocab,
                  ParamStore& params, AdamState& adam, const std::string& out_dir,
                  std::size_t start_step = 0, const StepCallback& callback = {});

}  // namespace langseg
