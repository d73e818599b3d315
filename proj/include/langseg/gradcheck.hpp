#pragma once

#include <functional>
#include <map>
#include <string>

#include "langseg/autodiff.hpp"

namespace langseg {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // Max coordinates probed per parameter tensor; larger tensors are sampled.
  std::size_t samples_per_param = 64;
  std::uint64_t sample_seed = 0x5eedc0de;
};

struct GradCheckReport {
  std::map<std::string, double> max_rel_err;  // per parameter
  std::string worst_param;
  double worst = 0.0;
  double step = 0.0;
  bool pass = false;
};

// Central-difference check of the tape gradients: relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|) per probed coordinate.
// loss_fn must be a deterministic function of the parameter values; this is
// verified by re-evaluation and violations raise ContractError.
GradCheckReport grad_check(const std::function<Var(ParamStore&)>& loss_fn, ParamStore& params,
                           const GradCheckOptions& opts = {});

std::string format_report(const GradCheckReport& report);

}  // namespace langseg
