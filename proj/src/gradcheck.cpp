#include "langseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "langseg/rng.hpp"

namespace langseg {

namespace {

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t limit, std::uint64_t seed) {
  if (size <= limit) {
    std::vector<std::size_t> all(size);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  SplitMix64 rng(seed);
  std::unordered_set<std::size_t> chosen;
  while (chosen.size() < limit) {
    chosen.insert(static_cast<std::size_t>(rng.next_below(size)));
  }
  std::vector<std::size_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(ParamStore&)>& loss_fn, ParamStore& params,
                           const GradCheckOptions& opts) {
  if (opts.h <= 0.0) throw ContractError("grad_check: step size must be positive");

  const double f0 = loss_fn(params)->value.item();
  const double f0_again = loss_fn(params)->value.item();
  if (f0 != f0_again) {
    throw ContractError("grad_check: loss function is not deterministic (" +
                        std::to_string(f0) + " vs " + std::to_string(f0_again) + ")");
  }

  params.zero_grad();
  backward(loss_fn(params), params);
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, var] : params) analytic.emplace(name, var->grad);
  params.zero_grad();

  GradCheckReport report;
  report.step = opts.h;
  std::size_t param_index = 0;
  for (const auto& [name, var] : params) {
    Tensor& value = var->value;
    const Tensor& grad = analytic.at(name);
    double max_err = 0.0;
    const auto coords =
        pick_coords(value.size(), opts.samples_per_param,
                    derive_seed(opts.sample_seed, param_index++));
    for (std::size_t i : coords) {
      const double orig = value[i];
      value[i] = orig + opts.h;
      const double fp = loss_fn(params)->value.item();
      value[i] = orig - opts.h;
      const double fm = loss_fn(params)->value.item();
      value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.h);
      const double a = grad[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, err);
    }
    report.max_rel_err[name] = max_err;
    if (max_err >= report.worst) {
      report.worst = max_err;
      report.worst_param = name;
    }
  }
  report.pass = report.worst <= opts.tol;
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream out;
  out.setf(std::ios::scientific);
  out.precision(3);
  for (const auto& [name, err] : report.max_rel_err) {
    out << "  " << name << "  max_rel_err=" << err << "\n";
  }
  out << (report.pass ? "PASS" : "FAIL") << " worst=" << report.worst << " ("
      << report.worst_param << ") h=" << report.step << "\n";
  return out.str();
}

}  // namespace langseg
