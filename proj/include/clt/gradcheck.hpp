#pragma once
// Finite-difference oracle for the analytic gradients. Central differences
// with h = 1e-5 against whatever scalar loss the caller closes over; returns
// the worst relative error and where it occurred. Must run in double: float
// loses too many digits for the |a - n| / max(|a|,|n|,eps) comparison.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "clt/common.hpp"
#include "clt/rng.hpp"
#include "clt/tensor.hpp"

namespace clt {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int probed = 0;
};

// Entries the loss holds fixed by contract (e.g. the PAD embedding row) are
// not parameters; the predicate lets the caller exclude them.
using GradSkip = std::function<bool(const Parameter<double>&, int index)>;

// `loss` must be a deterministic function of the current parameter values and
// leave fresh gradients in each Parameter::grad (typical shape: reset grads,
// build a graph, call backward, return the loss value). probe_count 0 probes
// every coordinate; a positive count samples that many without replacement.
inline GradCheckReport grad_check(const std::vector<Parameter<double>*>& params,
                                  const std::function<double()>& loss,
                                  int probe_count = 0, double h = 1e-5,
                                  std::uint64_t seed = 0,
                                  const GradSkip& skip = nullptr) {
  for (auto* p : params) p->reset_grad();
  const double base = loss();
  if (!std::isfinite(base))
    throw ContractViolation("grad_check: loss is not finite at the start point");
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  std::vector<std::pair<std::size_t, int>> coords;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (int i = 0; i < params[pi]->size(); ++i)
      if (!skip || !skip(*params[pi], i)) coords.emplace_back(pi, i);
  if (probe_count > 0 && probe_count < static_cast<int>(coords.size())) {
    Rng rng(derive_seed(seed, "gradcheck.probe"));
    const auto picks =
        rng.sample_without_replacement(static_cast<int>(coords.size()), probe_count);
    std::vector<std::pair<std::size_t, int>> sampled;
    for (int idx : picks) sampled.push_back(coords[std::size_t(idx)]);
    coords = std::move(sampled);
  }

  GradCheckReport report;
  report.probed = static_cast<int>(coords.size());
  for (const auto& [pi, i] : coords) {
    Parameter<double>& p = *params[pi];
    const double saved = p.value[i];
    p.value[i] = saved + h;
    const double up = loss();
    p.value[i] = saved - h;
    const double down = loss();
    p.value[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    if (!std::isfinite(numeric))
      throw ContractViolation("grad_check: non-finite difference at " + p.name + "[" +
                              std::to_string(i) + "]");
    const double a = analytic[pi][i];
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / scale;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = p.name;
      report.worst_index = i;
      report.analytic = a;
      report.numeric = numeric;
    }
  }
  loss();  // leave gradients consistent with the unperturbed point
  return report;
}

}  // namespace clt
