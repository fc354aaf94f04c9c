#pragma once
// Adadelta with per-parameter accumulators, keyed by parameter name so the
// state survives stage changes where the trainable set is re-derived.

#include <string>
#include <unordered_map>
#include <vector>

#include "clt/common.hpp"
#include "clt/tensor.hpp"

namespace clt {

template <typename Scalar>
class AdadeltaState {
 public:
  AdadeltaState(double rho = 0.95, double eps = 1e-6) : rho_(rho), eps_(eps) {}

  double rho() const { return rho_; }
  double eps() const { return eps_; }

  // One update from the gradient currently stored in p.grad. Frozen
  // parameters are left untouched. Non-finite gradients abort the run:
  // silently clamping them would hide a real modelling defect.
  void step(Parameter<Scalar>& p) {
    if (!p.trainable) return;
    if (!p.grad.all_finite())
      throw DivergenceError("non-finite gradient in parameter " + p.name);
    auto& s = slot(p);
    const Scalar rho = static_cast<Scalar>(rho_);
    const Scalar eps = static_cast<Scalar>(eps_);
    const auto& g = p.grad.raw();
    s.eg2 = rho * s.eg2.array() + (Scalar(1) - rho) * g.array().square();
    typename Tensor<Scalar>::Vec dx =
        -((s.edx2.array() + eps).sqrt() / (s.eg2.array() + eps).sqrt()) * g.array();
    s.edx2 = rho * s.edx2.array() + (Scalar(1) - rho) * dx.array().square();
    p.value.raw() += dx;
    if (!p.value.all_finite())
      throw DivergenceError("parameter " + p.name + " diverged after update");
  }

  void step(const std::vector<Parameter<Scalar>*>& params) {
    for (auto* p : params) step(*p);
  }

 private:
  struct Slot {
    typename Tensor<Scalar>::Vec eg2;
    typename Tensor<Scalar>::Vec edx2;
  };

  Slot& slot(const Parameter<Scalar>& p) {
    auto it = slots_.find(p.name);
    if (it == slots_.end()) {
      Slot s;
      s.eg2 = Tensor<Scalar>::Vec::Zero(p.size());
      s.edx2 = Tensor<Scalar>::Vec::Zero(p.size());
      it = slots_.emplace(p.name, std::move(s)).first;
    }
    if (it->second.eg2.size() != p.size())
      throw ContractViolation("AdadeltaState: size changed for " + p.name);
    return it->second;
  }

  double rho_;
  double eps_;
  std::unordered_map<std::string, Slot> slots_;
};

}  // namespace clt
