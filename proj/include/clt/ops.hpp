#pragma once
// Forward-only numeric kernels shared by the autodiff graph and by tests.

#include <cmath>

#include "clt/common.hpp"
#include "clt/rng.hpp"
#include "clt/tensor.hpp"

namespace clt {

// Stable softmax (max subtraction). Output is positive and sums to 1.
// Non-finite logits mean the network state has blown up, so that case is
// reported as divergence rather than an API misuse.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  if (logits.size() < 1) throw ContractViolation("softmax: empty input");
  if (!logits.all_finite()) throw DivergenceError("softmax: non-finite logits");
  Tensor<Scalar> out(logits.shape());
  const Scalar m = logits.raw().maxCoeff();
  out.raw() = (logits.raw().array() - m).exp();
  out.raw() /= out.raw().sum();
  return out;
}

// -log(pred[gold] + floor), clamped at 0 so a perfect prediction scores 0.
template <typename Scalar>
Scalar cross_entropy(const Tensor<Scalar>& pred, int gold) {
  if (gold < 0 || gold >= pred.size())
    throw ContractViolation("cross_entropy: gold class out of range");
  const Scalar v = -std::log(pred[gold] + static_cast<Scalar>(kProbFloor));
  return v > Scalar(0) ? v : Scalar(0);
}

// sum_c p_c * log(p_c / max(q_c, floor)), with 0 * log 0 = 0. The value is
// clamped at 0: float rounding can otherwise yield a tiny negative at p == q.
template <typename Scalar>
Scalar kl_divergence(const Tensor<Scalar>& p, const Tensor<Scalar>& q) {
  if (!p.same_shape(q)) throw ContractViolation("kl_divergence: shape mismatch");
  Scalar acc = 0;
  for (int c = 0; c < p.size(); ++c) {
    if (p[c] <= Scalar(0)) continue;
    const Scalar qc = q[c] > static_cast<Scalar>(kProbFloor)
                          ? q[c]
                          : static_cast<Scalar>(kProbFloor);
    acc += p[c] * std::log(p[c] / qc);
  }
  return acc > Scalar(0) ? acc : Scalar(0);
}

// Rescales every row of a 2-D parameter whose l2 norm exceeds c to norm c.
template <typename Scalar>
void maxnorm_constrain(Parameter<Scalar>& w, Scalar c) {
  if (c <= Scalar(0)) throw ContractViolation("maxnorm_constrain: c must be positive");
  auto m = w.value.mat();
  for (int r = 0; r < m.rows(); ++r) {
    const Scalar norm = m.row(r).norm();
    if (norm > c) m.row(r) *= c / norm;
  }
}

// Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate).
// Eval mode (and rate 0) is the identity and consumes no randomness.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double rate, RunMode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractViolation("dropout: rate must be in [0,1)");
  if (mode == RunMode::eval || rate == 0.0) return x;
  Tensor<Scalar> out(x.shape());
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (int i = 0; i < x.size(); ++i)
    out[i] = rng.uniform() < rate ? Scalar(0) : x[i] * keep_scale;
  return out;
}

// Argmax with the lowest index winning ties.
template <typename Scalar>
int argmax_class(const Tensor<Scalar>& dist) {
  int best = 0;
  for (int c = 1; c < dist.size(); ++c)
    if (dist[c] > dist[best]) best = c;
  return best;
}

}  // namespace clt
