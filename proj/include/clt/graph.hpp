#pragma once
// Reverse-mode differentiation for exactly the operations the models need.
// A Graph is a per-batch tape: ops append nodes in topological order and
// record a backward closure; backward() walks the tape in reverse. Gradients
// w.r.t. Parameters accumulate into Parameter::grad across instances, so one
// optimizer step can consume a whole batch.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "clt/common.hpp"
#include "clt/ops.hpp"
#include "clt/rng.hpp"
#include "clt/tensor.hpp"

namespace clt {

// One convolution width: filters laid out [maps x width*emb_dim], bias [maps].
template <typename Scalar>
struct ConvLayer {
  int width = 0;
  Parameter<Scalar> filters;
  Parameter<Scalar> bias;

  ConvLayer() = default;
  ConvLayer(const std::string& name_prefix, int w, int maps, int emb_dim)
      : width(w),
        filters(name_prefix + ".filters", {maps, w * emb_dim}),
        bias(name_prefix + ".bias", {maps}) {}

  int maps() const { return bias.size(); }
};

template <typename Scalar>
class Graph {
 public:
  using Value = int;
  // A backward closure receives the graph and the id of its own node.
  using BackwardFn = std::function<void(Graph&, Value)>;

  Value leaf(Tensor<Scalar> v) { return append(std::move(v), nullptr); }

  Value append(Tensor<Scalar> v, BackwardFn backward) {
    nodes_.push_back(Node{std::move(v), Tensor<Scalar>(), std::move(backward)});
    return static_cast<Value>(nodes_.size()) - 1;
  }

  const Tensor<Scalar>& value(Value id) const { return nodes_[std::size_t(id)].value; }
  Tensor<Scalar>& grad(Value id) { return nodes_[std::size_t(id)].grad; }
  Scalar scalar(Value id) const { return nodes_[std::size_t(id)].value[0]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Seeds d(root)/d(root) = seed and propagates to every earlier node and
  // into Parameter::grad. The root must be a scalar node.
  void backward(Value root, Scalar seed = Scalar(1)) {
    if (nodes_[std::size_t(root)].value.size() != 1)
      throw ContractViolation("Graph::backward: root must be scalar");
    for (Value i = 0; i <= root; ++i) {
      auto& n = nodes_[std::size_t(i)];
      n.grad = Tensor<Scalar>(n.value.shape());
    }
    nodes_[std::size_t(root)].grad[0] = seed;
    run_backward(root);
  }

  // Propagates from a node whose gradient the caller has already filled in
  // (any shape); earlier nodes get fresh zero gradients.
  void backward_from(Value from) {
    auto& seed = nodes_[std::size_t(from)];
    if (!seed.grad.same_shape(seed.value))
      throw ContractViolation("Graph::backward_from: seed gradient not set");
    for (Value i = 0; i < from; ++i) {
      auto& n = nodes_[std::size_t(i)];
      n.grad = Tensor<Scalar>(n.value.shape());
    }
    run_backward(from);
  }

 private:
  void run_backward(Value from) {
    for (Value i = from; i >= 0; --i) {
      auto& n = nodes_[std::size_t(i)];
      if (n.backward) n.backward(*this, i);
    }
  }

  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Each returns the id of the node it appends.
// ---------------------------------------------------------------------------

// Embedding rows for a (padded) id sequence -> [T x E]. The pad row is frozen:
// no gradient flows back into it.
template <typename Scalar>
typename Graph<Scalar>::Value embed(Graph<Scalar>& g, std::vector<int> ids,
                                    Parameter<Scalar>& table, int pad_id) {
  const int t = static_cast<int>(ids.size());
  const int e = table.value.cols();
  if (t < 1) throw ContractViolation("embed: empty token sequence");
  Tensor<Scalar> out({t, e});
  for (int i = 0; i < t; ++i) {
    const int id = ids[std::size_t(i)];
    if (id < 0 || id >= table.value.rows())
      throw ContractViolation("embed: token id out of vocabulary range");
    out.row(i) = table.value.row(id);
  }
  Parameter<Scalar>* tab = &table;
  return g.append(std::move(out),
                  [ids = std::move(ids), tab, pad_id](Graph<Scalar>& gg,
                                                      typename Graph<Scalar>::Value self) {
                    const auto& go = gg.grad(self);
                    for (int i = 0; i < go.rows(); ++i) {
                      const int id = ids[std::size_t(i)];
                      if (id == pad_id) continue;
                      tab->grad.row(id) += go.row(i);
                    }
                  });
}

// Max-over-time convolution with ReLU, fused across all filter widths.
// For each width h and map m: out = relu(max over valid windows of
// filter . window + bias). Valid windows start at p in [0, min(T-h, real_len-1)]
// so windows made entirely of padding never win. The gradient routes through
// the argmax window only (ties resolved to the lowest window index).
template <typename Scalar>
typename Graph<Scalar>::Value conv1d_maxpool(Graph<Scalar>& g,
                                             typename Graph<Scalar>::Value emb,
                                             std::vector<ConvLayer<Scalar>>& banks,
                                             int real_len) {
  const Tensor<Scalar>& x = g.value(emb);
  const int t = x.rows();
  const int e = x.cols();
  if (real_len < 1) throw ContractViolation("conv1d_maxpool: empty sequence");

  int out_dim = 0;
  for (const auto& bank : banks) {
    if (bank.filters.value.cols() != bank.width * e)
      throw ContractViolation("conv1d_maxpool: filter width x emb_dim mismatch (" +
                              bank.filters.name + ")");
    if (bank.width > t)
      throw ContractViolation("conv1d_maxpool: sequence shorter than filter width");
    out_dim += bank.maps();
  }

  Tensor<Scalar> out({out_dim});
  std::vector<int> argmax(std::size_t(out_dim), 0);
  std::vector<Scalar> peak(std::size_t(out_dim), 0);  // pre-ReLU max response

  int offset = 0;
  typename Tensor<Scalar>::Vec resp;
  for (const auto& bank : banks) {
    const int h = bank.width;
    const int maps = bank.maps();
    const auto f = bank.filters.value.mat();
    const int last = std::min(t - h, real_len - 1);
    for (int p = 0; p <= last; ++p) {
      Eigen::Map<const typename Tensor<Scalar>::Vec> window(x.raw().data() + p * e,
                                                            h * e);
      resp = f * window + bank.bias.value.raw();
      if (p == 0) {
        for (int m = 0; m < maps; ++m) peak[std::size_t(offset + m)] = resp[m];
      } else {
        for (int m = 0; m < maps; ++m) {
          if (resp[m] > peak[std::size_t(offset + m)]) {
            peak[std::size_t(offset + m)] = resp[m];
            argmax[std::size_t(offset + m)] = p;
          }
        }
      }
    }
    for (int m = 0; m < maps; ++m) {
      const Scalar v = peak[std::size_t(offset + m)];
      out[offset + m] = v > Scalar(0) ? v : Scalar(0);
    }
    offset += maps;
  }

  std::vector<ConvLayer<Scalar>>* banks_ptr = &banks;
  return g.append(
      std::move(out),
      [emb, banks_ptr, argmax = std::move(argmax), peak = std::move(peak),
       e](Graph<Scalar>& gg, typename Graph<Scalar>::Value self) {
        const auto& go = gg.grad(self);
        const auto& x = gg.value(emb);
        auto& gx = gg.grad(emb);
        int offset = 0;
        for (auto& bank : *banks_ptr) {
          const int h = bank.width;
          const int maps = bank.maps();
          const auto f = bank.filters.value.mat();
          auto gf = bank.filters.grad.mat();
          for (int m = 0; m < maps; ++m) {
            const Scalar gm = go[offset + m];
            if (gm == Scalar(0) || peak[std::size_t(offset + m)] <= Scalar(0)) continue;
            const int p = argmax[std::size_t(offset + m)];
            Eigen::Map<const typename Tensor<Scalar>::Vec> window(
                x.raw().data() + p * e, h * e);
            gf.row(m) += gm * window.transpose();
            bank.bias.grad[m] += gm;
            gx.raw().segment(p * e, h * e) += gm * f.row(m).transpose();
          }
          offset += maps;
        }
      });
}

// W x + b with W [out x in].
template <typename Scalar>
typename Graph<Scalar>::Value affine(Graph<Scalar>& g, Parameter<Scalar>& w,
                                     typename Graph<Scalar>::Value x,
                                     Parameter<Scalar>& b) {
  const auto& xv = g.value(x);
  if (w.value.cols() != xv.size())
    throw ContractViolation("affine: dimension mismatch (" + w.name + ")");
  Tensor<Scalar> out({w.value.rows()});
  out.raw() = w.value.mat() * xv.raw() + b.value.raw();
  Parameter<Scalar>* wp = &w;
  Parameter<Scalar>* bp = &b;
  return g.append(std::move(out), [x, wp, bp](Graph<Scalar>& gg,
                                              typename Graph<Scalar>::Value self) {
    const auto& go = gg.grad(self);
    const auto& xv = gg.value(x);
    wp->grad.mat().noalias() += go.raw() * xv.raw().transpose();
    bp->grad.raw() += go.raw();
    gg.grad(x).raw().noalias() += wp->value.mat().transpose() * go.raw();
  });
}

template <typename Scalar>
typename Graph<Scalar>::Value tanh_node(Graph<Scalar>& g,
                                        typename Graph<Scalar>::Value x) {
  Tensor<Scalar> out(g.value(x).shape());
  out.raw() = g.value(x).raw().array().tanh();
  return g.append(std::move(out), [x](Graph<Scalar>& gg,
                                      typename Graph<Scalar>::Value self) {
    const auto& y = gg.value(self);
    gg.grad(x).raw().array() +=
        gg.grad(self).raw().array() * (Scalar(1) - y.raw().array().square());
  });
}

// v . x -> scalar node, v a parameter vector.
template <typename Scalar>
typename Graph<Scalar>::Value dot_param(Graph<Scalar>& g, Parameter<Scalar>& v,
                                        typename Graph<Scalar>::Value x) {
  if (v.size() != g.value(x).size())
    throw ContractViolation("dot_param: dimension mismatch (" + v.name + ")");
  Tensor<Scalar> out({1});
  out[0] = v.value.raw().dot(g.value(x).raw());
  Parameter<Scalar>* vp = &v;
  return g.append(std::move(out), [x, vp](Graph<Scalar>& gg,
                                          typename Graph<Scalar>::Value self) {
    const Scalar go = gg.grad(self)[0];
    vp->grad.raw() += go * gg.value(x).raw();
    gg.grad(x).raw() += go * vp->value.raw();
  });
}

// Gathers scalar nodes into one vector node.
template <typename Scalar>
typename Graph<Scalar>::Value stack_scalars(
    Graph<Scalar>& g, std::vector<typename Graph<Scalar>::Value> parts) {
  const int n = static_cast<int>(parts.size());
  Tensor<Scalar> out({n});
  for (int i = 0; i < n; ++i) out[i] = g.scalar(parts[std::size_t(i)]);
  return g.append(std::move(out),
                  [parts = std::move(parts)](Graph<Scalar>& gg,
                                             typename Graph<Scalar>::Value self) {
                    const auto& go = gg.grad(self);
                    for (int i = 0; i < go.size(); ++i)
                      gg.grad(parts[std::size_t(i)])[0] += go[i];
                  });
}

template <typename Scalar>
typename Graph<Scalar>::Value concat2(Graph<Scalar>& g,
                                      typename Graph<Scalar>::Value a,
                                      typename Graph<Scalar>::Value b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  Tensor<Scalar> out({av.size() + bv.size()});
  out.raw().head(av.size()) = av.raw();
  out.raw().tail(bv.size()) = bv.raw();
  return g.append(std::move(out), [a, b](Graph<Scalar>& gg,
                                         typename Graph<Scalar>::Value self) {
    const auto& go = gg.grad(self);
    const int na = gg.value(a).size();
    gg.grad(a).raw() += go.raw().head(na);
    gg.grad(b).raw() += go.raw().tail(go.size() - na);
  });
}

// sum_i weights[i] * segs[i] with weights a vector node over the segments.
template <typename Scalar>
typename Graph<Scalar>::Value weighted_sum(
    Graph<Scalar>& g, std::vector<typename Graph<Scalar>::Value> segs,
    typename Graph<Scalar>::Value weights) {
  const int n = static_cast<int>(segs.size());
  if (n < 1 || g.value(weights).size() != n)
    throw ContractViolation("weighted_sum: weights/segments mismatch");
  Tensor<Scalar> out(g.value(segs[0]).shape());
  for (int i = 0; i < n; ++i)
    out.raw() += g.value(weights)[i] * g.value(segs[std::size_t(i)]).raw();
  return g.append(std::move(out),
                  [segs = std::move(segs), weights](
                      Graph<Scalar>& gg, typename Graph<Scalar>::Value self) {
                    const auto& go = gg.grad(self);
                    const auto& wv = gg.value(weights);
                    auto& gw = gg.grad(weights);
                    for (std::size_t i = 0; i < segs.size(); ++i) {
                      gg.grad(segs[i]).raw() += wv[int(i)] * go.raw();
                      gw[int(i)] += go.raw().dot(gg.value(segs[i]).raw());
                    }
                  });
}

template <typename Scalar>
typename Graph<Scalar>::Value softmax_node(Graph<Scalar>& g,
                                           typename Graph<Scalar>::Value logits) {
  Tensor<Scalar> out = softmax(g.value(logits));
  return g.append(std::move(out), [logits](Graph<Scalar>& gg,
                                           typename Graph<Scalar>::Value self) {
    const auto& y = gg.value(self);
    const auto& go = gg.grad(self);
    const Scalar dot = go.raw().dot(y.raw());
    gg.grad(logits).raw().array() +=
        y.raw().array() * (go.raw().array() - dot);
  });
}

template <typename Scalar>
typename Graph<Scalar>::Value cross_entropy_node(Graph<Scalar>& g,
                                                 typename Graph<Scalar>::Value pred,
                                                 int gold) {
  Tensor<Scalar> out({1});
  out[0] = cross_entropy(g.value(pred), gold);
  return g.append(std::move(out), [pred, gold](Graph<Scalar>& gg,
                                               typename Graph<Scalar>::Value self) {
    const Scalar go = gg.grad(self)[0];
    const Scalar p = gg.value(pred)[gold] + static_cast<Scalar>(kProbFloor);
    gg.grad(pred)[gold] += -go / p;
  });
}

// KL(ref || q) with the reference passed by value: it is detached by
// construction, so gradient flows into q only.
template <typename Scalar>
typename Graph<Scalar>::Value kl_to_ref(Graph<Scalar>& g, Tensor<Scalar> ref,
                                        typename Graph<Scalar>::Value q) {
  Tensor<Scalar> out({1});
  out[0] = kl_divergence(ref, g.value(q));
  return g.append(std::move(out),
                  [ref = std::move(ref), q](Graph<Scalar>& gg,
                                            typename Graph<Scalar>::Value self) {
                    const Scalar go = gg.grad(self)[0];
                    const auto& qv = gg.value(q);
                    auto& gq = gg.grad(q);
                    for (int c = 0; c < ref.size(); ++c) {
                      if (ref[c] <= Scalar(0)) continue;
                      if (qv[c] <= static_cast<Scalar>(kProbFloor)) continue;
                      gq[c] += -go * ref[c] / qv[c];
                    }
                  });
}

template <typename Scalar>
typename Graph<Scalar>::Value add(Graph<Scalar>& g, typename Graph<Scalar>::Value a,
                                  typename Graph<Scalar>::Value b) {
  if (!g.value(a).same_shape(g.value(b)))
    throw ContractViolation("add: shape mismatch");
  Tensor<Scalar> out(g.value(a).shape());
  out.raw() = g.value(a).raw() + g.value(b).raw();
  return g.append(std::move(out), [a, b](Graph<Scalar>& gg,
                                         typename Graph<Scalar>::Value self) {
    gg.grad(a).raw() += gg.grad(self).raw();
    gg.grad(b).raw() += gg.grad(self).raw();
  });
}

template <typename Scalar>
typename Graph<Scalar>::Value scale(Graph<Scalar>& g, typename Graph<Scalar>::Value a,
                                    Scalar k) {
  Tensor<Scalar> out(g.value(a).shape());
  out.raw() = k * g.value(a).raw();
  return g.append(std::move(out), [a, k](Graph<Scalar>& gg,
                                         typename Graph<Scalar>::Value self) {
    gg.grad(a).raw() += k * gg.grad(self).raw();
  });
}

// Mean of scalar nodes; sum when mean == false.
template <typename Scalar>
typename Graph<Scalar>::Value reduce_scalars(
    Graph<Scalar>& g, std::vector<typename Graph<Scalar>::Value> parts, bool mean) {
  if (parts.empty()) throw ContractViolation("reduce_scalars: empty batch");
  Tensor<Scalar> out({1});
  for (auto p : parts) out[0] += g.scalar(p);
  const Scalar w = mean ? Scalar(1) / Scalar(parts.size()) : Scalar(1);
  out[0] *= w;
  return g.append(std::move(out),
                  [parts = std::move(parts), w](Graph<Scalar>& gg,
                                                typename Graph<Scalar>::Value self) {
                    const Scalar go = gg.grad(self)[0] * w;
                    for (auto p : parts) gg.grad(p)[0] += go;
                  });
}

// Inverted dropout as a graph node. Train mode draws one uniform per element;
// eval mode and rate 0 are identity nodes that consume no randomness.
template <typename Scalar>
typename Graph<Scalar>::Value dropout_node(Graph<Scalar>& g,
                                           typename Graph<Scalar>::Value x,
                                           double rate, RunMode mode, Rng* rng) {
  if (mode == RunMode::eval || rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0) throw ContractViolation("dropout: rate must be in [0,1)");
  if (rng == nullptr) throw ContractViolation("dropout: train mode needs an rng");
  const auto& xv = g.value(x);
  Tensor<Scalar> mask(xv.shape());
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (int i = 0; i < mask.size(); ++i)
    mask[i] = rng->uniform() < rate ? Scalar(0) : keep_scale;
  Tensor<Scalar> out(xv.shape());
  out.raw() = xv.raw().cwiseProduct(mask.raw());
  return g.append(std::move(out),
                  [x, mask = std::move(mask)](Graph<Scalar>& gg,
                                              typename Graph<Scalar>::Value self) {
                    gg.grad(x).raw() += gg.grad(self).raw().cwiseProduct(mask.raw());
                  });
}

}  // namespace clt
