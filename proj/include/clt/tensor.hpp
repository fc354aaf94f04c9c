#pragma once
// Dense row-major tensors over a flat Eigen vector, and named trainable
// parameters with a gradient accumulator of the same shape.

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "clt/common.hpp"

namespace clt {

template <typename Scalar>
class Tensor {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap = Eigen::Map<
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = Vec::Zero(count(shape_));
  }

  Tensor(std::vector<int> shape, Scalar fill) : shape_(std::move(shape)) {
    data_ = Vec::Constant(count(shape_), fill);
  }

  static Tensor from(std::vector<int> shape, std::initializer_list<Scalar> values) {
    Tensor t(std::move(shape));
    if (static_cast<Eigen::Index>(values.size()) != t.data_.size())
      throw ContractViolation("Tensor::from: element count does not match shape");
    Eigen::Index i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  static Tensor vector(std::initializer_list<Scalar> values) {
    return from({static_cast<int>(values.size())}, values);
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int size() const { return static_cast<int>(data_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

  int rows() const { return require2d(), shape_[0]; }
  int cols() const { return require2d(), shape_[1]; }

  Scalar operator[](int i) const { return data_[i]; }
  Scalar& operator[](int i) { return data_[i]; }
  Scalar at(int r, int c) const { return require2d(), data_[r * shape_[1] + c]; }
  Scalar& at(int r, int c) { return require2d(), data_[r * shape_[1] + c]; }

  Vec& raw() { return data_; }
  const Vec& raw() const { return data_; }

  MatMap mat() { return require2d(), MatMap(data_.data(), shape_[0], shape_[1]); }
  ConstMatMap mat() const {
    return require2d(), ConstMatMap(data_.data(), shape_[0], shape_[1]);
  }

  auto row(int r) { return require2d(), data_.segment(r * shape_[1], shape_[1]); }
  auto row(int r) const { return require2d(), data_.segment(r * shape_[1], shape_[1]); }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  static Eigen::Index count(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d <= 0) throw ContractViolation("Tensor: shape dimensions must be positive");
      n *= d;
    }
    return n;
  }
  void require2d() const {
    if (shape_.size() != 2) throw ContractViolation("Tensor: 2-D access on non-matrix");
  }

  std::vector<int> shape_;
  Vec data_;
};

template <typename Scalar>
struct Parameter {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  std::string name;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string param_name, std::vector<int> shape)
      : value(shape), grad(std::move(shape)), name(std::move(param_name)) {}

  int size() const { return value.size(); }
  void reset_grad() { grad.set_zero(); }
};

}  // namespace clt
