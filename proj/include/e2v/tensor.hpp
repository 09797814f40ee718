#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "e2v/common.hpp"

namespace e2v {

/// (N, C, D, H, W) extents.
struct Shape5 {
  Index n = 0, c = 0, d = 0, h = 0, w = 0;

  Index numel() const { return n * c * d * h * w; }
  Index volume() const { return d * h * w; }
  Index3 spatial() const { return {d, h, w}; }

  bool operator==(const Shape5&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(d) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Dense rank-5 array, row-major with W fastest.
template <typename Scalar>
class Tensor5 {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor5() = default;
  explicit Tensor5(const Shape5& s) : shape_(s), data_(Vector::Zero(s.numel())) {}
  Tensor5(const Shape5& s, Vector data) : shape_(s), data_(std::move(data)) {
    if (data_.size() != s.numel()) {
      throw Error(Errc::ShapeMismatch, "data length does not match " + s.str());
    }
  }

  static Tensor5 constant(const Shape5& s, Scalar value) {
    return Tensor5(s, Vector::Constant(s.numel(), value));
  }

  const Shape5& shape() const { return shape_; }
  Index size() const { return data_.size(); }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index d, Index h, Index w) { return data_[offset(n, c, d, h, w)]; }
  Scalar operator()(Index n, Index c, Index d, Index h, Index w) const {
    return data_[offset(n, c, d, h, w)];
  }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Index offset(Index n, Index c, Index d, Index h, Index w) const {
    return (((n * shape_.c + c) * shape_.d + d) * shape_.h + h) * shape_.w + w;
  }

  /// Sample n viewed as a C x (D*H*W) matrix.
  MatrixMap sample(Index n) {
    return MatrixMap(ptr() + n * shape_.c * shape_.volume(), shape_.c, shape_.volume());
  }
  ConstMatrixMap sample(Index n) const {
    return ConstMatrixMap(ptr() + n * shape_.c * shape_.volume(), shape_.c, shape_.volume());
  }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor5<Other> cast() const {
    return Tensor5<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  bool operator==(const Tensor5& o) const {
    return shape_ == o.shape_ && data_.size() == o.data_.size() &&
           (data_.size() == 0 || data_ == o.data_);
  }

 private:
  Shape5 shape_;
  Vector data_;
};

/// A learnable value with its gradient accumulator. `rank` is the logical rank
/// stored in checkpoints (5 for kernels, 1 for per-channel vectors kept as
/// 1 x C x 1 x 1 x 1).
template <typename Scalar>
struct Parameter {
  std::string name;
  int rank = 5;
  Tensor5<Scalar> value;
  Tensor5<Scalar> grad;
  bool decay = true;  ///< subject to decoupled weight decay

  Parameter() = default;
  Parameter(std::string name_, const Shape5& shape, int rank_ = 5, bool decay_ = true)
      : name(std::move(name_)), rank(rank_), value(shape), grad(shape), decay(decay_) {}

  void zero_grad() { grad.set_zero(); }

  /// Logical dims as stored in checkpoints.
  std::vector<Index> dims() const {
    const Shape5& s = value.shape();
    if (rank == 1) return {s.c};
    return {s.n, s.c, s.d, s.h, s.w};
  }
};

}  // namespace e2v
