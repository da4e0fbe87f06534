#pragma once

#include <Eigen/Core>

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wsol/error.hpp"

namespace wsol {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major N-dimensional array. Storage is a flat Eigen vector so
/// element-wise math can be written as Eigen expressions over flat().
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Scalar value) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Constant(shape_size(shape_), value);
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}

  Tensor(Shape shape, std::span<const Scalar> values) : shape_(std::move(shape)) {
    check_shape(shape_);
    if (static_cast<Index>(values.size()) != shape_size(shape_)) {
      throw InvalidArgument("tensor: " + std::to_string(values.size()) +
                            " values for shape " + shape_string(shape_));
    }
    data_ = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const noexcept {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Vector& flat() noexcept { return data_; }
  const Vector& flat() const noexcept { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index i, Index j) { return data_[i * shape_[1] + j]; }
  Scalar operator()(Index i, Index j) const { return data_[i * shape_[1] + j]; }

  Scalar& operator()(Index i, Index j, Index k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Scalar operator()(Index i, Index j, Index k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Rank-2 view as a row-major matrix.
  Eigen::Map<RowMajorMatrix> matrix() {
    require_rank(2);
    return {data_.data(), shape_[0], shape_[1]};
  }
  Eigen::Map<const RowMajorMatrix> matrix() const {
    require_rank(2);
    return {data_.data(), shape_[0], shape_[1]};
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw InvalidArgument("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw InvalidArgument("tensor: non-positive dimension in " + shape_string(shape));
    }
  }
  void require_rank(Index r) const {
    if (rank() != r) {
      throw InvalidArgument("tensor: expected rank " + std::to_string(r) + ", got shape " +
                            shape_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Train-mode normalization uses minibatch statistics and updates the
/// running averages; eval-mode uses the running averages.
enum class Mode { train, eval };

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
};

/// Zero-padded cross-correlation without bias.
/// x: [N,C,H,W], w: [K,C,kh,kw] -> [N,K,H',W'].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, int stride, int pad);

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                    const Tensor<Scalar>& dy, int stride, int pad);

template <typename Scalar>
struct BatchNormParams {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);
  /// Weight of the old running value in the moving average.
  Scalar decay = Scalar(0.9);

  explicit BatchNormParams(Index channels = 1)
      : gamma(Shape{channels}, Scalar(1)),
        beta(Shape{channels}),
        running_mean(Shape{channels}),
        running_var(Shape{channels}, Scalar(1)) {}

  Index channels() const { return gamma.size(); }
};

/// Per-forward state needed by batch_norm_backward.
template <typename Scalar>
struct BatchNormCache {
  Tensor<Scalar> normalized;  // x_hat, same shape as the input
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
};

/// Train mode normalizes with the biased minibatch variance over (N,H,W) and
/// folds the unbiased variance into running_var. Accepts [N,C,H,W] or [N,C].
template <typename Scalar>
Tensor<Scalar> batch_norm_train(const Tensor<Scalar>& x, BatchNormParams<Scalar>& params,
                                BatchNormCache<Scalar>* cache = nullptr);

template <typename Scalar>
Tensor<Scalar> batch_norm_eval(const Tensor<Scalar>& x, const BatchNormParams<Scalar>& params);

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, BatchNormParams<Scalar>& params, Mode mode) {
  return mode == Mode::train ? batch_norm_train(x, params) : batch_norm_eval(x, params);
}

template <typename Scalar>
BatchNormGrads<Scalar> batch_norm_backward(const BatchNormCache<Scalar>& cache,
                                           const BatchNormParams<Scalar>& params,
                                           const Tensor<Scalar>& dy);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y = x;
  y.flat() = x.flat().cwiseMax(Scalar(0));
  return y;
}

/// Gradient passes where the forward input was strictly positive.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
  if (x.shape() != dy.shape()) throw InvalidArgument("relu_backward: shape mismatch");
  Tensor<Scalar> dx = dy;
  dx.flat() = (x.flat().array() > Scalar(0)).select(dy.flat(), Scalar(0));
  return dx;
}

/// Global average pooling [N,K,h,w] -> [N,K].
template <typename Scalar>
Tensor<Scalar> gap(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> gap_backward(const Tensor<Scalar>& dy, Index height, Index width);

template <typename Scalar>
struct LinearParams {
  Tensor<Scalar> weight;  // [K, C]
  Tensor<Scalar> bias;    // [C]
};

template <typename Scalar>
struct LinearGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

/// y = x W + b with x: [N,K], W: [K,C], b: [C].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias);

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                    const Tensor<Scalar>& dy);

template <typename Scalar>
struct SoftmaxCrossEntropy {
  Scalar loss;
  Tensor<Scalar> probs;
};

/// Mean cross-entropy of a row-max-shifted softmax.
template <typename Scalar>
SoftmaxCrossEntropy<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                                  std::span<const int> labels);

/// d(mean loss)/d(logits) = (probs - onehot) / N.
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy_backward(const Tensor<Scalar>& probs,
                                              std::span<const int> labels);

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor<Scalar> out = a;
  out.flat() += b.flat();
  return out;
}

}  // namespace wsol
