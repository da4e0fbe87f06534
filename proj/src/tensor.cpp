#include "wsol/tensor.hpp"

#include <algorithm>
#include <limits>

namespace wsol {
namespace {

struct ConvGeometry {
  Index n, c, h, w;
  Index k, kh, kw;
  Index out_h, out_w;
  int stride, pad;

  Index patch() const { return c * kh * kw; }
  Index pixels() const { return out_h * out_w; }
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& x, const Tensor<Scalar>& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw InvalidArgument("conv2d: expected rank-4 input and weight, got " +
                          shape_string(x.shape()) + " and " + shape_string(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw InvalidArgument("conv2d: input has " + std::to_string(x.dim(1)) +
                          " channels, weight expects " + std::to_string(w.dim(1)));
  }
  if (stride < 1 || pad < 0) throw InvalidArgument("conv2d: stride must be >= 1 and pad >= 0");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
                 0,        0,        stride,   pad};
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw InvalidArgument("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.h + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Output columns j whose source column j*stride + b - pad lies inside [0, w).
struct ValidSpan {
  Index lo, hi;
};

inline ValidSpan valid_span(Index out, Index size, Index offset, int stride) {
  Index lo = 0;
  while (lo < out && lo * stride + offset < 0) ++lo;
  Index hi = out;
  while (hi > lo && (hi - 1) * stride + offset >= size) --hi;
  return {lo, hi};
}

// Unfolds one sample into a [C*kh*kw, out_h*out_w] row-major buffer.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* col) {
  for (Index c = 0; c < g.c; ++c) {
    const Scalar* plane = x + c * g.h * g.w;
    for (Index a = 0; a < g.kh; ++a) {
      for (Index b = 0; b < g.kw; ++b) {
        Scalar* row = col + ((c * g.kh + a) * g.kw + b) * g.pixels();
        const ValidSpan cols = valid_span(g.out_w, g.w, b - g.pad, g.stride);
        for (Index i = 0; i < g.out_h; ++i) {
          const Index src_y = i * g.stride + a - g.pad;
          Scalar* out = row + i * g.out_w;
          if (src_y < 0 || src_y >= g.h) {
            std::fill(out, out + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + src_y * g.w + b - g.pad;
          std::fill(out, out + cols.lo, Scalar(0));
          if (g.stride == 1) {
            std::copy(src + cols.lo, src + cols.hi, out + cols.lo);
          } else {
            for (Index j = cols.lo; j < cols.hi; ++j) out[j] = src[j * g.stride];
          }
          std::fill(out + cols.hi, out + g.out_w, Scalar(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back into one sample, accumulating.
template <typename Scalar>
void col2im(const Scalar* col, const ConvGeometry& g, Scalar* x) {
  for (Index c = 0; c < g.c; ++c) {
    Scalar* plane = x + c * g.h * g.w;
    for (Index a = 0; a < g.kh; ++a) {
      for (Index b = 0; b < g.kw; ++b) {
        const Scalar* row = col + ((c * g.kh + a) * g.kw + b) * g.pixels();
        const ValidSpan cols = valid_span(g.out_w, g.w, b - g.pad, g.stride);
        for (Index i = 0; i < g.out_h; ++i) {
          const Index dst_y = i * g.stride + a - g.pad;
          if (dst_y < 0 || dst_y >= g.h) continue;
          Scalar* dst = plane + dst_y * g.w + b - g.pad;
          const Scalar* in = row + i * g.out_w;
          for (Index j = cols.lo; j < cols.hi; ++j) dst[j * g.stride] += in[j];
        }
      }
    }
  }
}

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

struct ChannelLayout {
  Index n, c, inner;
};

template <typename Scalar>
ChannelLayout channel_layout(const Tensor<Scalar>& x) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  throw InvalidArgument("batch_norm: expected rank 2 or 4, got " + shape_string(x.shape()));
}

template <typename Scalar>
void check_bn(const ChannelLayout& l, const BatchNormParams<Scalar>& p) {
  if (p.channels() != l.c) {
    throw InvalidArgument("batch_norm: " + std::to_string(l.c) + " channels, params have " +
                          std::to_string(p.channels()));
  }
  if (!(p.epsilon > Scalar(0))) throw InvalidArgument("batch_norm: epsilon must be positive");
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, int stride, int pad) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  Tensor<Scalar> y(Shape{g.n, g.k, g.out_h, g.out_w});
  Eigen::Map<const RowMat<Scalar>> weight(w.data(), g.k, g.patch());
  RowMat<Scalar> col;
  if (!is_pointwise(g)) col.resize(g.patch(), g.pixels());
  for (Index n = 0; n < g.n; ++n) {
    const Scalar* xn = x.data() + n * g.c * g.h * g.w;
    Eigen::Map<RowMat<Scalar>> yn(y.data() + n * g.k * g.pixels(), g.k, g.pixels());
    if (is_pointwise(g)) {
      yn.noalias() = weight * Eigen::Map<const RowMat<Scalar>>(xn, g.c, g.pixels());
    } else {
      im2col(xn, g, col.data());
      yn.noalias() = weight * col;
    }
  }
  return y;
}

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                    const Tensor<Scalar>& dy, int stride, int pad) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  if (dy.shape() != Shape{g.n, g.k, g.out_h, g.out_w}) {
    throw InvalidArgument("conv2d_backward: upstream gradient has shape " +
                          shape_string(dy.shape()));
  }
  Conv2dGrads<Scalar> grads{Tensor<Scalar>(x.shape()), Tensor<Scalar>(w.shape())};
  Eigen::Map<const RowMat<Scalar>> weight(w.data(), g.k, g.patch());
  Eigen::Map<RowMat<Scalar>> dweight(grads.weight.data(), g.k, g.patch());
  RowMat<Scalar> col(g.patch(), g.pixels());
  RowMat<Scalar> dcol(g.patch(), g.pixels());
  for (Index n = 0; n < g.n; ++n) {
    const Scalar* xn = x.data() + n * g.c * g.h * g.w;
    Scalar* dxn = grads.input.data() + n * g.c * g.h * g.w;
    Eigen::Map<const RowMat<Scalar>> dyn(dy.data() + n * g.k * g.pixels(), g.k, g.pixels());
    if (is_pointwise(g)) {
      Eigen::Map<const RowMat<Scalar>> xmat(xn, g.c, g.pixels());
      dweight.noalias() += dyn * xmat.transpose();
      Eigen::Map<RowMat<Scalar>>(dxn, g.c, g.pixels()).noalias() = weight.transpose() * dyn;
    } else {
      im2col(xn, g, col.data());
      dweight.noalias() += dyn * col.transpose();
      dcol.noalias() = weight.transpose() * dyn;
      col2im(dcol.data(), g, dxn);
    }
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> batch_norm_train(const Tensor<Scalar>& x, BatchNormParams<Scalar>& params,
                                BatchNormCache<Scalar>* cache) {
  const ChannelLayout l = channel_layout(x);
  check_bn(l, params);
  const Index count = l.n * l.inner;
  if (count < 2) {
    throw DegenerateBatch("batch_norm: train mode needs at least 2 values per channel, got " +
                          std::to_string(count));
  }
  Tensor<Scalar> y(x.shape());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(l.c);
  for (Index c = 0; c < l.c; ++c) {
    Scalar sum = 0;
    for (Index n = 0; n < l.n; ++n) {
      const Scalar* p = x.data() + (n * l.c + c) * l.inner;
      for (Index i = 0; i < l.inner; ++i) sum += p[i];
    }
    const Scalar mean = sum / Scalar(count);
    Scalar sq = 0;
    for (Index n = 0; n < l.n; ++n) {
      const Scalar* p = x.data() + (n * l.c + c) * l.inner;
      for (Index i = 0; i < l.inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const Scalar var = sq / Scalar(count);
    inv_std[c] = Scalar(1) / std::sqrt(var + params.epsilon);
    for (Index n = 0; n < l.n; ++n) {
      const Index off = (n * l.c + c) * l.inner;
      for (Index i = 0; i < l.inner; ++i) y[off + i] = (x[off + i] - mean) * inv_std[c];
    }
    params.running_mean[c] = params.decay * params.running_mean[c] + (1 - params.decay) * mean;
    params.running_var[c] = params.decay * params.running_var[c] +
                            (1 - params.decay) * (sq / Scalar(count - 1));
  }
  if (cache) {
    cache->normalized = y;
    cache->inv_std = inv_std;
  }
  for (Index n = 0; n < l.n; ++n) {
    for (Index c = 0; c < l.c; ++c) {
      const Index off = (n * l.c + c) * l.inner;
      y.flat().segment(off, l.inner).array() =
          y.flat().segment(off, l.inner).array() * params.gamma[c] + params.beta[c];
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> batch_norm_eval(const Tensor<Scalar>& x, const BatchNormParams<Scalar>& params) {
  const ChannelLayout l = channel_layout(x);
  check_bn(l, params);
  Tensor<Scalar> y(x.shape());
  for (Index c = 0; c < l.c; ++c) {
    if (params.running_var[c] < Scalar(0)) {
      throw InvalidArgument("batch_norm: negative running variance");
    }
    const Scalar scale = params.gamma[c] / std::sqrt(params.running_var[c] + params.epsilon);
    const Scalar shift = params.beta[c] - params.running_mean[c] * scale;
    for (Index n = 0; n < l.n; ++n) {
      const Index off = (n * l.c + c) * l.inner;
      y.flat().segment(off, l.inner).array() = x.flat().segment(off, l.inner).array() * scale + shift;
    }
  }
  return y;
}

template <typename Scalar>
BatchNormGrads<Scalar> batch_norm_backward(const BatchNormCache<Scalar>& cache,
                                           const BatchNormParams<Scalar>& params,
                                           const Tensor<Scalar>& dy) {
  if (cache.normalized.empty()) throw MissingCache("batch_norm_backward: no cached forward");
  if (dy.shape() != cache.normalized.shape()) {
    throw InvalidArgument("batch_norm_backward: shape mismatch");
  }
  const ChannelLayout l = channel_layout(dy);
  check_bn(l, params);
  const Scalar count = Scalar(l.n * l.inner);
  BatchNormGrads<Scalar> grads{Tensor<Scalar>(dy.shape()), Tensor<Scalar>(Shape{l.c}),
                               Tensor<Scalar>(Shape{l.c})};
  const Tensor<Scalar>& xhat = cache.normalized;
  for (Index c = 0; c < l.c; ++c) {
    Scalar sum_dy = 0;
    Scalar sum_dy_xhat = 0;
    for (Index n = 0; n < l.n; ++n) {
      const Index off = (n * l.c + c) * l.inner;
      for (Index i = 0; i < l.inner; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat[off + i];
      }
    }
    grads.beta[c] = sum_dy;
    grads.gamma[c] = sum_dy_xhat;
    const Scalar k = params.gamma[c] * cache.inv_std[c] / count;
    for (Index n = 0; n < l.n; ++n) {
      const Index off = (n * l.c + c) * l.inner;
      for (Index i = 0; i < l.inner; ++i) {
        grads.input[off + i] = k * (count * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
      }
    }
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> gap(const Tensor<Scalar>& x) {
  if (x.rank() != 4) throw InvalidArgument("gap: expected rank 4, got " + shape_string(x.shape()));
  const Index n = x.dim(0), k = x.dim(1), inner = x.dim(2) * x.dim(3);
  Tensor<Scalar> y(Shape{n, k});
  for (Index i = 0; i < n * k; ++i) {
    y[i] = x.flat().segment(i * inner, inner).sum() / Scalar(inner);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> gap_backward(const Tensor<Scalar>& dy, Index height, Index width) {
  if (dy.rank() != 2) throw InvalidArgument("gap_backward: expected rank-2 gradient");
  const Index inner = height * width;
  Tensor<Scalar> dx(Shape{dy.dim(0), dy.dim(1), height, width});
  for (Index i = 0; i < dy.size(); ++i) {
    dx.flat().segment(i * inner, inner).setConstant(dy[i] / Scalar(inner));
  }
  return dx;
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || x.dim(1) != weight.dim(0) ||
      bias.dim(0) != weight.dim(1)) {
    throw InvalidArgument("linear: incompatible shapes x" + shape_string(x.shape()) + " W" +
                          shape_string(weight.shape()) + " b" + shape_string(bias.shape()));
  }
  Tensor<Scalar> y(Shape{x.dim(0), weight.dim(1)});
  y.matrix().noalias() = x.matrix() * weight.matrix();
  y.matrix().rowwise() += bias.flat().transpose();
  return y;
}

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                    const Tensor<Scalar>& dy) {
  if (x.rank() != 2 || dy.rank() != 2 || x.dim(0) != dy.dim(0) || x.dim(1) != weight.dim(0) ||
      dy.dim(1) != weight.dim(1)) {
    throw InvalidArgument("linear_backward: incompatible shapes");
  }
  LinearGrads<Scalar> grads{Tensor<Scalar>(x.shape()), Tensor<Scalar>(weight.shape()),
                            Tensor<Scalar>(Shape{weight.dim(1)})};
  grads.input.matrix().noalias() = dy.matrix() * weight.matrix().transpose();
  grads.weight.matrix().noalias() = x.matrix().transpose() * dy.matrix();
  grads.bias.flat() = dy.matrix().colwise().sum().transpose();
  return grads;
}

template <typename Scalar>
SoftmaxCrossEntropy<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                                  std::span<const int> labels) {
  if (logits.rank() != 2 || static_cast<Index>(labels.size()) != logits.dim(0)) {
    throw InvalidArgument("softmax_cross_entropy: need [N,C] logits and N labels");
  }
  const Index n = logits.dim(0), classes = logits.dim(1);
  SoftmaxCrossEntropy<Scalar> out{Scalar(0), Tensor<Scalar>(logits.shape())};
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= classes) {
      throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(classes) + " classes");
    }
    auto row = logits.matrix().row(i);
    const Scalar shift = row.maxCoeff();
    auto probs = out.probs.matrix().row(i);
    probs = (row.array() - shift).exp().matrix();
    const Scalar z = probs.sum();
    probs /= z;
    // -log p = log z - (logit - shift)
    out.loss += std::log(z) - (row[label] - shift);
  }
  out.loss /= Scalar(n);
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy_backward(const Tensor<Scalar>& probs,
                                              std::span<const int> labels) {
  if (probs.rank() != 2 || static_cast<Index>(labels.size()) != probs.dim(0)) {
    throw InvalidArgument("softmax_cross_entropy_backward: need [N,C] probs and N labels");
  }
  Tensor<Scalar> d = probs;
  const Index n = probs.dim(0);
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= probs.dim(1)) {
      throw InvalidArgument("softmax_cross_entropy_backward: label out of range");
    }
    d(i, label) -= Scalar(1);
  }
  d.flat() /= Scalar(n);
  return d;
}

#define WSOL_INSTANTIATE_TENSOR_OPS(S)                                                       \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, int, int);                   \
  template Conv2dGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&,                \
                                          const Tensor<S>&, int, int);                       \
  template Tensor<S> batch_norm_train(const Tensor<S>&, BatchNormParams<S>&,                 \
                                      BatchNormCache<S>*);                                   \
  template Tensor<S> batch_norm_eval(const Tensor<S>&, const BatchNormParams<S>&);           \
  template BatchNormGrads<S> batch_norm_backward(const BatchNormCache<S>&,                   \
                                                 const BatchNormParams<S>&, const Tensor<S>&); \
  template Tensor<S> gap(const Tensor<S>&);                                                  \
  template Tensor<S> gap_backward(const Tensor<S>&, Index, Index);                           \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);           \
  template LinearGrads<S> linear_backward(const Tensor<S>&, const Tensor<S>&,                \
                                          const Tensor<S>&);                                 \
  template SoftmaxCrossEntropy<S> softmax_cross_entropy(const Tensor<S>&,                    \
                                                        std::span<const int>);               \
  template Tensor<S> softmax_cross_entropy_backward(const Tensor<S>&, std::span<const int>);

WSOL_INSTANTIATE_TENSOR_OPS(float)
WSOL_INSTANTIATE_TENSOR_OPS(double)

#undef WSOL_INSTANTIATE_TENSOR_OPS

}  // namespace wsol
