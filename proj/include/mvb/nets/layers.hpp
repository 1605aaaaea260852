#pragma once

// Forward/backward kernels for the backbone and heads. Templated on the scalar
// type so gradient checks can run in double while training runs in float.
// Weight layouts:
//   conv3x3  [ky][kx][c_in][c_out]  (9*c_in rows, c_out columns)
//   fc       [in][out]
// Backward functions accumulate into parameter gradients.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mvb/nets/tensor.hpp"

namespace mvb::nets {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstRowVectorMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// --- 3x3 convolution, stride 1, zero padding 1 ------------------------------

namespace detail {

template <typename T>
void im2col3x3(const T* x, int h, int w, int c, T* col) {
  const int k = 9 * c;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      T* row = col + (static_cast<std::size_t>(y) * w + xx) * k;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          T* dst = row + (ky * 3 + kx) * c;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            std::fill_n(dst, c, T(0));
          } else {
            std::copy_n(x + (static_cast<std::size_t>(sy) * w + sx) * c, c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* col, int h, int w, int c, T* dx) {
  const int k = 9 * c;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const T* row = col + (static_cast<std::size_t>(y) * w + xx) * k;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const T* src = row + (ky * 3 + kx) * c;
          T* dst = dx + (static_cast<std::size_t>(sy) * w + sx) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
void conv3x3_forward(const BasicTensor<T>& x, const T* weight, const T* bias, int c_out,
                     BasicTensor<T>& y) {
  y = BasicTensor<T>(x.n, x.h, x.w, c_out);
  const int hw = x.h * x.w;
  const int k = 9 * x.c;
  AlignedBuffer<T> col(static_cast<std::size_t>(hw) * k);
  ConstMatrixMap<T> wmat(weight, k, c_out);
  ConstRowVectorMap<T> b(bias, c_out);
  for (int i = 0; i < x.n; ++i) {
    detail::im2col3x3(x.sample(i), x.h, x.w, x.c, col.data());
    ConstMatrixMap<T> cmat(col.data(), hw, k);
    MatrixMap<T> out(y.sample(i), hw, c_out);
    out.noalias() = cmat * wmat;
    out.rowwise() += b;
  }
}

/// dx may be null when the input gradient is not needed.
template <typename T>
void conv3x3_backward(const BasicTensor<T>& x, const T* weight, const BasicTensor<T>& dy,
                      T* dweight, T* dbias, BasicTensor<T>* dx) {
  const int c_out = dy.c;
  const int hw = x.h * x.w;
  const int k = 9 * x.c;
  AlignedBuffer<T> col(static_cast<std::size_t>(hw) * k);
  AlignedBuffer<T> dcol(dx ? col.size() : 0);
  ConstMatrixMap<T> wmat(weight, k, c_out);
  if (dx) *dx = BasicTensor<T>(x.n, x.h, x.w, x.c);
  for (int i = 0; i < x.n; ++i) {
    ConstMatrixMap<T> g(dy.sample(i), hw, c_out);
    if (dweight) {
      detail::im2col3x3(x.sample(i), x.h, x.w, x.c, col.data());
      ConstMatrixMap<T> cmat(col.data(), hw, k);
      MatrixMap<T>(dweight, k, c_out).noalias() += cmat.transpose() * g;
    }
    if (dbias) VectorMap<T>(dbias, c_out) += g.colwise().sum().transpose();
    if (dx) {
      MatrixMap<T> dc(dcol.data(), hw, k);
      dc.noalias() = g * wmat.transpose();
      detail::col2im3x3(dcol.data(), x.h, x.w, x.c, dx->sample(i));
    }
  }
}

// --- ReLU --------------------------------------------------------------------

template <typename T>
void relu_inplace(BasicTensor<T>& x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

/// Gradient through ReLU given its output.
template <typename T>
void relu_backward(const BasicTensor<T>& y, BasicTensor<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(y.data[i] > T(0))) dy.data[i] = T(0);
  }
}

// --- 2x2 max pooling, stride 2 (trailing odd row/column dropped) -------------

template <typename T>
void maxpool2x2_forward(const BasicTensor<T>& x, BasicTensor<T>& y, std::vector<int>& argmax) {
  const int oh = x.h / 2;
  const int ow = x.w / 2;
  y = BasicTensor<T>(x.n, oh, ow, x.c);
  argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int yy = 0; yy < oh; ++yy) {
      for (int xx = 0; xx < ow; ++xx) {
        for (int ch = 0; ch < x.c; ++ch, ++o) {
          int best = -1;
          T best_v = T(0);
          for (int d = 0; d < 4; ++d) {
            const int sy = 2 * yy + d / 2;
            const int sx = 2 * xx + d % 2;
            const std::size_t idx = ((static_cast<std::size_t>(i) * x.h + sy) * x.w + sx) * x.c + ch;
            if (best < 0 || x.data[idx] > best_v) {
              best = static_cast<int>(idx);
              best_v = x.data[idx];
            }
          }
          y.data[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(const BasicTensor<T>& dy, const std::vector<int>& argmax,
                         BasicTensor<T>& dx) {
  std::fill(dx.data.begin(), dx.data.end(), T(0));
  for (std::size_t o = 0; o < dy.data.size(); ++o) dx.data[static_cast<std::size_t>(argmax[o])] += dy.data[o];
}

// --- Batch normalization over (N, H, W) per channel ---------------------------

template <typename T>
struct BatchNormCache {
  std::vector<T> xhat;
  std::vector<T> inv_std;
};

inline constexpr double kBatchNormEps = 1e-5;

/// Training-mode forward: batch statistics, running statistics updated with
/// running = momentum * running + (1 - momentum) * batch.
template <typename T>
void batchnorm_forward_train(const BasicTensor<T>& x, const T* gamma, const T* beta,
                             T* running_mean, T* running_var, double momentum,
                             BasicTensor<T>& y, BatchNormCache<T>& cache) {
  const int c = x.c;
  const std::size_t m = x.size() / c;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (int ch = 0; ch < c; ++ch) mean[ch] += x.data[i * c + ch];
  }
  for (auto& v : mean) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double d = x.data[i * c + ch] - mean[ch];
      var[ch] += d * d;
    }
  }
  for (auto& v : var) v /= static_cast<double>(m);

  cache.inv_std.assign(c, T(0));
  for (int ch = 0; ch < c; ++ch) cache.inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + kBatchNormEps));
  y = BasicTensor<T>(x.n, x.h, x.w, c);
  cache.xhat.assign(x.size(), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const T xh = static_cast<T>((x.data[i * c + ch] - mean[ch]) * cache.inv_std[ch]);
      cache.xhat[i * c + ch] = xh;
      y.data[i * c + ch] = gamma[ch] * xh + beta[ch];
    }
  }
  if (running_mean && running_var) {
    const double unbias = m > 1 ? static_cast<double>(m) / (m - 1) : 1.0;
    for (int ch = 0; ch < c; ++ch) {
      running_mean[ch] = static_cast<T>(momentum * running_mean[ch] + (1 - momentum) * mean[ch]);
      running_var[ch] = static_cast<T>(momentum * running_var[ch] + (1 - momentum) * var[ch] * unbias);
    }
  }
}

template <typename T>
void batchnorm_forward_infer(const BasicTensor<T>& x, const T* gamma, const T* beta,
                             const T* running_mean, const T* running_var, BasicTensor<T>& y) {
  const int c = x.c;
  const std::size_t m = x.size() / c;
  y = BasicTensor<T>(x.n, x.h, x.w, c);
  std::vector<T> scale(c), shift(c);
  for (int ch = 0; ch < c; ++ch) {
    scale[ch] = static_cast<T>(gamma[ch] / std::sqrt(running_var[ch] + kBatchNormEps));
    shift[ch] = beta[ch] - scale[ch] * running_mean[ch];
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (int ch = 0; ch < c; ++ch) y.data[i * c + ch] = scale[ch] * x.data[i * c + ch] + shift[ch];
  }
}

template <typename T>
void batchnorm_backward(const BasicTensor<T>& dy, const BatchNormCache<T>& cache, const T* gamma,
                        T* dgamma, T* dbeta, BasicTensor<T>& dx) {
  const int c = dy.c;
  const std::size_t m = dy.size() / c;
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      sum_dy[ch] += dy.data[i * c + ch];
      sum_dy_xhat[ch] += dy.data[i * c + ch] * cache.xhat[i * c + ch];
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    if (dgamma) dgamma[ch] += static_cast<T>(sum_dy_xhat[ch]);
    if (dbeta) dbeta[ch] += static_cast<T>(sum_dy[ch]);
  }
  dx = BasicTensor<T>(dy.n, dy.h, dy.w, c);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double g = dy.data[i * c + ch];
      const double xh = cache.xhat[i * c + ch];
      dx.data[i * c + ch] = static_cast<T>(gamma[ch] * cache.inv_std[ch] *
                                           (g - inv_m * sum_dy[ch] - xh * inv_m * sum_dy_xhat[ch]));
    }
  }
}

// --- Squeeze-and-excitation ---------------------------------------------------
//   z = mean_{h,w} x            (N x C)
//   s = relu(z W1 + b1)         (N x R)
//   g = sigmoid(s W2 + b2)      (N x C)
//   y = x * g (per channel)

template <typename T>
struct SeParams {
  const T* w1;  // C x R
  const T* b1;  // R
  const T* w2;  // R x C
  const T* b2;  // C
  int channels;
  int bottleneck;
};

template <typename T>
struct SeGrads {
  T* w1;
  T* b1;
  T* w2;
  T* b2;
};

template <typename T>
struct SeCache {
  RowMatrix<T> squeeze;
  RowMatrix<T> hidden;
  RowMatrix<T> gate;
};

template <typename T>
T sigmoid(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <typename T>
void se_forward(const BasicTensor<T>& x, const SeParams<T>& p, BasicTensor<T>& y,
                SeCache<T>& cache) {
  const int c = x.c;
  const int hw = x.h * x.w;
  if (c != p.channels) throw ShapeError("SE channel mismatch");
  cache.squeeze = RowMatrix<T>::Zero(x.n, c);
  for (int i = 0; i < x.n; ++i) {
    ConstMatrixMap<T> xs(x.sample(i), hw, c);
    cache.squeeze.row(i) = xs.colwise().sum() / static_cast<T>(hw);
  }
  ConstMatrixMap<T> w1(p.w1, c, p.bottleneck);
  ConstMatrixMap<T> w2(p.w2, p.bottleneck, c);
  cache.hidden = (cache.squeeze * w1).rowwise() + ConstRowVectorMap<T>(p.b1, p.bottleneck);
  cache.hidden = cache.hidden.cwiseMax(T(0));
  cache.gate = (cache.hidden * w2).rowwise() + ConstRowVectorMap<T>(p.b2, c);
  cache.gate = cache.gate.unaryExpr([](T v) { return sigmoid(v); });
  y = BasicTensor<T>(x.n, x.h, x.w, c);
  for (int i = 0; i < x.n; ++i) {
    ConstMatrixMap<T> xs(x.sample(i), hw, c);
    MatrixMap<T>(y.sample(i), hw, c) = xs * cache.gate.row(i).asDiagonal();
  }
}

template <typename T>
void se_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, const SeParams<T>& p,
                 const SeCache<T>& cache, SeGrads<T> grads, BasicTensor<T>* dx) {
  const int c = x.c;
  const int hw = x.h * x.w;
  // dL/dgate = sum_{h,w} dy * x
  RowMatrix<T> dgate(x.n, c);
  for (int i = 0; i < x.n; ++i) {
    ConstMatrixMap<T> xs(x.sample(i), hw, c);
    ConstMatrixMap<T> gs(dy.sample(i), hw, c);
    dgate.row(i) = xs.cwiseProduct(gs).colwise().sum();
  }
  const RowMatrix<T> dpre2 = dgate.cwiseProduct(
      cache.gate.cwiseProduct(RowMatrix<T>::Ones(x.n, c) - cache.gate));
  ConstMatrixMap<T> w1(p.w1, c, p.bottleneck);
  ConstMatrixMap<T> w2(p.w2, p.bottleneck, c);
  if (grads.w2) MatrixMap<T>(grads.w2, p.bottleneck, c).noalias() += cache.hidden.transpose() * dpre2;
  if (grads.b2) VectorMap<T>(grads.b2, c) += dpre2.colwise().sum().transpose();
  RowMatrix<T> dhidden = dpre2 * w2.transpose();
  dhidden = dhidden.cwiseProduct(
      cache.hidden.unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
  if (grads.w1) MatrixMap<T>(grads.w1, c, p.bottleneck).noalias() += cache.squeeze.transpose() * dhidden;
  if (grads.b1) VectorMap<T>(grads.b1, p.bottleneck) += dhidden.colwise().sum().transpose();
  if (!dx) return;
  const RowMatrix<T> dsqueeze = dhidden * w1.transpose() / static_cast<T>(hw);
  *dx = BasicTensor<T>(x.n, x.h, x.w, c);
  for (int i = 0; i < x.n; ++i) {
    ConstMatrixMap<T> gs(dy.sample(i), hw, c);
    MatrixMap<T> out(dx->sample(i), hw, c);
    out = gs * cache.gate.row(i).asDiagonal();
    out.rowwise() += dsqueeze.row(i);
  }
}

// --- Fully connected ------------------------------------------------------------

template <typename T>
void fc_forward(const RowMatrix<T>& x, const T* weight, const T* bias, int out_dim, RowMatrix<T>& y) {
  ConstMatrixMap<T> w(weight, x.cols(), out_dim);
  y.noalias() = x * w;
  y.rowwise() += ConstRowVectorMap<T>(bias, out_dim);
}

template <typename T>
void fc_backward(const RowMatrix<T>& x, const T* weight, const RowMatrix<T>& dy, T* dweight,
                 T* dbias, RowMatrix<T>* dx) {
  const auto out_dim = dy.cols();
  if (dweight) MatrixMap<T>(dweight, x.cols(), out_dim).noalias() += x.transpose() * dy;
  if (dbias) VectorMap<T>(dbias, out_dim) += dy.colwise().sum().transpose();
  if (dx) {
    ConstMatrixMap<T> w(weight, x.cols(), out_dim);
    dx->noalias() = dy * w.transpose();
  }
}

}  // namespace mvb::nets
