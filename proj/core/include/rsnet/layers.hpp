#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rsnet/rng.hpp"
#include "rsnet/tensor.hpp"

namespace rsnet::nn {

enum class Mode { train, eval };
enum class Activation { relu, identity };

/// Handle to one learnable (or tracked) tensor inside a module tree.
/// Running statistics are tracked but not learnable: the optimizer skips
/// them while checkpoints persist them.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;  // null for tracked-only tensors
  bool learnable = true;
};

template <typename T>
using ParamRefs = std::vector<ParamRef<T>>;

namespace detail {

template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
            std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW, T* col) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < K; ++ky) {
      for (std::size_t kx = 0; kx < K; ++kx) {
        T* dst = col + ((c * K + ky) * K + kx) * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(dst + oy * OW, dst + (oy + 1) * OW, T(0));
            continue;
          }
          const T* src_row = x + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            dst[oy * OW + ox] =
                (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? T(0) : src_row[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
                std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW, T* x) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < K; ++ky) {
      for (std::size_t kx = 0; kx < K; ++kx) {
        const T* src = col + ((c * K + ky) * K + kx) * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          T* dst_row = x + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) {
              dst_row[ix] += src[oy * OW + ox];
            }
          }
        }
      }
    }
  }
}

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

/// 2-D convolution over NCHW batches, square kernel, im2col + GEMM.
template <typename T>
class Conv2d {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
         std::size_t pad, bool with_bias, Rng& rng)
      : in_ch_(in_ch),
        out_ch_(out_ch),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        with_bias_(with_bias),
        weight_({out_ch, in_ch, kernel, kernel}),
        gweight_({out_ch, in_ch, kernel, kernel}) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
    for (std::size_t i = 0; i < weight_.size(); ++i) {
      weight_[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
    if (with_bias_) {
      bias_ = Tensor<T>({out_ch});
      gbias_ = Tensor<T>({out_ch});
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.dim(1) != in_ch_) {
      throw ChannelMismatch("conv expects " + std::to_string(in_ch_) + " channels, got " +
                            std::to_string(x.dim(1)));
    }
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (H + 2 * pad_ < kernel_ || W + 2 * pad_ < kernel_) {
      throw TooSmallInput("conv kernel " + std::to_string(kernel_) + " exceeds padded input " +
                          std::to_string(H) + "x" + std::to_string(W));
    }
    const std::size_t OH = detail::conv_out(H, kernel_, stride_, pad_);
    const std::size_t OW = detail::conv_out(W, kernel_, stride_, pad_);
    const std::size_t kk = in_ch_ * kernel_ * kernel_;
    Tensor<T> out({N, out_ch_, OH, OW});

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      std::vector<T> col(kk * OH * OW);
      detail::im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, kernel_, stride_, pad_, OH, OW,
                     col.data());
      typename Tensor<T>::ConstMatrixMap wmat(weight_.data(), out_ch_, kk);
      typename Tensor<T>::ConstMatrixMap cmat(col.data(), kk, OH * OW);
      typename Tensor<T>::MatrixMap omat(out.data() + n * out_ch_ * OH * OW, out_ch_, OH * OW);
      omat.noalias() = wmat * cmat;
      if (with_bias_) {
        for (std::size_t c = 0; c < out_ch_; ++c) omat.row(c).array() += bias_[c];
      }
    }
    if (mode == Mode::train) x_cache_ = x;
    return out;
  }

  /// Accumulates weight/bias gradients and returns the input gradient.
  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = x_cache_;
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = gy.dim(2), OW = gy.dim(3);
    const std::size_t kk = in_ch_ * kernel_ * kernel_;
    Tensor<T> gx({N, in_ch_, H, W});

    int max_threads = 1;
#ifdef _OPENMP
    max_threads = omp_get_max_threads();
#endif
    std::vector<Tensor<T>> gw_local(static_cast<std::size_t>(max_threads),
                                    Tensor<T>({out_ch_, kk}));
    std::vector<Tensor<T>> gb_local(static_cast<std::size_t>(max_threads), Tensor<T>({out_ch_}));

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      int tid = 0;
#ifdef _OPENMP
      tid = omp_get_thread_num();
#endif
      std::vector<T> col(kk * OH * OW);
      std::vector<T> gcol(kk * OH * OW);
      detail::im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, kernel_, stride_, pad_, OH, OW,
                     col.data());
      typename Tensor<T>::ConstMatrixMap gym(gy.data() + n * out_ch_ * OH * OW, out_ch_, OH * OW);
      typename Tensor<T>::ConstMatrixMap cmat(col.data(), kk, OH * OW);
      gw_local[tid].as_matrix(out_ch_, kk).noalias() += gym * cmat.transpose();
      if (with_bias_) {
        for (std::size_t c = 0; c < out_ch_; ++c) gb_local[tid][c] += gym.row(c).sum();
      }
      typename Tensor<T>::ConstMatrixMap wmat(weight_.data(), out_ch_, kk);
      typename Tensor<T>::MatrixMap gcm(gcol.data(), kk, OH * OW);
      gcm.noalias() = wmat.transpose() * gym;
      detail::col2im_add(gcol.data(), in_ch_, H, W, kernel_, stride_, pad_, OH, OW,
                         gx.data() + n * in_ch_ * H * W);
    }
    for (int t = 0; t < max_threads; ++t) {
      gweight_.as_vector() += gw_local[static_cast<std::size_t>(t)].as_vector();
      if (with_bias_) gbias_.as_vector() += gb_local[static_cast<std::size_t>(t)].as_vector();
    }
    return gx;
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight_, &gweight_, true});
    if (with_bias_) out.push_back({prefix + ".bias", &bias_, &gbias_, true});
  }

  void zero_grad() {
    gweight_.set_zero();
    if (with_bias_) gbias_.set_zero();
  }

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }
  const Tensor<T>& weight() const { return weight_; }
  Tensor<T>& weight() { return weight_; }

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  bool with_bias_;
  Tensor<T> weight_, bias_, gweight_, gbias_;
  Tensor<T> x_cache_;
};

/// Per-channel batch normalization with running statistics for inference.
/// Eval-mode channels whose stored variance is ~0 fall back to unit variance.
template <typename T>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(std::size_t channels)
      : channels_(channels),
        gamma_(Tensor<T>::full({channels}, T(1))),
        beta_({channels}),
        ggamma_({channels}),
        gbeta_({channels}),
        running_mean_({channels}),
        running_var_(Tensor<T>::full({channels}, T(1))) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != channels_) {
      throw ChannelMismatch("batchnorm expects " + std::to_string(channels_) + " channels");
    }
    Tensor<T> out({N, C, H, W});
    const std::size_t hw = H * W;
    const std::size_t m = N * hw;

    if (mode == Mode::train) {
      mean_.assign(C, T(0));
      inv_std_.assign(C, T(0));
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        double sum = 0.0, sq = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * C + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sum += static_cast<double>(p[i]);
            sq += static_cast<double>(p[i]) * static_cast<double>(p[i]);
          }
        }
        const double mean = sum / static_cast<double>(m);
        const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean);
        mean_[c] = static_cast<T>(mean);
        inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var + kEps));
        const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1)
                                      : var;
        running_mean_[c] =
            static_cast<T>((1.0 - kMomentum) * static_cast<double>(running_mean_[c]) +
                           kMomentum * mean);
        running_var_[c] =
            static_cast<T>((1.0 - kMomentum) * static_cast<double>(running_var_[c]) +
                           kMomentum * unbiased);
      }
      xhat_ = Tensor<T>({N, C, H, W});
#pragma omp parallel for schedule(static) collapse(2)
      for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
          const std::size_t c = static_cast<std::size_t>(ci);
          const T* p = x.data() + (n * C + c) * hw;
          T* xh = xhat_.data() + (n * C + c) * hw;
          T* o = out.data() + (n * C + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            xh[i] = (p[i] - mean_[c]) * inv_std_[c];
            o[i] = gamma_[c] * xh[i] + beta_[c];
          }
        }
      }
    } else {
#pragma omp parallel for schedule(static) collapse(2)
      for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
          const std::size_t c = static_cast<std::size_t>(ci);
          const double rv = static_cast<double>(running_var_[c]);
          const double var = rv < 1e-12 ? 1.0 : rv;
          const T scale = static_cast<T>(static_cast<double>(gamma_[c]) / std::sqrt(var + kEps));
          const T shift = static_cast<T>(static_cast<double>(beta_[c]) -
                                         static_cast<double>(running_mean_[c]) * scale);
          const T* p = x.data() + (n * C + c) * hw;
          T* o = out.data() + (n * C + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) o[i] = scale * p[i] + shift;
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    const std::size_t hw = H * W;
    const std::size_t m = N * hw;
    Tensor<T> gx({N, C, H, W});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
      const std::size_t c = static_cast<std::size_t>(ci);
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* g = gy.data() + (n * C + c) * hw;
        const T* xh = xhat_.data() + (n * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_gy += static_cast<double>(g[i]);
          sum_gy_xhat += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
        }
      }
      gbeta_[c] += static_cast<T>(sum_gy);
      ggamma_[c] += static_cast<T>(sum_gy_xhat);
      const double k = static_cast<double>(gamma_[c]) * static_cast<double>(inv_std_[c]);
      const double mean_gy = sum_gy / static_cast<double>(m);
      const double mean_gy_xhat = sum_gy_xhat / static_cast<double>(m);
      for (std::size_t n = 0; n < N; ++n) {
        const T* g = gy.data() + (n * C + c) * hw;
        const T* xh = xhat_.data() + (n * C + c) * hw;
        T* o = gx.data() + (n * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          o[i] = static_cast<T>(k * (static_cast<double>(g[i]) - mean_gy -
                                     static_cast<double>(xh[i]) * mean_gy_xhat));
        }
      }
    }
    return gx;
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma_, &ggamma_, true});
    out.push_back({prefix + ".beta", &beta_, &gbeta_, true});
    out.push_back({prefix + ".running_mean", &running_mean_, nullptr, false});
    out.push_back({prefix + ".running_var", &running_var_, nullptr, false});
  }

  void zero_grad() {
    ggamma_.set_zero();
    gbeta_.set_zero();
  }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  std::size_t channels_;
  Tensor<T> gamma_, beta_, ggamma_, gbeta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> mean_, inv_std_;
};

/// Elementwise activation; identity mode exists for the head wiring probe.
template <typename T>
class Act {
 public:
  explicit Act(Activation kind = Activation::relu) : kind_(kind) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (kind_ == Activation::identity) return x;
    Tensor<T> out = x;
    T* p = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
      if (p[i] < T(0)) p[i] = T(0);
    }
    if (mode == Mode::train) y_cache_ = out;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (kind_ == Activation::identity) return gy;
    Tensor<T> gx = gy;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(gx.size()); ++i) {
      if (y_cache_[static_cast<std::size_t>(i)] <= T(0)) gx[static_cast<std::size_t>(i)] = T(0);
    }
    return gx;
  }

 private:
  Activation kind_;
  Tensor<T> y_cache_;
};

/// Max pooling with argmax bookkeeping for the backward pass.
template <typename T>
class MaxPool2d {
 public:
  MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t pad)
      : kernel_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = detail::conv_out(H, kernel_, stride_, pad_);
    const std::size_t OW = detail::conv_out(W, kernel_, stride_, pad_);
    Tensor<T> out({N, C, OH, OW});
    if (mode == Mode::train) {
      argmax_.assign(out.size(), 0);
      in_h_ = H;
      in_w_ = W;
    }
#pragma omp parallel for schedule(static) collapse(2)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        const T* p = x.data() + (n * C + c) * H * W;
        T* o = out.data() + (n * C + c) * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          for (std::size_t ox = 0; ox < OW; ++ox) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                                        static_cast<std::ptrdiff_t>(pad_);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kx = 0; kx < kernel_; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                          static_cast<std::ptrdiff_t>(pad_);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                const std::size_t idx =
                    static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
                if (p[idx] > best) {
                  best = p[idx];
                  best_idx = idx;
                }
              }
            }
            o[oy * OW + ox] = best;
            if (mode == Mode::train) {
              argmax_[((static_cast<std::size_t>(n) * C + c) * OH + oy) * OW + ox] = best_idx;
            }
          }
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t N = gy.dim(0), C = gy.dim(1), OH = gy.dim(2), OW = gy.dim(3);
    Tensor<T> gx({N, C, in_h_, in_w_});
#pragma omp parallel for schedule(static) collapse(2)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        const T* g = gy.data() + (n * C + c) * OH * OW;
        T* o = gx.data() + (n * C + c) * in_h_ * in_w_;
        const std::size_t* am = argmax_.data() + (n * C + c) * OH * OW;
        for (std::size_t i = 0; i < OH * OW; ++i) o[am[i]] += g[i];
      }
    }
    return gx;
  }

 private:
  std::size_t kernel_, stride_, pad_;
  std::vector<std::size_t> argmax_;
  std::size_t in_h_ = 0, in_w_ = 0;
};

/// 2x2/stride-2 style average pooling, floor semantics (odd tails dropped).
template <typename T>
class AvgPool2d {
 public:
  AvgPool2d(std::size_t kernel, std::size_t stride) : kernel_(kernel), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = (H - kernel_) / stride_ + 1;
    const std::size_t OW = (W - kernel_) / stride_ + 1;
    if (mode == Mode::train) {
      in_h_ = H;
      in_w_ = W;
    }
    Tensor<T> out({N, C, OH, OW});
    const T inv = T(1) / static_cast<T>(kernel_ * kernel_);
#pragma omp parallel for schedule(static) collapse(2)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        const T* p = x.data() + (n * C + c) * H * W;
        T* o = out.data() + (n * C + c) * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          for (std::size_t ox = 0; ox < OW; ++ox) {
            T acc = T(0);
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
              for (std::size_t kx = 0; kx < kernel_; ++kx) {
                acc += p[(oy * stride_ + ky) * W + ox * stride_ + kx];
              }
            }
            o[oy * OW + ox] = acc * inv;
          }
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t N = gy.dim(0), C = gy.dim(1), OH = gy.dim(2), OW = gy.dim(3);
    Tensor<T> gx({N, C, in_h_, in_w_});
    const T inv = T(1) / static_cast<T>(kernel_ * kernel_);
#pragma omp parallel for schedule(static) collapse(2)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        const T* g = gy.data() + (n * C + c) * OH * OW;
        T* o = gx.data() + (n * C + c) * in_h_ * in_w_;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const T v = g[oy * OW + ox] * inv;
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
              for (std::size_t kx = 0; kx < kernel_; ++kx) {
                o[(oy * stride_ + ky) * in_w_ + ox * stride_ + kx] += v;
              }
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  std::size_t kernel_, stride_;
  std::size_t in_h_ = 0, in_w_ = 0;
};

/// Average pooling to a fixed output grid, any input resolution.
/// Output cells larger than the input duplicate source cells, so the head
/// keeps its flatten width for small inputs too.
template <typename T>
class AdaptiveAvgPool2d {
 public:
  AdaptiveAvgPool2d(std::size_t out_h, std::size_t out_w) : out_h_(out_h), out_w_(out_w) {}

  static std::size_t window_start(std::size_t i, std::size_t in, std::size_t out) {
    return i * in / out;
  }
  static std::size_t window_end(std::size_t i, std::size_t in, std::size_t out) {
    return ((i + 1) * in + out - 1) / out;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (mode == Mode::train) {
      in_h_ = H;
      in_w_ = W;
    }
    Tensor<T> out({N, C, out_h_, out_w_});
#pragma omp parallel for schedule(static) collapse(2)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        const T* p = x.data() + (n * C + c) * H * W;
        T* o = out.data() + (n * C + c) * out_h_ * out_w_;
        for (std::size_t oy = 0; oy < out_h_; ++oy) {
          const std::size_t y0 = window_start(oy, H, out_h_), y1 = window_end(oy, H, out_h_);
          for (std::size_t ox = 0; ox < out_w_; ++ox) {
            const std::size_t x0 = window_start(ox, W, out_w_), x1 = window_end(ox, W, out_w_);
            T acc = T(0);
            for (std::size_t y = y0; y < y1; ++y) {
              for (std::size_t xx = x0; xx < x1; ++xx) acc += p[y * W + xx];
            }
            o[oy * out_w_ + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
          }
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t N = gy.dim(0), C = gy.dim(1);
    Tensor<T> gx({N, C, in_h_, in_w_});
#pragma omp parallel for schedule(static) collapse(2)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
      for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(C); ++ci) {
        const std::size_t c = static_cast<std::size_t>(ci);
        const T* g = gy.data() + (n * C + c) * out_h_ * out_w_;
        T* o = gx.data() + (n * C + c) * in_h_ * in_w_;
        for (std::size_t oy = 0; oy < out_h_; ++oy) {
          const std::size_t y0 = window_start(oy, in_h_, out_h_),
                            y1 = window_end(oy, in_h_, out_h_);
          for (std::size_t ox = 0; ox < out_w_; ++ox) {
            const std::size_t x0 = window_start(ox, in_w_, out_w_),
                              x1 = window_end(ox, in_w_, out_w_);
            const T v = g[oy * out_w_ + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (std::size_t y = y0; y < y1; ++y) {
              for (std::size_t xx = x0; xx < x1; ++xx) o[y * in_w_ + xx] += v;
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  std::size_t out_h_, out_w_;
  std::size_t in_h_ = 0, in_w_ = 0;
};

/// Affine layer over (N, features) matrices.
template <typename T>
class Linear {
 public:
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
      : in_(in_features),
        out_(out_features),
        weight_({out_features, in_features}),
        bias_({out_features}),
        gweight_({out_features, in_features}),
        gbias_({out_features}) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_features));
    for (std::size_t i = 0; i < weight_.size(); ++i) {
      weight_[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.dim(1) != in_) {
      throw LengthMismatch("linear expects " + std::to_string(in_) + " features, got " +
                           std::to_string(x.dim(1)));
    }
    const std::size_t N = x.dim(0);
    Tensor<T> out({N, out_});
    out.as_matrix(N, out_).noalias() = x.as_matrix(N, in_) * weight_.as_matrix(out_, in_).transpose();
    out.as_matrix(N, out_).rowwise() += bias_.as_vector().transpose();
    if (mode == Mode::train) x_cache_ = x;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t N = gy.dim(0);
    gweight_.as_matrix(out_, in_).noalias() +=
        gy.as_matrix(N, out_).transpose() * x_cache_.as_matrix(N, in_);
    gbias_.as_vector() += gy.as_matrix(N, out_).colwise().sum().transpose();
    Tensor<T> gx({N, in_});
    gx.as_matrix(N, in_).noalias() = gy.as_matrix(N, out_) * weight_.as_matrix(out_, in_);
    return gx;
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight_, &gweight_, true});
    out.push_back({prefix + ".bias", &bias_, &gbias_, true});
  }

  void zero_grad() {
    gweight_.set_zero();
    gbias_.set_zero();
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  std::size_t in_, out_;
  Tensor<T> weight_, bias_, gweight_, gbias_;
  Tensor<T> x_cache_;
};

/// Inverted dropout; inactive at rate 0 and in eval mode.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) {
    if (mode == Mode::eval || rate_ <= 0.0) return x;
    mask_ = Tensor<T>(x.shape());
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    for (std::size_t i = 0; i < mask_.size(); ++i) {
      mask_[i] = rng.uniform() < rate_ ? T(0) : scale;
    }
    Tensor<T> out = x;
    out.as_vector().array() *= mask_.as_vector().array();
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (rate_ <= 0.0) return gy;
    Tensor<T> gx = gy;
    gx.as_vector().array() *= mask_.as_vector().array();
    return gx;
  }

  double rate() const { return rate_; }

 private:
  double rate_;
  Tensor<T> mask_;
};

}  // namespace rsnet::nn
