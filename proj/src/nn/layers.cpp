#include "semg/nn/layers.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Core>

namespace semg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void he_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
}

void require_rank(const Shape& s, std::size_t rank, const char* who) {
  if (s.size() != rank) {
    throw Error(Errc::shape_mismatch,
                std::string(who) + " expects rank " + std::to_string(rank) + ", got " +
                    shape_string(s));
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel)
    : weight(name + ".weight", {kernel, kernel, in_channels, out_channels}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel) {
  if (kernel % 2 == 0 || in_channels == 0 || out_channels == 0) {
    throw Error(Errc::config_validation, "conv kernel must be odd with non-zero channels");
  }
}

template <typename T>
void Conv2d<T>::init_he_uniform(Rng& rng) {
  he_uniform(weight.value, k_ * k_ * in_, rng);
  bias.value.fill(T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::run(const Tensor<T>& x, std::vector<T>& col) const {
  require_rank(x.shape(), 4, "conv2d");
  if (x.dim(3) != in_) {
    throw Error(Errc::shape_mismatch, "conv2d expects " + std::to_string(in_) +
                                          " input channels, got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t rows = n * h * w;
  const std::size_t kc = k_ * k_ * in_;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2);

  col.resize(rows * kc);
  if (k_ == 1) {
    std::memcpy(col.data(), x.data(), rows * kc * sizeof(T));
  } else {
    T* dst = col.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          for (std::size_t ki = 0; ki < k_; ++ki) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + ki) - pad;
            for (std::size_t kj = 0; kj < k_; ++kj) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + kj) - pad;
              if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(h) ||
                  jj >= static_cast<std::ptrdiff_t>(w)) {
                std::memset(dst, 0, in_ * sizeof(T));
              } else {
                std::memcpy(dst, &x.at(b, static_cast<std::size_t>(ii),
                                       static_cast<std::size_t>(jj), 0),
                            in_ * sizeof(T));
              }
              dst += in_;
            }
          }
        }
      }
    }
  }

  Tensor<T> y({n, h, w, out_});
  ConstMapMat<T> c(col.data(), rows, kc);
  ConstMapMat<T> wm(weight.value.data(), kc, out_);
  MapMat<T> out(y.data(), rows, out_);
  out.noalias() = c * wm;
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(), out_);
  out.rowwise() += b;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  return run(x, col_);
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& x) const {
  std::vector<T> col;
  return run(x, col);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  if (in_shape_.size() != 4 ||
      grad_out.shape() != Shape{in_shape_[0], in_shape_[1], in_shape_[2], out_}) {
    throw Error(Errc::shape_mismatch, "conv2d backward: gradient " +
                                          shape_string(grad_out.shape()) +
                                          " does not match cached forward");
  }
  const std::size_t n = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
  const std::size_t rows = n * h * w;
  const std::size_t kc = k_ * k_ * in_;

  ConstMapMat<T> g(grad_out.data(), rows, out_);
  ConstMapMat<T> c(col_.data(), rows, kc);
  MapMat<T> gw(weight.grad.data(), kc, out_);
  gw.noalias() += c.transpose() * g;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bias.grad.data(), out_);
  gb += g.colwise().sum();

  ConstMapMat<T> wm(weight.value.data(), kc, out_);
  Tensor<T> dx(in_shape_);
  if (k_ == 1) {
    MapMat<T> dxm(dx.data(), rows, kc);
    dxm.noalias() = g * wm.transpose();
    return dx;
  }
  RowMat<T> dcol = g * wm.transpose();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2);
  const T* src = dcol.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t ki = 0; ki < k_; ++ki) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + ki) - pad;
          for (std::size_t kj = 0; kj < k_; ++kj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + kj) - pad;
            if (ii >= 0 && jj >= 0 && ii < static_cast<std::ptrdiff_t>(h) &&
                jj < static_cast<std::ptrdiff_t>(w)) {
              T* d = &dx.at(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
              for (std::size_t ci = 0; ci < in_; ++ci) d[ci] += src[ci];
            }
            src += in_;
          }
        }
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean(name + ".running_mean", {channels}),
      running_var(name + ".running_var", {channels}) {
  gamma.value.fill(T(1));
  running_var.value.fill(T(1));
  running_mean.trainable = false;
  running_var.trainable = false;
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  mode_ = mode;
  const std::size_t c = channels();
  if (x.rank() < 2 || x.shape().back() != c) {
    throw Error(Errc::shape_mismatch, "batchnorm expects last extent " + std::to_string(c) +
                                          ", got " + shape_string(x.shape()));
  }
  if (mode == Mode::eval) {
    inv_std_.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
      inv_std_[k] =
          static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.value[k]) + eps));
    }
    return infer(x);
  }
  if (x.dim(0) < 2) {
    throw Error(Errc::degenerate_batch, "train-mode batch norm needs at least 2 samples");
  }
  const std::size_t m = x.size() / c;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  const T* px = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) mean[k] += px[i * c + k];
  }
  for (auto& v : mean) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double d = px[i * c + k] - mean[k];
      var[k] += d * d;
    }
  }
  for (auto& v : var) v /= static_cast<double>(m);

  inv_std_.resize(c);
  std::vector<T> shift(c);
  for (std::size_t k = 0; k < c; ++k) {
    inv_std_[k] = static_cast<T>(1.0 / std::sqrt(var[k] + eps));
    shift[k] = static_cast<T>(mean[k]);
    const double unbiased = var[k] * static_cast<double>(m) / (static_cast<double>(m) - 1.0);
    running_mean.value[k] =
        static_cast<T>(momentum * running_mean.value[k] + (1.0 - momentum) * mean[k]);
    running_var.value[k] =
        static_cast<T>(momentum * running_var.value[k] + (1.0 - momentum) * unbiased);
  }

  xhat_ = Tensor<T>(x.shape());
  Tensor<T> y(x.shape());
  T* ph = xhat_.data();
  T* py = y.data();
  const T* g = gamma.value.data();
  const T* b = beta.value.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const T xh = (px[i * c + k] - shift[k]) * inv_std_[k];
      ph[i * c + k] = xh;
      py[i * c + k] = g[k] * xh + b[k];
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::infer(const Tensor<T>& x) const {
  const std::size_t c = channels();
  if (x.rank() < 2 || x.shape().back() != c) {
    throw Error(Errc::shape_mismatch, "batchnorm expects last extent " + std::to_string(c));
  }
  std::vector<T> scale(c), shift(c);
  for (std::size_t k = 0; k < c; ++k) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var.value[k]) + eps);
    scale[k] = static_cast<T>(gamma.value[k] * inv);
    shift[k] = static_cast<T>(beta.value[k] - gamma.value[k] * running_mean.value[k] * inv);
  }
  Tensor<T> y(x.shape());
  const std::size_t m = x.size() / c;
  const T* px = x.data();
  T* py = y.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) py[i * c + k] = px[i * c + k] * scale[k] + shift[k];
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t c = channels();
  const std::size_t m = grad_out.size() / c;
  Tensor<T> dx(grad_out.shape());
  const T* g = grad_out.data();
  T* pdx = dx.data();

  if (mode_ == Mode::eval) {
    // Constant statistics: the layer is a per-channel affine map.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        pdx[i * c + k] = g[i * c + k] * gamma.value[k] * inv_std_[k];
      }
    }
    return dx;
  }
  if (xhat_.shape() != grad_out.shape()) {
    throw Error(Errc::shape_mismatch, "batchnorm backward without matching forward");
  }
  const T* xh = xhat_.data();
  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      sum_g[k] += g[i * c + k];
      sum_gx[k] += static_cast<double>(g[i * c + k]) * xh[i * c + k];
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    gamma.grad[k] += static_cast<T>(sum_gx[k]);
    beta.grad[k] += static_cast<T>(sum_g[k]);
  }
  // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<T> a(c), mean_g(c), mean_gx(c);
  for (std::size_t k = 0; k < c; ++k) {
    a[k] = gamma.value[k] * inv_std_[k];
    mean_g[k] = static_cast<T>(sum_g[k] * inv_m);
    mean_gx[k] = static_cast<T>(sum_gx[k] * inv_m);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t idx = i * c + k;
      pdx[idx] = a[k] * (g[idx] - mean_g[k] - xh[idx] * mean_gx[k]);
    }
  }
  return dx;
}

// ------------------------------------------------------------------ Relu

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
  mask_.resize(x.size());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x[i] > T(0);
    mask_[i] = on;
    y[i] = on ? x[i] : T(0);
  }
  return y;
}

template <typename T>
Tensor<T> Relu<T>::infer(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) const {
  if (grad_out.size() != mask_.size()) {
    throw Error(Errc::shape_mismatch, "relu backward without matching forward");
  }
  Tensor<T> dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = mask_[i] ? grad_out[i] : T(0);
  return dx;
}

// -------------------------------------------------------------- MaxPool2

template <typename T>
Tensor<T> MaxPool2<T>::run(const Tensor<T>& x, std::vector<std::size_t>* argmax) {
  require_rank(x.shape(), 4, "maxpool");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw Error(Errc::shape_mismatch, "maxpool input smaller than 2x2");
  Tensor<T> y({n, oh, ow, c});
  if (argmax) argmax->resize(y.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t k = 0; k < c; ++k, ++o) {
          std::size_t best = ((b * h + 2 * i) * w + 2 * j) * c + k;
          for (std::size_t di = 0; di < 2; ++di) {
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t idx = ((b * h + 2 * i + di) * w + 2 * j + dj) * c + k;
              if (x[idx] > x[best]) best = idx;
            }
          }
          y[o] = x[best];
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  return run(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool2<T>::infer(const Tensor<T>& x) {
  return run(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& grad_out) const {
  if (grad_out.size() != argmax_.size()) {
    throw Error(Errc::shape_mismatch, "maxpool backward without matching forward");
  }
  Tensor<T> dx(in_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
  return dx;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::infer(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global average pool");
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> y({n, c});
  std::vector<double> acc(c);
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* p = x.data() + b * hw * c;
    for (std::size_t s = 0; s < hw; ++s) {
      for (std::size_t k = 0; k < c; ++k) acc[k] += p[s * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) {
      y[b * c + k] = static_cast<T>(acc[k] / static_cast<double>(hw));
    }
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  return infer(x);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) const {
  if (in_shape_.size() != 4) throw Error(Errc::shape_mismatch, "pool backward before forward");
  const std::size_t n = in_shape_[0], hw = in_shape_[1] * in_shape_[2], c = in_shape_[3];
  if (grad_out.shape() != Shape{n, c}) {
    throw Error(Errc::shape_mismatch, "global average pool backward shape");
  }
  Tensor<T> dx(in_shape_);
  const T scale = T(1) / static_cast<T>(hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t s = 0; s < hw; ++s) {
      for (std::size_t k = 0; k < c; ++k) {
        dx[(b * hw + s) * c + k] = grad_out[b * c + k] * scale;
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}) {
  if (in == 0 || out == 0) throw Error(Errc::config_validation, "dense layer needs extents");
}

template <typename T>
void Dense<T>::init_he_uniform(Rng& rng) {
  he_uniform(weight.value, in_features(), rng);
  bias.value.fill(T(0));
}

template <typename T>
Tensor<T> Dense<T>::infer(const Tensor<T>& x) const {
  require_rank(x.shape(), 2, "dense");
  if (x.dim(1) != in_features()) {
    throw Error(Errc::shape_mismatch, "dense expects " + std::to_string(in_features()) +
                                          " features, got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), out = out_features();
  Tensor<T> y({n, out});
  ConstMapMat<T> xm(x.data(), n, in_features());
  ConstMapMat<T> wm(weight.value.data(), in_features(), out);
  MapMat<T> ym(y.data(), n, out);
  ym.noalias() = xm * wm;
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(), out);
  ym.rowwise() += b;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
  x_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t in = in_features(), out = out_features();
  if (x_.rank() != 2 || grad_out.shape() != Shape{x_.dim(0), out}) {
    throw Error(Errc::shape_mismatch, "dense backward shape");
  }
  const std::size_t n = x_.dim(0);
  ConstMapMat<T> g(grad_out.data(), n, out);
  ConstMapMat<T> xm(x_.data(), n, in);
  MapMat<T> gw(weight.grad.data(), in, out);
  gw.noalias() += xm.transpose() * g;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bias.grad.data(), out);
  gb += g.colwise().sum();
  Tensor<T> dx({n, in});
  ConstMapMat<T> wm(weight.value.data(), in, out);
  MapMat<T> dxm(dx.data(), n, in);
  dxm.noalias() = g * wm.transpose();
  return dx;
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double p) : p_(p) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw Error(Errc::config_validation, "dropout rate must be in [0,1)");
  }
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
  if (mode == Mode::eval || p_ == 0.0) {
    scale_.assign(x.size(), T(1));
    return x;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
  scale_.resize(x.size());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale_[i] = u(rng) < p_ ? T(0) : keep_scale;
    y[i] = x[i] * scale_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) const {
  if (grad_out.size() != scale_.size()) {
    throw Error(Errc::shape_mismatch, "dropout backward without matching forward");
  }
  Tensor<T> dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * scale_[i];
  return dx;
}

// ---------------------------------------------------- ResidualProjection

template <typename T>
ResidualProjection<T>::ResidualProjection(const std::string& name, std::size_t in_channels,
                                          std::size_t out_channels, std::size_t kernel)
    : projection(name, in_channels, out_channels, kernel) {}

namespace {
template <typename T>
void add_main(Tensor<T>& out, const Tensor<T>& main) {
  if (out.shape() != main.shape()) {
    throw Error(Errc::shape_mismatch, "residual branches differ: " + shape_string(main.shape()) +
                                          " vs " + shape_string(out.shape()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = main[i] + out[i];
}
}  // namespace

template <typename T>
Tensor<T> ResidualProjection<T>::combine(const Tensor<T>& main, const Tensor<T>& skip) {
  Tensor<T> out = projection.forward(skip);
  add_main(out, main);
  return out;
}

template <typename T>
Tensor<T> ResidualProjection<T>::infer(const Tensor<T>& main, const Tensor<T>& skip) const {
  Tensor<T> out = projection.infer(skip);
  add_main(out, main);
  return out;
}

template <typename T>
Tensor<T> ResidualProjection<T>::backward(const Tensor<T>& grad_out) {
  return projection.backward(grad_out);
}

// ------------------------------------------------------------------ loss

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> p(logits.size());
  if (logits.empty()) return p;
  const T mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (auto v : logits) z += std::exp(static_cast<double>(v - mx));
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = static_cast<T>(std::exp(static_cast<double>(logits[k] - mx)) / z);
  }
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax cross-entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw Error(Errc::shape_mismatch, "label count differs from batch");
  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k) {
      throw Error(Errc::label_out_of_range, "label " + std::to_string(labels[b]));
    }
    const std::span<const T> row(logits.data() + b * k, k);
    const T mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (auto v : row) z += std::exp(static_cast<double>(v - mx));
    const double log_z = std::log(z);
    r.loss += log_z - static_cast<double>(row[labels[b]] - mx);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j] - mx) - log_z);
      const double onehot = static_cast<int>(j) == labels[b] ? 1.0 : 0.0;
      r.grad[b * k + j] = static_cast<T>((p - onehot) / static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

#define SEMG_INSTANTIATE(T)                                 \
  template class Conv2d<T>;                                 \
  template class BatchNorm<T>;                              \
  template class Relu<T>;                                   \
  template class MaxPool2<T>;                               \
  template class GlobalAvgPool<T>;                          \
  template class Dense<T>;                                  \
  template class Dropout<T>;                                \
  template class ResidualProjection<T>;                     \
  template std::vector<T> softmax<T>(std::span<const T>);   \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>);

SEMG_INSTANTIATE(float)
SEMG_INSTANTIATE(double)
#undef SEMG_INSTANTIATE

}  // namespace semg::nn
