#include "semg/nn/se_block.hpp"

#include <cmath>

namespace semg::nn {

template <typename T>
SEBlock<T>::SEBlock(const std::string& name, std::size_t channels, std::size_t reduction)
    : r_(reduction) {
  if (reduction == 0 || channels % reduction != 0) {
    throw Error(Errc::divisibility, "SE reduction " + std::to_string(reduction) +
                                        " does not divide " + std::to_string(channels) +
                                        " channels");
  }
  fc1 = Dense<T>(name + ".fc1", channels, channels / reduction);
  fc2 = Dense<T>(name + ".fc2", channels / reduction, channels);
}

template <typename T>
void SEBlock<T>::init_he_uniform(Rng& rng) {
  fc1.init_he_uniform(rng);
  fc2.init_he_uniform(rng);
}

namespace {
template <typename T>
T sigmoid(T v) {
  return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
}
}  // namespace

template <typename T>
Tensor<T> SEBlock<T>::gates(const Tensor<T>& x, Dense<T>* fc1_train, Dense<T>* fc2_train,
                            Tensor<T>* hidden) const {
  if (x.rank() != 4 || x.dim(3) != channels()) {
    throw Error(Errc::shape_mismatch, "SE block expects " + std::to_string(channels()) +
                                          " channels, got " + shape_string(x.shape()));
  }
  const Tensor<T> z = GlobalAvgPool<T>::infer(x);
  Tensor<T> h = fc1_train ? fc1_train->forward(z) : fc1.infer(z);
  h = Relu<T>::infer(h);
  if (hidden) *hidden = h;
  Tensor<T> s = fc2_train ? fc2_train->forward(h) : fc2.infer(h);
  for (auto& v : s.values()) v = sigmoid(v);
  return s;
}

namespace {
template <typename T>
Tensor<T> apply_scale(const Tensor<T>& x, const Tensor<T>& s) {
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    const T* sb = s.data() + b * c;
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = (b * hw + p) * c;
      for (std::size_t k = 0; k < c; ++k) y[base + k] = x[base + k] * sb[k];
    }
  }
  return y;
}
}  // namespace

template <typename T>
Tensor<T> SEBlock<T>::forward(const Tensor<T>& x) {
  x_ = x;
  s_ = gates(x, &fc1, &fc2, &h_);
  return apply_scale(x, s_);
}

template <typename T>
Tensor<T> SEBlock<T>::infer(const Tensor<T>& x) const {
  return apply_scale(x, gates(x, nullptr, nullptr, nullptr));
}

template <typename T>
Tensor<T> SEBlock<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape() != x_.shape()) {
    throw Error(Errc::shape_mismatch, "SE backward without matching forward");
  }
  const std::size_t n = x_.dim(0), hw = x_.dim(1) * x_.dim(2), c = x_.dim(3);
  Tensor<T> dx = apply_scale(grad_out, s_);

  // d loss / d s_c = sum over positions of grad * x, then through the sigmoid.
  Tensor<T> dlogit({n, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < c; ++k) {
      double acc = 0;
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t idx = (b * hw + p) * c + k;
        acc += static_cast<double>(grad_out[idx]) * x_[idx];
      }
      const double s = s_[b * c + k];
      dlogit[b * c + k] = static_cast<T>(acc * s * (1.0 - s));
    }
  }
  Tensor<T> dh = fc2.backward(dlogit);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (!(h_[i] > T(0))) dh[i] = T(0);
  }
  const Tensor<T> dz = fc1.backward(dh);
  const T inv_hw = T(1) / static_cast<T>(hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = (b * hw + p) * c;
      for (std::size_t k = 0; k < c; ++k) dx[base + k] += dz[b * c + k] * inv_hw;
    }
  }
  return dx;
}

template class SEBlock<float>;
template class SEBlock<double>;

}  // namespace semg::nn
