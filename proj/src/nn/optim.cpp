#include "semg/nn/optim.hpp"

#include <cmath>

namespace semg::nn {

template <typename T>
void Adam<T>::step(const std::vector<Param<T>*>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->value.size(), 0.0);
      v_[i].assign(params[i]->value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw Error(Errc::shape_mismatch, "parameter list changed between optimizer steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (!p.trainable) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] = static_cast<T>(p.value[j] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace semg::nn
