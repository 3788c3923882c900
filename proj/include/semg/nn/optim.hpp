#pragma once

#include <vector>

#include "semg/nn/tensor.hpp"

namespace semg::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are allocated zeroed on the first step and are
// matched to parameters by position, so the parameter list must be stable.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Param<T>*>& params);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace semg::nn
