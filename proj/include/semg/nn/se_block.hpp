#pragma once

#include "semg/nn/layers.hpp"

namespace semg::nn {

// Squeeze-and-excitation: z = spatial mean, s = sigmoid(fc2(relu(fc1(z)))),
// output channel c = input channel c * s_c.
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(const std::string& name, std::size_t channels, std::size_t reduction);

  void init_he_uniform(Rng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);

  // Per-sample channel gates from the last forward, N x C.
  const Tensor<T>& scale() const { return s_; }
  std::size_t channels() const { return fc2.out_features(); }
  std::size_t reduction() const { return r_; }

  void collect(std::vector<Param<T>*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }

  Dense<T> fc1;
  Dense<T> fc2;

 private:
  Tensor<T> gates(const Tensor<T>& x, Dense<T>* fc1_train, Dense<T>* fc2_train,
                  Tensor<T>* hidden) const;

  std::size_t r_ = 1;
  Tensor<T> x_, h_, s_;
};

}  // namespace semg::nn
