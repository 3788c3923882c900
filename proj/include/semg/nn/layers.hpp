#pragma once

#include <string>
#include <vector>

#include "semg/nn/tensor.hpp"

namespace semg::nn {

// Stride-1, same-padded 2-D cross-correlation. Weights are stored
// {k, k, in, out} so the flattened kernel is the right-hand GEMM operand.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel);

  void init_he_uniform(Rng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }
  void collect(std::vector<Param<T>*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Param<T> weight;
  Param<T> bias;

 private:
  Tensor<T> run(const Tensor<T>& x, std::vector<T>& col) const;

  std::size_t in_ = 0, out_ = 0, k_ = 0;
  std::vector<T> col_;
  Shape in_shape_;
};

// Per-channel normalization over every axis but the last.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);

  std::size_t channels() const { return gamma.value.size(); }
  void collect(std::vector<Param<T>*>& out) { out.push_back(&gamma); out.push_back(&beta); }

  Param<T> gamma;
  Param<T> beta;
  Param<T> running_mean;  // not trainable; persisted with the model
  Param<T> running_var;
  double eps = 1e-5;
  double momentum = 0.9;

 private:
  Mode mode_ = Mode::train;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  static Tensor<T> infer(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  std::vector<unsigned char> mask_;
};

// 2x2 max pooling, stride 2, floor on odd extents.
template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  static Tensor<T> infer(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  static Tensor<T> run(const Tensor<T>& x, std::vector<std::size_t>* argmax);
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// N x H x W x C -> N x C spatial mean.
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  static Tensor<T> infer(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  Shape in_shape_;
};

// N x in -> N x out.
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out);

  void init_he_uniform(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& grad_out);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }
  void collect(std::vector<Param<T>*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Param<T> weight;
  Param<T> bias;

 private:
  Tensor<T> x_;
};

// Inverted dropout: survivors are scaled by 1/(1-p) at train time.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double p = 0.5);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng);
  Tensor<T> backward(const Tensor<T>& grad_out) const;
  double rate() const { return p_; }

 private:
  double p_;
  std::vector<T> scale_;
};

// 1x1 (or 3x3) projection on the skip path; output = main + proj(skip).
template <typename T>
class ResidualProjection {
 public:
  ResidualProjection() = default;
  ResidualProjection(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                     std::size_t kernel = 1);

  Tensor<T> combine(const Tensor<T>& main, const Tensor<T>& skip);
  Tensor<T> infer(const Tensor<T>& main, const Tensor<T>& skip) const;
  // Returns the gradient w.r.t. the skip input; the main-branch gradient is grad_out itself.
  Tensor<T> backward(const Tensor<T>& grad_out);

  Conv2d<T> projection;
};

// Mean loss over the batch; grad is d(mean loss)/d(logits).
template <typename T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;
};

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

}  // namespace semg::nn
