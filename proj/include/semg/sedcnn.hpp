#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "semg/nn/layers.hpp"
#include "semg/nn/optim.hpp"
#include "semg/nn/se_block.hpp"

namespace semg::sedcnn {

struct SedcnnConfig {
  // Two 3x3 convolutions per module; DCNN-1 holds three modules, DCNN-2 one.
  std::vector<std::size_t> dcnn1_channels{16, 16, 32, 32, 64, 64};
  std::vector<std::size_t> dcnn2_channels{128, 128};
  std::size_t kernel = 3;
  std::size_t input_hw = 40;
  std::size_t batch_size = 16;
  double lr = 0.001;
  double dropout = 0.5;
  std::size_t epochs = 100;
  std::size_t patience = 10;  // epochs without validation improvement; 0 disables
  bool se_enabled = true;
  bool residual_enabled = true;
  std::size_t se_reduction = 4;
  std::size_t residual_kernel = 1;
  std::uint64_t seed = 42;
  std::size_t num_classes = 10;

  std::size_t embedding_dim() const;
};

void validate(const SedcnnConfig& cfg);
std::string config_to_json(const SedcnnConfig& cfg);
// Keys absent from the text keep the values of `base`.
SedcnnConfig config_from_json(const std::string& text, SedcnnConfig base = {});

// Conv -> BN -> ReLU -> Conv -> BN [-> SE] [+ projection(input)] -> ReLU [-> pool]
template <typename T>
struct ConvModule {
  nn::Conv2d<T> conv_a;
  nn::BatchNorm<T> bn_a;
  nn::Relu<T> relu_a;
  nn::Conv2d<T> conv_b;
  nn::BatchNorm<T> bn_b;
  std::optional<nn::SEBlock<T>> se;
  std::optional<nn::ResidualProjection<T>> residual;
  nn::Relu<T> relu_out;
  bool pool = false;
  nn::MaxPool2<T> pool_layer;
};

template <typename T>
class BasicSedcnn {
 public:
  explicit BasicSedcnn(const SedcnnConfig& cfg);

  struct Output {
    nn::Tensor<T> logits;     // N x classes
    nn::Tensor<T> embedding;  // N x embedding_dim (GAP output, pre-dropout)
  };

  // x: N x H x W x 1. Caches activations for backward().
  Output forward(const nn::Tensor<T>& x, nn::Mode mode, Rng& dropout_rng);
  // Eval-mode forward with no cached state.
  Output infer(const nn::Tensor<T>& x) const;
  void backward(const nn::Tensor<T>& grad_logits);

  std::vector<nn::Param<T>*> parameters();  // includes BN running statistics
  std::vector<const nn::Param<T>*> parameters() const;
  std::vector<nn::Param<T>*> trainable_parameters();
  void zero_grad();
  std::size_t trainable_parameter_count() const;

  const SedcnnConfig& config() const { return cfg_; }
  const std::vector<ConvModule<T>>& modules() const { return modules_; }
  std::vector<ConvModule<T>>& modules() { return modules_; }
  nn::Dense<T>& head() { return head_; }
  const nn::Dense<T>& head() const { return head_; }

  std::size_t conv_layer_count() const;
  std::size_t batchnorm_count() const;
  std::size_t projection_count() const;
  std::size_t se_count() const;

 private:
  SedcnnConfig cfg_;
  std::vector<ConvModule<T>> modules_;
  nn::GlobalAvgPool<T> gap_;
  nn::Dropout<T> dropout_;
  nn::Dense<T> head_;
  std::vector<nn::Tensor<T>> module_inputs_;
};

using SedcnnNet = BasicSedcnn<float>;

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_accuracy = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0;
  bool early_stopped = false;
};

struct SedcnnModel {
  explicit SedcnnModel(const SedcnnConfig& cfg) : net(cfg) {}
  SedcnnNet net;
  TrainingHistory history;
  const SedcnnConfig& config() const { return net.config(); }
};

SedcnnModel build_model(const SedcnnConfig& cfg);

// Flattened input images (input_hw^2 floats each) with labels and the index of
// the recording each window came from.
struct LabeledDataset {
  std::vector<std::vector<float>> inputs;
  std::vector<int> labels;
  std::vector<int> groups;

  std::size_t size() const { return inputs.size(); }
  LabeledDataset subset(const std::vector<std::size_t>& idx) const;
};

enum class SplitMode { per_window, per_recording };

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified by label; per_recording keeps all windows of a group together.
Split stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed,
                       SplitMode mode = SplitMode::per_window);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam training; restores the best-validation snapshot at the end.
void train(SedcnnModel& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
           const EpochCallback& on_epoch = {});

nn::Tensor<float> to_batch(const LabeledDataset& data, std::span<const std::size_t> idx,
                           std::size_t hw);

// Per-sample eval-mode inference; the streaming engine uses the same path.
std::vector<float> embed_one(const SedcnnNet& net, std::span<const float> image);
std::vector<std::vector<float>> extract_embeddings(const SedcnnNet& net,
                                                   const std::vector<std::vector<float>>& inputs);
std::vector<float> logits_one(const SedcnnNet& net, std::span<const float> image);
int predict_softmax(const SedcnnNet& net, std::span<const float> image);

double accuracy(const SedcnnNet& net, const LabeledDataset& data);

// Container: magic, version, JSON config, named float32 blocks, FNV-1a checksum.
inline constexpr std::uint32_t kModelFormatVersion = 1;
std::vector<std::uint8_t> serialize_model(const SedcnnModel& model);
SedcnnModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const SedcnnModel& model, const std::string& path);
SedcnnModel load_model(const std::string& path);

}  // namespace semg::sedcnn
