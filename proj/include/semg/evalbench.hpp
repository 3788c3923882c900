#pragma once

#include <optional>
#include <string>
#include <vector>

#include "semg/features.hpp"
#include "semg/sedcnn.hpp"
#include "semg/svm.hpp"

namespace semg::eval {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  std::size_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
  std::size_t total() const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t classes);

struct MetricsReport {
  double accuracy = 0;
  double recall = 0;  // macro averages
  double precision = 0;
  double f1 = 0;
  std::vector<double> class_precision;
  std::vector<double> class_recall;
  std::vector<double> class_f1;
  std::vector<bool> no_predictions;  // precision forced to 0
};

MetricsReport metrics(const ConfusionMatrix& cm);

std::string confusion_csv(const ConfusionMatrix& cm);

// Euclidean k-NN. Tied vote counts go to the class with the smaller mean
// neighbour distance, then the lower index.
int knn_classify(const std::vector<svm::Vector>& train, std::span<const int> labels,
                 std::span<const double> query, std::size_t k = 5);

// ---------------------------------------------------------------- MLP baseline

struct AnnConfig {
  std::size_t hidden = 64;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double lr = 0.001;
  std::uint64_t seed = 42;
  std::size_t num_classes = 10;
};

template <typename T>
class Mlp {
 public:
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);

  nn::Tensor<T> forward(const nn::Tensor<T>& x);
  nn::Tensor<T> infer(const nn::Tensor<T>& x) const;
  void backward(const nn::Tensor<T>& grad_logits);
  std::vector<nn::Param<T>*> parameters();

 private:
  nn::Dense<T> fc1_;
  nn::Relu<T> relu_;
  nn::Dense<T> fc2_;
};

struct AnnModel {
  svm::Standardizer standardizer;
  std::optional<Mlp<float>> net;
  std::vector<double> loss_trace;  // mean loss per epoch
};

AnnModel ann_train(const std::vector<svm::Vector>& X, std::span<const int> labels,
                   const AnnConfig& cfg);
int ann_classify(const AnnModel& m, std::span<const double> x);

// ------------------------------------------------------------ windowed data

// Filtered windows of a corpus in two views: 40x40 images and 80-d features.
struct WindowedCorpus {
  sedcnn::LabeledDataset images;  // groups = recording index
  std::vector<svm::Vector> features;
  std::vector<std::size_t> window_start;
};

WindowedCorpus prepare_windows(const std::vector<signal::Recording>& recs,
                               const signal::FilterBank& bank,
                               const signal::WindowingParams& wp = {},
                               const features::FeatureThresholds& th = {});

// ---------------------------------------------------------------- comparison

enum class Method { sedcnn_svm, dcnn_svm, dcnn, svm_handcrafted, ann, knn };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::vector<Method> all_methods();

struct ComparisonConfig {
  sedcnn::SedcnnConfig net;  // SE/residual flags are set per method
  svm::MulticlassParams svm;
  std::size_t knn_k = 5;
  AnnConfig ann;
  double test_fraction = 0.2;
  sedcnn::SplitMode split_mode = sedcnn::SplitMode::per_window;
  std::uint64_t seed = 42;
  sedcnn::EpochCallback on_epoch;  // invoked for every network being trained
  std::function<void(const std::string&)> log;
};

struct MethodResult {
  Method method;
  MetricsReport report;
  ConfusionMatrix confusion;
  std::vector<int> predictions;  // aligned with the test indices
  double train_seconds = 0;
  double eval_seconds = 0;
};

struct ComparisonResult {
  sedcnn::Split split;
  std::vector<MethodResult> methods;
  // Networks trained along the way, kept for reuse (e.g. bundling).
  std::optional<sedcnn::SedcnnModel> full_net;
  std::optional<sedcnn::SedcnnModel> ablated_net;
  std::optional<svm::MulticlassSvm> full_svm;

  const MethodResult* find(Method m) const;
};

ComparisonResult run_comparison(const WindowedCorpus& data, const std::vector<Method>& methods,
                                const ComparisonConfig& cfg);

// `timing` = false writes zero for the timing columns so reports are byte-stable.
std::string report_csv(const ComparisonResult& r, bool timing = true);
std::string report_table(const ComparisonResult& r);

struct OrderingCheck {
  bool sedcnn_vs_dcnn = true;      // sedcnn_svm >= dcnn - 0.01
  bool beats_handcrafted = true;   // sedcnn_svm and dcnn > svm_handcrafted
  bool beats_knn = true;           // sedcnn_svm and dcnn > knn
  bool fatal = false;              // sedcnn_svm < svm_handcrafted
  std::vector<std::string> violations;
};

OrderingCheck check_ordering(const ComparisonResult& r);

}  // namespace semg::eval
