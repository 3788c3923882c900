#pragma once

#include <chrono>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "semg/evalbench.hpp"
#include "semg/sedcnn.hpp"
#include "semg/signal.hpp"
#include "semg/svm.hpp"

namespace semg::stream {

struct FilterParams {
  int sample_rate_hz = kSampleRateHz;
  double cutoff_hz = 20.0;
  double notch_hz = 50.0;
  double notch_q = 30.0;
};

// Everything the online path needs: filter, windowing, network and SVM head.
struct PipelineBundle {
  FilterParams filter;
  signal::WindowingParams windowing;
  sedcnn::SedcnnModel model;
  svm::MulticlassSvm svm;

  signal::FilterBank filter_bank() const;
  // Throws shape_mismatch if the SVM input dimension differs from the embedding.
  void validate() const;
};

inline constexpr std::uint32_t kBundleFormatVersion = 1;
std::vector<std::uint8_t> serialize_bundle(const PipelineBundle& b);
PipelineBundle deserialize_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const PipelineBundle& b, const std::string& path);
PipelineBundle load_bundle(const std::string& path);

// Embedding + SVM vote for one 1600-value window image.
struct WindowPrediction {
  int label = 0;
  double margin = 0;  // mean |f| of the machines that voted for the label
};
WindowPrediction predict_window(const PipelineBundle& b, std::span<const float> image);

// Offline reference path: whole-recording causal filter, segmentation, prediction.
std::vector<WindowPrediction> offline_predict(const PipelineBundle& b,
                                              const signal::Recording& rec);

struct PredictionEvent {
  std::size_t window_index = 0;
  int label = 0;      // after smoothing
  int raw_label = 0;  // this window alone
  double margin = 0;
  std::int64_t latency_us = 0;
};

class StreamEngine {
 public:
  StreamEngine() = default;
  // `vote` > 1 enables a majority vote over the last `vote` window predictions.
  explicit StreamEngine(const PipelineBundle* bundle, std::size_t vote = 1,
                        bool measure_latency = true);

  std::optional<PredictionEvent> push(std::span<const float> frame);
  void reset();

  std::size_t samples_seen() const { return total_; }
  std::size_t events_emitted() const { return emitted_; }

 private:
  const PipelineBundle* bundle_ = nullptr;
  std::size_t vote_ = 1;
  bool measure_ = true;
  std::vector<signal::FilterState> filters_;
  std::vector<float> ring_;  // window_len x channels, row = one frame
  std::size_t head_ = 0;     // next row to overwrite
  std::size_t total_ = 0;
  std::size_t emitted_ = 0;
  std::deque<int> recent_;
  std::vector<float> image_;
};

struct ReplayOptions {
  bool realtime = false;  // pace frames at the sample rate
  bool timing = true;     // false records zero latency for byte-stable logs
  std::size_t vote = 1;
};

struct TrialResult {
  std::size_t recording = 0;
  int true_label = 0;
  std::vector<PredictionEvent> events;
  bool correct = false;  // majority of window labels match
};

struct ReplaySummary {
  eval::MetricsReport window_metrics;
  eval::ConfusionMatrix window_confusion;
  std::vector<std::size_t> trials_per_gesture;
  std::vector<std::size_t> correct_per_gesture;
  double trial_accuracy = 0;
  double p95_latency_us = 0;
  double elapsed_seconds = 0;
};

struct ReplayResult {
  std::vector<TrialResult> trials;
  ReplaySummary summary;
};

ReplayResult replay(const PipelineBundle& b, const std::vector<signal::Recording>& recs,
                    const ReplayOptions& opt = {});

// JSON lines: {window_index, label, margin, latency_us, true_label, recording}
std::string events_jsonl(const ReplayResult& r);
std::string summary_csv(const ReplayResult& r, bool timing = true);

double percentile(std::vector<double> v, double q);

}  // namespace semg::stream
