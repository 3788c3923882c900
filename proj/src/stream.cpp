#include "semg/stream.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace semg::stream {

namespace {

constexpr std::uint32_t kMagic = 0x42504553;  // "SEPB"

using Clock = std::chrono::steady_clock;

}  // namespace

signal::FilterBank PipelineBundle::filter_bank() const {
  return signal::design_filter_bank(filter.sample_rate_hz, filter.cutoff_hz, filter.notch_hz,
                                    filter.notch_q);
}

void PipelineBundle::validate() const {
  const std::size_t emb = model.config().embedding_dim();
  const std::size_t svm_dim = svm.standardized ? svm.standardizer.mean.size()
                              : svm.pool.empty() ? emb
                                                 : svm.pool.front().size();
  if (emb != svm_dim) {
    throw Error(Errc::shape_mismatch, "model embedding has " + std::to_string(emb) +
                                          " dimensions but the SVM expects " +
                                          std::to_string(svm_dim));
  }
  if (svm.num_classes != model.config().num_classes) {
    throw Error(Errc::shape_mismatch, "model and SVM disagree on the class count");
  }
  signal::validate(windowing);
  if (windowing.window_len * kChannels != model.config().input_hw * model.config().input_hw) {
    throw Error(Errc::shape_mismatch, "window size does not match the model input");
  }
}

std::vector<std::uint8_t> serialize_bundle(const PipelineBundle& b) {
  ByteWriter w;
  w.u32(kMagic);
  w.u32(kBundleFormatVersion);
  nlohmann::ordered_json m;
  m["format_version"] = kBundleFormatVersion;
  m["sample_rate_hz"] = b.filter.sample_rate_hz;
  m["cutoff_hz"] = b.filter.cutoff_hz;
  m["notch_hz"] = b.filter.notch_hz;
  m["notch_q"] = b.filter.notch_q;
  m["window_len"] = b.windowing.window_len;
  m["hop"] = b.windowing.hop;
  m["embedding_dim"] = b.model.config().embedding_dim();
  m["classes"] = b.svm.num_classes;
  w.str(m.dump());
  const auto model = sedcnn::serialize_model(b.model);
  w.u64(model.size());
  w.bytes(model);
  svm::write_svm(w, b.svm);
  w.u64(fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

PipelineBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 8 || r.u32() != kMagic) throw Error(Errc::corruption, "not a pipeline bundle");
  const auto version = r.u32();
  if (version != kBundleFormatVersion) {
    throw Error(Errc::format_version, "bundle format version " + std::to_string(version) +
                                          " found, expected " +
                                          std::to_string(kBundleFormatVersion));
  }
  if (bytes.size() < 16) throw Error(Errc::corruption, "bundle truncated");
  ByteReader tail(bytes.last(8));
  if (fnv1a64(bytes.first(bytes.size() - 8)) != tail.u64()) {
    throw Error(Errc::corruption, "bundle checksum mismatch");
  }
  FilterParams fp;
  signal::WindowingParams wp;
  try {
    const auto m = nlohmann::json::parse(r.str());
    fp.sample_rate_hz = m.at("sample_rate_hz").get<int>();
    fp.cutoff_hz = m.at("cutoff_hz").get<double>();
    fp.notch_hz = m.at("notch_hz").get<double>();
    fp.notch_q = m.at("notch_q").get<double>();
    wp.window_len = m.at("window_len").get<std::size_t>();
    wp.hop = m.at("hop").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corruption, std::string("bad bundle manifest: ") + e.what());
  }
  const auto model_len = r.u64();
  if (model_len > r.remaining()) throw Error(Errc::corruption, "embedded model truncated");
  auto model = sedcnn::deserialize_model(r.bytes(model_len));
  PipelineBundle b{fp, wp, std::move(model), svm::read_svm(r)};
  if (r.remaining() != 8) throw Error(Errc::corruption, "trailing bytes in bundle");
  b.validate();
  return b;
}

void save_bundle(const PipelineBundle& b, const std::string& path) {
  write_file_bytes(path, serialize_bundle(b));
}

PipelineBundle load_bundle(const std::string& path) {
  return deserialize_bundle(read_file_bytes(path));
}

WindowPrediction predict_window(const PipelineBundle& b, std::span<const float> image) {
  const auto e = sedcnn::embed_one(b.model.net, image);
  const auto v = svm::ovo_vote(b.svm, svm::Vector(e.begin(), e.end()));
  const int n = v.votes[v.label];
  return {v.label, n > 0 ? v.strength[v.label] / n : 0.0};
}

std::vector<WindowPrediction> offline_predict(const PipelineBundle& b,
                                              const signal::Recording& rec) {
  const auto filtered = signal::filter_recording(rec, b.filter_bank());
  std::vector<WindowPrediction> out;
  for (const auto& w : signal::segment_windows(filtered, b.windowing)) {
    out.push_back(predict_window(b, signal::reshape_to_input(w)));
  }
  return out;
}

// ------------------------------------------------------------------ engine

StreamEngine::StreamEngine(const PipelineBundle* bundle, std::size_t vote, bool measure_latency)
    : bundle_(bundle), vote_(std::max<std::size_t>(1, vote)), measure_(measure_latency) {
  if (!bundle_) return;
  const auto bank = bundle_->filter_bank();
  filters_.assign(kChannels, signal::FilterState(bank));
  ring_.assign(bundle_->windowing.window_len * kChannels, 0.0f);
  image_.resize(ring_.size());
}

void StreamEngine::reset() {
  for (auto& f : filters_) f.reset();
  std::fill(ring_.begin(), ring_.end(), 0.0f);
  head_ = total_ = emitted_ = 0;
  recent_.clear();
}

std::optional<PredictionEvent> StreamEngine::push(std::span<const float> frame) {
  if (!bundle_) throw Error(Errc::bundle_not_loaded, "stream engine has no pipeline bundle");
  if (frame.size() != kChannels) {
    throw Error(Errc::dimension, "frame has " + std::to_string(frame.size()) + " channels, expected " +
                                     std::to_string(kChannels));
  }
  const auto t0 = measure_ ? Clock::now() : Clock::time_point{};
  const std::size_t a = bundle_->windowing.window_len;
  const std::size_t hop = bundle_->windowing.hop;
  for (std::size_t c = 0; c < kChannels; ++c) ring_[head_ * kChannels + c] = filters_[c].process(frame[c]);
  head_ = (head_ + 1) % a;
  ++total_;
  if (total_ < a || (total_ - a) % hop != 0) return std::nullopt;

  // head_ now points at the oldest frame of the window.
  for (std::size_t t = 0; t < a; ++t) {
    const std::size_t row = (head_ + t) % a;
    std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(row * kChannels), kChannels,
                image_.begin() + static_cast<std::ptrdiff_t>(t * kChannels));
  }
  const auto pred = predict_window(*bundle_, image_);
  PredictionEvent ev;
  ev.window_index = emitted_++;
  ev.raw_label = pred.label;
  ev.margin = pred.margin;
  ev.label = pred.label;
  if (vote_ > 1) {
    recent_.push_back(pred.label);
    if (recent_.size() > vote_) recent_.pop_front();
    std::map<int, std::pair<int, std::size_t>> tally;  // label -> (count, last position)
    for (std::size_t i = 0; i < recent_.size(); ++i) {
      auto& [count, last] = tally[recent_[i]];
      ++count;
      last = i;
    }
    auto best = tally.begin();
    for (auto it = tally.begin(); it != tally.end(); ++it) {
      if (it->second.first > best->second.first ||
          (it->second.first == best->second.first && it->second.second > best->second.second)) {
        best = it;
      }
    }
    ev.label = best->first;
  }
  if (measure_) {
    ev.latency_us =
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
  }
  return ev;
}

// ------------------------------------------------------------------ replay

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

ReplayResult replay(const PipelineBundle& b, const std::vector<signal::Recording>& recs,
                    const ReplayOptions& opt) {
  ReplayResult res;
  const std::size_t K = b.svm.num_classes;
  auto& sum = res.summary;
  sum.trials_per_gesture.assign(K, 0);
  sum.correct_per_gesture.assign(K, 0);
  std::vector<int> truth, pred;
  std::vector<double> latency;
  const auto start = Clock::now();
  const auto frame_period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(1.0 / b.filter.sample_rate_hz));
  StreamEngine engine(&b, opt.vote, opt.timing);
  std::array<float, kChannels> frame{};

  for (std::size_t r = 0; r < recs.size(); ++r) {
    const auto& rec = recs[r];
    signal::validate(rec);
    engine.reset();
    TrialResult trial;
    trial.recording = r;
    trial.true_label = rec.gesture_label;
    const auto trial_start = Clock::now();
    for (std::size_t i = 0; i < rec.length(); ++i) {
      if (opt.realtime) std::this_thread::sleep_until(trial_start + frame_period * static_cast<long>(i));
      for (std::size_t c = 0; c < kChannels; ++c) frame[c] = rec.channels[c][i];
      if (auto ev = engine.push(frame)) {
        truth.push_back(rec.gesture_label);
        pred.push_back(ev->label);
        latency.push_back(static_cast<double>(ev->latency_us));
        trial.events.push_back(*ev);
      }
    }
    const auto hits = std::count_if(trial.events.begin(), trial.events.end(),
                                    [&](const auto& e) { return e.label == rec.gesture_label; });
    trial.correct = 2 * static_cast<std::size_t>(hits) > trial.events.size();
    if (rec.gesture_label >= 0 && static_cast<std::size_t>(rec.gesture_label) < K) {
      ++sum.trials_per_gesture[rec.gesture_label];
      if (trial.correct) ++sum.correct_per_gesture[rec.gesture_label];
    }
    res.trials.push_back(std::move(trial));
  }
  sum.window_confusion = eval::confusion(truth, pred, K);
  if (!truth.empty()) sum.window_metrics = eval::metrics(sum.window_confusion);
  std::size_t correct = 0;
  for (const auto& t : res.trials) correct += t.correct ? 1 : 0;
  sum.trial_accuracy =
      res.trials.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(res.trials.size());
  sum.p95_latency_us = percentile(latency, 0.95);
  sum.elapsed_seconds =
      opt.timing ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
  return res;
}

std::string events_jsonl(const ReplayResult& r) {
  std::string out;
  for (const auto& t : r.trials) {
    for (const auto& e : t.events) {
      nlohmann::ordered_json j;
      j["recording"] = t.recording;
      j["window_index"] = e.window_index;
      j["label"] = e.label;
      j["margin"] = e.margin;
      j["latency_us"] = e.latency_us;
      j["true_label"] = t.true_label;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::string summary_csv(const ReplayResult& r, bool timing) {
  const auto& s = r.summary;
  std::ostringstream out;
  out << "method,accuracy,recall,precision,f1,train_seconds,eval_seconds,trials,correct,"
         "p95_latency_us\n";
  std::size_t trials = 0, correct = 0;
  for (std::size_t g = 0; g < s.trials_per_gesture.size(); ++g) {
    trials += s.trials_per_gesture[g];
    correct += s.correct_per_gesture[g];
  }
  const auto& m = s.window_metrics;
  out << "stream," << format_real(m.accuracy) << ',' << format_real(m.recall) << ','
      << format_real(m.precision) << ',' << format_real(m.f1) << ",0,"
      << format_real(timing ? s.elapsed_seconds : 0.0) << ',' << trials << ',' << correct << ','
      << format_real(timing ? s.p95_latency_us : 0.0) << '\n';
  for (std::size_t g = 0; g < s.trials_per_gesture.size(); ++g) {
    if (s.trials_per_gesture[g] == 0) continue;
    const bool have = !m.class_recall.empty();
    const double rec = have ? m.class_recall[g] : 0.0;
    out << "gesture_" << g << ',' << format_real(rec) << ',' << format_real(rec) << ','
        << format_real(have ? m.class_precision[g] : 0.0) << ','
        << format_real(have ? m.class_f1[g] : 0.0) << ",0,0," << s.trials_per_gesture[g] << ','
        << s.correct_per_gesture[g] << ",0\n";
  }
  return out.str();
}

}  // namespace semg::stream
