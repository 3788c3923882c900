#include "semg/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace semg::eval {

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw Error(Errc::dimension, "truth and prediction lengths differ");
  }
  ConfusionMatrix cm{classes, std::vector<std::size_t>(classes * classes, 0)};
  const auto K = static_cast<int>(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int v : {truth[i], predicted[i]}) {
      if (v < 0 || v >= K) {
        throw Error(Errc::label_out_of_range,
                    "label " + std::to_string(v) + " outside [0," + std::to_string(K) + ")");
      }
    }
    ++cm.counts[truth[i] * classes + predicted[i]];
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw Error(Errc::empty_matrix, "metrics need at least one evaluated sample");
  const std::size_t K = cm.classes;
  MetricsReport r;
  r.class_precision.resize(K);
  r.class_recall.resize(K);
  r.class_f1.resize(K);
  r.no_predictions.assign(K, false);
  std::size_t trace = 0;
  for (std::size_t c = 0; c < K; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < K; ++o) {
      predicted += cm.at(o, c);
      actual += cm.at(c, o);
    }
    const double tp = static_cast<double>(cm.at(c, c));
    trace += cm.at(c, c);
    const double fp = static_cast<double>(predicted) - tp;
    const double fn = static_cast<double>(actual) - tp;
    double p = 0, rc = 0;
    if (predicted == 0) {
      r.no_predictions[c] = true;
    } else {
      p = tp / (tp + fp);
    }
    if (actual > 0) rc = tp / (tp + fn);
    r.class_precision[c] = p;
    r.class_recall[c] = rc;
    r.class_f1[c] = (p + rc) > 0 ? 2 * p * rc / (p + rc) : 0.0;
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  const auto mean = [K](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(K);
  };
  r.precision = mean(r.class_precision);
  r.recall = mean(r.class_recall);
  r.f1 = mean(r.class_f1);
  return r;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (std::size_t c = 0; c < cm.classes; ++c) out << ',' << c;
  out << '\n';
  for (std::size_t t = 0; t < cm.classes; ++t) {
    out << t;
    for (std::size_t p = 0; p < cm.classes; ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
  return out.str();
}

int knn_classify(const std::vector<svm::Vector>& train, std::span<const int> labels,
                 std::span<const double> query, std::size_t k) {
  if (train.empty()) throw Error(Errc::empty_dataset, "k-NN needs training vectors");
  if (train.size() != labels.size()) throw Error(Errc::dimension, "vector and label counts differ");
  if (k == 0) throw Error(Errc::invalid_argument, "k must be positive");
  k = std::min(k, train.size());
  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].size() != query.size()) throw Error(Errc::dimension, "query dimension mismatch");
    double s = 0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      const double diff = train[i][d] - query[d];
      s += diff * diff;
    }
    dist[i] = {s, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  const int K = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> votes(K, 0);
  std::vector<double> dsum(K, 0.0);
  for (std::size_t n = 0; n < k; ++n) {
    const int c = labels[dist[n].second];
    ++votes[c];
    dsum[c] += std::sqrt(dist[n].first);
  }
  int best = -1;
  for (int c = 0; c < K; ++c) {
    if (votes[c] == 0) continue;
    if (best < 0 || votes[c] > votes[best] ||
        (votes[c] == votes[best] && dsum[c] / votes[c] < dsum[best] / votes[best])) {
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------- MLP

template <typename T>
Mlp<T>::Mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed)
    : fc1_("ann.fc1", in, hidden), fc2_("ann.fc2", hidden, out) {
  Rng r1 = derive_rng(seed, {fnv1a64("ann.fc1")});
  Rng r2 = derive_rng(seed, {fnv1a64("ann.fc2")});
  fc1_.init_he_uniform(r1);
  fc2_.init_he_uniform(r2);
}

template <typename T>
nn::Tensor<T> Mlp<T>::forward(const nn::Tensor<T>& x) {
  return fc2_.forward(relu_.forward(fc1_.forward(x)));
}

template <typename T>
nn::Tensor<T> Mlp<T>::infer(const nn::Tensor<T>& x) const {
  return fc2_.infer(nn::Relu<T>::infer(fc1_.infer(x)));
}

template <typename T>
void Mlp<T>::backward(const nn::Tensor<T>& grad_logits) {
  fc1_.backward(relu_.backward(fc2_.backward(grad_logits)));
}

template <typename T>
std::vector<nn::Param<T>*> Mlp<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

template class Mlp<float>;
template class Mlp<double>;

AnnModel ann_train(const std::vector<svm::Vector>& X, std::span<const int> labels,
                   const AnnConfig& cfg) {
  if (X.empty()) throw Error(Errc::empty_dataset, "ANN needs training vectors");
  if (X.size() != labels.size()) throw Error(Errc::dimension, "vector and label counts differ");
  AnnModel m;
  m.standardizer = svm::Standardizer::fit(X);
  const auto Z = m.standardizer.apply(X);
  const std::size_t d = Z.front().size();
  m.net.emplace(d, cfg.hidden, cfg.num_classes, cfg.seed);
  auto params = m.net->parameters();
  nn::Adam<float> adam({.lr = cfg.lr});
  Rng rng = derive_rng(cfg.seed, {0xa22ULL});
  std::vector<std::size_t> order(Z.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      nn::Tensor<float> x({end - start, d});
      batch_labels.clear();
      for (std::size_t b = start; b < end; ++b) {
        std::copy(Z[order[b]].begin(), Z[order[b]].end(), x.data() + (b - start) * d);
        batch_labels.push_back(labels[order[b]]);
      }
      for (auto* p : params) p->zero_grad();
      const auto loss = nn::softmax_cross_entropy(m.net->forward(x), batch_labels);
      if (!std::isfinite(loss.loss)) {
        throw Error(Errc::divergence, "ANN loss became non-finite at epoch " +
                                          std::to_string(epoch + 1));
      }
      m.net->backward(loss.grad);
      adam.step(params);
      loss_sum += loss.loss * static_cast<double>(end - start);
    }
    m.loss_trace.push_back(loss_sum / static_cast<double>(Z.size()));
  }
  return m;
}

int ann_classify(const AnnModel& m, std::span<const double> x) {
  const auto z = m.standardizer.apply(x);
  const nn::Tensor<float> in({1, z.size()}, std::vector<float>(z.begin(), z.end()));
  const auto logits = m.net->infer(in);
  return static_cast<int>(std::max_element(logits.storage().begin(), logits.storage().end()) -
                          logits.storage().begin());
}

// ------------------------------------------------------------ windowed data

WindowedCorpus prepare_windows(const std::vector<signal::Recording>& recs,
                               const signal::FilterBank& bank, const signal::WindowingParams& wp,
                               const features::FeatureThresholds& th) {
  WindowedCorpus out;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    const auto filtered = signal::filter_recording(recs[r], bank);
    for (const auto& w : signal::segment_windows(filtered, wp)) {
      out.images.inputs.push_back(signal::reshape_to_input(w));
      out.images.labels.push_back(w.source_label);
      out.images.groups.push_back(static_cast<int>(r));
      const auto fv = features::extract_feature_vector(w, th, recs[r].sample_rate_hz);
      out.features.emplace_back(fv.values.begin(), fv.values.end());
      out.window_start.push_back(w.start_index);
    }
  }
  return out;
}

// ---------------------------------------------------------------- comparison

namespace {

constexpr std::array<std::pair<Method, const char*>, 6> kMethodNames = {{
    {Method::sedcnn_svm, "sedcnn_svm"},
    {Method::dcnn_svm, "dcnn_svm"},
    {Method::dcnn, "dcnn"},
    {Method::svm_handcrafted, "svm_handcrafted"},
    {Method::ann, "ann"},
    {Method::knn, "knn"},
}};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<svm::Vector> to_double(const std::vector<std::vector<float>>& v) {
  std::vector<svm::Vector> out;
  out.reserve(v.size());
  for (const auto& x : v) out.emplace_back(x.begin(), x.end());
  return out;
}

std::vector<svm::Vector> pick(const std::vector<svm::Vector>& v,
                              const std::vector<std::size_t>& idx) {
  std::vector<svm::Vector> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v.at(i));
  return out;
}

}  // namespace

std::string method_name(Method m) {
  for (const auto& [id, name] : kMethodNames) {
    if (id == m) return name;
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  for (const auto& [id, n] : kMethodNames) {
    if (name == n) return id;
  }
  throw Error(Errc::invalid_argument, "unknown method '" + name + "'");
}

std::vector<Method> all_methods() {
  std::vector<Method> out;
  for (const auto& [id, _] : kMethodNames) out.push_back(id);
  return out;
}

const MethodResult* ComparisonResult::find(Method m) const {
  for (const auto& r : methods) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

ComparisonResult run_comparison(const WindowedCorpus& data, const std::vector<Method>& methods,
                                const ComparisonConfig& cfg) {
  auto log = [&](const std::string& s) {
    if (cfg.log) cfg.log(s);
  };
  ComparisonResult res;
  res.split = sedcnn::stratified_split(data.images, cfg.test_fraction, cfg.seed, cfg.split_mode);
  const auto& split = res.split;
  const std::size_t K = cfg.net.num_classes;
  std::vector<int> train_labels, test_labels;
  for (auto i : split.train) train_labels.push_back(data.images.labels[i]);
  for (auto i : split.test) test_labels.push_back(data.images.labels[i]);
  for (std::size_t c = 0; c < K; ++c) {
    const int ci = static_cast<int>(c);
    if (std::find(train_labels.begin(), train_labels.end(), ci) == train_labels.end() ||
        std::find(test_labels.begin(), test_labels.end(), ci) == test_labels.end()) {
      throw Error(Errc::missing_class,
                  "class " + std::to_string(c) + " missing from the train or test split");
    }
  }
  const auto train_img = data.images.subset(split.train);
  const auto test_img = data.images.subset(split.test);
  const auto has = [&](Method m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  };

  // The held-out split doubles as the validation set for best-epoch selection.
  double full_train_s = 0, ablated_train_s = 0;
  if (has(Method::sedcnn_svm)) {
    auto c = cfg.net;
    c.se_enabled = c.residual_enabled = true;
    log("training sedcnn");
    const auto t0 = Clock::now();
    res.full_net.emplace(c);
    sedcnn::train(*res.full_net, train_img, test_img, cfg.on_epoch);
    full_train_s = seconds_since(t0);
  }
  if (has(Method::dcnn_svm) || has(Method::dcnn)) {
    auto c = cfg.net;
    c.se_enabled = c.residual_enabled = false;
    log("training dcnn");
    const auto t0 = Clock::now();
    res.ablated_net.emplace(c);
    sedcnn::train(*res.ablated_net, train_img, test_img, cfg.on_epoch);
    ablated_train_s = seconds_since(t0);
  }
  std::vector<svm::Vector> train_feat, test_feat;
  if (has(Method::svm_handcrafted) || has(Method::ann) || has(Method::knn)) {
    train_feat = pick(data.features, split.train);
    test_feat = pick(data.features, split.test);
  }

  auto finish = [&](Method m, std::vector<int> pred, double train_s, double eval_s) {
    MethodResult r;
    r.method = m;
    r.confusion = confusion(test_labels, pred, K);
    r.report = metrics(r.confusion);
    r.predictions = std::move(pred);
    r.train_seconds = train_s;
    r.eval_seconds = eval_s;
    log(method_name(m) + " accuracy " + format_real(r.report.accuracy));
    res.methods.push_back(std::move(r));
  };

  auto embedding_svm = [&](Method m, const sedcnn::SedcnnNet& net, double net_s,
                           svm::MulticlassSvm* keep) {
    log("fitting " + method_name(m));
    auto t0 = Clock::now();
    const auto emb_train = to_double(sedcnn::extract_embeddings(net, train_img.inputs));
    auto params = cfg.svm;
    params.num_classes = K;
    auto model = svm::ovo_train(emb_train, train_labels, params);
    const double train_s = net_s + seconds_since(t0);
    t0 = Clock::now();
    std::vector<int> pred;
    for (const auto& x : test_img.inputs) {
      const auto e = sedcnn::embed_one(net, x);
      pred.push_back(svm::ovo_predict(model, svm::Vector(e.begin(), e.end())));
    }
    finish(m, std::move(pred), train_s, seconds_since(t0));
    if (keep) *keep = std::move(model);
  };

  for (Method m : methods) {
    switch (m) {
      case Method::sedcnn_svm: {
        svm::MulticlassSvm model;
        embedding_svm(m, res.full_net->net, full_train_s, &model);
        res.full_svm = std::move(model);
        break;
      }
      case Method::dcnn_svm:
        embedding_svm(m, res.ablated_net->net, ablated_train_s, nullptr);
        break;
      case Method::dcnn: {
        const auto t0 = Clock::now();
        std::vector<int> pred;
        for (const auto& x : test_img.inputs) {
          pred.push_back(sedcnn::predict_softmax(res.ablated_net->net, x));
        }
        finish(m, std::move(pred), ablated_train_s, seconds_since(t0));
        break;
      }
      case Method::svm_handcrafted: {
        log("fitting svm_handcrafted");
        auto t0 = Clock::now();
        auto params = cfg.svm;
        params.num_classes = K;
        const auto model = svm::ovo_train(train_feat, train_labels, params);
        const double train_s = seconds_since(t0);
        t0 = Clock::now();
        std::vector<int> pred;
        for (const auto& x : test_feat) pred.push_back(svm::ovo_predict(model, x));
        finish(m, std::move(pred), train_s, seconds_since(t0));
        break;
      }
      case Method::ann: {
        log("fitting ann");
        auto t0 = Clock::now();
        auto ac = cfg.ann;
        ac.num_classes = K;
        const auto model = ann_train(train_feat, train_labels, ac);
        const double train_s = seconds_since(t0);
        t0 = Clock::now();
        std::vector<int> pred;
        for (const auto& x : test_feat) pred.push_back(ann_classify(model, x));
        finish(m, std::move(pred), train_s, seconds_since(t0));
        break;
      }
      case Method::knn: {
        // Same z-scoring as the other handcrafted baselines.
        auto t0 = Clock::now();
        const auto st = svm::Standardizer::fit(train_feat);
        const auto z_train = st.apply(train_feat);
        const double train_s = seconds_since(t0);
        t0 = Clock::now();
        std::vector<int> pred;
        for (const auto& x : test_feat) {
          pred.push_back(knn_classify(z_train, train_labels, st.apply(x), cfg.knn_k));
        }
        finish(m, std::move(pred), train_s, seconds_since(t0));
        break;
      }
    }
  }
  return res;
}

std::string report_csv(const ComparisonResult& r, bool timing) {
  std::ostringstream out;
  out << "method,accuracy,recall,precision,f1,train_seconds,eval_seconds\n";
  for (const auto& m : r.methods) {
    out << method_name(m.method) << ',' << format_real(m.report.accuracy) << ','
        << format_real(m.report.recall) << ',' << format_real(m.report.precision) << ','
        << format_real(m.report.f1) << ',' << format_real(timing ? m.train_seconds : 0.0) << ','
        << format_real(timing ? m.eval_seconds : 0.0) << '\n';
  }
  return out.str();
}

std::string report_table(const ComparisonResult& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s\n", "method", "accuracy", "recall",
                "precision", "f1");
  out << line;
  for (const auto& m : r.methods) {
    std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f %9.4f\n",
                  method_name(m.method).c_str(), m.report.accuracy, m.report.recall,
                  m.report.precision, m.report.f1);
    out << line;
  }
  return out.str();
}

OrderingCheck check_ordering(const ComparisonResult& r) {
  OrderingCheck c;
  const auto acc = [&](Method m) -> std::optional<double> {
    const auto* x = r.find(m);
    return x ? std::optional<double>(x->report.accuracy) : std::nullopt;
  };
  const auto s = acc(Method::sedcnn_svm), d = acc(Method::dcnn);
  const auto h = acc(Method::svm_handcrafted), k = acc(Method::knn);
  auto note = [&](bool& flag, const std::string& msg) {
    flag = false;
    c.violations.push_back(msg);
  };
  if (s && d && *s < *d - 0.01) note(c.sedcnn_vs_dcnn, "sedcnn_svm trails dcnn by more than 0.01");
  for (auto [name, v] : {std::pair{"sedcnn_svm", s}, std::pair{"dcnn", d}}) {
    if (v && h && !(*v > *h)) note(c.beats_handcrafted, std::string(name) + " does not beat svm_handcrafted");
    if (v && k && !(*v > *k)) note(c.beats_knn, std::string(name) + " does not beat knn");
  }
  c.fatal = s && h && *s < *h;
  return c;
}

}  // namespace semg::eval
