#include "semg/sedcnn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

namespace semg::sedcnn {

using nn::Mode;
using nn::Tensor;

std::size_t SedcnnConfig::embedding_dim() const {
  if (!dcnn2_channels.empty()) return dcnn2_channels.back();
  return dcnn1_channels.empty() ? 0 : dcnn1_channels.back();
}

void validate(const SedcnnConfig& cfg) {
  auto fail = [](const std::string& why) { throw Error(Errc::config_validation, why); };
  if (cfg.dcnn1_channels.size() % 2 != 0 || cfg.dcnn2_channels.size() % 2 != 0) {
    fail("each module holds two convolutions; channel lists must have even length");
  }
  if (cfg.dcnn1_channels.empty() && cfg.dcnn2_channels.empty()) fail("no convolution modules");
  for (auto c : cfg.dcnn1_channels) if (c == 0) fail("zero channel count");
  for (auto c : cfg.dcnn2_channels) if (c == 0) fail("zero channel count");
  if (cfg.kernel % 2 == 0) fail("kernel must be odd");
  if (cfg.residual_kernel != 1 && cfg.residual_kernel != 3) fail("residual kernel must be 1 or 3");
  if (cfg.batch_size < 2) fail("batch size must be at least 2 for batch normalization");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) fail("dropout must be in [0,1)");
  if (!(cfg.lr > 0.0)) fail("learning rate must be positive");
  if (cfg.num_classes < 2) fail("need at least 2 classes");
  if (cfg.se_reduction == 0) fail("SE reduction must be positive");
  const std::size_t modules = (cfg.dcnn1_channels.size() + cfg.dcnn2_channels.size()) / 2;
  std::size_t hw = cfg.input_hw;
  for (std::size_t m = 0; m + 1 < modules; ++m) {
    hw /= 2;
    if (hw == 0) fail("input too small for the pooling chain");
  }
}

namespace {

nlohmann::ordered_json config_json(const SedcnnConfig& c) {
  nlohmann::ordered_json j;
  j["dcnn1_channels"] = c.dcnn1_channels;
  j["dcnn2_channels"] = c.dcnn2_channels;
  j["kernel"] = c.kernel;
  j["input_hw"] = c.input_hw;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["dropout"] = c.dropout;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["se_enabled"] = c.se_enabled;
  j["residual_enabled"] = c.residual_enabled;
  j["se_reduction"] = c.se_reduction;
  j["residual_kernel"] = c.residual_kernel;
  j["seed"] = c.seed;
  j["num_classes"] = c.num_classes;
  return j;
}

SedcnnConfig config_from(const nlohmann::json& j, SedcnnConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dcnn1_channels", c.dcnn1_channels);
  get("dcnn2_channels", c.dcnn2_channels);
  get("kernel", c.kernel);
  get("input_hw", c.input_hw);
  get("batch_size", c.batch_size);
  get("lr", c.lr);
  get("dropout", c.dropout);
  get("epochs", c.epochs);
  get("patience", c.patience);
  get("se_enabled", c.se_enabled);
  get("residual_enabled", c.residual_enabled);
  get("se_reduction", c.se_reduction);
  get("residual_kernel", c.residual_kernel);
  get("seed", c.seed);
  get("num_classes", c.num_classes);
  return c;
}

}  // namespace

std::string config_to_json(const SedcnnConfig& cfg) { return config_json(cfg).dump(); }

SedcnnConfig config_from_json(const std::string& text, SedcnnConfig base) {
  try {
    return config_from(nlohmann::json::parse(text), std::move(base));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_validation, std::string("bad model config: ") + e.what());
  }
}

// ------------------------------------------------------------------ model

template <typename T>
BasicSedcnn<T>::BasicSedcnn(const SedcnnConfig& cfg)
    : cfg_(cfg), dropout_(cfg.dropout), head_("head", cfg.embedding_dim(), cfg.num_classes) {
  validate(cfg);
  std::vector<std::size_t> channels = cfg.dcnn1_channels;
  channels.insert(channels.end(), cfg.dcnn2_channels.begin(), cfg.dcnn2_channels.end());
  const std::size_t count = channels.size() / 2;
  // SE and residual attach to the last DCNN-1 module and every DCNN-2 module.
  const std::size_t first_attached =
      cfg.dcnn1_channels.empty() ? 0 : cfg.dcnn1_channels.size() / 2 - 1;

  std::size_t in = 1;
  for (std::size_t m = 0; m < count; ++m) {
    const std::string name = "m" + std::to_string(m + 1);
    const std::size_t ca = channels[2 * m], cb = channels[2 * m + 1];
    ConvModule<T> mod;
    mod.conv_a = nn::Conv2d<T>(name + ".conv_a", in, ca, cfg.kernel);
    mod.bn_a = nn::BatchNorm<T>(name + ".bn_a", ca);
    mod.conv_b = nn::Conv2d<T>(name + ".conv_b", ca, cb, cfg.kernel);
    mod.bn_b = nn::BatchNorm<T>(name + ".bn_b", cb);
    if (m >= first_attached) {
      if (cfg.se_enabled) mod.se.emplace(name + ".se", cb, cfg.se_reduction);
      if (cfg.residual_enabled) {
        mod.residual.emplace(name + ".proj", in, cb, cfg.residual_kernel);
      }
    }
    mod.pool = m + 1 < count;
    modules_.push_back(std::move(mod));
    in = cb;
  }

  // Each layer draws from its own stream keyed by name, so ablated models
  // share the initial values of every layer they have in common.
  auto init = [&](auto& layer, const std::string& name) {
    Rng rng = derive_rng(cfg.seed, {fnv1a64(name)});
    layer.init_he_uniform(rng);
  };
  for (auto& mod : modules_) {
    init(mod.conv_a, mod.conv_a.weight.name);
    init(mod.conv_b, mod.conv_b.weight.name);
    if (mod.se) init(*mod.se, mod.se->fc1.weight.name);
    if (mod.residual) init(mod.residual->projection, mod.residual->projection.weight.name);
  }
  init(head_, head_.weight.name);
}

template <typename T>
typename BasicSedcnn<T>::Output BasicSedcnn<T>::forward(const Tensor<T>& x, Mode mode,
                                                        Rng& dropout_rng) {
  if (x.rank() != 4 || x.dim(1) != cfg_.input_hw || x.dim(2) != cfg_.input_hw || x.dim(3) != 1) {
    throw Error(Errc::shape_mismatch, "model expects N x " + std::to_string(cfg_.input_hw) +
                                          " x " + std::to_string(cfg_.input_hw) + " x 1, got " +
                                          nn::shape_string(x.shape()));
  }
  module_inputs_.clear();
  Tensor<T> h = x;
  for (auto& mod : modules_) {
    module_inputs_.push_back(h);
    Tensor<T> a = mod.relu_a.forward(mod.bn_a.forward(mod.conv_a.forward(h), mode));
    Tensor<T> b = mod.bn_b.forward(mod.conv_b.forward(a), mode);
    if (mod.se) b = mod.se->forward(b);
    if (mod.residual) b = mod.residual->combine(b, module_inputs_.back());
    h = mod.relu_out.forward(b);
    if (mod.pool) h = mod.pool_layer.forward(h);
  }
  Output out;
  out.embedding = gap_.forward(h);
  out.logits = head_.forward(dropout_.forward(out.embedding, mode, dropout_rng));
  return out;
}

template <typename T>
typename BasicSedcnn<T>::Output BasicSedcnn<T>::infer(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != cfg_.input_hw || x.dim(2) != cfg_.input_hw || x.dim(3) != 1) {
    throw Error(Errc::shape_mismatch, "model expects N x " + std::to_string(cfg_.input_hw) +
                                          " x " + std::to_string(cfg_.input_hw) + " x 1, got " +
                                          nn::shape_string(x.shape()));
  }
  Tensor<T> h = x;
  for (const auto& mod : modules_) {
    Tensor<T> a = nn::Relu<T>::infer(mod.bn_a.infer(mod.conv_a.infer(h)));
    Tensor<T> b = mod.bn_b.infer(mod.conv_b.infer(a));
    if (mod.se) b = mod.se->infer(b);
    if (mod.residual) b = mod.residual->infer(b, h);
    h = nn::Relu<T>::infer(b);
    if (mod.pool) h = nn::MaxPool2<T>::infer(h);
  }
  Output out;
  out.embedding = nn::GlobalAvgPool<T>::infer(h);
  out.logits = head_.infer(out.embedding);
  return out;
}

template <typename T>
void BasicSedcnn<T>::backward(const Tensor<T>& grad_logits) {
  Tensor<T> g = dropout_.backward(head_.backward(grad_logits));
  g = gap_.backward(g);
  for (std::size_t m = modules_.size(); m-- > 0;) {
    auto& mod = modules_[m];
    if (mod.pool) g = mod.pool_layer.backward(g);
    g = mod.relu_out.backward(g);
    Tensor<T> skip_grad;
    if (mod.residual) skip_grad = mod.residual->backward(g);
    if (mod.se) g = mod.se->backward(g);
    g = mod.conv_b.backward(mod.bn_b.backward(g));
    g = mod.conv_a.backward(mod.bn_a.backward(mod.relu_a.backward(g)));
    if (mod.residual) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += skip_grad[i];
    }
  }
}

template <typename T>
std::vector<nn::Param<T>*> BasicSedcnn<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  for (auto& mod : modules_) {
    mod.conv_a.collect(out);
    mod.bn_a.collect(out);
    out.push_back(&mod.bn_a.running_mean);
    out.push_back(&mod.bn_a.running_var);
    mod.conv_b.collect(out);
    mod.bn_b.collect(out);
    out.push_back(&mod.bn_b.running_mean);
    out.push_back(&mod.bn_b.running_var);
    if (mod.se) mod.se->collect(out);
    if (mod.residual) mod.residual->projection.collect(out);
  }
  head_.collect(out);
  return out;
}

template <typename T>
std::vector<const nn::Param<T>*> BasicSedcnn<T>::parameters() const {
  auto all = const_cast<BasicSedcnn*>(this)->parameters();
  return {all.begin(), all.end()};
}

template <typename T>
std::vector<nn::Param<T>*> BasicSedcnn<T>::trainable_parameters() {
  auto all = parameters();
  std::erase_if(all, [](const nn::Param<T>* p) {
    return p->name.ends_with(".running_mean") || p->name.ends_with(".running_var");
  });
  return all;
}

template <typename T>
void BasicSedcnn<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t BasicSedcnn<T>::trainable_parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<BasicSedcnn*>(this)->trainable_parameters()) n += p->value.size();
  return n;
}

template <typename T>
std::size_t BasicSedcnn<T>::conv_layer_count() const {
  return 2 * modules_.size();
}
template <typename T>
std::size_t BasicSedcnn<T>::batchnorm_count() const {
  return 2 * modules_.size();
}
template <typename T>
std::size_t BasicSedcnn<T>::projection_count() const {
  return std::count_if(modules_.begin(), modules_.end(),
                       [](const auto& m) { return m.residual.has_value(); });
}
template <typename T>
std::size_t BasicSedcnn<T>::se_count() const {
  return std::count_if(modules_.begin(), modules_.end(),
                       [](const auto& m) { return m.se.has_value(); });
}

template class BasicSedcnn<float>;
template class BasicSedcnn<double>;

SedcnnModel build_model(const SedcnnConfig& cfg) { return SedcnnModel(cfg); }

// --------------------------------------------------------------- dataset

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& idx) const {
  LabeledDataset out;
  out.inputs.reserve(idx.size());
  for (auto i : idx) {
    out.inputs.push_back(inputs.at(i));
    out.labels.push_back(labels.at(i));
    out.groups.push_back(groups.empty() ? static_cast<int>(i) : groups.at(i));
  }
  return out;
}

Split stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed,
                       SplitMode mode) {
  if (data.size() == 0) throw Error(Errc::empty_dataset, "cannot split an empty dataset");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(Errc::invalid_argument, "test fraction must be in (0,1)");
  }
  Rng rng = derive_rng(seed, {0x5eed5711ULL});
  Split split;
  if (mode == SplitMode::per_window) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
    for (auto& [label, idx] : by_class) {
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * idx.size()));
      split.test.insert(split.test.end(), idx.begin(), idx.begin() + n_test);
      split.train.insert(split.train.end(), idx.begin() + n_test, idx.end());
    }
  } else {
    if (data.groups.size() != data.size()) {
      throw Error(Errc::invalid_argument, "per-recording split needs group ids");
    }
    // A group is stratified under the label of its first window and never divided.
    std::map<int, std::vector<std::size_t>> members_of;
    std::map<int, int> label_of;
    for (std::size_t i = 0; i < data.size(); ++i) {
      members_of[data.groups[i]].push_back(i);
      label_of.try_emplace(data.groups[i], data.labels[i]);
    }
    std::map<int, std::map<int, std::vector<std::size_t>>> by_class;
    for (auto& [g, members] : members_of) by_class[label_of[g]][g] = std::move(members);
    for (auto& [label, groups] : by_class) {
      std::vector<int> ids;
      for (auto& [g, _] : groups) ids.push_back(g);
      std::shuffle(ids.begin(), ids.end(), rng);
      const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * ids.size()));
      for (std::size_t k = 0; k < ids.size(); ++k) {
        auto& dst = k < n_test ? split.test : split.train;
        const auto& members = groups[ids[k]];
        dst.insert(dst.end(), members.begin(), members.end());
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Tensor<float> to_batch(const LabeledDataset& data, std::span<const std::size_t> idx,
                       std::size_t hw) {
  Tensor<float> x({idx.size(), hw, hw, 1});
  const std::size_t per = hw * hw;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& src = data.inputs.at(idx[b]);
    if (src.size() != per) {
      throw Error(Errc::shape_mismatch, "input has " + std::to_string(src.size()) +
                                            " values, expected " + std::to_string(per));
    }
    std::copy(src.begin(), src.end(), x.data() + b * per);
  }
  return x;
}

namespace {

Tensor<float> single(std::span<const float> image, std::size_t hw) {
  if (image.size() != hw * hw) {
    throw Error(Errc::shape_mismatch, "input has " + std::to_string(image.size()) +
                                          " values, expected " + std::to_string(hw * hw));
  }
  return Tensor<float>({1, hw, hw, 1}, std::vector<float>(image.begin(), image.end()));
}

int argmax(std::span<const float> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<float> embed_one(const SedcnnNet& net, std::span<const float> image) {
  return net.infer(single(image, net.config().input_hw)).embedding.storage();
}

std::vector<float> logits_one(const SedcnnNet& net, std::span<const float> image) {
  return net.infer(single(image, net.config().input_hw)).logits.storage();
}

int predict_softmax(const SedcnnNet& net, std::span<const float> image) {
  return argmax(logits_one(net, image));
}

std::vector<std::vector<float>> extract_embeddings(const SedcnnNet& net,
                                                   const std::vector<std::vector<float>>& inputs) {
  std::vector<std::vector<float>> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(embed_one(net, x));
  return out;
}

double accuracy(const SedcnnNet& net, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict_softmax(net, data.inputs[i]) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// --------------------------------------------------------------- training

void train(SedcnnModel& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
           const EpochCallback& on_epoch) {
  const auto& cfg = model.config();
  if (train_set.size() == 0 || val_set.size() == 0) {
    throw Error(Errc::empty_dataset, "training and validation sets must be non-empty");
  }
  if (train_set.labels.size() != train_set.size()) {
    throw Error(Errc::invalid_argument, "training labels and inputs differ in length");
  }
  if (cfg.batch_size > train_set.size()) {
    throw Error(Errc::invalid_argument, "batch size exceeds training set size");
  }
  auto& net = model.net;
  auto params = net.trainable_parameters();
  auto all_params = net.parameters();
  nn::Adam<float> adam({.lr = cfg.lr});
  Rng rng = derive_rng(cfg.seed, {0x7a41aULL});

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<float>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : all_params) best.push_back(p->value.storage());
  };
  snapshot();

  model.history = {};
  model.history.best_val_accuracy = -1.0;
  std::size_t since_best = 0;
  std::vector<int> labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;  // batch norm cannot train on a single sample
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto x = to_batch(train_set, idx, cfg.input_hw);
      labels.clear();
      for (auto i : idx) labels.push_back(train_set.labels[i]);

      net.zero_grad();
      const auto out = net.forward(x, nn::Mode::train, rng);
      const auto loss = nn::softmax_cross_entropy(out.logits, labels);
      if (!std::isfinite(loss.loss)) {
        throw Error(Errc::divergence, "non-finite loss at epoch " + std::to_string(epoch));
      }
      net.backward(loss.grad);
      adam.step(params);

      loss_sum += loss.loss * static_cast<double>(idx.size());
      seen += idx.size();
      const std::size_t k = out.logits.dim(1);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const std::span<const float> row(out.logits.data() + b * k, k);
        if (argmax(row) == labels[b]) ++correct;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    rec.val_accuracy = accuracy(net, val_set);
    model.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_accuracy > model.history.best_val_accuracy) {
      model.history.best_val_accuracy = rec.val_accuracy;
      model.history.best_epoch = epoch;
      since_best = 0;
      snapshot();
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      model.history.early_stopped = true;
      break;
    }
  }
  for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value.storage() = best[i];
}

}  // namespace semg::sedcnn
