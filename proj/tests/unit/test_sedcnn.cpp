#include <filesystem>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "semg/sedcnn.hpp"

using namespace semg;
using namespace semg::sedcnn;

namespace {

SedcnnConfig mini_config() {
  SedcnnConfig cfg;
  cfg.dcnn1_channels = {4, 4, 8, 8};
  cfg.dcnn2_channels = {8, 8};
  cfg.input_hw = 8;
  cfg.num_classes = 3;
  cfg.batch_size = 4;
  cfg.epochs = 5;
  cfg.patience = 0;
  cfg.seed = 7;
  return cfg;
}

std::vector<float> random_image(std::size_t hw, Rng& rng) {
  std::normal_distribution<float> d;
  std::vector<float> img(hw * hw);
  for (auto& v : img) v = d(rng);
  return img;
}

// Two classes: noise around 0 vs noise around 1.
LabeledDataset toy_dataset(std::size_t per_class, std::size_t hw, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> d(0.0f, 0.1f);
  LabeledDataset data;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<float> img(hw * hw);
    for (auto& v : img) v = static_cast<float>(label) + d(rng);
    data.inputs.push_back(std::move(img));
    data.labels.push_back(label);
    data.groups.push_back(static_cast<int>(i));
  }
  return data;
}

LabeledDataset random_dataset(std::size_t n, std::size_t hw, int classes, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset data;
  for (std::size_t i = 0; i < n; ++i) {
    data.inputs.push_back(random_image(hw, rng));
    data.labels.push_back(static_cast<int>(i % classes));
    data.groups.push_back(static_cast<int>(i / 3));
  }
  return data;
}

nn::Tensor<float> batch_of(const std::vector<std::vector<float>>& imgs, std::size_t hw) {
  nn::Tensor<float> x({imgs.size(), hw, hw, 1});
  for (std::size_t n = 0; n < imgs.size(); ++n)
    std::copy(imgs[n].begin(), imgs[n].end(), x.data() + n * hw * hw);
  return x;
}

std::size_t first_attached(const SedcnnConfig& cfg) { return cfg.dcnn1_channels.size() / 2 - 1; }

}  // namespace

TEST(SedcnnShape, DefaultChain) {
  const SedcnnConfig cfg;
  const BasicSedcnn<float> net(cfg);
  const auto chain = oracle::sedcnn_spatial_chain(40, 4);
  EXPECT_EQ(chain, (std::vector<std::size_t>{40, 20, 10, 5}));
  ASSERT_EQ(net.modules().size(), 4u);
  for (std::size_t m = 0; m < 4; ++m) EXPECT_EQ(net.modules()[m].pool, m + 1 < 4);
  EXPECT_EQ(cfg.embedding_dim(), 128u);
  Rng rng(1);
  const auto out = net.infer(batch_of({random_image(40, rng), random_image(40, rng)}, 40));
  EXPECT_EQ(out.logits.shape(), (nn::Shape{2, 10}));
  EXPECT_EQ(out.embedding.shape(), (nn::Shape{2, 128}));
}

TEST(SedcnnShape, AttachmentPoints) {
  const BasicSedcnn<float> net(SedcnnConfig{});
  const auto& m = net.modules();
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(m[k].se.has_value(), k >= 2) << k;
    EXPECT_EQ(m[k].residual.has_value(), k >= 2) << k;
  }
  EXPECT_EQ(net.se_count(), 2u);
  EXPECT_EQ(net.projection_count(), 2u);
}

TEST(SedcnnShape, AblationCounts) {
  SedcnnConfig cfg;
  cfg.se_enabled = false;
  cfg.residual_enabled = false;
  const BasicSedcnn<float> net(cfg);
  EXPECT_EQ(net.conv_layer_count(), 8u);
  EXPECT_EQ(net.batchnorm_count(), 8u);
  EXPECT_EQ(net.se_count(), 0u);
  EXPECT_EQ(net.projection_count(), 0u);
}

TEST(SedcnnShape, ParameterCountMatchesClosedForm) {
  for (bool se : {false, true})
    for (bool res : {false, true})
      for (const auto& base : {SedcnnConfig{}, mini_config()}) {
        SedcnnConfig cfg = base;
        cfg.se_enabled = se;
        cfg.residual_enabled = res;
        std::vector<std::size_t> ch = cfg.dcnn1_channels;
        ch.insert(ch.end(), cfg.dcnn2_channels.begin(), cfg.dcnn2_channels.end());
        const BasicSedcnn<float> net(cfg);
        EXPECT_EQ(net.trainable_parameter_count(),
                  oracle::sedcnn_param_count(ch, first_attached(cfg), se, res, cfg.se_reduction,
                                             cfg.kernel, cfg.num_classes));
      }
}

TEST(SedcnnConfig, ValidationErrors) {
  auto bad = [](auto mutate) {
    SedcnnConfig cfg;
    mutate(cfg);
    try {
      validate(cfg);
      return false;
    } catch (const Error& e) {
      return e.code() == Errc::config_validation;
    }
  };
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.kernel = 4; }));
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.batch_size = 1; }));
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.dropout = 1.0; }));
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.lr = 0; }));
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.num_classes = 1; }));
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.dcnn1_channels = {16, 16, 32}; }));
  EXPECT_TRUE(bad([](SedcnnConfig& c) { c.input_hw = 4; }));
  EXPECT_NO_THROW(validate(SedcnnConfig{}));
}

TEST(SedcnnConfig, JsonRoundTrip) {
  SedcnnConfig cfg = mini_config();
  cfg.se_enabled = false;
  cfg.lr = 0.0025;
  const auto back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  EXPECT_FALSE(back.se_enabled);
  EXPECT_EQ(back.dcnn1_channels, cfg.dcnn1_channels);
  EXPECT_THROW(config_from_json("{not json"), Error);
}

TEST(SedcnnEquivalence, PinnedSeMatchesDisabledSe) {
  SedcnnConfig with = mini_config(), without = mini_config();
  without.se_enabled = false;
  BasicSedcnn<float> a(with);
  const BasicSedcnn<float> b(without);
  for (auto& m : a.modules()) {
    if (!m.se) continue;
    m.se->fc2.weight.value.fill(0.0f);
    m.se->fc2.bias.value.fill(50.0f);
  }
  Rng rng(2);
  std::vector<std::vector<float>> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(random_image(8, rng));
  const auto x = batch_of(imgs, 8);
  const auto ya = a.infer(x), yb = b.infer(x);
  for (std::size_t i = 0; i < ya.logits.size(); ++i)
    EXPECT_NEAR(ya.logits[i], yb.logits[i], 1e-4);
}

TEST(SedcnnEquivalence, ZeroResidualMatchesNoResidual) {
  SedcnnConfig with = mini_config(), without = mini_config();
  without.residual_enabled = false;
  BasicSedcnn<float> a(with);
  const BasicSedcnn<float> b(without);
  for (auto& m : a.modules()) {
    if (!m.residual) continue;
    m.residual->projection.weight.value.fill(0.0f);
    m.residual->projection.bias.value.fill(0.0f);
  }
  Rng rng(3);
  const auto x = batch_of({random_image(8, rng), random_image(8, rng)}, 8);
  const auto ya = a.infer(x), yb = b.infer(x);
  for (std::size_t i = 0; i < ya.logits.size(); ++i) EXPECT_EQ(ya.logits[i], yb.logits[i]);
}

TEST(SedcnnGradient, EndToEndMiniature) {
  SedcnnConfig cfg = mini_config();
  BasicSedcnn<double> net(cfg);
  Rng rng(4);
  std::normal_distribution<double> d;
  nn::Tensor<double> x({3, 8, 8, 1});
  for (auto& v : x.storage()) v = d(rng);
  const std::vector<int> labels{0, 2, 1};
  const std::uint64_t drop_seed = 99;
  auto loss_of = [&] {
    Rng r(drop_seed);
    return nn::softmax_cross_entropy(net.forward(x, nn::Mode::train, r).logits, labels);
  };
  net.zero_grad();
  net.backward(loss_of().grad);
  std::size_t checked = 0, worst_index = 0;
  double worst = 0;
  std::string worst_name;
  for (auto* p : net.trainable_parameters()) {
    const auto g = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double v0 = p->value[i];
      const double num = oracle::central_diff(
          [&](double v) {
            p->value[i] = v;
            return loss_of().loss;
          },
          v0, 1e-5);
      p->value[i] = v0;
      const double e = oracle::rel_err(g[i], num);
      if (e > worst) {
        worst = e;
        worst_name = p->name;
        worst_index = i;
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000u);
  EXPECT_LE(worst, 1e-3) << worst_name << "[" << worst_index << "]";
}

TEST(SedcnnTraining, SeparatesToyClasses) {
  SedcnnConfig cfg = mini_config();
  cfg.num_classes = 2;
  cfg.epochs = 20;
  cfg.lr = 0.01;
  SedcnnModel model(cfg);
  const auto data = toy_dataset(16, 8, 5);
  train(model, data, data);
  EXPECT_DOUBLE_EQ(accuracy(model.net, data), 1.0);
}

TEST(SedcnnTraining, DeterministicLossTrace) {
  const auto data = random_dataset(24, 8, 3, 6);
  SedcnnModel a(mini_config()), b(mini_config());
  train(a, data, data);
  train(b, data, data);
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    EXPECT_EQ(a.history.epochs[e].train_loss, b.history.epochs[e].train_loss);
    EXPECT_EQ(a.history.epochs[e].val_accuracy, b.history.epochs[e].val_accuracy);
  }
  EXPECT_EQ(serialize_model(a), serialize_model(b));
}

TEST(SedcnnTraining, RestoresBestValidationSnapshot) {
  const auto train_set = random_dataset(30, 8, 3, 7), val = random_dataset(12, 8, 3, 8);
  SedcnnConfig cfg = mini_config();
  cfg.epochs = 8;
  cfg.lr = 0.01;
  SedcnnModel model(cfg);
  std::vector<double> seen;
  train(model, train_set, val, [&](const EpochRecord& r) { seen.push_back(r.val_accuracy); });
  ASSERT_EQ(seen.size(), model.history.epochs.size());
  const double best = *std::max_element(seen.begin(), seen.end());
  EXPECT_EQ(model.history.best_val_accuracy, best);
  EXPECT_EQ(seen[model.history.best_epoch - 1], best);
  EXPECT_EQ(accuracy(model.net, val), best);
}

TEST(SedcnnTraining, PatienceStopsEarly) {
  const auto train_set = random_dataset(12, 8, 3, 9), val = random_dataset(6, 8, 3, 10);
  SedcnnConfig cfg = mini_config();
  cfg.epochs = 50;
  cfg.patience = 2;
  SedcnnModel model(cfg);
  train(model, train_set, val);
  if (model.history.early_stopped) {
    EXPECT_EQ(model.history.epochs.size(), model.history.best_epoch + 2);
  } else {
    EXPECT_EQ(model.history.epochs.size(), 50u);
  }
}

TEST(SedcnnTraining, EmptyDataIsRejected) {
  SedcnnModel model(mini_config());
  try {
    train(model, LabeledDataset{}, random_dataset(3, 8, 3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_dataset);
  }
}

TEST(SedcnnTraining, InferenceIsPerSampleIndependent) {
  const BasicSedcnn<float> net(mini_config());
  Rng rng(11);
  std::vector<std::vector<float>> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(random_image(8, rng));
  const auto batch = net.infer(batch_of(imgs, 8));
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    const auto one = logits_one(net, imgs[n]);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(one[k], batch.logits[n * 3 + k]);
  }
}

TEST(Split, StratifiedAndDisjoint) {
  const auto data = random_dataset(100, 4, 5, 12);
  const auto s = stratified_split(data, 0.2, 42);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_EQ(s.train.size(), 80u);
  std::vector<int> per_class(5, 0);
  for (auto i : s.test) ++per_class[data.labels[i]];
  for (int c : per_class) EXPECT_EQ(c, 4);
  std::vector<std::size_t> all(s.train);
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  const auto again = stratified_split(data, 0.2, 42);
  EXPECT_EQ(again.test, s.test);
}

TEST(Split, PerRecordingKeepsGroupsTogether) {
  const auto data = random_dataset(90, 4, 3, 13);
  const auto s = stratified_split(data, 0.2, 1, SplitMode::per_recording);
  std::set<int> train_groups, test_groups;
  for (auto i : s.train) train_groups.insert(data.groups[i]);
  for (auto i : s.test) test_groups.insert(data.groups[i]);
  for (int g : test_groups) EXPECT_FALSE(train_groups.count(g)) << g;
  EXPECT_FALSE(s.test.empty());
}

TEST(ModelIo, RoundTripIsBitExact) {
  const auto data = random_dataset(12, 8, 3, 14);
  SedcnnConfig cfg = mini_config();
  cfg.epochs = 2;
  SedcnnModel model(cfg);
  train(model, data, data);
  const auto bytes = serialize_model(model);
  const auto back = deserialize_model(bytes);
  EXPECT_EQ(serialize_model(back), bytes);
  const auto pa = model.net.parameters();
  const auto pb = back.net.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  EXPECT_EQ(back.history.epochs.size(), 2u);

  const auto path = (std::filesystem::temp_directory_path() / "semg_model_io.sedcnn").string();
  save_model(model, path);
  EXPECT_EQ(serialize_model(load_model(path)), bytes);
  std::filesystem::remove(path);
}

TEST(ModelIo, TruncatedFileIsCorrupt) {
  const auto bytes = serialize_model(SedcnnModel(mini_config()));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{9}}) {
    try {
      deserialize_model(std::span(bytes.data(), cut));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::corruption) << cut;
    }
  }
}

TEST(ModelIo, FlippedByteIsCorrupt) {
  auto bytes = serialize_model(SedcnnModel(mini_config()));
  bytes[bytes.size() / 2] ^= 0x40;
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::corruption);
  }
}

TEST(ModelIo, UnknownVersionIsRejected) {
  auto bytes = serialize_model(SedcnnModel(mini_config()));
  bytes[4] = 0x7f;
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::format_version);
  }
}
