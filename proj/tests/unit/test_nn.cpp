#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "semg/nn/layers.hpp"
#include "semg/nn/optim.hpp"
#include "semg/nn/se_block.hpp"

using namespace semg;
using namespace semg::nn;

namespace {

using oracle::TD;
using oracle::randomize;
using oracle::random_tensor;

template <class Fwd, class Bwd>
void check_gradients(TD x, const std::vector<Param<double>*>& params, Fwd fwd, Bwd bwd, Rng& rng) {
  const auto rep = oracle::check_gradients(std::move(x), params, fwd, bwd, rng);
  EXPECT_LE(rep.worst, 1e-4) << rep.where;
  EXPECT_GT(rep.checked, 0u);
}

constexpr int kInstances = 20;

}  // namespace

TEST(Conv2d, HandExampleAllOnesKernel) {
  Conv2d<double> conv("c", 1, 1, 3);
  conv.weight.value.fill(1.0);
  conv.bias.value.fill(0.0);
  TD x({1, 3, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = conv.infer(x);
  EXPECT_DOUBLE_EQ(y.at(0, 1, 1, 0), 45);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 1 + 2 + 4 + 5);
  EXPECT_DOUBLE_EQ(y.at(0, 2, 2, 0), 5 + 6 + 8 + 9);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(1);
  for (int inst = 0; inst < kInstances; ++inst) {
    const std::size_t cin = 1 + inst % 3, cout = 1 + inst % 4, k = inst % 2 ? 3 : 5, hw = 4 + inst % 5;
    Conv2d<double> conv("c", cin, cout, k);
    randomize(conv.weight, rng);
    randomize(conv.bias, rng);
    const TD x = random_tensor({2, hw, hw + 1, cin}, rng);
    const TD y = conv.forward(x);
    ASSERT_EQ(y.shape(), (Shape{2, hw, hw + 1, cout}));
    for (std::size_t n = 0; n < 2; ++n) {
      std::vector<double> xs(x.data() + n * hw * (hw + 1) * cin,
                             x.data() + (n + 1) * hw * (hw + 1) * cin);
      const auto ref = oracle::conv2d(xs, hw, hw + 1, cin, conv.weight.value.storage(),
                                      conv.bias.value.storage(), k, cout);
      for (std::size_t i = 0; i < ref.size(); ++i)
        ASSERT_NEAR(y[n * ref.size() + i], ref[i], 1e-12);
    }
  }
}

TEST(Conv2d, ForwardEqualsInfer) {
  Rng rng(2);
  Conv2d<float> conv("c", 3, 5, 3);
  conv.init_he_uniform(rng);
  Tensor<float> x({2, 6, 6, 3});
  std::normal_distribution<float> d;
  for (auto& v : x.storage()) v = d(rng);
  EXPECT_EQ(conv.forward(x), conv.infer(x));
}

TEST(Conv2d, GradientCheck) {
  Rng rng(3);
  for (int inst = 0; inst < kInstances; ++inst) {
    const std::size_t cin = 1 + inst % 2, cout = 1 + inst % 3, k = inst % 3 == 0 ? 1 : 3;
    Conv2d<double> conv("c", cin, cout, k);
    randomize(conv.weight, rng);
    randomize(conv.bias, rng);
    check_gradients(
        random_tensor({2, 4, 3, cin}, rng), {&conv.weight, &conv.bias},
        [&](const TD& x) { return conv.forward(x); }, [&](const TD& g) { return conv.backward(g); },
        rng);
  }
}

TEST(Conv2d, RejectsWrongChannels) {
  Conv2d<double> conv("c", 2, 2, 3);
  EXPECT_THROW(conv.infer(TD({1, 3, 3, 3})), Error);
}

TEST(BatchNorm, TrainOutputIsStandardized) {
  BatchNorm<double> bn("bn", 2);
  TD x({4, 1, 1, 2}, std::vector<double>{1, 10, 2, 20, 3, 30, 4, 40});
  const auto y = bn.forward(x, Mode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n) m += y[n * 2 + c] / 4;
    for (std::size_t n = 0; n < 4; ++n) v += (y[n * 2 + c] - m) * (y[n * 2 + c] - m) / 4;
    EXPECT_NEAR(m, 0, 1e-12);
    EXPECT_NEAR(v, 1, 1e-4);
  }
  // Channel 0: mean 2.5, unbiased variance 5/3.
  EXPECT_NEAR(bn.running_mean.value[0], 0.1 * 2.5, 1e-12);
  EXPECT_NEAR(bn.running_var.value[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
  EXPECT_NEAR(bn.running_mean.value[1], 0.1 * 25, 1e-12);
  EXPECT_NEAR(bn.running_var.value[1], 0.9 + 0.1 * (500.0 / 3.0), 1e-12);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  BatchNorm<double> bn("bn", 1);
  bn.running_mean.value[0] = 3;
  bn.running_var.value[0] = 4;
  bn.gamma.value[0] = 2;
  bn.beta.value[0] = 1;
  const auto y = bn.forward(TD({1, 1, 1, 1}, std::vector<double>{5}), Mode::eval);
  EXPECT_NEAR(y[0], 2 * (5 - 3) / std::sqrt(4 + 1e-5) + 1, 1e-12);
}

TEST(BatchNorm, SingleSampleTrainBatchIsDegenerate) {
  BatchNorm<double> bn("bn", 3);
  try {
    bn.forward(TD({1, 2, 2, 3}, 1.0), Mode::train);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_batch);
  }
}

TEST(BatchNorm, GradientCheck) {
  Rng rng(4);
  for (int inst = 0; inst < kInstances; ++inst) {
    const std::size_t c = 1 + inst % 3;
    BatchNorm<double> bn("bn", c);
    randomize(bn.gamma, rng);
    randomize(bn.beta, rng);
    check_gradients(
        random_tensor({3, 2, 2, c}, rng), {&bn.gamma, &bn.beta},
        [&](const TD& x) { return bn.forward(x, Mode::train); },
        [&](const TD& g) { return bn.backward(g); }, rng);
  }
}

TEST(Relu, GradientCheck) {
  Rng rng(5);
  for (int inst = 0; inst < kInstances; ++inst) {
    Relu<double> relu;
    check_gradients(
        random_tensor({2, 3, 3, 2}, rng), {}, [&](const TD& x) { return relu.forward(x); },
        [&](const TD& g) { return relu.backward(g); }, rng);
  }
}

TEST(MaxPool, OddExtentsFloor) {
  TD x({1, 5, 5, 1});
  for (std::size_t i = 0; i < 25; ++i) x[i] = static_cast<double>(i);
  const auto y = MaxPool2<double>::infer(x);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 1}));
  EXPECT_EQ(y[0], 6);
  EXPECT_EQ(y[3], 18);
}

TEST(MaxPool, GradientCheck) {
  Rng rng(6);
  for (int inst = 0; inst < kInstances; ++inst) {
    MaxPool2<double> pool;
    check_gradients(
        random_tensor({2, 4, 5, 2}, rng), {}, [&](const TD& x) { return pool.forward(x); },
        [&](const TD& g) { return pool.backward(g); }, rng);
  }
}

TEST(GlobalAvgPool, GradientCheck) {
  Rng rng(7);
  for (int inst = 0; inst < kInstances; ++inst) {
    GlobalAvgPool<double> gap;
    const TD x = random_tensor({2, 3, 2, 3}, rng);
    const auto y = gap.forward(x);
    ASSERT_EQ(y.shape(), (Shape{2, 3}));
    double m = 0;
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 2; ++w) m += x.at(1, h, w, 2) / 6;
    EXPECT_NEAR(y[5], m, 1e-12);
    check_gradients(
        x, {}, [&](const TD& v) { return gap.forward(v); },
        [&](const TD& g) { return gap.backward(g); }, rng);
  }
}

TEST(Dense, GradientCheck) {
  Rng rng(8);
  for (int inst = 0; inst < kInstances; ++inst) {
    Dense<double> fc("fc", 3 + inst % 3, 2 + inst % 4);
    randomize(fc.weight, rng);
    randomize(fc.bias, rng);
    check_gradients(
        random_tensor({3, fc.in_features()}, rng), {&fc.weight, &fc.bias},
        [&](const TD& x) { return fc.forward(x); }, [&](const TD& g) { return fc.backward(g); },
        rng);
  }
}

TEST(Dropout, DropFractionAndScale) {
  Dropout<float> drop(0.5);
  Rng rng(9);
  const std::size_t n = 1'000'000;
  Tensor<float> x({n}, 1.0f);
  const auto y = drop.forward(x, Mode::train, rng);
  std::size_t zeros = 0;
  for (float v : y.storage()) {
    if (v == 0.0f) ++zeros;
    else EXPECT_FLOAT_EQ(v, 2.0f);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.005);
}

TEST(Dropout, EvalIsIdentity) {
  Dropout<double> drop(0.3);
  Rng rng(10);
  const TD x = random_tensor({4, 7}, rng);
  EXPECT_EQ(drop.forward(x, Mode::eval, rng), x);
}

TEST(Dropout, GradientCheckWithFixedMask) {
  Rng rng(11);
  for (int inst = 0; inst < kInstances; ++inst) {
    Dropout<double> drop(0.4);
    const std::uint64_t mask_seed = rng();
    check_gradients(
        random_tensor({3, 5}, rng), {},
        [&](const TD& x) {
          Rng local(mask_seed);
          return drop.forward(x, Mode::train, local);
        },
        [&](const TD& g) { return drop.backward(g); }, rng);
  }
}

TEST(Dropout, RejectsRate) {
  EXPECT_THROW(Dropout<double>(1.0), Error);
  EXPECT_THROW(Dropout<double>(-0.1), Error);
}

TEST(SEBlock, ReductionMustDivide) {
  try {
    SEBlock<double>("se", 6, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::divisibility);
  }
}

TEST(SEBlock, SaturatedGatesPassOrBlock) {
  Rng rng(12);
  SEBlock<double> se("se", 8, 4);
  se.init_he_uniform(rng);
  const TD x = random_tensor({2, 3, 3, 8}, rng);
  se.fc2.weight.value.fill(0.0);
  se.fc2.bias.value.fill(50.0);
  auto y = se.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
  se.fc2.bias.value.fill(-50.0);
  y = se.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 0.0, 1e-12);
}

TEST(SEBlock, GatesMatchManualComputation) {
  Rng rng(13);
  SEBlock<double> se("se", 4, 2);
  se.init_he_uniform(rng);
  randomize(se.fc1.bias, rng);
  randomize(se.fc2.bias, rng);
  const TD x = random_tensor({1, 2, 2, 4}, rng);
  const auto y = se.forward(x);
  std::vector<double> z(4, 0.0), h(2), s(4);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t c = 0; c < 4; ++c) z[c] += x[p * 4 + c] / 4;
  for (std::size_t j = 0; j < 2; ++j) {
    double a = se.fc1.bias.value[j];
    for (std::size_t c = 0; c < 4; ++c) a += z[c] * se.fc1.weight.value[c * 2 + j];
    h[j] = std::max(a, 0.0);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double a = se.fc2.bias.value[c];
    for (std::size_t j = 0; j < 2; ++j) a += h[j] * se.fc2.weight.value[j * 4 + c];
    s[c] = oracle::sigmoid(a);
    EXPECT_NEAR(se.scale()[c], s[c], 1e-12);
  }
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y[p * 4 + c], x[p * 4 + c] * s[c], 1e-12);
}

TEST(SEBlock, OutputNeverExceedsInputMagnitude) {
  Rng rng(14);
  for (int inst = 0; inst < 50; ++inst) {
    SEBlock<double> se("se", 8, 4);
    se.init_he_uniform(rng);
    randomize(se.fc2.bias, rng, 3.0);
    const TD x = random_tensor({2, 2, 2, 8}, rng, 5.0);
    const auto y = se.infer(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(y[i]), std::abs(x[i]));
  }
}

TEST(SEBlock, GradientCheck) {
  Rng rng(15);
  for (int inst = 0; inst < kInstances; ++inst) {
    SEBlock<double> se("se", 4, 2);
    se.init_he_uniform(rng);
    randomize(se.fc1.bias, rng);
    randomize(se.fc2.bias, rng);
    check_gradients(
        random_tensor({2, 2, 3, 4}, rng),
        {&se.fc1.weight, &se.fc1.bias, &se.fc2.weight, &se.fc2.bias},
        [&](const TD& x) { return se.forward(x); }, [&](const TD& g) { return se.backward(g); },
        rng);
  }
}

TEST(ResidualProjection, ZeroProjectionIsIdentityOnMain) {
  Rng rng(16);
  ResidualProjection<double> res("res", 3, 5);
  const TD main = random_tensor({2, 3, 3, 5}, rng), skip = random_tensor({2, 3, 3, 3}, rng);
  EXPECT_EQ(res.infer(main, skip), main);
}

TEST(ResidualProjection, GradientCheck) {
  Rng rng(17);
  for (int inst = 0; inst < kInstances; ++inst) {
    ResidualProjection<double> res("res", 2, 3, inst % 2 ? 1 : 3);
    randomize(res.projection.weight, rng);
    randomize(res.projection.bias, rng);
    const TD main = random_tensor({2, 3, 3, 3}, rng);
    check_gradients(
        random_tensor({2, 3, 3, 2}, rng), {&res.projection.weight, &res.projection.bias},
        [&](const TD& skip) { return res.combine(main, skip); },
        [&](const TD& g) { return res.backward(g); }, rng);
  }
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  const TD logits({2, 10}, 0.0);
  const std::vector<int> labels{3, 7};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(r.grad[k], (0.1 - (k == 3 ? 1.0 : 0.0)) / 2, 1e-12);
    EXPECT_NEAR(r.grad[10 + k], (0.1 - (k == 7 ? 1.0 : 0.0)) / 2, 1e-12);
  }
}

TEST(SoftmaxCrossEntropy, StableForLargeLogits) {
  const TD logits({1, 3}, std::vector<double>{1000, 0, -1000});
  const std::vector<int> good{0}, bad{2};
  EXPECT_NEAR(softmax_cross_entropy(logits, good).loss, 0.0, 1e-12);
  const auto r = softmax_cross_entropy(logits, bad);
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
  EXPECT_TRUE(r.grad.all_finite());
}

TEST(SoftmaxCrossEntropy, GradientCheck) {
  Rng rng(18);
  for (int inst = 0; inst < kInstances; ++inst) {
    TD logits = random_tensor({3, 4}, rng, 2.0);
    const std::vector<int> labels{inst % 4, (inst + 1) % 4, 2};
    const auto r = softmax_cross_entropy(logits, labels);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double l0 = logits[i];
      const double num = oracle::central_diff(
          [&](double v) {
            logits[i] = v;
            return softmax_cross_entropy(logits, labels).loss;
          },
          l0, 1e-6);
      logits[i] = l0;
      EXPECT_LE(oracle::rel_err(r.grad[i], num), 1e-4);
    }
  }
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
  const std::vector<int> labels{5};
  try {
    softmax_cross_entropy(TD({1, 3}, 0.0), labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::label_out_of_range);
  }
}

TEST(Softmax, SumsToOne) {
  const std::vector<double> l{1, 2, 3};
  const auto p = softmax<double>(l);
  const double z = std::exp(1) + std::exp(2) + std::exp(3);
  EXPECT_NEAR(p[2], std::exp(3) / z, 1e-12);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Param<double> p("w", {3});
  p.value.storage() = {1.0, -2.0, 0.5};
  p.grad.storage() = {0.3, -4.0, 1e-3};
  Adam<double> opt({.lr = 0.01});
  opt.step({&p});
  EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01, 1e-8);
  EXPECT_NEAR(p.value[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-10);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MatchesHandRolledRecurrence) {
  Param<double> p("w", {1});
  p.value[0] = 0.0;
  Adam<double> opt({.lr = 0.1});
  double m = 0, v = 0, w = 0;
  for (int t = 1; t <= 10; ++t) {
    const double g = std::sin(t);
    p.grad[0] = g;
    opt.step({&p});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value[0], w, 1e-12);
  }
}

TEST(Adam, SkipsFrozenParameters) {
  Param<double> p("w", {2});
  p.trainable = false;
  p.grad.fill(1.0);
  Adam<double> opt;
  opt.step({&p});
  EXPECT_EQ(p.value[0], 0.0);
}
