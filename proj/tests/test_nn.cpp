#include <gtest/gtest.h>

#include <cmath>

#include "remixlab/nn.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace remixlab;
using namespace remixlab::nn;

namespace {

Eigen::MatrixXd random_matrix(oracle::Gen& g, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g.normal();
  return m;
}

}  // namespace

TEST(Nn, InitBoundsAndBiasMode) {
  std::mt19937_64 rng(1);
  const std::vector<int> widths{7, 5, 3};
  const auto free = make_mlp(widths, BiasMode::BiasFree, rng);
  const auto with = make_mlp(widths, BiasMode::WithBias, rng);
  ASSERT_EQ(free.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_FALSE(free.layers[l].has_bias);
    EXPECT_EQ(free.layers[l].bias.size(), 0);
    EXPECT_TRUE(with.layers[l].has_bias);
    EXPECT_TRUE(with.layers[l].bias.isZero());
    const double bound = std::sqrt(6.0 / (widths[l] + widths[l + 1]));
    EXPECT_LE(free.layers[l].weight.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_EQ(free.layers[1].in(), free.layers[0].out());
}

TEST(Nn, BiasFreeMapsZeroToZero) {
  std::mt19937_64 rng(2);
  const std::vector<int> widths{6, 8, 4};
  const auto m = make_mlp(widths, BiasMode::BiasFree, rng);
  EXPECT_TRUE(mlp_forward(m, Eigen::VectorXd::Zero(6)).isZero(0.0));
}

TEST(Nn, IdentityLayerPassesInputThrough) {
  Mlp m;
  m.layers.push_back(Dense{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd(), false});
  const Eigen::Vector3d x(1.5, -2.0, 0.25);
  EXPECT_EQ(mlp_forward(m, x), x);
}

TEST(Nn, ForwardMatchesLoopOracle) {
  oracle::Gen g(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial));
    const std::vector<int> widths{g.integer(1, 6), g.integer(1, 6), g.integer(1, 6)};
    const auto m = make_mlp(widths, trial % 2 ? BiasMode::WithBias : BiasMode::BiasFree, rng);
    auto mm = m;
    for (auto& l : mm.layers) {
      if (l.has_bias) l.bias = random_matrix(g, l.out(), 1);
    }
    std::vector<double> x(static_cast<std::size_t>(widths[0]));
    Eigen::VectorXd xe(widths[0]);
    for (int i = 0; i < widths[0]; ++i) xe[i] = x[static_cast<std::size_t>(i)] = g.normal();
    const auto ref = oracle::detail::mlp(mm, x);
    const auto got = mlp_forward(mm, xe);
    for (std::size_t j = 0; j < ref.size(); ++j) EXPECT_NEAR(got[static_cast<Eigen::Index>(j)], ref[j], 1e-12);
  }
}

TEST(Nn, ForwardRejectsWrongInputSize) {
  std::mt19937_64 rng(3);
  const std::vector<int> widths{4, 3};
  const auto m = make_mlp(widths, BiasMode::BiasFree, rng);
  EXPECT_THROW(mlp_forward(m, Eigen::VectorXd::Zero(5)), DimensionError);
}

TEST(Nn, SoftmaxClosedFormsAndShiftInvariance) {
  const auto u = softmax(Eigen::Vector4d::Constant(0.3));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(u[j], 0.25, 1e-15);

  const auto p = softmax(Eigen::Vector3d(std::log(2.0), 0.0, 0.0));
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
  EXPECT_NEAR(p[2], 0.25, 1e-15);

  oracle::Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd z(g.integer(2, 9));
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = 5.0 * g.normal();
    const auto a = softmax(z);
    const auto b = softmax((z.array() + 100.0).matrix());
    EXPECT_NEAR(a.sum(), 1.0, 1e-12);
    EXPECT_GT(a.minCoeff(), 0.0);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Nn, CrossEntropyClosedForms) {
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(3);
  onehot[1] = 1.0;
  EXPECT_EQ(cross_entropy(onehot, 1), 0.0);
  EXPECT_NEAR(cross_entropy(Eigen::VectorXd::Constant(6, 1.0 / 6.0), 2), std::log(6.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Eigen::VectorXd::Constant(6, 1.0 / 6.0), 2), 1.7918, 5e-5);

  Eigen::MatrixXd probs(2, 2);
  probs << 0.8, 0.3, 0.2, 0.7;
  const std::vector<int> labels{0, 0};
  EXPECT_NEAR(mean_cross_entropy(probs, labels), 0.5 * (-std::log(0.8) - std::log(0.3)), 1e-15);

  bool clamped = false;
  const double ce = cross_entropy(onehot, 0, 1e-12, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_NEAR(ce, -std::log(1e-12), 1e-9);
}

TEST(Nn, ClassifierGradientMatchesFiniteDifferences) {
  oracle::Gen g(21);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(100 + trial));
    const int M = g.integer(2, 5);
    const std::vector<int> widths{g.integer(2, 8), g.integer(2, 10), M};
    auto m = make_mlp(widths, trial % 2 ? BiasMode::WithBias : BiasMode::BiasFree, rng);
    for (auto& l : m.layers) {
      if (l.has_bias) l.bias = 0.1 * random_matrix(g, l.out(), 1);
    }
    const int n = g.integer(1, 6);
    const Eigen::MatrixXd x = random_matrix(g, widths[0], n);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) y.push_back(g.integer(0, M - 1));

    const auto cg = compute_gradients(m, x, y);
    auto loss = [&] {
      double l = 0.0;
      for (int i = 0; i < n; ++i) {
        std::vector<double> xi(x.col(i).data(), x.col(i).data() + x.rows());
        l += oracle::detail::ce(oracle::detail::mlp(m, xi), y[static_cast<std::size_t>(i)]);
      }
      return l / n;
    };
    const double err = fd::max_relative_error(tensors(m), tensors(cg.grad), loss);
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Nn, DuplicatedBatchGivesIdenticalGradient) {
  oracle::Gen g(8);
  std::mt19937_64 rng(8);
  const std::vector<int> widths{4, 6, 3};
  const auto m = make_mlp(widths, BiasMode::WithBias, rng);
  const Eigen::MatrixXd x = random_matrix(g, 4, 5);
  const std::vector<int> y{0, 1, 2, 1, 0};
  Eigen::MatrixXd xx(4, 10);
  xx << x, x;
  std::vector<int> yy = y;
  yy.insert(yy.end(), y.begin(), y.end());
  const auto a = compute_gradients(m, x, y);
  const auto b = compute_gradients(m, xx, yy);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  const auto ta = tensors(a.grad);
  const auto tb = tensors(b.grad);
  for (std::size_t t = 0; t < ta.size(); ++t) {
    for (std::size_t j = 0; j < ta[t].size(); ++j) EXPECT_NEAR(ta[t][j], tb[t][j], 1e-14);
  }
}

TEST(Nn, NonFiniteLossNamesTheSample) {
  std::mt19937_64 rng(4);
  const std::vector<int> widths{2, 2};
  const auto m = make_mlp(widths, BiasMode::BiasFree, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 3);
  x(0, 1) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<int> y{0, 1, 0};
  const std::vector<SampleId> ids{10, 11, 12};
  try {
    compute_gradients(m, x, y, ids);
    FAIL() << "expected GradientError";
  } catch (const GradientError& e) {
    ASSERT_TRUE(e.sample_id().has_value());
    EXPECT_EQ(*e.sample_id(), 11u);
  }
}

TEST(Nn, AdamSingleStepMatchesHandComputation) {
  std::vector<double> w{1.0};
  std::vector<double> g{1.0};
  std::vector<std::span<double>> params{w};
  std::vector<std::span<const double>> grads{g};
  auto st = make_adam({0.1, 0.9, 0.999, 1e-8}, params);
  adam_step(params, grads, st);
  // m = 0.1, v = 0.001; bias-corrected m_hat = 1, v_hat = 1.
  const double expected = 1.0 - 0.1 * 1.0 / (std::sqrt(1.0) + 1e-8);
  EXPECT_DOUBLE_EQ(w[0], expected);
  EXPECT_NEAR(w[0], 0.9, 1e-8);
  EXPECT_EQ(st.t, 1u);
}

TEST(Nn, AdamZeroGradientAndInactiveTensors) {
  std::vector<double> a{0.5, -0.5}, b{2.0};
  std::vector<double> ga{0.0, 0.0}, gb{3.0};
  std::vector<std::span<double>> params{a, b};
  std::vector<std::span<const double>> grads{ga, gb};
  auto st = make_adam({}, params);
  const std::vector<bool> active{true, false};
  adam_step(params, grads, st, &active);
  EXPECT_EQ(a, (std::vector<double>{0.5, -0.5}));
  EXPECT_EQ(b[0], 2.0);
  EXPECT_EQ(st.v[1][0], 0.0);
  EXPECT_EQ(st.t, 1u);
}

TEST(Nn, AdamIsDeterministic) {
  oracle::Gen g(9);
  std::vector<double> w0(10), gr(10);
  for (auto& v : w0) v = g.normal();
  for (auto& v : gr) v = g.normal();
  auto run = [&] {
    auto w = w0;
    std::vector<std::span<double>> params{w};
    std::vector<std::span<const double>> grads{gr};
    auto st = make_adam({}, params);
    for (int i = 0; i < 5; ++i) adam_step(params, grads, st);
    return w;
  };
  EXPECT_EQ(run(), run());
}

TEST(Nn, AdamRejectsShapeMismatch) {
  std::vector<double> w{1.0, 2.0}, g{1.0};
  std::vector<std::span<double>> params{w};
  std::vector<std::span<const double>> grads{g};
  auto st = make_adam({}, params);
  EXPECT_THROW(adam_step(params, grads, st), DimensionError);
}

// Sanity property: on a tiny separable problem the full-batch loss keeps
// falling after the first few Adam steps for nearly every seed.
TEST(Nn, TrainingLossDecreasesOnSeparableToy) {
  int monotone = 0;
  const int seeds = 40;
  for (int seed = 0; seed < seeds; ++seed) {
    oracle::Gen g(static_cast<std::uint64_t>(1000 + seed));
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const std::vector<int> widths{4, 8, 2};
    auto m = make_mlp(widths, BiasMode::WithBias, rng);
    Eigen::MatrixXd x(4, 16);
    std::vector<int> y;
    for (int i = 0; i < 16; ++i) {
      const int c = i % 2;
      y.push_back(c);
      for (int d = 0; d < 4; ++d) x(d, i) = (d == c ? 3.0 : 0.0) + 0.1 * g.normal();
    }
    auto params = tensors(m);
    auto st = make_adam({0.01, 0.9, 0.999, 1e-8}, params);
    std::vector<double> losses;
    for (int step = 0; step < 40; ++step) {
      const auto cg = compute_gradients(m, x, y);
      losses.push_back(cg.loss);
      adam_step(params, tensors(cg.grad), st);
    }
    bool ok = true;
    for (std::size_t t = 6; t < losses.size(); ++t) ok = ok && losses[t] <= losses[t - 1];
    monotone += ok;
  }
  EXPECT_GE(monotone, static_cast<int>(std::ceil(0.95 * seeds)));
}
