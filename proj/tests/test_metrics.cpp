#include <gtest/gtest.h>

#include <cmath>

#include "remixlab/metrics.hpp"
#include "support/oracles.hpp"

using namespace remixlab;
using namespace remixlab::metrics;

namespace {

model::MultimodalModel make(const data::SynthSpec& s, std::uint64_t seed,
                            model::FusionKind fusion = model::FusionKind::Concat) {
  model::ModelShape shape;
  shape.input_dims = {s.dim_a, s.dim_v};
  shape.num_classes = s.num_classes;
  shape.hidden = 8;
  shape.feature_dim = 4;
  shape.fusion = fusion;
  std::mt19937_64 rng(seed);
  return model::make_model(shape, rng);
}

data::SynthSpec small_spec(int dim = 6) {
  data::SynthSpec s;
  s.samples_per_class = 50;
  s.dim_a = s.dim_v = dim;
  return s;
}

}  // namespace

TEST(Accuracy, UntrainedModelIsNearChance) {
  const auto spec = small_spec();
  const auto ds = data::generate_dataset(spec);
  double mean = 0.0;
  const int models = 20;
  for (int s = 0; s < models; ++s) mean += accuracy(make(spec, static_cast<std::uint64_t>(s)), ds, kMultimodal);
  mean /= models;
  // 20 x 200 predictions; chance is 0.25.
  EXPECT_NEAR(mean, 0.25, 0.06);
}

TEST(Accuracy, InvariantToConstantLogitShift) {
  const auto spec = small_spec();
  const auto ds = data::generate_dataset(spec);
  auto m = make(spec, 3);
  const double before = accuracy(m, ds, kMultimodal);
  m.fusion_head.bias.array() += 2.5;
  EXPECT_EQ(accuracy(m, ds, kMultimodal), before);
}

TEST(Accuracy, UnimodalModesAreDistinctEstimators) {
  const auto spec = small_spec();
  const auto ds = data::generate_dataset(spec);
  const auto m = make(spec, 4);
  for (int k : {data::kAudio, data::kVideo}) {
    const double h = accuracy(m, ds, k, model::UniMode::Head);
    const double z = accuracy(m, ds, k, model::UniMode::ZeroMask);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(z, 1.0);
  }
}

TEST(Rho, ModalitySwapGivesReciprocal) {
  oracle::Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = small_spec();
    const auto m = make(spec, g.next());
    auto mirrored = m;
    std::swap(mirrored.encoders[0], mirrored.encoders[1]);
    std::swap(mirrored.heads[0], mirrored.heads[1]);
    const auto b = oracle::random_batch(g, {6, 6}, 4, 16);
    auto bm = b;
    std::swap(bm.inputs[0], bm.inputs[1]);
    const auto r = imbalance_ratio(m, b, model::UniMode::Head);
    const auto rm = imbalance_ratio(mirrored, bm, model::UniMode::Head);
    ASSERT_TRUE(r.defined && rm.defined);
    EXPECT_GT(r.rho, 0.0);
    EXPECT_NEAR(rm.rho, 1.0 / r.rho, 1e-12);
  }
}

TEST(Rho, SymmetricModelOnSymmetricDataIsNearOne) {
  auto spec = small_spec();
  spec.strength_a = spec.strength_v = 1.0;
  spec.hard_fraction_a = spec.hard_fraction_v = 0.0;
  auto m = make(spec, 6);
  m.encoders[1] = m.encoders[0];
  m.heads[1] = m.heads[0];
  oracle::Gen g(6);
  double log_sum = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto b = oracle::random_batch(g, {6, 6}, 4, 64);
    log_sum += std::log(imbalance_ratio(m, b, model::UniMode::Head).rho);
  }
  EXPECT_NEAR(std::exp(log_sum / 50), 1.0, 0.02);
}

TEST(Rho, UndefinedWhenWeakScoreVanishes) {
  const auto spec = small_spec();
  auto m = make(spec, 7);
  m.heads[1].weight.setZero();
  m.heads[1].bias.setConstant(-1000.0);
  m.heads[1].bias[0] = 1000.0;
  oracle::Gen g(7);
  auto b = oracle::random_batch(g, {6, 6}, 4, 8);
  for (auto& y : b.labels) y = 1;
  const auto r = imbalance_ratio(m, b, model::UniMode::Head);
  EXPECT_FALSE(r.defined);
}

TEST(Angle, ClosedFormsAndScaleInvariance) {
  oracle::Gen g(8);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(g.integer(2, 20));
    Eigen::VectorXd b(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a[i] = g.normal();
      b[i] = g.normal();
    }
    bool d1 = false, d2 = false, d3 = false;
    const double ang = angle_degrees(a, b, 1e-12, &d1);
    const double scaled = angle_degrees(g.uniform(0.1, 50.0) * a, g.uniform(0.1, 50.0) * b, 1e-12, &d2);
    EXPECT_TRUE(d1 && d2);
    EXPECT_NEAR(ang, scaled, 1e-9);
    EXPECT_GE(ang, 0.0);
    EXPECT_LE(ang, 180.0);
    EXPECT_NEAR(angle_degrees(a, -a, 1e-12, &d3), 180.0, 1e-6);
    EXPECT_NEAR(angle_degrees(a, a, 1e-12, &d3), 0.0, 1e-6);
  }
  bool defined = true;
  angle_degrees(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3), 1e-12, &defined);
  EXPECT_FALSE(defined);
}

TEST(Angle, UnimodalObjectiveGivesZeroAngle) {
  const auto spec = small_spec();
  const auto m = make(spec, 9);
  oracle::Gen g(9);
  const auto full = oracle::random_batch(g, {6, 6}, 4, 12);
  const auto pure = model::with_masked(full, data::kVideo);
  model::LossOptions only_heads;
  only_heads.fused = false;
  const auto p = gradient_angle(m, pure, data::kAudio, only_heads, &full);
  ASSERT_TRUE(p.defined);
  EXPECT_NEAR(p.angle_deg, 0.0, 1e-5);
  // With the fused term the actual direction differs.
  EXPECT_GT(gradient_angle(m, full, data::kAudio).angle_deg, 1e-3);
}

TEST(Angle, MaskedEncoderProbeIsUndefined) {
  const auto spec = small_spec();
  const auto m = make(spec, 10);
  oracle::Gen g(10);
  const auto full = oracle::random_batch(g, {6, 6}, 4, 12);
  const auto pure = model::with_masked(full, data::kVideo);
  EXPECT_FALSE(gradient_angle(m, pure, data::kVideo, {}, &full).defined);
}

TEST(Angle, ContrastProbesTheRequestedNumberOfBatches) {
  const auto spec = small_spec();
  const auto ds = data::generate_dataset(spec);
  const auto m = make(spec, 11);
  std::vector<SampleId> ids = ds.ids();
  Eigen::MatrixXd s(static_cast<Eigen::Index>(ids.size()), 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s(i, 0) = i % 3 == 0 ? 0.0 : 1.0;
    s(i, 1) = 0.5;
  }
  const auto p = remix::partition_from_scores(ids, s);
  const auto c = angle_contrast(m, ds, p, data::kAudio, 12, 16, 3);
  EXPECT_EQ(c.pure_defined + c.pure_undefined, 12u);
  EXPECT_EQ(c.mixed_defined + c.mixed_undefined, 12u);
  EXPECT_TRUE(std::isfinite(c.pure_mean_deg));
  // Pure batches are identical for both mixed kinds; only the comparison side moves.
  const auto u = angle_contrast(m, ds, p, data::kAudio, 12, 16, 3, MixedBatches::Unmasked);
  EXPECT_EQ(u.pure_mean_deg, c.pure_mean_deg);
  EXPECT_EQ(u.mixed_defined + u.mixed_undefined, 12u);
  EXPECT_NE(u.mixed_mean_deg, c.mixed_mean_deg);
  EXPECT_THROW(angle_contrast(m, ds, p, data::kAudio, 1, 1000, 3), PartitionError);
}

TEST(Counts, SumToN) {
  oracle::Gen g(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(1, 100);
    std::vector<SampleId> ids;
    Eigen::MatrixXd s(n, 2);
    for (int i = 0; i < n; ++i) {
      ids.push_back(static_cast<SampleId>(i));
      s(i, 0) = g.uniform();
      s(i, 1) = g.uniform();
    }
    const auto c = retained_counts(remix::partition_from_scores(ids, s));
    EXPECT_EQ(c[0] + c[1], static_cast<std::size_t>(n));
  }
  std::vector<SampleId> ids{0, 1, 2};
  const auto all_audio = retained_counts(remix::partition_from_scores(ids, Eigen::MatrixXd::Zero(3, 2)));
  EXPECT_EQ(all_audio, (std::vector<std::size_t>{3, 0}));
}
