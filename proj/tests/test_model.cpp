#include <gtest/gtest.h>

#include <cmath>
#include <utility>

#include "remixlab/checkpoint.hpp"
#include "remixlab/model.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace remixlab;
using namespace remixlab::model;

namespace {

MultimodalModel random_model(oracle::Gen& g, FusionKind fusion, nn::BiasMode bias,
                             MaskLevel level = MaskLevel::Input, int M = 3,
                             std::vector<int> dims = {4, 5}) {
  ModelShape s;
  s.input_dims = std::move(dims);
  s.num_classes = M;
  s.hidden = g.integer(3, 6);
  s.feature_dim = g.integer(2, 4);
  s.encoder_bias = bias;
  s.fusion = fusion;
  s.mask_level = level;
  s.loss_weights = {g.uniform(0.2, 1.5), g.uniform(0.2, 1.5)};
  std::mt19937_64 rng(g.next());
  auto m = make_model(s, rng);
  // Non-zero biases everywhere so every parameter is exercised.
  for (auto t : tensors(m)) {
    for (auto& v : t) v = 0.7 * g.normal();
  }
  return m;
}

const FusionKind kFusions[] = {FusionKind::Concat, FusionKind::Sum, FusionKind::Decision};
const nn::BiasMode kBiases[] = {nn::BiasMode::BiasFree, nn::BiasMode::WithBias};

double grad_norm(const MultimodalModel& g, int k) { return flatten_encoder(g, k).norm(); }

}  // namespace

TEST(Model, WiringAndLayout) {
  oracle::Gen g(1);
  const auto concat = random_model(g, FusionKind::Concat, nn::BiasMode::BiasFree);
  EXPECT_EQ(concat.fusion_head.in(), concat.feature_dim(0) + concat.feature_dim(1));
  EXPECT_EQ(concat.fusion_head.out(), 3);
  const auto sum = random_model(g, FusionKind::Sum, nn::BiasMode::BiasFree);
  EXPECT_EQ(sum.fusion_head.in(), sum.feature_dim(0));
  const auto layout = tensor_layout(concat);
  EXPECT_EQ(layout.size(), tensors(concat).size());
  std::size_t n = 0;
  for (auto t : tensors(concat)) n += t.size();
  EXPECT_EQ(parameter_count(concat), n);

  auto broken = sum;
  broken.encoders[1].layers.back().weight.conservativeResize(sum.feature_dim(1) + 1, Eigen::NoChange);
  EXPECT_THROW(broken.validate(), DimensionError);
  EXPECT_THROW(parse_fusion("film"), ValidationError);
}

TEST(Model, GradientMatchesFiniteDifferencesForEveryFusionAndBias) {
  oracle::Gen g(2024);
  double worst = 0.0;
  int instances = 0;
  for (auto fusion : kFusions) {
    for (auto bias : kBiases) {
      for (auto level : {MaskLevel::Input, MaskLevel::Feature}) {
        for (int rep = 0; rep < 2; ++rep) {
          auto m = random_model(g, fusion, bias, level);
          const auto b = oracle::random_batch(g, {4, 5}, 3, g.integer(1, 5), 0.4);
          LossOptions opt;
          opt.head_terms = rep ? HeadTerms::All : HeadTerms::LiveOnly;
          const auto lg = loss_and_gradient(m, b, opt);
          oracle::RefOptions ref;
          ref.live_only = !rep;
          auto loss = [&] { return oracle::loss(m, b, ref); };
          worst = std::max(worst, fd::max_relative_error(tensors(m), tensors(std::as_const(lg.grad)), loss));
          ++instances;
        }
      }
    }
  }
  EXPECT_GE(instances, 20);
  EXPECT_LT(worst, 1e-5);
}

TEST(Model, LossMatchesTermByTermOracle) {
  oracle::Gen g(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_model(g, kFusions[trial % 3], kBiases[trial % 2]);
    const auto b = oracle::random_batch(g, {4, 5}, 3, g.integer(1, 8), 0.3);
    const auto lb = total_loss(m, b);
    EXPECT_NEAR(lb.total, oracle::loss(m, b), 1e-12);
    oracle::RefOptions fused_only;
    fused_only.heads = false;
    EXPECT_NEAR(lb.fused, oracle::loss(m, b, fused_only), 1e-12);
    double sum = lb.fused;
    for (int k = 0; k < 2; ++k) sum += m.loss_weights[static_cast<std::size_t>(k)] * lb.heads[static_cast<std::size_t>(k)];
    EXPECT_NEAR(lb.total, sum, 1e-12);
  }
}

TEST(Model, ZeroWeightsLeaveFusedLossOnly) {
  oracle::Gen g(3);
  auto m = random_model(g, FusionKind::Concat, nn::BiasMode::BiasFree);
  m.loss_weights = {0.0, 0.0};
  const auto b = oracle::random_batch(g, {4, 5}, 3, 6);
  const auto lb = total_loss(m, b);
  EXPECT_EQ(lb.total, lb.fused);
}

TEST(Model, WarmupBatchSumsAllThreeTerms) {
  oracle::Gen g(4);
  auto m = random_model(g, FusionKind::Concat, nn::BiasMode::BiasFree);
  m.loss_weights = {1.0, 1.0};
  const auto b = oracle::random_batch(g, {4, 5}, 3, 8);
  oracle::RefOptions f, a, v;
  f.heads = false;
  a.fused = v.fused = false;
  a.only_head = 0;
  v.only_head = 1;
  EXPECT_NEAR(total_loss(m, b).total, oracle::loss(m, b, f) + oracle::loss(m, b, a) + oracle::loss(m, b, v), 1e-12);
}

TEST(Model, MonolithicAndBlockConcatAgree) {
  oracle::Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_model(g, FusionKind::Concat, kBiases[trial % 2]);
    const auto b = oracle::random_batch(g, {4, 5}, 3, g.integer(1, 10), 0.3);
    const auto f = forward(m, b);
    const Eigen::MatrixXd block = fuse(m, f.features);
    const Eigen::MatrixXd mono = fuse_monolithic(m, f.features);
    EXPECT_LT((block - mono).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index i = 0; i < block.cols(); ++i) {
      const auto ref = oracle::fused_logits(m, b, i);
      for (Eigen::Index j = 0; j < block.rows(); ++j) EXPECT_NEAR(block(j, i), ref[static_cast<std::size_t>(j)], 1e-12);
    }
  }
}

TEST(Model, DecisionOfIdenticalHeadsIsThatHead) {
  oracle::Gen g(6);
  auto m = random_model(g, FusionKind::Decision, nn::BiasMode::BiasFree, MaskLevel::Input, 3, {4, 4});
  m.encoders[1] = m.encoders[0];
  m.heads[1] = m.heads[0];
  auto b = oracle::random_batch(g, {4, 4}, 3, 5);
  b.inputs[1] = b.inputs[0];
  const auto f = forward(m, b);
  EXPECT_LT((f.fused - f.head_logits[0]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Model, DecisionArgmaxFollowsOtherHeadWhenOneIsUniform) {
  oracle::Gen g(16);
  auto m = random_model(g, FusionKind::Decision, nn::BiasMode::BiasFree);
  m.heads[1].weight.setZero();
  m.heads[1].bias.setConstant(0.37);
  const auto b = oracle::random_batch(g, {4, 5}, 3, 20);
  const auto f = forward(m, b);
  for (Eigen::Index i = 0; i < f.fused.cols(); ++i) {
    Eigen::Index a = 0, c = 0;
    f.fused.col(i).maxCoeff(&a);
    f.head_logits[0].col(i).maxCoeff(&c);
    EXPECT_EQ(a, c);
  }
}

TEST(Model, PureBatchIsolationIsExact) {
  oracle::Gen g(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_model(g, kFusions[trial % 3], nn::BiasMode::BiasFree);
    const int masked = trial % 2;
    auto b = with_masked(oracle::random_batch(g, {4, 5}, 3, g.integer(1, 8)), masked);
    const auto lg = loss_and_gradient(m, b);
    EXPECT_EQ(grad_norm(lg.grad, masked), 0.0);
    EXPECT_GT(grad_norm(lg.grad, 1 - masked), 0.0);
    // Including the masked head's term changes the loss but not encoder k.
    LossOptions all;
    all.head_terms = HeadTerms::All;
    EXPECT_EQ(grad_norm(loss_and_gradient(m, b, all).grad, masked), 0.0);
  }
}

TEST(Model, MaskedHeadTermIsConstantOfHeadBias) {
  oracle::Gen g(12);
  const auto m = random_model(g, FusionKind::Concat, nn::BiasMode::BiasFree);
  const auto b = with_masked(oracle::random_batch(g, {4, 5}, 3, 6), data::kAudio);
  LossOptions all;
  all.head_terms = HeadTerms::All;
  all.fused = false;
  all.only_head = data::kAudio;
  const double term = total_loss(m, b, all).heads[0];
  const Eigen::VectorXd p = nn::softmax(m.heads[0].bias);
  double expected = 0.0;
  for (int y : b.labels) expected -= std::log(p[y]);
  EXPECT_NEAR(term, expected / static_cast<double>(b.size()), 1e-12);
  EXPECT_EQ(total_loss(m, b).heads[0], 0.0);
}

TEST(Model, FeatureMaskingSilencesBiasedEncoders) {
  oracle::Gen g(13);
  const auto m = random_model(g, FusionKind::Concat, nn::BiasMode::WithBias, MaskLevel::Feature);
  const auto b = with_masked(oracle::random_batch(g, {4, 5}, 3, 5), data::kVideo);
  EXPECT_EQ(grad_norm(loss_and_gradient(m, b).grad, data::kVideo), 0.0);
  EXPECT_TRUE(forward(m, b).features[1].isZero(0.0));
}

TEST(Model, MaskingIsIdempotent) {
  oracle::Gen g(14);
  const auto b = with_masked(oracle::random_batch(g, {4, 5}, 3, 5), 1);
  const auto bb = with_masked(b, 1);
  EXPECT_EQ(b.inputs[1], bb.inputs[1]);
  EXPECT_EQ(b.live[1], bb.live[1]);
  EXPECT_EQ(b.inputs[0], bb.inputs[0]);
}

TEST(Model, UnimodalProbabilityModes) {
  oracle::Gen g(15);
  const auto m = random_model(g, FusionKind::Concat, nn::BiasMode::BiasFree);
  const auto b = oracle::random_batch(g, {4, 5}, 3, 6);
  const auto f = forward(m, b);

  const auto head = unimodal_probs(m, b, 0, UniMode::Head);
  EXPECT_LT((head - nn::softmax_columns(f.head_logits[0])).cwiseAbs().maxCoeff(), 1e-15);

  // ZeroMask with bias-free encoders: softmax(W^a z^a + b).
  const auto zm = unimodal_probs(m, b, 0, UniMode::ZeroMask);
  Eigen::MatrixXd logits = m.fusion_head.weight.leftCols(m.feature_dim(0)) * f.features[0];
  logits.colwise() += m.fusion_head.bias;
  EXPECT_LT((zm - nn::softmax_columns(logits)).cwiseAbs().maxCoeff(), 1e-12);

  // Head logits shifted by a constant give the same probabilities.
  auto shifted = m;
  shifted.heads[0].bias.array() += 4.0;
  EXPECT_LT((unimodal_probs(shifted, b, 0, UniMode::Head) - head).cwiseAbs().maxCoeff(), 1e-12);

  const auto masked = with_masked(b, 0);
  EXPECT_THROW(unimodal_probs(m, masked, 0, UniMode::Head), EvaluationError);
  EXPECT_NO_THROW(unimodal_probs(m, masked, 1, UniMode::ZeroMask));
}

TEST(Model, NonFiniteInputRaisesGradientError) {
  oracle::Gen g(17);
  const auto m = random_model(g, FusionKind::Sum, nn::BiasMode::BiasFree);
  auto b = oracle::random_batch(g, {4, 5}, 3, 3);
  b.ids = {40, 41, 42};
  b.inputs[0](1, 2) = std::numeric_limits<double>::infinity();
  try {
    loss_and_gradient(m, b);
    FAIL() << "expected GradientError";
  } catch (const GradientError& e) {
    EXPECT_EQ(e.sample_id().value_or(0), 42u);
  }
}

TEST(Model, CheckpointRoundTripIsBitExact) {
  testing_support::TempDir dir;
  oracle::Gen g(18);
  for (auto fusion : kFusions) {
    Checkpoint c;
    c.model = random_model(g, fusion, nn::BiasMode::WithBias);
    c.adam = nn::make_adam({}, tensors(c.model));
    c.adam.t = 3;
    c.adam.m[0][0] = 1.0 / 3.0;
    c.rng_state = "12345 678";
    c.epoch = 9;
    const auto p = dir.path() / (to_string(fusion) + ".json");
    save_checkpoint(c, p);
    const auto back = load_checkpoint(p);
    EXPECT_TRUE(bitwise_equal(c.model, back.model));
    EXPECT_EQ(back.adam.m, c.adam.m);
    EXPECT_EQ(back.adam.t, 3u);
    EXPECT_EQ(back.rng_state, c.rng_state);
    EXPECT_EQ(back.epoch, 9);
  }
}
