#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "remixlab/train.hpp"
#include "support/tmpdir.hpp"

using namespace remixlab;
using namespace remixlab::train;

namespace {

data::DatasetSplits small_splits(std::uint64_t seed = 1, int per_class = 40) {
  data::SynthSpec s;
  s.samples_per_class = per_class;
  s.dim_a = s.dim_v = 8;
  s.seed = seed;
  return data::split_dataset(data::generate_dataset(s), 0.7, 0.15, seed);
}

TrainConfig small_config(Variant v, int epochs = 6, int warmup = 2) {
  TrainConfig c;
  c.total_epochs = epochs;
  c.warmup_epochs = warmup;
  c.batch_size = 16;
  c.hidden = 12;
  c.feature_dim = 6;
  c.variant = v;
  c.seed = 5;
  return c;
}

const Variant kVariants[] = {Variant::Baseline, Variant::DecoupleOnly, Variant::ReassembleOnly,
                             Variant::FullRemix};

}  // namespace

TEST(TrainConfig, ValidationAndVariantNames) {
  auto c = small_config(Variant::FullRemix);
  EXPECT_NO_THROW(c.validate());
  c.warmup_epochs = 7;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(Variant::FullRemix);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  for (auto v : kVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("remix_plus"), ValidationError);
}

TEST(Trainer, ZeroLearningRateLeavesModelUnchanged) {
  const auto sp = small_splits();
  auto c = small_config(Variant::Baseline);
  c.adam.lr = 0.0;
  Trainer t(c, sp.train);
  const auto before = t.model();
  const auto r = t.warmup_epoch(sp.train);
  EXPECT_TRUE(model::bitwise_equal(before, t.model()));
  EXPECT_EQ(r.stats.samples, sp.train.size());
  EXPECT_GT(r.stats.loss_total, 0.0);
}

TEST(Trainer, NoiselessDataIsFitDuringWarmup) {
  data::SynthSpec s;
  s.samples_per_class = 25;
  s.dim_a = s.dim_v = 6;
  s.noise_sigma = 1e-3;
  s.hard_fraction_a = s.hard_fraction_v = 0.0;
  const auto ds = data::generate_dataset(s);
  auto c = small_config(Variant::Baseline, 20, 20);
  Trainer t(c, ds);
  for (int e = 0; e < 20; ++e) t.warmup_epoch(ds);
  EXPECT_EQ(metrics::accuracy(t.model(), ds, metrics::kMultimodal), 1.0);
}

TEST(Trainer, VariantLatticeAndEpochAccounting) {
  const auto sp = small_splits();
  for (auto v : kVariants) {
    const auto c = small_config(v);
    Trainer t(c, sp.train);
    for (int e = 0; e < c.total_epochs; ++e) {
      const auto r = t.run_epoch(sp.train);
      EXPECT_EQ(r.stats.samples, sp.train.size()) << to_string(v) << " epoch " << e;
      const bool post = e >= c.warmup_epochs;
      const bool masks = post && (v == Variant::DecoupleOnly || v == Variant::FullRemix);
      const bool pure = post && (v == Variant::ReassembleOnly || v == Variant::FullRemix);
      EXPECT_EQ(r.stats.masking, masks) << to_string(v) << " epoch " << e;
      EXPECT_EQ(r.stats.purity, pure) << to_string(v) << " epoch " << e;
      EXPECT_EQ(r.partition.has_value(), post && v != Variant::Baseline);
      if (r.partition) {
        EXPECT_GE(r.partition->epoch, c.warmup_epochs);
        EXPECT_TRUE(remix::verify_partition(*r.partition, sp.train).ok());
      }
    }
  }
}

TEST(Trainer, PhaseGuards) {
  const auto sp = small_splits();
  Trainer t(small_config(Variant::FullRemix), sp.train);
  EXPECT_THROW(t.remix_epoch(sp.train), ValidationError);
  EXPECT_THROW(t.ablation_epoch(sp.train), ValidationError);
  t.warmup_epoch(sp.train);
  t.warmup_epoch(sp.train);
  EXPECT_THROW(t.warmup_epoch(sp.train), ValidationError);
  EXPECT_NO_THROW(t.remix_epoch(sp.train));
}

TEST(Trainer, SingleSubsetEpochStarvesTheOtherEncoder) {
  const auto sp = small_splits();
  auto c = small_config(Variant::FullRemix, 1, 0);
  c.uni_mode = model::UniMode::Head;
  Trainer t(c, sp.train);
  // A constant audio head scores KL = 0 for audio, so every sample keeps audio.
  t.mutable_model().heads[0].weight.setZero();
  t.mutable_model().heads[0].bias.setZero();
  const auto r = t.remix_epoch(sp.train);
  ASSERT_TRUE(r.partition);
  EXPECT_EQ(r.partition->subsets[0].size(), sp.train.size());
  EXPECT_TRUE(r.partition->subsets[1].empty());
  EXPECT_EQ(r.stats.angle_undefined[1], r.stats.batches);
  EXPECT_EQ(r.stats.angle_defined[1], 0u);
}

TEST(Trainer, DecoupleEveryReusesThePartition) {
  const auto sp = small_splits();
  auto c = small_config(Variant::FullRemix, 6, 1);
  c.decouple_every = 3;
  Trainer t(c, sp.train);
  t.run_epoch(sp.train);
  const auto p1 = *t.run_epoch(sp.train).partition;
  const auto p2 = *t.run_epoch(sp.train).partition;
  const auto p3 = *t.run_epoch(sp.train).partition;
  const auto p4 = *t.run_epoch(sp.train).partition;
  EXPECT_EQ(p1.subsets, p2.subsets);
  EXPECT_EQ(p1.subsets, p3.subsets);
  EXPECT_EQ(p2.epoch, 2);
  EXPECT_EQ(p4.epoch, 4);
  for (std::size_t i = 0; i < p4.size(); ++i) EXPECT_NE(p4.assignment[i].kl, p1.assignment[i].kl);
}

TEST(Trainer, FrozenHeadsStayPutAfterWarmup) {
  const auto sp = small_splits();
  auto c = small_config(Variant::FullRemix, 4, 2);
  c.freeze_heads_after_warmup = true;
  Trainer t(c, sp.train);
  t.run_epoch(sp.train);
  t.run_epoch(sp.train);
  const auto heads = t.model().heads;
  const auto enc = t.model().encoders[0].layers[0].weight;
  t.run_epoch(sp.train);
  t.run_epoch(sp.train);
  for (std::size_t k = 0; k < heads.size(); ++k) {
    EXPECT_EQ(heads[k].weight, t.model().heads[k].weight);
    EXPECT_EQ(heads[k].bias, t.model().heads[k].bias);
  }
  EXPECT_NE(enc, t.model().encoders[0].layers[0].weight);
}

TEST(Trainer, SameSeedSameCheckpoint) {
  const auto sp = small_splits();
  for (auto v : kVariants) {
    const auto c = small_config(v);
    Trainer a(c, sp.train), b(c, sp.train);
    for (int e = 0; e < c.total_epochs; ++e) {
      a.run_epoch(sp.train);
      b.run_epoch(sp.train);
    }
    EXPECT_TRUE(model::bitwise_equal(a.model(), b.model())) << to_string(v);
    EXPECT_EQ(a.optimizer().m, b.optimizer().m);
  }
}

TEST(Trainer, DiagnosticsDoNotChangeTheTrajectory) {
  const auto sp = small_splits();
  for (auto v : kVariants) {
    auto on = small_config(v);
    auto off = on;
    off.probe_angles = false;
    off.evaluate = false;
    const auto ra = run_training(on, sp);
    const auto rb = run_training(off, sp);
    ASSERT_TRUE(ra.final_metrics && rb.final_metrics);
    EXPECT_EQ(ra.final_metrics->test_acc, rb.final_metrics->test_acc) << to_string(v);
    Trainer a(on, sp.train), b(off, sp.train);
    for (int e = 0; e < on.total_epochs; ++e) {
      a.run_epoch(sp.train);
      b.run_epoch(sp.train);
    }
    EXPECT_TRUE(model::bitwise_equal(a.model(), b.model())) << to_string(v);
  }
}

TEST(Trainer, CheckpointRestoreResumesBitExactly) {
  testing_support::TempDir dir;
  const auto sp = small_splits();
  const auto c = small_config(Variant::FullRemix);
  Trainer straight(c, sp.train);
  for (int e = 0; e < c.total_epochs; ++e) straight.run_epoch(sp.train);

  Trainer first(c, sp.train);
  for (int e = 0; e < 3; ++e) first.run_epoch(sp.train);
  model::save_checkpoint(first.checkpoint(), dir.path() / "mid.json");
  Trainer resumed(c, sp.train);
  resumed.restore(model::load_checkpoint(dir.path() / "mid.json"));
  EXPECT_EQ(resumed.epoch(), 3);
  for (int e = 3; e < c.total_epochs; ++e) resumed.run_epoch(sp.train);
  EXPECT_TRUE(model::bitwise_equal(straight.model(), resumed.model()));
}

TEST(RunTraining, WarmupOnlyRunIsABaselineRun) {
  const auto sp = small_splits();
  auto c = small_config(Variant::FullRemix, 4, 4);
  auto b = c;
  b.variant = Variant::Baseline;
  const auto r = run_training(c, sp);
  const auto rb = run_training(b, sp);
  EXPECT_TRUE(r.partitions.empty());
  for (const auto& row : r.rows) EXPECT_FALSE(row.stats.masking || row.stats.purity);
  EXPECT_EQ(r.final_metrics->test_acc, rb.final_metrics->test_acc);
}

TEST(RunTraining, ArtifactsAndSchemas) {
  testing_support::TempDir dir;
  const auto sp = small_splits();
  auto c = small_config(Variant::FullRemix, 5, 2);
  c.eval_cadence = 2;
  c.checkpoint_every = 2;
  const auto rec = run_training(c, sp, {dir.path(), true});
  // Evaluated at epochs 1, 3 and the last one.
  ASSERT_EQ(rec.rows.size(), 3u);
  EXPECT_EQ(rec.rows[0].stats.epoch, 1);
  EXPECT_EQ(rec.rows[2].stats.epoch, 4);
  for (std::size_t i = 1; i < rec.rows.size(); ++i) EXPECT_GT(rec.rows[i].stats.epoch, rec.rows[i - 1].stats.epoch);

  std::ifstream csv(dir.path() / "run.csv");
  std::string header;
  std::getline(csv, header);
  std::string expected;
  for (const auto& col : run_csv_columns()) expected += (expected.empty() ? "" : ",") + col;
  EXPECT_EQ(header, expected);

  for (int e = 2; e < 5; ++e) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.csv", e);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "partitions" / name)) << name;
  }
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "partitions" / "epoch_001.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "epoch_001.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "final.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "angles.csv"));

  std::ifstream js(dir.path() / "run.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j.at("schema_version"), "1.0");
  EXPECT_EQ(j.at("status"), "complete");
  EXPECT_EQ(j.at("train_config").at("variant"), "full_remix");
  EXPECT_TRUE(j.at("final").contains("test_acc"));
}

TEST(RunTraining, NonFiniteLossAbortsWithDiagnostics) {
  testing_support::TempDir dir;
  auto sp = small_splits();
  sp.train.samples[3].inputs[0][0] = std::numeric_limits<double>::quiet_NaN();
  const SampleId bad = sp.train.samples[3].id;
  const auto c = small_config(Variant::FullRemix);
  try {
    run_training(c, sp, {dir.path(), true});
    FAIL() << "expected TrainAbort";
  } catch (const TrainAbort& a) {
    EXPECT_EQ(a.epoch(), 0);
    EXPECT_NE(std::find(a.batch_ids().begin(), a.batch_ids().end(), bad), a.batch_ids().end());
  }
  std::ifstream js(dir.path() / "run.json");
  EXPECT_EQ(nlohmann::json::parse(js).at("status"), "aborted");
  std::ifstream ab(dir.path() / "abort.json");
  const auto diag = nlohmann::json::parse(ab);
  EXPECT_EQ(diag.at("epoch"), 0);
  EXPECT_FALSE(diag.at("last_batch_ids").empty());
}
