#pragma once

// Warm-up epochs of joint training followed by remix epochs (decouple ->
// mask -> pure batches), plus the decouple-only / reassemble-only ablations.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "remixlab/checkpoint.hpp"
#include "remixlab/metrics.hpp"
#include "remixlab/model.hpp"
#include "remixlab/nn.hpp"
#include "remixlab/remix.hpp"
#include "remixlab/synth.hpp"

namespace remixlab::train {

enum class Variant { Baseline, DecoupleOnly, ReassembleOnly, FullRemix };
Variant parse_variant(std::string_view key);
std::string to_string(Variant v);

struct TrainConfig {
  int total_epochs = 60;
  int warmup_epochs = 10;
  std::size_t batch_size = 64;
  nn::AdamConfig adam{};
  int hidden = 64;
  int feature_dim = 32;
  nn::BiasMode encoder_bias = nn::BiasMode::BiasFree;
  model::FusionKind fusion = model::FusionKind::Concat;
  model::MaskLevel mask_level = model::MaskLevel::Input;
  std::vector<double> loss_weights{1.0, 1.0};
  model::UniMode uni_mode = model::UniMode::Head;
  remix::OrderPolicy order_policy = remix::OrderPolicy::SequentialBySubset;
  Variant variant = Variant::FullRemix;
  std::uint64_t seed = 0;
  int eval_cadence = 1;
  int decouple_every = 1;
  bool freeze_heads_after_warmup = false;
  /// Gradient-angle probes on every training batch (read-only, no effect on training).
  bool probe_angles = true;
  /// Evaluate on the validation set at eval_cadence (read-only).
  bool evaluate = true;
  /// Write a checkpoint every n epochs (0: final checkpoint only).
  int checkpoint_every = 0;

  /// Throws ValidationError naming the violated constraint.
  void validate() const;
};

/// Per-epoch training statistics.
struct EpochStats {
  int epoch = 0;
  std::string phase;
  std::size_t samples = 0;
  std::size_t batches = 0;
  bool masking = false;  // some modality input was zeroed this epoch
  bool purity = false;   // every batch drew from a single subset
  double loss_total = 0.0;
  double loss_fused = 0.0;
  std::vector<double> loss_heads;
  std::vector<std::size_t> retained;  // empty when no partition was formed
  std::vector<double> angle_sum;
  std::vector<std::size_t> angle_defined;
  std::vector<std::size_t> angle_undefined;
  std::vector<SampleId> last_batch_ids;

  double mean_angle(int k) const;
};

struct AngleRecord {
  int epoch = 0;
  std::size_t batch = 0;
  int modality = 0;
  double angle_deg = 0.0;
  bool defined = false;
};

/// One evaluated epoch: training stats plus validation metrics.
struct EpochRow {
  EpochStats stats;
  bool evaluated = false;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::vector<double> val_acc_uni;
  metrics::RhoSample rho;
};

/// Long-format metric row for metrics.csv.
struct MetricRow {
  int epoch = 0;
  std::string split;
  std::string mode;
  std::string metric;
  double value = 0.0;
};

struct FinalMetrics {
  double test_acc = 0.0;
  std::vector<double> test_acc_head;
  std::vector<double> test_acc_zeromask;
  double test_rho = 0.0;
};

struct RunRecord {
  TrainConfig config;
  data::SynthSpec spec;
  std::vector<EpochRow> rows;
  std::vector<remix::Partition> partitions;
  std::vector<AngleRecord> angles;
  std::vector<MetricRow> metrics;
  std::optional<FinalMetrics> final_metrics;
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

/// Raised when training hits a non-finite loss.
class TrainAbort : public Error {
public:
  TrainAbort(const std::string& what, int epoch, std::vector<SampleId> batch_ids)
      : Error(what), epoch_(epoch), batch_ids_(std::move(batch_ids)) {}
  int epoch() const noexcept { return epoch_; }
  const std::vector<SampleId>& batch_ids() const noexcept { return batch_ids_; }

private:
  int epoch_;
  std::vector<SampleId> batch_ids_;
};

struct EpochResult {
  EpochStats stats;
  std::optional<remix::Partition> partition;
  std::vector<AngleRecord> angles;
};

/// Owns the model, optimizer state and training RNG of one run.
class Trainer {
public:
  Trainer(const TrainConfig& cfg, const data::MultimodalDataset& train_set);

  /// Joint training over seeded-shuffled mixed batches with every head term.
  EpochResult warmup_epoch(const data::MultimodalDataset& train_set);
  /// Decouple, mask, pure batches; only the retained modality's head term.
  EpochResult remix_epoch(const data::MultimodalDataset& train_set);
  /// DecoupleOnly: masks with mixed batches. ReassembleOnly: pure grouping, no masks.
  EpochResult ablation_epoch(const data::MultimodalDataset& train_set);
  /// Dispatches on the current epoch index and the configured variant.
  EpochResult run_epoch(const data::MultimodalDataset& train_set);

  int epoch() const { return epoch_; }
  const TrainConfig& config() const { return cfg_; }
  const model::MultimodalModel& model() const { return model_; }
  model::MultimodalModel& mutable_model() { return model_; }
  const nn::AdamState& optimizer() const { return adam_; }

  model::Checkpoint checkpoint() const;
  void restore(const model::Checkpoint& ckpt);

private:
  EpochResult train_plan(const data::MultimodalDataset& train_set, const remix::BatchPlan& plan,
                         const std::vector<std::vector<bool>>& masks, const std::string& phase,
                         bool masking);
  remix::Partition current_partition(const data::MultimodalDataset& train_set);
  std::vector<bool> active_tensors() const;

  TrainConfig cfg_;
  model::MultimodalModel model_;
  nn::AdamState adam_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  std::optional<remix::Partition> last_partition_;
};

struct RunOptions {
  /// Artifacts are written here when set.
  std::optional<std::filesystem::path> out_dir;
  bool save_checkpoints = true;
};

/// E_r warm-up epochs then E - E_r variant epochs, validation at eval_cadence
/// and a final test evaluation. On TrainAbort the partial record and
/// diagnostics are persisted before rethrowing.
RunRecord run_training(const TrainConfig& cfg, const data::DatasetSplits& splits,
                       const RunOptions& opts = {});

/// Final-model evaluation on a held-out split.
FinalMetrics evaluate_final(const model::MultimodalModel& m, const data::MultimodalDataset& test);

/// Column order of run.csv.
const std::vector<std::string>& run_csv_columns();

void write_run_csv(const RunRecord& r, const std::filesystem::path& path);
void write_run_json(const RunRecord& r, const std::filesystem::path& path, bool complete);
void write_metrics_csv(const RunRecord& r, const std::filesystem::path& path);
void write_angles_csv(const RunRecord& r, const std::filesystem::path& path);

}  // namespace remixlab::train
