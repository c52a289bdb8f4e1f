#pragma once

// Diagnostics: accuracy in multimodal / unimodal modes, the imbalance ratio
// rho, gradient-direction angles, and retained-sample counts.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "remixlab/model.hpp"
#include "remixlab/remix.hpp"
#include "remixlab/synth.hpp"

namespace remixlab::metrics {

/// -1 selects multimodal (fused) prediction; k >= 0 the unimodal prediction of modality k.
inline constexpr int kMultimodal = -1;

double accuracy(const model::MultimodalModel& m, const data::MultimodalDataset& ds, int modality,
                model::UniMode uni_mode = model::UniMode::Head);

/// Ratio of mean true-class probability, strong over weak modality.
struct RhoSample {
  int epoch = 0;
  double rho = 0.0;
  bool defined = false;
  double mean_strong = 0.0;
  double mean_weak = 0.0;
  model::UniMode mode = model::UniMode::Head;
};

RhoSample imbalance_ratio(const model::MultimodalModel& m, const model::Batch& b,
                          model::UniMode mode, int strong = data::kAudio,
                          int weak = data::kVideo, double epsilon = 1e-12);
RhoSample imbalance_ratio(const model::MultimodalModel& m, const data::MultimodalDataset& ds,
                          model::UniMode mode, int strong = data::kAudio,
                          int weak = data::kVideo, double epsilon = 1e-12);

/// Angle in degrees between two directions; undefined when either norm is
/// at or below `epsilon`.
double angle_degrees(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double epsilon,
                     bool* defined);

struct AngleProbe {
  int modality = 0;
  Eigen::VectorXd actual_direction;
  Eigen::VectorXd ideal_direction;
  double angle_deg = 0.0;
  bool defined = false;
};

/// actual: gradient of modality k's encoder under the training loss on
/// `batch`. ideal: gradient of the same parameters under head k's plain CE on
/// the same samples, read from `ideal_batch` (defaults to `batch`) where
/// modality k must be live.
AngleProbe gradient_angle(const model::MultimodalModel& m, const model::Batch& batch,
                          int modality, const model::LossOptions& actual_loss = {},
                          const model::Batch* ideal_batch = nullptr, double epsilon = 1e-12);

/// How the mixed comparison batches are built. Decoupled keeps each sample's
/// partition mask (remixing without reassembly); Unmasked is plain joint
/// training.
enum class MixedBatches { Decoupled, Unmasked };

/// Mean angle of modality k's encoder gradient to its ideal direction on one
/// frozen model, under pure batches (subset k, other modalities masked) and
/// under mixed batches of the same size. Both use the training loss.
struct AngleContrast {
  int modality = 0;
  double pure_mean_deg = 0.0;
  double mixed_mean_deg = 0.0;
  std::size_t pure_defined = 0, pure_undefined = 0;
  std::size_t mixed_defined = 0, mixed_undefined = 0;
};

/// Draws full-size batches from reshuffled plans until `batches` of each kind
/// are probed. Throws PartitionError if subset k cannot fill one batch.
AngleContrast angle_contrast(const model::MultimodalModel& m, const data::MultimodalDataset& ds,
                             const remix::Partition& p, int modality, std::size_t batches,
                             std::size_t batch_size, std::uint64_t seed,
                             MixedBatches mixed = MixedBatches::Decoupled);

std::vector<std::size_t> retained_counts(const remix::Partition& p);

}  // namespace remixlab::metrics
