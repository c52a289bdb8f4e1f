#pragma once

// Data remixing: score every training sample's per-modality separability as
// KL(p^k || uniform), keep only the least separable modality of each sample
// (masking the rest to zero), split the training set into one disjoint subset
// per retained modality, and schedule batches that never mix subsets.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "remixlab/model.hpp"
#include "remixlab/synth.hpp"

namespace remixlab::remix {

/// sum_j p_j ln(p_j * M) in nats, with 0 ln 0 = 0. Result lies in [0, ln M].
/// Throws ValidationError if `probs` is not a distribution (tolerance 1e-9).
double kl_to_uniform(std::span<const double> probs);
double kl_to_uniform(const Eigen::VectorXd& probs);

struct SampleAssignment {
  SampleId id = 0;
  int retained = 0;
  std::vector<double> kl;  // one score per modality
};

struct Partition {
  int epoch = 0;
  int modalities = 2;
  /// Ordered as the dataset rows that were scored.
  std::vector<SampleAssignment> assignment;
  /// subsets[k] = ids retaining modality k, ascending.
  std::vector<std::vector<SampleId>> subsets;

  std::size_t size() const { return assignment.size(); }
};

/// Arg-min of each row of `scores` (|ids| x K); ties go to the lowest index.
Partition partition_from_scores(std::span<const SampleId> ids, const Eigen::MatrixXd& scores,
                                int epoch = 0);

/// KL scores (|ds| x K) of every sample, evaluated on unmasked inputs.
Eigen::MatrixXd separability_scores(const model::MultimodalModel& m,
                                    const data::MultimodalDataset& ds, model::UniMode mode);

Partition decouple(const model::MultimodalModel& m, const data::MultimodalDataset& ds,
                   model::UniMode mode, int epoch = 0);

/// Dataset plus per-row mask flags. The underlying samples are never modified.
struct MaskedView {
  const data::MultimodalDataset* data = nullptr;
  std::vector<std::vector<bool>> masks;  // by dataset row

  Eigen::VectorXd input(std::size_t row, int modality) const;
  data::MultimodalSample sample(std::size_t row) const;
};

/// Masks every non-retained modality. Unknown ids raise PartitionError.
MaskedView apply_masks(const data::MultimodalDataset& ds, const Partition& p);
/// View without any masks.
MaskedView unmasked_view(const data::MultimodalDataset& ds);

enum class OrderPolicy { SequentialBySubset, InterleavedShuffled };
OrderPolicy parse_order_policy(std::string_view key);
std::string to_string(OrderPolicy p);

struct PlannedBatch {
  int subset = -1;  // -1: mixed batch with no subset tag
  std::vector<SampleId> ids;
};

struct BatchPlan {
  std::vector<PlannedBatch> batches;
  std::size_t batch_size = 1;
  OrderPolicy policy = OrderPolicy::SequentialBySubset;
  std::vector<std::string> warnings;

  std::size_t scheduled() const;
};

/// Shuffles each subset with `seed`, chunks it into pure batches and orders
/// them per `policy`. Empty subsets contribute no batches and a warning.
BatchPlan build_batch_plan(const Partition& p, std::size_t batch_size, OrderPolicy policy,
                           std::uint64_t seed);

/// Untagged batches over a shuffled id list (joint training, decouple-only).
BatchPlan build_mixed_plan(std::span<const SampleId> ids, std::size_t batch_size,
                           std::uint64_t seed);

struct Clause {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct Report {
  std::vector<Clause> clauses;
  bool ok() const;
  const Clause* find(std::string_view name) const;
};

/// Clauses: "disjoint", "coverage", "no_expansion", "assignment_consistent".
Report verify_partition(const Partition& p, const data::MultimodalDataset& ds);
/// Clauses: "purity", "exactly_once", "batch_size".
Report verify_plan(const BatchPlan& plan, const Partition& p);

/// CSV `epoch,sample_id,retained_modality,kl_audio,kl_video`.
void write_partition_csv(const Partition& p, const std::filesystem::path& path);
Partition read_partition_csv(const std::filesystem::path& path);

}  // namespace remixlab::remix
