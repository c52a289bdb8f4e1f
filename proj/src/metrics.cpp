#include "remixlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <numbers>
#include <numeric>

namespace remixlab::metrics {

namespace {

constexpr std::size_t kEvalChunk = 256;

template <class Fn>
void for_each_chunk(const data::MultimodalDataset& ds, Fn&& fn) {
  const std::vector<std::vector<bool>> no_masks(ds.size(),
                                                std::vector<bool>(static_cast<std::size_t>(ds.modalities()), false));
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    const std::size_t end = std::min(ds.size(), start + kEvalChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    fn(model::make_batch(ds, rows, &no_masks));
  }
}

std::size_t count_correct(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    Eigen::Index best = 0;
    scores.col(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return correct;
}

}  // namespace

double accuracy(const model::MultimodalModel& m, const data::MultimodalDataset& ds, int modality,
                model::UniMode uni_mode) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for_each_chunk(ds, [&](const model::Batch& b) {
    const Eigen::MatrixXd scores = modality == kMultimodal
                                       ? model::fused_logits(m, b)
                                       : model::unimodal_probs(m, b, modality, uni_mode);
    correct += count_correct(scores, b.labels);
  });
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

RhoSample imbalance_ratio(const model::MultimodalModel& m, const model::Batch& b,
                          model::UniMode mode, int strong, int weak, double epsilon) {
  if (b.size() == 0) throw DimensionError("imbalance ratio needs a non-empty batch");
  const Eigen::MatrixXd ps = model::unimodal_probs(m, b, strong, mode);
  const Eigen::MatrixXd pw = model::unimodal_probs(m, b, weak, mode);
  RhoSample r;
  r.mode = mode;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    r.mean_strong += ps(b.labels[i], col);
    r.mean_weak += pw(b.labels[i], col);
  }
  r.mean_strong /= static_cast<double>(b.size());
  r.mean_weak /= static_cast<double>(b.size());
  r.defined = r.mean_weak > epsilon;
  r.rho = r.defined ? r.mean_strong / r.mean_weak : std::numeric_limits<double>::quiet_NaN();
  return r;
}

RhoSample imbalance_ratio(const model::MultimodalModel& m, const data::MultimodalDataset& ds,
                          model::UniMode mode, int strong, int weak, double epsilon) {
  if (ds.empty()) throw DimensionError("imbalance ratio needs a non-empty dataset");
  double sum_strong = 0.0, sum_weak = 0.0;
  for_each_chunk(ds, [&](const model::Batch& b) {
    const RhoSample part = imbalance_ratio(m, b, mode, strong, weak, epsilon);
    sum_strong += part.mean_strong * static_cast<double>(b.size());
    sum_weak += part.mean_weak * static_cast<double>(b.size());
  });
  RhoSample r;
  r.mode = mode;
  r.mean_strong = sum_strong / static_cast<double>(ds.size());
  r.mean_weak = sum_weak / static_cast<double>(ds.size());
  r.defined = r.mean_weak > epsilon;
  r.rho = r.defined ? r.mean_strong / r.mean_weak : std::numeric_limits<double>::quiet_NaN();
  return r;
}

double angle_degrees(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double epsilon,
                     bool* defined) {
  const double na = a.norm();
  const double nb = b.norm();
  const bool ok = na > epsilon && nb > epsilon && a.size() == b.size();
  if (defined) *defined = ok;
  if (!ok) return std::numeric_limits<double>::quiet_NaN();
  // Kahan's form; acos of the cosine loses half the digits near 0 and 180 degrees.
  const Eigen::VectorXd ua = a * nb;
  const Eigen::VectorXd ub = b * na;
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm()) * 180.0 / std::numbers::pi;
}

AngleProbe gradient_angle(const model::MultimodalModel& m, const model::Batch& batch,
                          int modality, const model::LossOptions& actual_loss,
                          const model::Batch* ideal_batch, double epsilon) {
  AngleProbe probe;
  probe.modality = modality;
  const auto actual = model::loss_and_gradient(m, batch, actual_loss);
  probe.actual_direction = model::flatten_encoder(actual.grad, modality);

  model::LossOptions ideal_loss;
  ideal_loss.fused = false;
  ideal_loss.only_head = modality;
  ideal_loss.weighted_heads = false;
  ideal_loss.head_terms = model::HeadTerms::All;
  const auto ideal = model::loss_and_gradient(m, ideal_batch ? *ideal_batch : batch, ideal_loss);
  probe.ideal_direction = model::flatten_encoder(ideal.grad, modality);

  probe.angle_deg = angle_degrees(probe.actual_direction, probe.ideal_direction, epsilon,
                                  &probe.defined);
  return probe;
}

AngleContrast angle_contrast(const model::MultimodalModel& m, const data::MultimodalDataset& ds,
                             const remix::Partition& p, int modality, std::size_t batches,
                             std::size_t batch_size, std::uint64_t seed, MixedBatches mixed_kind) {
  const auto k = static_cast<std::size_t>(modality);
  if (k >= p.subsets.size() || p.subsets[k].size() < batch_size) {
    throw PartitionError("subset " + std::to_string(modality) + " cannot fill a probe batch");
  }
  std::vector<std::vector<bool>> masks(ds.size(), std::vector<bool>(static_cast<std::size_t>(m.modalities()), false));
  for (const auto& a : p.assignment) {
    const auto row = ds.find(a.id);
    if (row < 0) throw PartitionError("unknown sample id " + std::to_string(a.id));
    for (int j = 0; j < m.modalities(); ++j) masks[static_cast<std::size_t>(row)][static_cast<std::size_t>(j)] = j != a.retained;
  }
  auto rows_of = [&](const std::vector<SampleId>& ids) {
    std::vector<std::size_t> rows;
    for (auto id : ids) rows.push_back(static_cast<std::size_t>(ds.find(id)));
    return rows;
  };
  auto probe = [&](const std::vector<SampleId>& ids, bool masked, double& sum, std::size_t& def,
                   std::size_t& undef) {
    const auto rows = rows_of(ids);
    const auto batch = model::make_batch(ds, rows, masked ? &masks : nullptr);
    const auto ideal = model::make_batch(ds, rows);
    const auto a = gradient_angle(m, batch, modality, {}, &ideal);
    if (a.defined) {
      sum += a.angle_deg;
      ++def;
    } else {
      ++undef;
    }
  };

  AngleContrast out;
  out.modality = modality;
  double pure_sum = 0.0, mixed_sum = 0.0;
  const auto all_ids = ds.ids();
  std::size_t pure_n = 0, mixed_n = 0;
  for (std::uint64_t round = 0; pure_n < batches || mixed_n < batches; ++round) {
    const auto pure = remix::build_batch_plan(p, batch_size, remix::OrderPolicy::SequentialBySubset,
                                              seed + round);
    for (const auto& b : pure.batches) {
      if (pure_n >= batches) break;
      if (b.subset != modality || b.ids.size() != batch_size) continue;
      probe(b.ids, true, pure_sum, out.pure_defined, out.pure_undefined);
      ++pure_n;
    }
    const auto mixed = remix::build_mixed_plan(all_ids, batch_size, seed + round);
    for (const auto& b : mixed.batches) {
      if (mixed_n >= batches) break;
      if (b.ids.size() != batch_size) continue;
      probe(b.ids, mixed_kind == MixedBatches::Decoupled, mixed_sum, out.mixed_defined,
            out.mixed_undefined);
      ++mixed_n;
    }
  }
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  out.pure_mean_deg = out.pure_defined ? pure_sum / static_cast<double>(out.pure_defined) : nan;
  out.mixed_mean_deg = out.mixed_defined ? mixed_sum / static_cast<double>(out.mixed_defined) : nan;
  return out;
}

std::vector<std::size_t> retained_counts(const remix::Partition& p) {
  std::vector<std::size_t> counts;
  for (const auto& s : p.subsets) counts.push_back(s.size());
  return counts;
}

}  // namespace remixlab::metrics
