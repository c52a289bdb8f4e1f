#include "remixlab/remix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace remixlab::remix {

namespace {

constexpr double kDistributionTolerance = 1e-9;
constexpr std::size_t kScoringChunk = 256;

std::size_t idx(int k) { return static_cast<std::size_t>(k); }

void chunk_into(std::vector<SampleId>&& ids, int subset, std::size_t batch_size,
                std::vector<PlannedBatch>& out) {
  for (std::size_t pos = 0; pos < ids.size(); pos += batch_size) {
    const std::size_t end = std::min(ids.size(), pos + batch_size);
    out.push_back({subset, std::vector<SampleId>(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                                                 ids.begin() + static_cast<std::ptrdiff_t>(end))});
  }
}

std::string join_ids(const std::vector<SampleId>& ids, std::size_t limit = 8) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) os << (i ? "," : "") << ids[i];
  if (ids.size() > limit) os << ",...";
  return os.str();
}

}  // namespace

double kl_to_uniform(std::span<const double> probs) {
  if (probs.empty()) throw ValidationError("non-empty distribution", "empty probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ValidationError("probabilities in [0,1]", "invalid probability entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance) {
    throw ValidationError("probabilities sum to 1", "probabilities sum to " + std::to_string(sum));
  }
  const double m = static_cast<double>(probs.size());
  double kl = 0.0;
  for (double p : probs) {
    if (p > 0.0) kl += p * std::log(p * m);
  }
  // rounding in p*M can leave a tiny negative residue at the uniform point
  return std::max(0.0, kl);
}

double kl_to_uniform(const Eigen::VectorXd& probs) {
  return kl_to_uniform(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
}

Partition partition_from_scores(std::span<const SampleId> ids, const Eigen::MatrixXd& scores,
                                int epoch) {
  if (static_cast<std::size_t>(scores.rows()) != ids.size()) {
    throw PartitionError("one score row per sample required");
  }
  const int K = static_cast<int>(scores.cols());
  Partition p;
  p.epoch = epoch;
  p.modalities = K;
  p.subsets.resize(idx(K));
  p.assignment.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    int best = 0;
    for (int k = 1; k < K; ++k) {
      if (scores(row, k) < scores(row, best)) best = k;
    }
    SampleAssignment a;
    a.id = ids[i];
    a.retained = best;
    a.kl.resize(idx(K));
    for (int k = 0; k < K; ++k) a.kl[idx(k)] = scores(row, k);
    p.subsets[idx(best)].push_back(ids[i]);
    p.assignment.push_back(std::move(a));
  }
  for (auto& s : p.subsets) std::sort(s.begin(), s.end());
  return p;
}

Eigen::MatrixXd separability_scores(const model::MultimodalModel& m,
                                    const data::MultimodalDataset& ds, model::UniMode mode) {
  const int K = m.modalities();
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(ds.size()), K);
  const std::vector<std::vector<bool>> no_masks(ds.size(), std::vector<bool>(idx(K), false));
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += kScoringChunk) {
    const std::size_t end = std::min(ds.size(), start + kScoringChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const model::Batch b = model::make_batch(ds, rows, &no_masks);
    for (int k = 0; k < K; ++k) {
      const Eigen::MatrixXd probs = model::unimodal_probs(m, b, k, mode);
      for (Eigen::Index i = 0; i < probs.cols(); ++i) {
        try {
          scores(static_cast<Eigen::Index>(start) + i, k) = kl_to_uniform(Eigen::VectorXd(probs.col(i)));
        } catch (const ValidationError& e) {
          throw EvaluationError(std::string("invalid unimodal distribution: ") + e.what(),
                                b.ids[static_cast<std::size_t>(i)]);
        }
      }
    }
  }
  return scores;
}

Partition decouple(const model::MultimodalModel& m, const data::MultimodalDataset& ds,
                   model::UniMode mode, int epoch) {
  if (ds.empty()) throw PartitionError("cannot decouple an empty dataset");
  const auto ids = ds.ids();
  return partition_from_scores(ids, separability_scores(m, ds, mode), epoch);
}

Eigen::VectorXd MaskedView::input(std::size_t row, int modality) const {
  const auto& x = data->samples.at(row).inputs.at(idx(modality));
  if (masks.at(row)[idx(modality)]) return Eigen::VectorXd::Zero(x.size());
  return x;
}

data::MultimodalSample MaskedView::sample(std::size_t row) const {
  data::MultimodalSample s = data->samples.at(row);
  s.masked = masks.at(row);
  return s;
}

MaskedView apply_masks(const data::MultimodalDataset& ds, const Partition& p) {
  MaskedView v;
  v.data = &ds;
  const int K = ds.modalities();
  v.masks.assign(ds.size(), std::vector<bool>(idx(K), false));
  std::vector<bool> covered(ds.size(), false);
  for (const auto& a : p.assignment) {
    const auto row = ds.find(a.id);
    if (row < 0) throw PartitionError("partition names unknown sample id " + std::to_string(a.id));
    if (a.retained < 0 || a.retained >= K) {
      throw PartitionError("retained modality out of range for sample " + std::to_string(a.id));
    }
    auto& mask = v.masks[static_cast<std::size_t>(row)];
    for (int k = 0; k < K; ++k) mask[idx(k)] = k != a.retained;
    covered[static_cast<std::size_t>(row)] = true;
  }
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (!covered[r]) {
      throw PartitionError("partition does not cover sample " + std::to_string(ds.samples[r].id));
    }
  }
  return v;
}

MaskedView unmasked_view(const data::MultimodalDataset& ds) {
  MaskedView v;
  v.data = &ds;
  v.masks.assign(ds.size(), std::vector<bool>(idx(ds.modalities()), false));
  return v;
}

OrderPolicy parse_order_policy(std::string_view key) {
  if (key == "sequential" || key == "sequential_by_subset") return OrderPolicy::SequentialBySubset;
  if (key == "interleaved" || key == "interleaved_shuffled") return OrderPolicy::InterleavedShuffled;
  throw ValidationError("order_policy in {sequential,interleaved}",
                        "unknown order policy '" + std::string(key) + "'");
}

std::string to_string(OrderPolicy p) {
  return p == OrderPolicy::SequentialBySubset ? "sequential" : "interleaved";
}

std::size_t BatchPlan::scheduled() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.ids.size();
  return n;
}

BatchPlan build_batch_plan(const Partition& p, std::size_t batch_size, OrderPolicy policy,
                           std::uint64_t seed) {
  if (batch_size < 1) throw ValidationError("batch_size>=1", "batch size must be positive");
  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.policy = policy;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < p.subsets.size(); ++k) {
    std::vector<SampleId> ids = p.subsets[k];
    if (ids.empty()) {
      plan.warnings.push_back("subset " + data::modality_name(static_cast<int>(k)) +
                              " is empty; it contributes no batches");
      continue;
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    chunk_into(std::move(ids), static_cast<int>(k), batch_size, plan.batches);
  }
  if (policy == OrderPolicy::InterleavedShuffled) {
    std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  }
  return plan;
}

BatchPlan build_mixed_plan(std::span<const SampleId> ids, std::size_t batch_size,
                           std::uint64_t seed) {
  if (batch_size < 1) throw ValidationError("batch_size>=1", "batch size must be positive");
  BatchPlan plan;
  plan.batch_size = batch_size;
  std::vector<SampleId> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  chunk_into(std::move(order), -1, batch_size, plan.batches);
  return plan;
}

bool Report::ok() const {
  return std::all_of(clauses.begin(), clauses.end(), [](const Clause& c) { return c.passed; });
}

const Clause* Report::find(std::string_view name) const {
  for (const auto& c : clauses)
    if (c.name == name) return &c;
  return nullptr;
}

Report verify_partition(const Partition& p, const data::MultimodalDataset& ds) {
  Report r;
  std::unordered_map<SampleId, int> owner;
  std::vector<SampleId> duplicated;
  std::size_t total = 0;
  for (std::size_t k = 0; k < p.subsets.size(); ++k) {
    total += p.subsets[k].size();
    for (SampleId id : p.subsets[k]) {
      if (!owner.emplace(id, static_cast<int>(k)).second) duplicated.push_back(id);
    }
  }
  r.clauses.push_back({"disjoint", duplicated.empty(),
                       duplicated.empty() ? "" : "ids in more than one subset (or repeated): " +
                                                     join_ids(duplicated)});

  std::vector<SampleId> missing, unknown;
  std::unordered_set<SampleId> dataset_ids;
  for (const auto& s : ds.samples) {
    dataset_ids.insert(s.id);
    if (!owner.count(s.id)) missing.push_back(s.id);
  }
  for (const auto& [id, k] : owner) {
    if (!dataset_ids.count(id)) unknown.push_back(id);
  }
  std::sort(unknown.begin(), unknown.end());
  std::string cov;
  if (!missing.empty()) cov += "missing ids: " + join_ids(missing);
  if (!unknown.empty()) cov += (cov.empty() ? "" : "; ") + std::string("unknown ids: ") + join_ids(unknown);
  r.clauses.push_back({"coverage", missing.empty() && unknown.empty(), cov});

  r.clauses.push_back({"no_expansion", total == ds.size(),
                       total == ds.size() ? "" : "sum of subset sizes " + std::to_string(total) +
                                                     " != N " + std::to_string(ds.size())});

  std::vector<SampleId> inconsistent;
  for (const auto& a : p.assignment) {
    auto it = owner.find(a.id);
    if (it == owner.end() || it->second != a.retained) inconsistent.push_back(a.id);
  }
  const bool sizes_match = p.assignment.size() == total;
  std::string detail = inconsistent.empty() ? "" : "assignment disagrees with subsets: " + join_ids(inconsistent);
  if (!sizes_match) detail += (detail.empty() ? "" : "; ") + std::string("assignment and subset sizes differ");
  r.clauses.push_back({"assignment_consistent", inconsistent.empty() && sizes_match, detail});
  return r;
}

Report verify_plan(const BatchPlan& plan, const Partition& p) {
  Report r;
  std::unordered_map<SampleId, int> owner;
  for (std::size_t k = 0; k < p.subsets.size(); ++k)
    for (SampleId id : p.subsets[k]) owner[id] = static_cast<int>(k);

  std::vector<SampleId> impure;
  std::unordered_map<SampleId, int> seen;
  std::vector<int> undersized(p.subsets.size(), 0);
  bool oversized = false;
  for (const auto& b : plan.batches) {
    if (b.ids.size() > plan.batch_size) oversized = true;
    if (b.ids.size() < plan.batch_size && b.subset >= 0 &&
        static_cast<std::size_t>(b.subset) < undersized.size()) {
      ++undersized[static_cast<std::size_t>(b.subset)];
    }
    for (SampleId id : b.ids) {
      ++seen[id];
      auto it = owner.find(id);
      if (b.subset < 0 || it == owner.end() || it->second != b.subset) impure.push_back(id);
    }
  }
  r.clauses.push_back({"purity", impure.empty(),
                       impure.empty() ? "" : "ids outside their batch's subset: " + join_ids(impure)});

  std::vector<SampleId> wrong_count;
  for (const auto& [id, k] : owner) {
    auto it = seen.find(id);
    if (it == seen.end() || it->second != 1) wrong_count.push_back(id);
  }
  for (const auto& [id, n] : seen) {
    if (!owner.count(id)) wrong_count.push_back(id);
  }
  std::sort(wrong_count.begin(), wrong_count.end());
  r.clauses.push_back({"exactly_once", wrong_count.empty(),
                       wrong_count.empty() ? "" : "ids not scheduled exactly once: " + join_ids(wrong_count)});

  const bool sizes_ok =
      !oversized && std::all_of(undersized.begin(), undersized.end(), [](int n) { return n <= 1; });
  r.clauses.push_back({"batch_size", sizes_ok,
                       sizes_ok ? "" : "oversized batch or more than one undersized batch per subset"});
  return r;
}

void write_partition_csv(const Partition& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,sample_id,retained_modality";
  for (int k = 0; k < p.modalities; ++k) out << ",kl_" << data::modality_name(k);
  out << '\n';
  out.precision(17);
  for (const auto& a : p.assignment) {
    out << p.epoch << ',' << a.id << ',' << a.retained;
    for (double v : a.kl) out << ',' << v;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Partition read_partition_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const int K = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 2;
  if (K < 1 || line.rfind("epoch,sample_id,retained_modality", 0) != 0) {
    throw IoError("not a partition CSV: " + path.string());
  }
  Partition p;
  p.modalities = K;
  p.subsets.resize(idx(K));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    SampleAssignment a;
    std::getline(row, cell, ',');
    p.epoch = std::stoi(cell);
    std::getline(row, cell, ',');
    a.id = static_cast<SampleId>(std::stoul(cell));
    std::getline(row, cell, ',');
    a.retained = std::stoi(cell);
    while (std::getline(row, cell, ',')) a.kl.push_back(std::stod(cell));
    if (a.retained < 0 || a.retained >= K) throw IoError("retained modality out of range in " + path.string());
    p.subsets[idx(a.retained)].push_back(a.id);
    p.assignment.push_back(std::move(a));
  }
  for (auto& s : p.subsets) std::sort(s.begin(), s.end());
  return p;
}

}  // namespace remixlab::remix
