#pragma once

// Single runs, multi-seed suites and their summary tables. Suites run
// independent training runs on a small worker pool; each run owns its
// directory and summaries are written after every worker has joined.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "remixlab/config.hpp"
#include "remixlab/train.hpp"

namespace remixlab::harness {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeAbort = 3, kPartialSuite = 4 };

/// Train/val/test splits of the run with the given seed.
data::DatasetSplits make_splits(const config::ExperimentConfig& cfg, std::uint64_t seed);

struct RunOutcome {
  std::string name;
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  train::Variant variant = train::Variant::Baseline;
  model::FusionKind fusion = model::FusionKind::Concat;
  bool ok = false;
  bool resumed = false;  // a complete run with the same config was already on disk
  std::string error;
  std::optional<train::FinalMetrics> final_metrics;
};

struct SuiteResult {
  std::vector<RunOutcome> runs;
  std::filesystem::path summary_csv;
  nlohmann::json summary;
  int exit_code = kOk;
};

/// Trains one run into cfg.out_dir (resolved against REMIXLAB_OUTPUT_ROOT).
/// Returns kOk or kRuntimeAbort; `outcome` receives the details.
int run_single(const config::ExperimentConfig& cfg, RunOutcome* outcome = nullptr);

/// Four variants x all seeds, then ablation.csv / ablation.json.
SuiteResult run_ablation_suite(const config::ExperimentConfig& cfg);

/// {concat, sum, decision} x {baseline, full_remix} x all seeds, then fusion.csv / fusion.json.
SuiteResult run_fusion_sweep(const config::ExperimentConfig& cfg);

/// Runs whichever suite cfg.suite names.
SuiteResult run_configured(const config::ExperimentConfig& cfg);

/// Mean and sample standard deviation (n - 1); std is 0 for a single value.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
};
Moments moments(const std::vector<double>& xs);

/// Machine-readable error document: {"schema_version","error":{"kind","message","field"?}}.
nlohmann::json error_json(const std::string& kind, const std::string& message,
                          const std::string& field = {});

/// Directory of one suite run: <out>/runs/<fusion>-<variant>-seed<s>.
std::filesystem::path suite_run_dir(const std::filesystem::path& out, model::FusionKind fusion,
                                    train::Variant variant, std::uint64_t seed);

}  // namespace remixlab::harness
