#pragma once

// Consolidated per-run report: report.json plus plot-ready CSVs for the
// retained-count, imbalance-ratio and gradient-angle figures.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace remixlab::report {

struct ReportResult {
  std::filesystem::path report_json;
  std::vector<std::string> written;  // file names under <run_dir>/report
  std::vector<std::string> missing;  // run artifacts that could not be read
  nlohmann::json report;

  bool complete() const { return missing.empty(); }
};

/// Reads the artifacts of a run directory and writes <run_dir>/report/.
/// Missing or unreadable inputs are listed and a partial report is still
/// written. Output depends only on the inputs, so reruns are idempotent.
/// Throws IoError only when run_dir itself does not exist.
ReportResult emit_report(const std::filesystem::path& run_dir);

/// Angle histogram bin width in degrees.
inline constexpr double kAngleBinDeg = 10.0;

}  // namespace remixlab::report
