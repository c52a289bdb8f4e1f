#include "remixlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "remixlab/error.hpp"
#include "remixlab/metrics.hpp"
#include "remixlab/remix.hpp"

namespace remixlab::report {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kSchemaVersion = "1.0";

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Our CSVs never quote; a leading schema_version column must carry major 1.
std::optional<Table> read_table(const fs::path& p, std::string* why) {
  std::ifstream in(p);
  if (!in) {
    *why = "not found";
    return std::nullopt;
  }
  Table t;
  std::string line;
  if (!std::getline(in, line)) {
    *why = "empty file";
    return std::nullopt;
  }
  t.header = split(line);
  const int sv = t.col("schema_version");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) {
      *why = "ragged row";
      return std::nullopt;
    }
    if (sv >= 0 && row[static_cast<std::size_t>(sv)] != "1") {
      *why = "unsupported schema_version " + row[static_cast<std::size_t>(sv)];
      return std::nullopt;
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

double to_double(const std::string& s) {
  if (s == "nan" || s.empty()) return std::nan("");
  return std::stod(s);
}

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json maybe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

ReportResult emit_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw IoError("run directory not found: " + run_dir.string());
  const fs::path out_dir = run_dir / "report";
  fs::create_directories(out_dir);

  ReportResult res;
  json notes = json::array();
  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["run"] = run_dir.filename().string();

  // run.json: configuration, status and final metrics.
  int warmup = 0;
  std::string variant = "unknown";
  std::string uni_mode = "head";
  {
    std::ifstream in(run_dir / "run.json");
    if (!in) {
      res.missing.push_back("run.json");
    } else {
      try {
        const json j = json::parse(in);
        const auto version = j.at("schema_version").get<std::string>();
        if (version.rfind("1.", 0) != 0) throw IoError("unsupported schema_version " + version);
        rep["status"] = j.at("status");
        const json& tc = j.at("train_config");
        warmup = tc.at("warmup_epochs").get<int>();
        variant = tc.at("variant").get<std::string>();
        uni_mode = tc.at("uni_mode").get<std::string>();
        rep["variant"] = variant;
        rep["fusion"] = tc.at("fusion");
        rep["seed"] = tc.at("seed");
        rep["total_epochs"] = tc.at("total_epochs");
        rep["warmup_epochs"] = warmup;
        rep["final"] = j.contains("final") ? j.at("final") : json(nullptr);
        if (j.value("status", "") != "complete") notes.push_back("run did not complete");
      } catch (const std::exception& e) {
        res.missing.push_back(std::string("run.json (") + e.what() + ")");
      }
    }
  }

  // Retained counts per remix epoch, from the partition files.
  {
    std::vector<fs::path> files;
    if (fs::is_directory(run_dir / "partitions")) {
      for (const auto& e : fs::directory_iterator(run_dir / "partitions")) {
        if (e.path().extension() == ".csv") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      notes.push_back(variant == "baseline"
                          ? "counts_per_epoch.csv not written: baseline runs form no partitions"
                          : "counts_per_epoch.csv not written: no partition files");
      fs::remove(out_dir / "counts_per_epoch.csv");
    } else {
      std::ofstream csv(out_dir / "counts_per_epoch.csv");
      csv << "schema_version,epoch,retained_audio,retained_video,total\n";
      json first;
      for (const auto& f : files) {
        try {
          const auto p = remix::read_partition_csv(f);
          const auto c = metrics::retained_counts(p);
          std::size_t total = 0;
          for (auto n : c) total += n;
          csv << "1," << p.epoch << ',' << (c.size() > 0 ? c[0] : 0) << ','
              << (c.size() > 1 ? c[1] : 0) << ',' << total << '\n';
          if (first.is_null()) first = {{"epoch", p.epoch}, {"retained", c}};
        } catch (const std::exception& e) {
          res.missing.push_back("partitions/" + f.filename().string() + " (" + e.what() + ")");
        }
      }
      rep["first_partition"] = first;
      res.written.push_back("counts_per_epoch.csv");
    }
  }

  // Imbalance ratio per epoch in every mode that was logged.
  {
    std::string why;
    std::ofstream csv;
    std::vector<std::pair<int, std::pair<std::string, double>>> pts;
    if (auto t = read_table(run_dir / "metrics.csv", &why)) {
      const int ce = t->col("epoch"), cs = t->col("split"), cm = t->col("mode"),
                cn = t->col("metric"), cv = t->col("value");
      for (const auto& r : t->rows) {
        if (r[static_cast<std::size_t>(cs)] == "val" && r[static_cast<std::size_t>(cn)] == "rho") {
          pts.push_back({std::stoi(r[static_cast<std::size_t>(ce)]),
                         {r[static_cast<std::size_t>(cm)], to_double(r[static_cast<std::size_t>(cv)])}});
        }
      }
    } else if (auto rt = read_table(run_dir / "run.csv", &why)) {
      res.missing.push_back("metrics.csv");
      const int ce = rt->col("epoch"), cr = rt->col("rho");
      for (const auto& r : rt->rows) {
        pts.push_back({std::stoi(r[static_cast<std::size_t>(ce)]),
                       {uni_mode, to_double(r[static_cast<std::size_t>(cr)])}});
      }
    } else {
      res.missing.push_back("metrics.csv (" + why + ")");
    }
    if (!pts.empty()) {
      csv.open(out_dir / "rho_per_epoch.csv");
      csv << "schema_version,epoch,mode,rho\n";
      json last;
      for (const auto& [e, mv] : pts) {
        csv << "1," << e << ',' << mv.first << ',' << num(mv.second) << '\n';
        if (mv.first == uni_mode) last = {{"epoch", e}, {"mode", mv.first}, {"rho", maybe(mv.second)}};
      }
      rep["last_rho"] = last;
      res.written.push_back("rho_per_epoch.csv");
    }
  }

  // Angle histograms, warm-up vs later epochs, per modality.
  {
    std::string why;
    if (auto t = read_table(run_dir / "angles.csv", &why)) {
      const int ce = t->col("epoch"), cm = t->col("modality"), ca = t->col("angle_deg"),
                cd = t->col("defined");
      const int nbins = static_cast<int>(std::ceil(180.0 / kAngleBinDeg));
      // (stage, modality) -> bins, sum, defined, undefined
      struct Acc {
        std::vector<std::size_t> bins;
        double sum = 0.0;
        std::size_t defined = 0, undefined = 0;
      };
      std::map<std::pair<std::string, std::string>, Acc> acc;
      for (const auto& r : t->rows) {
        const int e = std::stoi(r[static_cast<std::size_t>(ce)]);
        const std::string stage = e < warmup ? "warmup" : "post_warmup";
        auto& a = acc[{stage, r[static_cast<std::size_t>(cm)]}];
        if (a.bins.empty()) a.bins.assign(static_cast<std::size_t>(nbins), 0);
        if (r[static_cast<std::size_t>(cd)] != "1") {
          ++a.undefined;
          continue;
        }
        const double deg = to_double(r[static_cast<std::size_t>(ca)]);
        const int b = std::clamp(static_cast<int>(deg / kAngleBinDeg), 0, nbins - 1);
        ++a.bins[static_cast<std::size_t>(b)];
        a.sum += deg;
        ++a.defined;
      }
      std::ofstream csv(out_dir / "angle_histogram.csv");
      csv << "schema_version,stage,modality,bin_lo_deg,bin_hi_deg,count\n";
      json summary = json::array();
      for (const auto& [key, a] : acc) {
        for (int b = 0; b < nbins; ++b) {
          csv << "1," << key.first << ',' << key.second << ',' << num(b * kAngleBinDeg) << ','
              << num((b + 1) * kAngleBinDeg) << ',' << a.bins[static_cast<std::size_t>(b)] << '\n';
        }
        summary.push_back({{"stage", key.first},
                           {"modality", key.second},
                           {"mean_angle_deg", a.defined ? json(a.sum / static_cast<double>(a.defined)) : json(nullptr)},
                           {"defined", a.defined},
                           {"undefined", a.undefined}});
      }
      rep["angles"] = summary;
      res.written.push_back("angle_histogram.csv");
    } else {
      res.missing.push_back("angles.csv (" + why + ")");
    }
  }

  rep["written"] = res.written;
  rep["missing"] = res.missing;
  rep["notes"] = notes;
  rep["complete"] = res.missing.empty();
  res.report = rep;
  res.report_json = out_dir / "report.json";
  std::ofstream(res.report_json) << rep.dump(2) << '\n';
  return res;
}

}  // namespace remixlab::report
