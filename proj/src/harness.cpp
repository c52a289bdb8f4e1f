#include "remixlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace remixlab::harness {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kSchemaVersion = "1.0";
constexpr const char* kPublishedContext =
    "CREMA-D concat 64.52% -> 72.72% (published, not reproduced at desk scale)";

struct Job {
  config::ExperimentConfig cfg;  // synth/train already specialised for this job
  std::uint64_t seed = 0;
  fs::path dir;
};

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json final_json(const train::FinalMetrics& f) {
  json j{{"test_acc", f.test_acc}};
  for (std::size_t k = 0; k < f.test_acc_head.size(); ++k) {
    const auto name = data::modality_name(static_cast<int>(k));
    j["test_acc_" + name + "_head"] = f.test_acc_head[k];
    j["test_acc_" + name + "_zeromask"] = f.test_acc_zeromask[k];
  }
  j["test_rho_head"] = std::isfinite(f.test_rho) ? json(f.test_rho) : json(nullptr);
  return j;
}

// A previous run is reused only when it finished and was trained from the
// exact same configuration.
std::optional<train::FinalMetrics> completed_run(const fs::path& dir, const json& train_cfg,
                                                 const json& spec) {
  const fs::path p = dir / "run.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    std::ifstream in(p);
    const json j = json::parse(in);
    if (j.value("schema_version", "").rfind("1.", 0) != 0) return std::nullopt;
    if (j.value("status", "") != "complete") return std::nullopt;
    if (j.at("train_config") != train_cfg || j.at("synth_spec") != spec) return std::nullopt;
    if (!fs::exists(dir / "run.csv")) return std::nullopt;
    train::FinalMetrics f;
    const json& fm = j.at("final");
    f.test_acc = fm.at("test_acc").get<double>();
    for (int k = 0; k < 2; ++k) {
      const auto name = data::modality_name(k);
      f.test_acc_head.push_back(fm.at("test_acc_" + name + "_head").get<double>());
      f.test_acc_zeromask.push_back(fm.at("test_acc_" + name + "_zeromask").get<double>());
    }
    f.test_rho = fm.at("test_rho_head").is_null() ? std::nan("") : fm.at("test_rho_head").get<double>();
    return f;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_error(const fs::path& dir, const json& err) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream(dir / "error.json") << err.dump(2) << '\n';
}

RunOutcome execute(const Job& job, bool allow_resume) {
  RunOutcome out;
  out.dir = job.dir;
  out.seed = job.seed;
  out.variant = job.cfg.train.variant;
  out.fusion = job.cfg.train.fusion;
  out.name = job.dir.filename().string();
  const json train_cfg = config::to_json(job.cfg.train);
  const json spec = config::to_json(job.cfg.synth);
  if (allow_resume) {
    if (auto f = completed_run(job.dir, train_cfg, spec)) {
      out.ok = true;
      out.resumed = true;
      out.final_metrics = *f;
      return out;
    }
  }
  try {
    std::error_code ec;
    fs::remove(job.dir / "error.json", ec);
    fs::remove(job.dir / "abort.json", ec);
    const auto ds = data::generate_dataset(job.cfg.synth);
    const auto splits = data::split_dataset(ds, job.cfg.train_frac, job.cfg.val_frac, job.cfg.synth.seed);
    train::RunOptions opts;
    opts.out_dir = job.dir;
    const auto rec = train::run_training(job.cfg.train, splits, opts);
    out.ok = true;
    out.final_metrics = rec.final_metrics;
  } catch (const train::TrainAbort& e) {
    out.error = e.what();
    write_error(job.dir, error_json("runtime_abort", e.what()));
  } catch (const std::exception& e) {
    out.error = e.what();
    write_error(job.dir, error_json("runtime_error", e.what()));
  }
  return out;
}

std::vector<RunOutcome> execute_all(const std::vector<Job>& jobs, int workers) {
  std::vector<RunOutcome> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) results[i] = execute(jobs[i], true);
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

Job make_job(const config::ExperimentConfig& cfg, const fs::path& out, std::uint64_t seed,
             train::Variant variant, model::FusionKind fusion) {
  Job j;
  j.cfg = cfg;
  j.seed = seed;
  j.cfg.synth = cfg.synth_for(seed);
  j.cfg.train = cfg.train_for(seed);
  j.cfg.train.variant = variant;
  j.cfg.train.fusion = fusion;
  j.dir = suite_run_dir(out, fusion, variant, seed);
  return j;
}

json outcome_json(const RunOutcome& r) {
  json j{{"name", r.name},
         {"dir", r.dir.string()},
         {"seed", r.seed},
         {"variant", train::to_string(r.variant)},
         {"fusion", model::to_string(r.fusion)},
         {"ok", r.ok},
         {"resumed", r.resumed}};
  if (!r.ok) j["error"] = r.error;
  if (r.final_metrics) j["final"] = final_json(*r.final_metrics);
  return j;
}

std::vector<double> accuracies(const std::vector<RunOutcome>& runs, train::Variant v,
                               model::FusionKind f, std::size_t* failed) {
  std::vector<double> xs;
  for (const auto& r : runs) {
    if (r.variant != v || r.fusion != f) continue;
    if (r.ok && r.final_metrics) {
      xs.push_back(r.final_metrics->test_acc);
    } else if (failed) {
      ++*failed;
    }
  }
  return xs;
}

int suite_exit(const std::vector<RunOutcome>& runs) {
  return std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.ok; }) ? kOk
                                                                                          : kPartialSuite;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace

data::DatasetSplits make_splits(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  const auto spec = cfg.synth_for(seed);
  return data::split_dataset(data::generate_dataset(spec), cfg.train_frac, cfg.val_frac, spec.seed);
}

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  if (xs.empty()) {
    m.mean = m.std = std::nan("");
    return m;
  }
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

json error_json(const std::string& kind, const std::string& message, const std::string& field) {
  json e{{"kind", kind}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  return json{{"schema_version", kSchemaVersion}, {"error", e}};
}

fs::path suite_run_dir(const fs::path& out, model::FusionKind fusion, train::Variant variant,
                       std::uint64_t seed) {
  return out / "runs" /
         (model::to_string(fusion) + "-" + train::to_string(variant) + "-seed" + std::to_string(seed));
}

int run_single(const config::ExperimentConfig& cfg, RunOutcome* outcome) {
  Job job;
  job.cfg = cfg;
  job.seed = cfg.train.seed;
  job.cfg.synth = cfg.synth_for(cfg.train.seed);
  job.cfg.train = cfg.train_for(cfg.train.seed);
  job.dir = config::resolve_output(cfg.out_dir);
  RunOutcome r = execute(job, false);
  const int code = r.ok ? kOk : kRuntimeAbort;
  if (outcome) *outcome = std::move(r);
  return code;
}

SuiteResult run_ablation_suite(const config::ExperimentConfig& cfg) {
  const fs::path out = config::resolve_output(cfg.out_dir);
  fs::create_directories(out);
  const train::Variant variants[] = {train::Variant::Baseline, train::Variant::DecoupleOnly,
                                     train::Variant::ReassembleOnly, train::Variant::FullRemix};
  std::vector<Job> jobs;
  for (auto v : variants) {
    for (auto s : cfg.seeds) jobs.push_back(make_job(cfg, out, s, v, cfg.train.fusion));
  }
  SuiteResult res;
  res.runs = execute_all(jobs, cfg.workers);

  struct Row {
    train::Variant v;
    Moments m;
    std::size_t failed = 0;
  };
  std::vector<Row> rows;
  for (auto v : variants) {
    Row r{v, {}, 0};
    r.m = moments(accuracies(res.runs, v, cfg.train.fusion, &r.failed));
    rows.push_back(r);
  }
  const double base = rows.front().m.mean;
  const double remix = rows.back().m.mean;
  const double dec = rows[1].m.mean, re = rows[2].m.mean;
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    const double x = std::isnan(a.m.mean) ? -1.0 : a.m.mean;
    const double y = std::isnan(b.m.mean) ? -1.0 : b.m.mean;
    return x > y;
  });

  res.summary_csv = out / "ablation.csv";
  std::ofstream csv(res.summary_csv);
  if (!csv) throw IoError("cannot write " + res.summary_csv.string());
  csv << "schema_version,rank,variant,n_runs,n_failed,mean_test_acc,std_test_acc,delta_vs_baseline\n";
  json table = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv << "1," << i + 1 << ',' << train::to_string(r.v) << ',' << r.m.n << ',' << r.failed << ','
        << num(r.m.mean) << ',' << num(r.m.std) << ',' << num(r.m.mean - base) << '\n';
    table.push_back({{"rank", i + 1},
                     {"variant", train::to_string(r.v)},
                     {"n_runs", r.m.n},
                     {"n_failed", r.failed},
                     {"mean_test_acc", std::isfinite(r.m.mean) ? json(r.m.mean) : json(nullptr)},
                     {"std_test_acc", std::isfinite(r.m.std) ? json(r.m.std) : json(nullptr)},
                     {"delta_vs_baseline",
                      std::isfinite(r.m.mean - base) ? json(r.m.mean - base) : json(nullptr)}});
  }
  json runs = json::array();
  for (const auto& r : res.runs) runs.push_back(outcome_json(r));
  res.summary = {{"schema_version", kSchemaVersion},
                 {"suite", "ablation"},
                 {"fusion", model::to_string(cfg.train.fusion)},
                 {"seeds", cfg.seeds},
                 {"table", table},
                 {"flags",
                  {{"full_remix_beats_baseline", remix > base},
                   {"full_remix_tops_single_components", remix >= std::max(dec, re)},
                   {"single_components_not_below_baseline", std::min(dec, re) >= base}}},
                 {"runs", runs}};
  write_json(out / "ablation.json", res.summary);
  res.exit_code = suite_exit(res.runs);
  return res;
}

SuiteResult run_fusion_sweep(const config::ExperimentConfig& cfg) {
  const fs::path out = config::resolve_output(cfg.out_dir);
  fs::create_directories(out);
  const model::FusionKind fusions[] = {model::FusionKind::Concat, model::FusionKind::Sum,
                                       model::FusionKind::Decision};
  const train::Variant variants[] = {train::Variant::Baseline, train::Variant::FullRemix};
  std::vector<Job> jobs;
  for (auto f : fusions) {
    for (auto v : variants) {
      for (auto s : cfg.seeds) jobs.push_back(make_job(cfg, out, s, v, f));
    }
  }
  SuiteResult res;
  res.runs = execute_all(jobs, cfg.workers);

  res.summary_csv = out / "fusion.csv";
  std::ofstream csv(res.summary_csv);
  if (!csv) throw IoError("cannot write " + res.summary_csv.string());
  csv << "schema_version,fusion,n_runs,n_failed,baseline_mean,baseline_std,remix_mean,remix_std,"
         "delta,improved\n";
  json table = json::array();
  for (auto f : fusions) {
    std::size_t failed = 0;
    const auto b = moments(accuracies(res.runs, train::Variant::Baseline, f, &failed));
    const auto r = moments(accuracies(res.runs, train::Variant::FullRemix, f, &failed));
    const double delta = r.mean - b.mean;
    const bool improved = std::isfinite(delta) && delta >= 0.0;
    csv << "1," << model::to_string(f) << ',' << b.n + r.n << ',' << failed << ',' << num(b.mean)
        << ',' << num(b.std) << ',' << num(r.mean) << ',' << num(r.std) << ',' << num(delta) << ','
        << (improved ? 1 : 0) << '\n';
    auto val = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    table.push_back({{"fusion", model::to_string(f)},
                     {"n_runs", b.n + r.n},
                     {"n_failed", failed},
                     {"baseline_mean", val(b.mean)},
                     {"baseline_std", val(b.std)},
                     {"remix_mean", val(r.mean)},
                     {"remix_std", val(r.std)},
                     {"delta", val(delta)},
                     {"improved", improved}});
  }
  json runs = json::array();
  for (const auto& r : res.runs) runs.push_back(outcome_json(r));
  res.summary = {{"schema_version", kSchemaVersion},
                 {"suite", "fusion_sweep"},
                 {"reference_context", kPublishedContext},
                 {"seeds", cfg.seeds},
                 {"table", table},
                 {"runs", runs}};
  write_json(out / "fusion.json", res.summary);
  res.exit_code = suite_exit(res.runs);
  return res;
}

SuiteResult run_configured(const config::ExperimentConfig& cfg) {
  switch (cfg.suite) {
    case config::SuiteKind::Ablation: return run_ablation_suite(cfg);
    case config::SuiteKind::FusionSweep: return run_fusion_sweep(cfg);
    case config::SuiteKind::Single: break;
  }
  SuiteResult res;
  RunOutcome r;
  res.exit_code = run_single(cfg, &r);
  res.runs.push_back(std::move(r));
  return res;
}

}  // namespace remixlab::harness
