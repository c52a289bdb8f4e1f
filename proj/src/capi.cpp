#include "remixlab/remixlab.h"

#include <exception>
#include <span>
#include <string>

#include <json.hpp>

#include "remixlab/config.hpp"
#include "remixlab/harness.hpp"
#include "remixlab/remix.hpp"
#include "remixlab/report.hpp"

using nlohmann::json;
using namespace remixlab;

struct remixlab_config {
  json flat;
  config::ExperimentConfig parsed;
  std::string text;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_result;

remixlab_status fail(remixlab_status code, const std::string& kind, const std::string& message,
                     const std::string& field = {}) {
  g_last_error = harness::error_json(kind, message, field).dump();
  return code;
}

// Maps library exceptions onto status codes and the last-error document.
template <class Fn>
remixlab_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const ConfigError& e) {
    return fail(REMIXLAB_CONFIG_ERROR, "config_error", e.what(), e.field());
  } catch (const ValidationError& e) {
    return fail(REMIXLAB_CONFIG_ERROR, "validation_error", e.what(), e.constraint());
  } catch (const train::TrainAbort& e) {
    return fail(REMIXLAB_RUNTIME_ABORT, "runtime_abort", e.what());
  } catch (const IoError& e) {
    return fail(REMIXLAB_IO_ERROR, "io_error", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(REMIXLAB_IO_ERROR, "io_error", e.what());
  } catch (const Error& e) {
    return fail(REMIXLAB_RUNTIME_ABORT, "runtime_error", e.what());
  } catch (const std::exception& e) {
    return fail(REMIXLAB_INTERNAL_ERROR, "internal_error", e.what());
  } catch (...) {
    return fail(REMIXLAB_INTERNAL_ERROR, "internal_error", "unknown exception");
  }
}

remixlab_status suite_status(const harness::SuiteResult& r) {
  g_last_result = r.summary.dump();
  if (r.exit_code == harness::kOk) return REMIXLAB_OK;
  std::string failed;
  for (const auto& run : r.runs) {
    if (!run.ok) failed += (failed.empty() ? "" : ", ") + run.name + ": " + run.error;
  }
  return fail(REMIXLAB_PARTIAL_SUITE, "partial_suite", "failed runs: " + failed);
}

}  // namespace

extern "C" {

const char* remixlab_version(void) { return "0.1.0"; }
const char* remixlab_last_error(void) { return g_last_error.c_str(); }
const char* remixlab_last_result(void) { return g_last_result.c_str(); }

remixlab_status remixlab_config_parse(const char* json_text, remixlab_config** out) {
  if (!json_text || !out) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null argument");
  return guarded([&] {
    json flat;
    try {
      flat = json::parse(json_text, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    auto* c = new remixlab_config{flat, config::parse(flat), {}};
    *out = c;
    return REMIXLAB_OK;
  });
}

remixlab_status remixlab_config_load(const char* path, remixlab_config** out) {
  if (!path || !out) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null argument");
  return guarded([&] {
    json flat = config::read_file(path);
    auto* c = new remixlab_config{flat, config::parse(flat), {}};
    *out = c;
    return REMIXLAB_OK;
  });
}

remixlab_status remixlab_config_set(remixlab_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null argument");
  return guarded([&] {
    json flat = cfg->flat;
    config::set_override(flat, key, value);
    cfg->parsed = config::parse(flat);
    cfg->flat = std::move(flat);
    return REMIXLAB_OK;
  });
}

const char* remixlab_config_json(remixlab_config* cfg) {
  if (!cfg) return "";
  cfg->text = cfg->flat.dump();
  return cfg->text.c_str();
}

void remixlab_config_free(remixlab_config* cfg) { delete cfg; }

remixlab_status remixlab_run_single(const remixlab_config* cfg) {
  if (!cfg) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null config");
  return guarded([&] {
    harness::RunOutcome r;
    const int code = harness::run_single(cfg->parsed, &r);
    json summary{{"dir", r.dir.string()}, {"ok", r.ok}};
    if (r.final_metrics) summary["test_acc"] = r.final_metrics->test_acc;
    g_last_result = summary.dump();
    if (code != harness::kOk) return fail(REMIXLAB_RUNTIME_ABORT, "runtime_abort", r.error);
    return REMIXLAB_OK;
  });
}

remixlab_status remixlab_run_ablation(const remixlab_config* cfg) {
  if (!cfg) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null config");
  return guarded([&] { return suite_status(harness::run_ablation_suite(cfg->parsed)); });
}

remixlab_status remixlab_run_fusion_sweep(const remixlab_config* cfg) {
  if (!cfg) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null config");
  return guarded([&] { return suite_status(harness::run_fusion_sweep(cfg->parsed)); });
}

remixlab_status remixlab_emit_report(const char* run_dir) {
  if (!run_dir) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null run_dir");
  return guarded([&] {
    const auto r = report::emit_report(run_dir);
    g_last_result = r.report.dump();
    if (!r.complete()) {
      std::string what;
      for (const auto& m : r.missing) what += (what.empty() ? "" : ", ") + m;
      return fail(REMIXLAB_PARTIAL_SUITE, "missing_artifacts", what);
    }
    return REMIXLAB_OK;
  });
}

remixlab_status remixlab_write_dataset(const remixlab_config* cfg, uint64_t seed, const char* path) {
  if (!cfg || !path) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null argument");
  return guarded([&] {
    data::save_jsonl(data::generate_dataset(cfg->parsed.synth_for(seed)), path);
    return REMIXLAB_OK;
  });
}

remixlab_status remixlab_kl_to_uniform(const double* probs, size_t n, double* out) {
  if (!probs || !out || n == 0) return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", "null or empty input");
  return guarded([&] {
    try {
      *out = remix::kl_to_uniform(std::span<const double>(probs, n));
    } catch (const ValidationError& e) {
      // A bad probability vector is a caller error, not a config error.
      return fail(REMIXLAB_INVALID_ARGUMENT, "invalid_argument", e.what());
    }
    return REMIXLAB_OK;
  });
}

}  // extern "C"
