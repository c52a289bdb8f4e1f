// remixlab command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "remixlab/remixlab.h"

namespace {

struct Overrides {
  std::optional<unsigned long long> seed;
  std::string out, variant, order_policy, uni_mode;
  std::optional<int> workers;
  std::vector<std::string> sets;  // key=value
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Run seed (suites: run only this seed)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--variant", o.variant, "baseline|decouple_only|reassemble_only|full_remix");
  cmd->add_option("--order-policy", o.order_policy, "sequential|interleaved");
  cmd->add_option("--uni-mode", o.uni_mode, "head|zeromask");
  cmd->add_option("--workers", o.workers, "Concurrent runs in a suite");
  cmd->add_option("--set", o.sets, "Extra override, key=value (repeatable)");
}

std::string quoted(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  return q + "\"";
}

// Status codes above 4 are not part of the CLI contract; fold them in.
int exit_code(remixlab_status s) {
  switch (s) {
    case REMIXLAB_OK: return 0;
    case REMIXLAB_CONFIG_ERROR:
    case REMIXLAB_INVALID_ARGUMENT: return 2;
    case REMIXLAB_PARTIAL_SUITE: return 4;
    default: return 3;
  }
}

int report_failure(remixlab_status s) {
  std::fprintf(stderr, "%s\n", remixlab_last_error());
  return exit_code(s);
}

remixlab_status apply(remixlab_config* cfg, const Overrides& o, bool suite) {
  remixlab_status s = REMIXLAB_OK;
  auto set = [&](const char* key, const std::string& value) {
    if (s == REMIXLAB_OK) s = remixlab_config_set(cfg, key, value.c_str());
  };
  if (o.seed) {
    set("seed", std::to_string(*o.seed));
    if (suite) set("seeds", "[" + std::to_string(*o.seed) + "]");
  }
  // Quoted so a numeric-looking path stays a string.
  if (!o.out.empty()) set("out_dir", quoted(o.out));
  if (!o.variant.empty()) set("variant", o.variant);
  if (!o.order_policy.empty()) set("order_policy", o.order_policy);
  if (!o.uni_mode.empty()) set("uni_mode", o.uni_mode);
  if (o.workers) set("workers", std::to_string(*o.workers));
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "{\"schema_version\":\"1.0\",\"error\":{\"kind\":\"config_error\","
                           "\"message\":\"--set expects key=value\"}}\n");
      return REMIXLAB_CONFIG_ERROR;
    }
    set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
  }
  return s;
}

int run_with_config(const std::string& path, const Overrides& o, bool suite,
                    remixlab_status (*fn)(const remixlab_config*)) {
  remixlab_config* cfg = nullptr;
  remixlab_status s = remixlab_config_load(path.c_str(), &cfg);
  if (s != REMIXLAB_OK) return report_failure(s);
  s = apply(cfg, o, suite);
  if (s != REMIXLAB_OK) {
    remixlab_config_free(cfg);
    return std::string(remixlab_last_error()).empty() ? exit_code(s) : report_failure(s);
  }
  s = fn(cfg);
  remixlab_config_free(cfg);
  if (*remixlab_last_result()) std::printf("%s\n", remixlab_last_result());
  if (s != REMIXLAB_OK) return report_failure(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"remixlab: data remixing experiments on synthetic two-modality data"};
  app.set_version_flag("--version", std::string(remixlab_version()));
  app.require_subcommand(1);

  std::string config_path, run_dir;
  Overrides run_o, abl_o, fus_o;

  auto* run = app.add_subcommand("run", "Train one run");
  run->add_option("config", config_path, "Config file (flat JSON)")->required();
  add_override_flags(run, run_o);

  auto* abl = app.add_subcommand("ablation", "Four variants x seeds, then ablation.csv");
  abl->add_option("config", config_path, "Config file (flat JSON)")->required();
  add_override_flags(abl, abl_o);

  auto* fus = app.add_subcommand("fusion-sweep", "Three fusions x {baseline, full_remix} x seeds");
  fus->add_option("config", config_path, "Config file (flat JSON)")->required();
  add_override_flags(fus, fus_o);

  auto* rep = app.add_subcommand("report", "Consolidated report for a run directory");
  rep->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) return run_with_config(config_path, run_o, false, remixlab_run_single);
  if (*abl) return run_with_config(config_path, abl_o, true, remixlab_run_ablation);
  if (*fus) return run_with_config(config_path, fus_o, true, remixlab_run_fusion_sweep);
  if (*rep) {
    const remixlab_status s = remixlab_emit_report(run_dir.c_str());
    if (*remixlab_last_result()) std::printf("%s\n", remixlab_last_result());
    return s == REMIXLAB_OK ? 0 : report_failure(s);
  }
  return 2;
}
