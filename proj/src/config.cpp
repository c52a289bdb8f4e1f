#include "remixlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

namespace remixlab::config {

namespace {

using nlohmann::json;

// Reads one typed field; wrong JSON types are reported against the key.
template <class T>
T get(const json& flat, const std::string& key, const char* type) {
  const json& v = flat.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw std::invalid_argument("");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw std::invalid_argument("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(key, std::string("expected ") + type + ", got " + v.dump());
  }
}

nn::BiasMode parse_bias(const std::string& s) {
  if (s == "bias_free" || s == "biasfree" || s == "none") return nn::BiasMode::BiasFree;
  if (s == "with_bias" || s == "bias") return nn::BiasMode::WithBias;
  throw ValidationError("encoder_bias in {bias_free,with_bias}", "unknown encoder_bias '" + s + "'");
}

model::MaskLevel parse_mask_level(const std::string& s) {
  if (s == "input") return model::MaskLevel::Input;
  if (s == "feature") return model::MaskLevel::Feature;
  throw ValidationError("mask_level in {input,feature}", "unknown mask_level '" + s + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const json&, const std::string&)> read;
};

// Flat key -> setter. Keep in sync with to_json below.
const std::map<std::string, Field>& fields() {
  using E = ExperimentConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    auto i = [&](const char* k, auto setter) {
      t[k] = {[setter](E& c, const json& j, const std::string& key) { setter(c, get<int>(j, key, "integer")); }};
    };
    auto d = [&](const char* k, auto setter) {
      t[k] = {[setter](E& c, const json& j, const std::string& key) { setter(c, get<double>(j, key, "number")); }};
    };
    auto b = [&](const char* k, auto setter) {
      t[k] = {[setter](E& c, const json& j, const std::string& key) { setter(c, get<bool>(j, key, "boolean")); }};
    };
    auto s = [&](const char* k, auto setter) {
      t[k] = {[setter](E& c, const json& j, const std::string& key) { setter(c, get<std::string>(j, key, "string")); }};
    };
    auto u = [&](const char* k, auto setter) {
      t[k] = {[setter](E& c, const json& j, const std::string& key) {
        setter(c, get<std::uint64_t>(j, key, "non-negative integer"));
      }};
    };

    i("num_classes", [](E& c, int v) { c.synth.num_classes = v; });
    i("samples_per_class", [](E& c, int v) { c.synth.samples_per_class = v; });
    i("dim_a", [](E& c, int v) { c.synth.dim_a = v; });
    i("dim_v", [](E& c, int v) { c.synth.dim_v = v; });
    d("strength_a", [](E& c, double v) { c.synth.strength_a = v; });
    d("strength_v", [](E& c, double v) { c.synth.strength_v = v; });
    d("noise_sigma", [](E& c, double v) { c.synth.noise_sigma = v; });
    d("hard_fraction_a", [](E& c, double v) { c.synth.hard_fraction_a = v; });
    d("hard_fraction_v", [](E& c, double v) { c.synth.hard_fraction_v = v; });
    d("attenuation_factor", [](E& c, double v) { c.synth.attenuation_factor = v; });
    u("data_seed", [](E& c, std::uint64_t v) { c.synth.seed = v; });
    b("fixed_data_seed", [](E& c, bool v) { c.fixed_data_seed = v; });

    i("total_epochs", [](E& c, int v) { c.train.total_epochs = v; });
    i("warmup_epochs", [](E& c, int v) { c.train.warmup_epochs = v; });
    i("batch_size", [](E& c, int v) {
      if (v < 1) throw ConfigError("batch_size", "violates batch_size>=1");
      c.train.batch_size = static_cast<std::size_t>(v);
    });
    d("lr", [](E& c, double v) { c.train.adam.lr = v; });
    d("beta1", [](E& c, double v) { c.train.adam.beta1 = v; });
    d("beta2", [](E& c, double v) { c.train.adam.beta2 = v; });
    d("adam_eps", [](E& c, double v) { c.train.adam.eps = v; });
    i("hidden", [](E& c, int v) { c.train.hidden = v; });
    i("feature_dim", [](E& c, int v) { c.train.feature_dim = v; });
    s("encoder_bias", [](E& c, const std::string& v) { c.train.encoder_bias = parse_bias(v); });
    s("fusion", [](E& c, const std::string& v) { c.train.fusion = model::parse_fusion(v); });
    s("mask_level", [](E& c, const std::string& v) { c.train.mask_level = parse_mask_level(v); });
    d("loss_weight_audio", [](E& c, double v) { c.train.loss_weights[0] = v; });
    d("loss_weight_video", [](E& c, double v) { c.train.loss_weights[1] = v; });
    s("uni_mode", [](E& c, const std::string& v) { c.train.uni_mode = model::parse_uni_mode(v); });
    s("order_policy", [](E& c, const std::string& v) { c.train.order_policy = remix::parse_order_policy(v); });
    s("variant", [](E& c, const std::string& v) { c.train.variant = train::parse_variant(v); });
    u("seed", [](E& c, std::uint64_t v) { c.train.seed = v; });
    i("eval_cadence", [](E& c, int v) { c.train.eval_cadence = v; });
    i("decouple_every", [](E& c, int v) { c.train.decouple_every = v; });
    b("freeze_heads_after_warmup", [](E& c, bool v) { c.train.freeze_heads_after_warmup = v; });
    b("probe_angles", [](E& c, bool v) { c.train.probe_angles = v; });
    b("evaluate", [](E& c, bool v) { c.train.evaluate = v; });
    i("checkpoint_every", [](E& c, int v) { c.train.checkpoint_every = v; });

    d("train_frac", [](E& c, double v) { c.train_frac = v; });
    d("val_frac", [](E& c, double v) { c.val_frac = v; });
    s("out_dir", [](E& c, const std::string& v) { c.out_dir = v; });
    s("suite", [](E& c, const std::string& v) { c.suite = parse_suite(v); });
    i("workers", [](E& c, int v) { c.workers = v; });
    t["seeds"] = {[](E& c, const json& j, const std::string& key) {
      const json& v = j.at(key);
      if (!v.is_array()) throw ConfigError(key, "expected array of non-negative integers");
      c.seeds.clear();
      for (const auto& x : v) {
        if (!x.is_number_integer() || (!x.is_number_unsigned() && x.get<std::int64_t>() < 0)) throw ConfigError(key, "expected array of non-negative integers");
        c.seeds.push_back(x.get<std::uint64_t>());
      }
    }};
    return t;
  }();
  return table;
}

const std::vector<std::string> kRequired{"total_epochs", "warmup_epochs"};

}  // namespace

SuiteKind parse_suite(std::string_view key) {
  if (key == "single") return SuiteKind::Single;
  if (key == "ablation") return SuiteKind::Ablation;
  if (key == "fusion_sweep" || key == "fusion-sweep") return SuiteKind::FusionSweep;
  throw ValidationError("suite in {single,ablation,fusion_sweep}", "unknown suite '" + std::string(key) + "'");
}

std::string to_string(SuiteKind s) {
  switch (s) {
    case SuiteKind::Single: return "single";
    case SuiteKind::Ablation: return "ablation";
    case SuiteKind::FusionSweep: return "fusion_sweep";
  }
  return "?";
}

data::SynthSpec ExperimentConfig::synth_for(std::uint64_t seed) const {
  data::SynthSpec s = synth;
  if (!fixed_data_seed) s.seed = synth.seed + seed;
  return s;
}

train::TrainConfig ExperimentConfig::train_for(std::uint64_t seed) const {
  train::TrainConfig t = train;
  t.seed = seed;
  return t;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

namespace {

// The config key a constraint expression mentions first ("0<=warmup_epochs<=total_epochs"
// names warmup_epochs). Keys are matched as whole identifiers.
std::string field_of(const std::string& constraint) {
  std::size_t best = std::string::npos;
  std::string field = constraint;
  auto ident = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; };
  for (const auto& key : known_keys()) {
    for (auto pos = constraint.find(key); pos != std::string::npos; pos = constraint.find(key, pos + 1)) {
      const std::size_t end = pos + key.size();
      if ((pos > 0 && ident(constraint[pos - 1])) || (end < constraint.size() && ident(constraint[end]))) continue;
      if (pos < best) {
        best = pos;
        field = key;
      }
      break;
    }
  }
  return field;
}

}  // namespace

ExperimentConfig parse(const json& flat) {
  if (!flat.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  for (const auto& key : kRequired) {
    if (!flat.contains(key)) throw ConfigError(key, "required field is missing");
  }
  ExperimentConfig c;
  const auto& table = fields();
  for (const auto& [key, value] : flat.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown field");
    try {
      it->second.read(c, flat, key);
    } catch (const ValidationError& e) {
      throw ConfigError(key, std::string(e.what()) + " (constraint " + e.constraint() + ")");
    }
  }
  try {
    c.synth.validate();
    c.train.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(field_of(e.constraint()), std::string("violates ") + e.constraint());
  }
  if (c.train_frac <= 0.0 || c.val_frac < 0.0 || c.train_frac + c.val_frac > 1.0) {
    throw ConfigError("train_frac", "violates train_frac>0, val_frac>=0, train_frac+val_frac<=1");
  }
  if (c.seeds.empty()) throw ConfigError("seeds", "violates seeds non-empty");
  if (c.workers < 1) throw ConfigError("workers", "violates workers>=1");
  if (c.out_dir.empty()) throw ConfigError("out_dir", "violates out_dir non-empty");
  c.raw = flat;
  return c;
}

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path.string() + " is not valid JSON: " + e.what());
  }
}

ExperimentConfig load(const std::filesystem::path& path) { return parse(read_file(path)); }

void set_override(json& flat, const std::string& key, const std::string& value) {
  if (!flat.is_object()) flat = json::object();
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = value;
  }
  flat[key] = std::move(v);
}

std::filesystem::path resolve_output(const std::filesystem::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return std::filesystem::path(root) / p;
  }
  return p;
}

json to_json(const data::SynthSpec& s) {
  return {{"num_classes", s.num_classes},
          {"samples_per_class", s.samples_per_class},
          {"dim_a", s.dim_a},
          {"dim_v", s.dim_v},
          {"strength_a", s.strength_a},
          {"strength_v", s.strength_v},
          {"noise_sigma", s.noise_sigma},
          {"hard_fraction_a", s.hard_fraction_a},
          {"hard_fraction_v", s.hard_fraction_v},
          {"attenuation_factor", s.attenuation_factor},
          {"data_seed", s.seed}};
}

json to_json(const train::TrainConfig& c) {
  return {{"total_epochs", c.total_epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"hidden", c.hidden},
          {"feature_dim", c.feature_dim},
          {"encoder_bias", c.encoder_bias == nn::BiasMode::BiasFree ? "bias_free" : "with_bias"},
          {"fusion", model::to_string(c.fusion)},
          {"mask_level", c.mask_level == model::MaskLevel::Input ? "input" : "feature"},
          {"loss_weight_audio", c.loss_weights.at(0)},
          {"loss_weight_video", c.loss_weights.at(1)},
          {"uni_mode", model::to_string(c.uni_mode)},
          {"order_policy", remix::to_string(c.order_policy)},
          {"variant", train::to_string(c.variant)},
          {"seed", c.seed},
          {"eval_cadence", c.eval_cadence},
          {"decouple_every", c.decouple_every},
          {"freeze_heads_after_warmup", c.freeze_heads_after_warmup},
          {"probe_angles", c.probe_angles},
          {"evaluate", c.evaluate},
          {"checkpoint_every", c.checkpoint_every}};
}

}  // namespace remixlab::config
