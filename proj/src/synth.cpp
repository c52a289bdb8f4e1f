#include "remixlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace remixlab::data {

namespace {

using nlohmann::json;

constexpr std::uint64_t kPrototypeSeed = 0x5eed'0000'a0d1'0000ULL;
constexpr std::uint64_t kNoiseStream = 0x9e37'79b9'7f4a'7c15ULL;
constexpr const char* kSchemaVersion = "1.0";

void require(bool ok, const char* constraint, const std::string& message) {
  if (!ok) throw ValidationError(constraint, std::string(constraint) + ": " + message);
}

json spec_to_json(const SynthSpec& s) {
  return json{{"num_classes", s.num_classes},
              {"samples_per_class", s.samples_per_class},
              {"dim_a", s.dim_a},
              {"dim_v", s.dim_v},
              {"strength_a", s.strength_a},
              {"strength_v", s.strength_v},
              {"noise_sigma", s.noise_sigma},
              {"hard_fraction_a", s.hard_fraction_a},
              {"hard_fraction_v", s.hard_fraction_v},
              {"attenuation_factor", s.attenuation_factor},
              {"seed", s.seed}};
}

SynthSpec spec_from_json(const json& j) {
  SynthSpec s;
  j.at("num_classes").get_to(s.num_classes);
  j.at("samples_per_class").get_to(s.samples_per_class);
  j.at("dim_a").get_to(s.dim_a);
  j.at("dim_v").get_to(s.dim_v);
  j.at("strength_a").get_to(s.strength_a);
  j.at("strength_v").get_to(s.strength_v);
  j.at("noise_sigma").get_to(s.noise_sigma);
  j.at("hard_fraction_a").get_to(s.hard_fraction_a);
  j.at("hard_fraction_v").get_to(s.hard_fraction_v);
  j.at("attenuation_factor").get_to(s.attenuation_factor);
  j.at("seed").get_to(s.seed);
  return s;
}

std::size_t hard_count(const SynthSpec& spec, int modality) {
  const auto n = static_cast<double>(spec.num_classes) * spec.samples_per_class;
  return static_cast<std::size_t>(std::llround(spec.hard_fraction(modality) * n));
}

}  // namespace

std::string modality_name(int modality) {
  switch (modality) {
    case kAudio: return "audio";
    case kVideo: return "video";
    default: return "m" + std::to_string(modality);
  }
}

void SynthSpec::validate() const {
  require(num_classes >= 2, "num_classes>=2", "got " + std::to_string(num_classes));
  require(samples_per_class >= 1, "samples_per_class>=1",
          "got " + std::to_string(samples_per_class));
  require(dim_a >= num_classes, "dim_a>=num_classes", "prototypes must embed");
  require(dim_v >= num_classes, "dim_v>=num_classes", "prototypes must embed");
  require(strength_a >= 0.0 && std::isfinite(strength_a), "strength_a>=0", "");
  require(strength_v >= 0.0 && std::isfinite(strength_v), "strength_v>=0", "");
  require(noise_sigma > 0.0 && std::isfinite(noise_sigma), "noise_sigma>0", "");
  require(hard_fraction_a >= 0.0 && hard_fraction_a <= 1.0, "hard_fraction_a in [0,1]", "");
  require(hard_fraction_v >= 0.0 && hard_fraction_v <= 1.0, "hard_fraction_v in [0,1]", "");
  require(hard_fraction_a + hard_fraction_v <= 1.0, "hard_fraction_a+hard_fraction_v<=1",
          "hard sets are drawn disjointly");
  require(attenuation_factor >= 0.0 && attenuation_factor < 1.0, "attenuation_factor in [0,1)",
          "");
}

Eigen::VectorXd MultimodalSample::presented(int modality) const {
  const auto& x = inputs.at(static_cast<std::size_t>(modality));
  if (!masked.empty() && masked[static_cast<std::size_t>(modality)]) {
    return Eigen::VectorXd::Zero(x.size());
  }
  return x;
}

std::ptrdiff_t MultimodalDataset::find(SampleId id) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), id,
                             [](const MultimodalSample& s, SampleId v) { return s.id < v; });
  if (it == samples.end() || it->id != id) return -1;
  return it - samples.begin();
}

std::vector<SampleId> MultimodalDataset::ids() const {
  std::vector<SampleId> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.id);
  return out;
}

Eigen::MatrixXd class_prototypes(int modality, int num_classes, int dim) {
  std::mt19937_64 rng(kPrototypeSeed + static_cast<std::uint64_t>(modality));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) g(r, c) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  return q.leftCols(num_classes).transpose();
}

std::vector<bool> hard_set(const SynthSpec& spec, int modality) {
  const std::size_t n = static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class;
  std::vector<SampleId> order(n);
  std::iota(order.begin(), order.end(), SampleId{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  // audio-hard ids come first in the shuffled order, video-hard ids next
  const std::size_t n_a = hard_count(spec, kAudio);
  const std::size_t n_v = hard_count(spec, kVideo);
  const std::size_t begin = modality == kAudio ? 0 : n_a;
  const std::size_t end = modality == kAudio ? n_a : std::min(n, n_a + n_v);
  std::vector<bool> flags(n, false);
  for (std::size_t i = begin; i < end; ++i) flags[order[i]] = true;
  return flags;
}

MultimodalDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  constexpr int kModalities = 2;
  const std::size_t n = static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class;

  std::vector<Eigen::MatrixXd> prototypes;
  std::vector<std::vector<bool>> hard;
  for (int k = 0; k < kModalities; ++k) {
    prototypes.push_back(class_prototypes(k, spec.num_classes, spec.dim(k)));
    hard.push_back(hard_set(spec, k));
  }

  std::mt19937_64 rng(spec.seed ^ kNoiseStream);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  MultimodalDataset ds;
  ds.spec = spec;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    MultimodalSample s;
    s.id = static_cast<SampleId>(i);
    s.label = static_cast<int>(i / static_cast<std::size_t>(spec.samples_per_class));
    s.masked.assign(kModalities, false);
    for (int k = 0; k < kModalities; ++k) {
      double scale = spec.strength(k);
      if (hard[static_cast<std::size_t>(k)][i]) scale *= spec.attenuation_factor;
      Eigen::VectorXd x = scale * prototypes[static_cast<std::size_t>(k)].row(s.label).transpose();
      for (Eigen::Index d = 0; d < x.size(); ++d) x[d] += noise(rng);
      s.inputs.push_back(std::move(x));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

DatasetSplits split_dataset(const MultimodalDataset& ds, double train_frac, double val_frac,
                            std::uint64_t seed) {
  require(train_frac > 0.0 && val_frac > 0.0, "train_frac>0,val_frac>0",
          "fractions must be positive");
  require(train_frac + val_frac < 1.0, "train_frac+val_frac<1", "test split would be empty");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t r = 0; r < ds.samples.size(); ++r) {
    by_class.at(static_cast<std::size_t>(ds.samples[r].label)).push_back(r);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_rows, val_rows, test_rows;
  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n = static_cast<double>(rows.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
    const auto n_val = std::min(rows.size() - n_train,
                                static_cast<std::size_t>(std::llround(val_frac * n)));
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + n_train);
    val_rows.insert(val_rows.end(), rows.begin() + n_train, rows.begin() + n_train + n_val);
    test_rows.insert(test_rows.end(), rows.begin() + n_train + n_val, rows.end());
  }

  auto take = [&](std::vector<std::size_t>& rows) {
    std::sort(rows.begin(), rows.end());
    MultimodalDataset out;
    out.spec = ds.spec;
    out.samples.reserve(rows.size());
    for (auto r : rows) out.samples.push_back(ds.samples[r]);
    return out;
  };
  return {take(train_rows), take(val_rows), take(test_rows)};
}

int nearest_prototype(const Eigen::MatrixXd& prototypes, const Eigen::VectorXd& x) {
  Eigen::Index best = 0;
  (prototypes * x).maxCoeff(&best);
  return static_cast<int>(best);
}

double prototype_margin(const Eigen::MatrixXd& prototypes, const Eigen::VectorXd& x, int label) {
  Eigen::VectorXd score = prototypes * x;
  const double own = score[label];
  score[label] = -std::numeric_limits<double>::infinity();
  return own - score.maxCoeff();
}

double nearest_prototype_accuracy(const MultimodalDataset& ds, int modality) {
  if (ds.empty()) return 0.0;
  const Eigen::MatrixXd protos =
      class_prototypes(modality, ds.spec.num_classes, ds.spec.dim(modality));
  std::size_t correct = 0;
  for (const auto& s : ds.samples) {
    if (nearest_prototype(protos, s.presented(modality)) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void save_jsonl(const MultimodalDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json{{"schema_version", kSchemaVersion}, {"spec", spec_to_json(ds.spec)}}.dump() << '\n';
  for (const auto& s : ds.samples) {
    json line{{"id", s.id}, {"y", s.label}};
    line["x_a"] = std::vector<double>(s.inputs[kAudio].begin(), s.inputs[kAudio].end());
    line["x_v"] = std::vector<double>(s.inputs[kVideo].begin(), s.inputs[kVideo].end());
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

MultimodalDataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path.string());

  MultimodalDataset ds;
  try {
    const json header = json::parse(line);
    const auto version = header.at("schema_version").get<std::string>();
    if (version.substr(0, version.find('.')) != "1") {
      throw IoError("unsupported dataset schema_version " + version);
    }
    ds.spec = spec_from_json(header.at("spec"));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      MultimodalSample s;
      j.at("id").get_to(s.id);
      j.at("y").get_to(s.label);
      for (const char* key : {"x_a", "x_v"}) {
        const auto v = j.at(key).get<std::vector<double>>();
        s.inputs.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                                static_cast<Eigen::Index>(v.size())));
      }
      s.masked.assign(2, false);
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed dataset file " + path.string() + ": " + e.what());
  }
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return ds;
}

}  // namespace remixlab::data
