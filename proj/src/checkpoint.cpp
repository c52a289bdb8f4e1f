#include "remixlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace remixlab::model {

namespace {

using nlohmann::json;

constexpr const char* kSchemaVersion = "1.0";

json dense_shape(const nn::Dense& d) {
  return json{{"in", d.in()}, {"out", d.out()}, {"bias", d.has_bias}};
}

nn::Dense dense_from_shape(const json& j) {
  nn::Dense d;
  const auto in = j.at("in").get<Eigen::Index>();
  const auto out = j.at("out").get<Eigen::Index>();
  d.weight = Eigen::MatrixXd::Zero(out, in);
  d.has_bias = j.at("bias").get<bool>();
  if (d.has_bias) d.bias = Eigen::VectorXd::Zero(out);
  return d;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto& m = ckpt.model;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["epoch"] = ckpt.epoch;
  j["fusion"] = to_string(m.fusion);
  j["mask_level"] = m.mask_level == MaskLevel::Input ? "input" : "feature";
  j["loss_weights"] = m.loss_weights;
  json encoders = json::array();
  for (const auto& e : m.encoders) {
    json layers = json::array();
    for (const auto& l : e.layers) layers.push_back(dense_shape(l));
    encoders.push_back(
        {{"bias_mode", e.bias_mode == nn::BiasMode::BiasFree ? "bias_free" : "with_bias"},
         {"layers", layers}});
  }
  j["encoders"] = encoders;
  j["fusion_head"] = m.fusion_head.weight.size() ? dense_shape(m.fusion_head) : json(nullptr);
  json heads = json::array();
  for (const auto& h : m.heads) heads.push_back(dense_shape(h));
  j["heads"] = heads;

  const auto layout = tensor_layout(m);
  const auto ts = tensors(m);
  json params = json::array();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    params.push_back({{"name", layout[i].name},
                      {"data", std::vector<double>(ts[i].begin(), ts[i].end())}});
  }
  j["parameters"] = params;
  j["adam"] = {{"lr", ckpt.adam.config.lr},     {"beta1", ckpt.adam.config.beta1},
               {"beta2", ckpt.adam.config.beta2}, {"eps", ckpt.adam.config.eps},
               {"t", ckpt.adam.t},               {"m", ckpt.adam.m},
               {"v", ckpt.adam.v}};
  j["rng_state"] = ckpt.rng_state;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Checkpoint c;
  try {
    const json j = json::parse(in);
    const auto version = j.at("schema_version").get<std::string>();
    if (version.substr(0, version.find('.')) != "1") {
      throw IoError("unsupported checkpoint schema_version " + version);
    }
    auto& m = c.model;
    c.epoch = j.at("epoch").get<int>();
    m.fusion = parse_fusion(j.at("fusion").get<std::string>());
    m.mask_level = j.at("mask_level").get<std::string>() == "input" ? MaskLevel::Input
                                                                    : MaskLevel::Feature;
    m.loss_weights = j.at("loss_weights").get<std::vector<double>>();
    for (const auto& e : j.at("encoders")) {
      nn::Mlp mlp;
      mlp.bias_mode = e.at("bias_mode").get<std::string>() == "bias_free" ? nn::BiasMode::BiasFree
                                                                          : nn::BiasMode::WithBias;
      for (const auto& l : e.at("layers")) mlp.layers.push_back(dense_from_shape(l));
      m.encoders.push_back(std::move(mlp));
    }
    if (!j.at("fusion_head").is_null()) {
      m.fusion_head = dense_from_shape(j.at("fusion_head"));
    } else {
      m.fusion_head = nn::Dense{Eigen::MatrixXd(0, 0), Eigen::VectorXd(), false};
    }
    for (const auto& h : j.at("heads")) m.heads.push_back(dense_from_shape(h));
    m.validate();

    const auto& params = j.at("parameters");
    auto ts = tensors(m);
    if (params.size() != ts.size()) throw IoError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto data = params[i].at("data").get<std::vector<double>>();
      if (data.size() != ts[i].size()) {
        throw IoError("checkpoint tensor " + params[i].at("name").get<std::string>() +
                      " has the wrong size");
      }
      std::copy(data.begin(), data.end(), ts[i].begin());
    }

    const auto& a = j.at("adam");
    c.adam.config = {a.at("lr").get<double>(), a.at("beta1").get<double>(),
                     a.at("beta2").get<double>(), a.at("eps").get<double>()};
    c.adam.t = a.at("t").get<std::uint64_t>();
    c.adam.m = a.at("m").get<std::vector<std::vector<double>>>();
    c.adam.v = a.at("v").get<std::vector<std::vector<double>>>();
    c.rng_state = j.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return c;
}

bool bitwise_equal(const MultimodalModel& a, const MultimodalModel& b) {
  if (a.fusion != b.fusion || a.mask_level != b.mask_level || a.loss_weights != b.loss_weights) {
    return false;
  }
  const auto la = tensor_layout(a);
  const auto lb = tensor_layout(b);
  if (la.size() != lb.size()) return false;
  const auto ta = tensors(a);
  const auto tb = tensors(b);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (la[i].name != lb[i].name || ta[i].size() != tb[i].size()) return false;
    if (std::memcmp(ta[i].data(), tb[i].data(), ta[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace remixlab::model
