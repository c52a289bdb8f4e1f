#pragma once

// Dense layers, ReLU MLPs, softmax cross-entropy and Adam with explicit
// analytic gradients. Batched tensors are column-major: one column per sample.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "remixlab/error.hpp"

namespace remixlab::nn {

enum class BiasMode { WithBias, BiasFree };

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // empty when has_bias is false
  bool has_bias = true;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// ReLU between layers, identity at the output.
struct Mlp {
  std::vector<Dense> layers;
  BiasMode bias_mode = BiasMode::BiasFree;

  Eigen::Index in() const { return layers.front().in(); }
  Eigen::Index out() const { return layers.back().out(); }
};

/// Uniform(-sqrt(6/(in+out)), +sqrt(6/(in+out))) weights, zero bias.
Dense make_dense(int in, int out, bool with_bias, std::mt19937_64& rng);
/// `widths` = {in, hidden..., out}.
Mlp make_mlp(std::span<const int> widths, BiasMode mode, std::mt19937_64& rng);

Dense zeros_like(const Dense& d);
Mlp zeros_like(const Mlp& m);

/// Activations cached by forward() for backward().
struct MlpTape {
  std::vector<Eigen::MatrixXd> layer_inputs;
  std::vector<Eigen::MatrixXd> pre_activations;
};

Eigen::MatrixXd forward(const Mlp& mlp, const Eigen::MatrixXd& x, MlpTape* tape = nullptr);
Eigen::VectorXd mlp_forward(const Mlp& mlp, const Eigen::VectorXd& x);

/// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
Eigen::MatrixXd dense_backward(const Dense& layer, const Eigen::MatrixXd& input,
                               const Eigen::MatrixXd& grad_out, Dense& grad);
Eigen::MatrixXd backward(const Mlp& mlp, const MlpTape& tape, const Eigen::MatrixXd& grad_out,
                         Mlp& grad);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits);
Eigen::MatrixXd log_softmax_columns(const Eigen::MatrixXd& logits);

/// -log(probs[label]); a zero probability is clamped to `epsilon` and
/// reported through `clamped`.
double cross_entropy(const Eigen::VectorXd& probs, int label, double epsilon = 1e-300,
                     bool* clamped = nullptr);
/// Mean of cross_entropy over the columns of `probs`.
double mean_cross_entropy(const Eigen::MatrixXd& probs, std::span<const int> labels,
                          double epsilon = 1e-300, std::size_t* clamped = nullptr);

struct ClassifierGradient {
  double loss = 0.0;
  Mlp grad;
};

/// Mean softmax cross-entropy of an MLP classifier over a batch, with the
/// analytic gradient of every parameter. `ids` (optional) names samples in
/// GradientError when a loss is non-finite.
ClassifierGradient compute_gradients(const Mlp& mlp, const Eigen::MatrixXd& x,
                                     std::span<const int> labels,
                                     std::span<const SampleId> ids = {});

std::vector<std::span<double>> tensors(Mlp& m);
std::vector<std::span<const double>> tensors(const Mlp& m);
std::vector<std::span<double>> tensors(Dense& d);
std::vector<std::span<const double>> tensors(const Dense& d);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

AdamState make_adam(const AdamConfig& config, std::span<const std::span<double>> params);

/// One bias-corrected Adam update. Tensors whose `active` flag is false are
/// left untouched (their moments too); `t` always advances.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               const std::vector<bool>* active = nullptr);

}  // namespace remixlab::nn
