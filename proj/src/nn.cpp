#include "remixlab/nn.hpp"

#include <cmath>
#include <string>

namespace remixlab::nn {

namespace {

void check_cols(const Eigen::MatrixXd& x, Eigen::Index expected_rows, const char* what) {
  if (x.rows() != expected_rows) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected_rows) +
                         " rows, got " + std::to_string(x.rows()));
  }
}

std::span<double> view(Eigen::MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> view(const Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

Eigen::MatrixXd Dense::apply(const Eigen::MatrixXd& x) const {
  check_cols(x, in(), "dense input");
  Eigen::MatrixXd y = weight * x;
  if (has_bias) y.colwise() += bias;
  return y;
}

Dense make_dense(int in, int out, bool with_bias, std::mt19937_64& rng) {
  if (in < 1 || out < 1) throw DimensionError("dense layer dimensions must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Dense d;
  d.weight.resize(out, in);
  for (Eigen::Index c = 0; c < d.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r) d.weight(r, c) = u(rng);
  d.has_bias = with_bias;
  if (with_bias) d.bias = Eigen::VectorXd::Zero(out);
  return d;
}

Mlp make_mlp(std::span<const int> widths, BiasMode mode, std::mt19937_64& rng) {
  if (widths.size() < 2) throw DimensionError("an MLP needs at least input and output widths");
  Mlp m;
  m.bias_mode = mode;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    m.layers.push_back(make_dense(widths[i], widths[i + 1], mode == BiasMode::WithBias, rng));
  }
  return m;
}

Dense zeros_like(const Dense& d) {
  Dense z;
  z.weight = Eigen::MatrixXd::Zero(d.weight.rows(), d.weight.cols());
  z.has_bias = d.has_bias;
  if (d.has_bias) z.bias = Eigen::VectorXd::Zero(d.bias.size());
  return z;
}

Mlp zeros_like(const Mlp& m) {
  Mlp z;
  z.bias_mode = m.bias_mode;
  for (const auto& l : m.layers) z.layers.push_back(zeros_like(l));
  return z;
}

Eigen::MatrixXd forward(const Mlp& mlp, const Eigen::MatrixXd& x, MlpTape* tape) {
  if (mlp.layers.empty()) throw DimensionError("empty MLP");
  if (tape) {
    tape->layer_inputs.clear();
    tape->pre_activations.clear();
  }
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    Eigen::MatrixXd pre = mlp.layers[i].apply(h);
    if (tape) tape->layer_inputs.push_back(std::move(h));
    const bool last = i + 1 == mlp.layers.size();
    h = last ? pre : Eigen::MatrixXd(pre.cwiseMax(0.0));
    if (tape) tape->pre_activations.push_back(std::move(pre));
  }
  return h;
}

Eigen::VectorXd mlp_forward(const Mlp& mlp, const Eigen::VectorXd& x) {
  return forward(mlp, Eigen::MatrixXd(x)).col(0);
}

Eigen::MatrixXd dense_backward(const Dense& layer, const Eigen::MatrixXd& input,
                               const Eigen::MatrixXd& grad_out, Dense& grad) {
  grad.weight.noalias() += grad_out * input.transpose();
  if (layer.has_bias) grad.bias += grad_out.rowwise().sum();
  return layer.weight.transpose() * grad_out;
}

Eigen::MatrixXd backward(const Mlp& mlp, const MlpTape& tape, const Eigen::MatrixXd& grad_out,
                         Mlp& grad) {
  Eigen::MatrixXd g = grad_out;
  for (std::size_t i = mlp.layers.size(); i-- > 0;) {
    if (i + 1 != mlp.layers.size()) {
      // ReLU'(0) is taken as 0
      g = g.cwiseProduct((tape.pre_activations[i].array() > 0.0).cast<double>().matrix());
    }
    g = dense_backward(mlp.layers[i], tape.layer_inputs[i], g, grad.layers[i]);
  }
  return g;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  return softmax_columns(Eigen::MatrixXd(logits)).col(0);
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

Eigen::MatrixXd log_softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd shifted = logits.rowwise() - logits.colwise().maxCoeff();
  const Eigen::RowVectorXd lse = shifted.array().exp().colwise().sum().log().matrix();
  shifted.rowwise() -= lse;
  return shifted;
}

double cross_entropy(const Eigen::VectorXd& probs, int label, double epsilon, bool* clamped) {
  if (label < 0 || label >= probs.size()) throw DimensionError("label out of range");
  double p = probs[label];
  const bool clamp = p < epsilon;
  if (clamp) p = epsilon;
  if (clamped) *clamped = clamp;
  return -std::log(p);
}

double mean_cross_entropy(const Eigen::MatrixXd& probs, std::span<const int> labels,
                          double epsilon, std::size_t* clamped) {
  if (static_cast<std::size_t>(probs.cols()) != labels.size() || labels.empty()) {
    throw DimensionError("one label per probability column required");
  }
  double total = 0.0;
  std::size_t n_clamped = 0;
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    bool c = false;
    total += cross_entropy(probs.col(i), labels[static_cast<std::size_t>(i)], epsilon, &c);
    n_clamped += c ? 1 : 0;
  }
  if (clamped) *clamped = n_clamped;
  return total / static_cast<double>(labels.size());
}

ClassifierGradient compute_gradients(const Mlp& mlp, const Eigen::MatrixXd& x,
                                     std::span<const int> labels, std::span<const SampleId> ids) {
  if (x.cols() == 0) throw DimensionError("empty batch");
  if (static_cast<std::size_t>(x.cols()) != labels.size()) {
    throw DimensionError("one label per batch column required");
  }
  MlpTape tape;
  const Eigen::MatrixXd logits = forward(mlp, x, &tape);
  const Eigen::MatrixXd logp = log_softmax_columns(logits);
  const double inv_b = 1.0 / static_cast<double>(x.cols());

  ClassifierGradient out;
  Eigen::MatrixXd dlogits = logp.array().exp().matrix();
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double li = -logp(y, i);
    if (!std::isfinite(li)) {
      throw GradientError("non-finite loss",
                          ids.empty() ? std::nullopt
                                      : std::optional<SampleId>(ids[static_cast<std::size_t>(i)]));
    }
    out.loss += li;
    dlogits(y, i) -= 1.0;
  }
  out.loss *= inv_b;
  dlogits *= inv_b;
  out.grad = zeros_like(mlp);
  backward(mlp, tape, dlogits, out.grad);
  return out;
}

std::vector<std::span<double>> tensors(Dense& d) {
  std::vector<std::span<double>> out{view(d.weight)};
  if (d.has_bias) out.push_back(view(d.bias));
  return out;
}

std::vector<std::span<const double>> tensors(const Dense& d) {
  std::vector<std::span<const double>> out{view(d.weight)};
  if (d.has_bias) out.push_back(view(d.bias));
  return out;
}

std::vector<std::span<double>> tensors(Mlp& m) {
  std::vector<std::span<double>> out;
  for (auto& l : m.layers)
    for (auto t : tensors(l)) out.push_back(t);
  return out;
}

std::vector<std::span<const double>> tensors(const Mlp& m) {
  std::vector<std::span<const double>> out;
  for (const auto& l : m.layers)
    for (auto t : tensors(l)) out.push_back(t);
  return out;
}

AdamState make_adam(const AdamConfig& config, std::span<const std::span<double>> params) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               const std::vector<bool>* active) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("Adam: parameter, gradient and state tensor counts differ");
  }
  ++state.t;
  const auto& c = state.config;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || params[i].size() != state.m[i].size()) {
      throw DimensionError("Adam: tensor " + std::to_string(i) + " shape mismatch");
    }
    if (active && !(*active)[i]) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      params[i][j] -= c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
  }
}

}  // namespace remixlab::nn
