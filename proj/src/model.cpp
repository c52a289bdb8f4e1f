#include "remixlab/model.hpp"

#include <cmath>
#include <numeric>

namespace remixlab::model {

namespace {

std::size_t idx(int k) { return static_cast<std::size_t>(k); }

std::vector<Eigen::Index> concat_offsets(const MultimodalModel& m) {
  std::vector<Eigen::Index> off(idx(m.modalities()) + 1, 0);
  for (int k = 0; k < m.modalities(); ++k) off[idx(k) + 1] = off[idx(k)] + m.feature_dim(k);
  return off;
}

/// Column weights of head k's CE term: 1/|B| per contributing sample.
Eigen::RowVectorXd head_coefficients(const Batch& b, int k, const LossOptions& opt) {
  const double inv_b = 1.0 / static_cast<double>(b.size());
  if (opt.head_terms == HeadTerms::All) return Eigen::RowVectorXd::Constant(b.size(), inv_b);
  return b.live[idx(k)].transpose() * inv_b;
}

bool head_enabled(const LossOptions& opt, int k) {
  return opt.heads && (opt.only_head < 0 || opt.only_head == k);
}

LossAndGradient evaluate(const MultimodalModel& m, const Batch& b, const LossOptions& opt,
                         bool want_grad) {
  if (b.size() == 0) throw DimensionError("empty batch");
  const int K = m.modalities();
  const Forward f = forward(m, b);
  const Eigen::Index n = static_cast<Eigen::Index>(b.size());
  const double inv_b = 1.0 / static_cast<double>(n);

  auto check_finite = [&](double v, Eigen::Index i) {
    if (!std::isfinite(v)) throw GradientError("non-finite loss", b.ids[static_cast<std::size_t>(i)]);
  };

  LossAndGradient out;
  out.loss.heads.assign(idx(K), 0.0);
  if (want_grad) out.grad = zeros_like(m);
  std::vector<Eigen::MatrixXd> dz(idx(K));
  for (int k = 0; k < K; ++k) dz[idx(k)] = Eigen::MatrixXd::Zero(m.feature_dim(k), n);

  if (opt.fused) {
    const Eigen::MatrixXd logp = nn::log_softmax_columns(f.fused);
    Eigen::MatrixXd dlogits = logp.array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = b.labels[static_cast<std::size_t>(i)];
      check_finite(logp(y, i), i);
      out.loss.fused -= logp(y, i);
      dlogits(y, i) -= 1.0;
    }
    out.loss.fused *= inv_b;
    dlogits *= inv_b;

    if (want_grad) {
      switch (m.fusion) {
        case FusionKind::Concat: {
          const auto off = concat_offsets(m);
          for (int k = 0; k < K; ++k) {
            const Eigen::Index d = m.feature_dim(k);
            out.grad.fusion_head.weight.middleCols(off[idx(k)], d).noalias() +=
                dlogits * f.features[idx(k)].transpose();
            dz[idx(k)].noalias() += m.fusion_head.weight.middleCols(off[idx(k)], d).transpose() * dlogits;
          }
          if (m.fusion_head.has_bias) out.grad.fusion_head.bias += dlogits.rowwise().sum();
          break;
        }
        case FusionKind::Sum: {
          Eigen::MatrixXd zsum = f.features[0];
          for (int k = 1; k < K; ++k) zsum += f.features[idx(k)];
          nn::dense_backward(m.fusion_head, zsum, dlogits, out.grad.fusion_head);
          const Eigen::MatrixXd dshared = m.fusion_head.weight.transpose() * dlogits;
          for (int k = 0; k < K; ++k) dz[idx(k)] += dshared;
          break;
        }
        case FusionKind::Decision: {
          const Eigen::MatrixXd dhead = dlogits / static_cast<double>(K);
          for (int k = 0; k < K; ++k) {
            dz[idx(k)] += nn::dense_backward(m.heads[idx(k)], f.features[idx(k)], dhead,
                                             out.grad.heads[idx(k)]);
          }
          break;
        }
      }
    }
  }

  for (int k = 0; k < K; ++k) {
    if (!head_enabled(opt, k)) continue;
    const Eigen::RowVectorXd coef = head_coefficients(b, k, opt);
    const double w = opt.weighted_heads ? m.loss_weights[idx(k)] : 1.0;
    const Eigen::MatrixXd logp = nn::log_softmax_columns(f.head_logits[idx(k)]);
    Eigen::MatrixXd dlogits = logp.array().exp().matrix();
    double term = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = b.labels[static_cast<std::size_t>(i)];
      dlogits(y, i) -= 1.0;
      if (coef[i] == 0.0) continue;
      check_finite(logp(y, i), i);
      term -= coef[i] * logp(y, i);
    }
    out.loss.heads[idx(k)] = term;
    out.loss.total += w * term;
    if (want_grad && w != 0.0) {
      dlogits = dlogits.array().rowwise() * (w * coef).array();
      dz[idx(k)] += nn::dense_backward(m.heads[idx(k)], f.features[idx(k)], dlogits,
                                       out.grad.heads[idx(k)]);
    }
  }
  out.loss.total += out.loss.fused;

  if (want_grad) {
    for (int k = 0; k < K; ++k) {
      if (m.mask_level == MaskLevel::Feature) {
        dz[idx(k)] = dz[idx(k)].array().rowwise() * b.live[idx(k)].transpose().array();
      }
      nn::backward(m.encoders[idx(k)], f.tapes[idx(k)], dz[idx(k)], out.grad.encoders[idx(k)]);
    }
  }
  return out;
}

}  // namespace

FusionKind parse_fusion(std::string_view key) {
  if (key == "concat") return FusionKind::Concat;
  if (key == "sum") return FusionKind::Sum;
  if (key == "decision") return FusionKind::Decision;
  throw ValidationError("fusion in {concat,sum,decision}", "unknown fusion '" + std::string(key) + "'");
}

std::string to_string(FusionKind f) {
  switch (f) {
    case FusionKind::Concat: return "concat";
    case FusionKind::Sum: return "sum";
    case FusionKind::Decision: return "decision";
  }
  return "?";
}

UniMode parse_uni_mode(std::string_view key) {
  if (key == "head") return UniMode::Head;
  if (key == "zeromask" || key == "zero_mask" || key == "dropout") return UniMode::ZeroMask;
  throw ValidationError("uni_mode in {head,zeromask}", "unknown uni_mode '" + std::string(key) + "'");
}

std::string to_string(UniMode m) { return m == UniMode::Head ? "head" : "zeromask"; }

void MultimodalModel::validate() const {
  const int K = modalities();
  if (K < 2) throw DimensionError("model needs at least two modality branches");
  if (heads.size() != idx(K) || loss_weights.size() != idx(K)) {
    throw DimensionError("one head and one loss weight per modality required");
  }
  const auto M = heads.front().out();
  for (int k = 0; k < K; ++k) {
    const auto& enc = encoders[idx(k)];
    for (std::size_t l = 1; l < enc.layers.size(); ++l) {
      if (enc.layers[l].in() != enc.layers[l - 1].out()) {
        throw DimensionError("encoder " + std::to_string(k) + " layers do not chain");
      }
    }
    if (heads[idx(k)].in() != enc.out() || heads[idx(k)].out() != M) {
      throw DimensionError("head " + std::to_string(k) + " wiring mismatch");
    }
    if (loss_weights[idx(k)] < 0.0) throw DimensionError("loss weights must be non-negative");
  }
  switch (fusion) {
    case FusionKind::Concat: {
      Eigen::Index total = 0;
      for (int k = 0; k < K; ++k) total += feature_dim(k);
      if (fusion_head.in() != total || fusion_head.out() != M) {
        throw DimensionError("concat fusion head must be M x sum(d_k)");
      }
      break;
    }
    case FusionKind::Sum:
      for (int k = 1; k < K; ++k) {
        if (feature_dim(k) != feature_dim(0)) throw DimensionError("sum fusion needs equal feature dims");
      }
      if (fusion_head.in() != feature_dim(0) || fusion_head.out() != M) {
        throw DimensionError("sum fusion head must be M x d");
      }
      break;
    case FusionKind::Decision:
      break;
  }
}

MultimodalModel make_model(const ModelShape& shape, std::mt19937_64& rng) {
  const int K = static_cast<int>(shape.input_dims.size());
  if (shape.loss_weights.size() != idx(K)) {
    throw DimensionError("loss_weights must have one entry per modality");
  }
  MultimodalModel m;
  m.fusion = shape.fusion;
  m.mask_level = shape.mask_level;
  m.loss_weights = shape.loss_weights;
  for (int k = 0; k < K; ++k) {
    const std::vector<int> widths{shape.input_dims[idx(k)], shape.hidden, shape.feature_dim};
    m.encoders.push_back(nn::make_mlp(widths, shape.encoder_bias, rng));
  }
  switch (shape.fusion) {
    case FusionKind::Concat:
      m.fusion_head = nn::make_dense(K * shape.feature_dim, shape.num_classes, true, rng);
      break;
    case FusionKind::Sum:
      m.fusion_head = nn::make_dense(shape.feature_dim, shape.num_classes, true, rng);
      break;
    case FusionKind::Decision:
      m.fusion_head = nn::Dense{Eigen::MatrixXd(0, 0), Eigen::VectorXd(), false};
      break;
  }
  for (int k = 0; k < K; ++k) {
    m.heads.push_back(nn::make_dense(shape.feature_dim, shape.num_classes, true, rng));
  }
  m.validate();
  return m;
}

MultimodalModel zeros_like(const MultimodalModel& m) {
  MultimodalModel z;
  z.fusion = m.fusion;
  z.mask_level = m.mask_level;
  z.loss_weights = m.loss_weights;
  for (const auto& e : m.encoders) z.encoders.push_back(nn::zeros_like(e));
  z.fusion_head = nn::zeros_like(m.fusion_head);
  for (const auto& h : m.heads) z.heads.push_back(nn::zeros_like(h));
  return z;
}

std::vector<TensorInfo> tensor_layout(const MultimodalModel& m) {
  std::vector<TensorInfo> out;
  auto add_dense = [&](const nn::Dense& d, const std::string& prefix, ParamGroup g, int k) {
    if (d.weight.size() == 0) return;
    out.push_back({prefix + ".weight", g, k});
    if (d.has_bias) out.push_back({prefix + ".bias", g, k});
  };
  for (int k = 0; k < m.modalities(); ++k) {
    const auto& enc = m.encoders[idx(k)];
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
      add_dense(enc.layers[l], "encoder_" + data::modality_name(k) + ".layer" + std::to_string(l),
                ParamGroup::Encoder, k);
    }
  }
  add_dense(m.fusion_head, "fusion_head", ParamGroup::Fusion, -1);
  for (int k = 0; k < m.modalities(); ++k) {
    add_dense(m.heads[idx(k)], "head_" + data::modality_name(k), ParamGroup::Head, k);
  }
  return out;
}

std::vector<std::span<double>> tensors(MultimodalModel& m) {
  std::vector<std::span<double>> out;
  for (auto& e : m.encoders)
    for (auto t : nn::tensors(e)) out.push_back(t);
  if (m.fusion_head.weight.size() != 0)
    for (auto t : nn::tensors(m.fusion_head)) out.push_back(t);
  for (auto& h : m.heads)
    for (auto t : nn::tensors(h)) out.push_back(t);
  return out;
}

std::vector<std::span<const double>> tensors(const MultimodalModel& m) {
  std::vector<std::span<const double>> out;
  for (const auto& e : m.encoders)
    for (auto t : nn::tensors(e)) out.push_back(t);
  if (m.fusion_head.weight.size() != 0)
    for (auto t : nn::tensors(m.fusion_head)) out.push_back(t);
  for (const auto& h : m.heads)
    for (auto t : nn::tensors(h)) out.push_back(t);
  return out;
}

std::size_t parameter_count(const MultimodalModel& m) {
  std::size_t n = 0;
  for (auto t : tensors(m)) n += t.size();
  return n;
}

Eigen::VectorXd flatten_encoder(const MultimodalModel& m, int k) {
  const auto ts = nn::tensors(m.encoders.at(idx(k)));
  std::size_t n = 0;
  for (auto t : ts) n += t.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  Eigen::Index pos = 0;
  for (auto t : ts)
    for (double v : t) out[pos++] = v;
  return out;
}

Batch make_batch(const data::MultimodalDataset& ds, std::span<const std::size_t> rows,
                 const std::vector<std::vector<bool>>* masks_by_row) {
  if (rows.empty()) throw DimensionError("empty batch");
  const int K = ds.samples.at(rows.front()).modalities();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Batch b;
  for (int k = 0; k < K; ++k) {
    b.inputs.emplace_back(ds.samples[rows.front()].inputs[idx(k)].size(), n);
    b.live.push_back(Eigen::VectorXd::Ones(n));
  }
  b.labels.reserve(rows.size());
  b.ids.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    const auto& s = ds.samples.at(r);
    const auto& masks = masks_by_row ? masks_by_row->at(r) : s.masked;
    for (int k = 0; k < K; ++k) {
      const bool masked = !masks.empty() && masks[idx(k)];
      if (masked) {
        b.inputs[idx(k)].col(i).setZero();
        b.live[idx(k)][i] = 0.0;
      } else {
        if (s.inputs[idx(k)].size() != b.inputs[idx(k)].rows()) {
          throw DimensionError("inconsistent input dimension in batch");
        }
        b.inputs[idx(k)].col(i) = s.inputs[idx(k)];
      }
    }
    b.labels.push_back(s.label);
    b.ids.push_back(s.id);
  }
  return b;
}

Batch make_batch(const data::MultimodalSample& sample) {
  data::MultimodalDataset one;
  one.samples.push_back(sample);
  const std::size_t row = 0;
  return make_batch(one, std::span<const std::size_t>(&row, 1));
}

Batch with_masked(Batch b, int k) {
  if (k < 0) return b;
  b.inputs.at(idx(k)).setZero();
  b.live[idx(k)].setZero();
  return b;
}

Forward forward(const MultimodalModel& m, const Batch& b) {
  const int K = m.modalities();
  if (b.modalities() != K) throw DimensionError("batch modality count does not match the model");
  Forward f;
  f.tapes.resize(idx(K));
  for (int k = 0; k < K; ++k) {
    if (b.inputs[idx(k)].rows() != m.encoders[idx(k)].in()) {
      throw DimensionError("input dimension mismatch for modality " + std::to_string(k));
    }
    Eigen::MatrixXd z = nn::forward(m.encoders[idx(k)], b.inputs[idx(k)], &f.tapes[idx(k)]);
    if (m.mask_level == MaskLevel::Feature) {
      z = z.array().rowwise() * b.live[idx(k)].transpose().array();
    }
    f.head_logits.push_back(m.heads[idx(k)].apply(z));
    f.features.push_back(std::move(z));
  }
  f.fused = fuse(m, f.features);
  return f;
}

Eigen::MatrixXd fuse(const MultimodalModel& m, std::span<const Eigen::MatrixXd> features) {
  const int K = m.modalities();
  if (features.size() != idx(K)) throw DimensionError("one feature block per modality required");
  const Eigen::Index n = features.front().cols();
  switch (m.fusion) {
    case FusionKind::Concat: {
      const auto off = concat_offsets(m);
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.fusion_head.out(), n);
      for (int k = 0; k < K; ++k) {
        if (features[idx(k)].rows() != m.feature_dim(k)) throw DimensionError("feature dim mismatch");
        out.noalias() += m.fusion_head.weight.middleCols(off[idx(k)], m.feature_dim(k)) * features[idx(k)];
      }
      if (m.fusion_head.has_bias) out.colwise() += m.fusion_head.bias;
      return out;
    }
    case FusionKind::Sum: {
      Eigen::MatrixXd zsum = features[0];
      for (int k = 1; k < K; ++k) zsum += features[idx(k)];
      return m.fusion_head.apply(zsum);
    }
    case FusionKind::Decision: {
      Eigen::MatrixXd out = m.heads[0].apply(features[0]);
      for (int k = 1; k < K; ++k) out += m.heads[idx(k)].apply(features[idx(k)]);
      return out / static_cast<double>(K);
    }
  }
  throw DimensionError("unknown fusion kind");
}

Eigen::MatrixXd fuse_monolithic(const MultimodalModel& m,
                                std::span<const Eigen::MatrixXd> features) {
  if (m.fusion != FusionKind::Concat) throw DimensionError("monolithic form is defined for concat");
  Eigen::Index rows = 0;
  for (const auto& z : features) rows += z.rows();
  Eigen::MatrixXd stacked(rows, features.front().cols());
  Eigen::Index pos = 0;
  for (const auto& z : features) {
    stacked.middleRows(pos, z.rows()) = z;
    pos += z.rows();
  }
  return m.fusion_head.apply(stacked);
}

Eigen::MatrixXd fused_logits(const MultimodalModel& m, const Batch& b) { return forward(m, b).fused; }

Eigen::VectorXd fused_logits(const MultimodalModel& m, const data::MultimodalSample& s) {
  return fused_logits(m, make_batch(s)).col(0);
}

Eigen::MatrixXd unimodal_probs(const MultimodalModel& m, const Batch& b, int modality,
                               UniMode mode) {
  if (modality < 0 || modality >= m.modalities()) throw DimensionError("modality out of range");
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.live[idx(modality)][static_cast<Eigen::Index>(i)] == 0.0) {
      throw EvaluationError("modality " + data::modality_name(modality) + " is masked", b.ids[i]);
    }
  }
  if (mode == UniMode::Head) {
    return nn::softmax_columns(forward(m, b).head_logits[idx(modality)]);
  }
  Batch only = b;
  for (int k = 0; k < m.modalities(); ++k) {
    if (k != modality) only = with_masked(std::move(only), k);
  }
  return nn::softmax_columns(forward(m, only).fused);
}

Eigen::VectorXd unimodal_probs(const MultimodalModel& m, const data::MultimodalSample& s,
                               int modality, UniMode mode) {
  return unimodal_probs(m, make_batch(s), modality, mode).col(0);
}

LossBreakdown total_loss(const MultimodalModel& m, const Batch& b, const LossOptions& opt) {
  return evaluate(m, b, opt, false).loss;
}

LossAndGradient loss_and_gradient(const MultimodalModel& m, const Batch& b,
                                  const LossOptions& opt) {
  return evaluate(m, b, opt, true);
}

}  // namespace remixlab::model
