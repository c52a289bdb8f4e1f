#pragma once

// Two-branch (in general K-branch) multimodal classifier: one MLP encoder per
// modality, a fusion stage, and a linear classification head per modality.
//
// Loss on a batch B:
//   L = CE(fused) + sum_k w_k * (1/|B|) * sum_{i live in k} CE(head_k(z_i^k))
// where a sample is "live" in modality k unless that modality is masked.

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "remixlab/nn.hpp"
#include "remixlab/synth.hpp"

namespace remixlab::model {

enum class FusionKind { Concat, Sum, Decision };
enum class UniMode { Head, ZeroMask };
/// Input: masked inputs are zeroed. Feature: encoder outputs are zeroed too,
/// which keeps masked branches silent when encoders carry biases.
enum class MaskLevel { Input, Feature };
/// Which samples contribute to head k's loss term.
enum class HeadTerms { LiveOnly, All };

FusionKind parse_fusion(std::string_view key);
std::string to_string(FusionKind f);
UniMode parse_uni_mode(std::string_view key);
std::string to_string(UniMode m);

struct ModelShape {
  std::vector<int> input_dims{16, 16};
  int num_classes = 4;
  int hidden = 64;
  int feature_dim = 32;
  nn::BiasMode encoder_bias = nn::BiasMode::BiasFree;
  FusionKind fusion = FusionKind::Concat;
  MaskLevel mask_level = MaskLevel::Input;
  std::vector<double> loss_weights{1.0, 1.0};
};

struct MultimodalModel {
  std::vector<nn::Mlp> encoders;
  FusionKind fusion = FusionKind::Concat;
  /// M x sum(d_k) for Concat, M x d for Sum; empty for Decision.
  nn::Dense fusion_head;
  std::vector<nn::Dense> heads;
  std::vector<double> loss_weights;
  MaskLevel mask_level = MaskLevel::Input;

  int modalities() const { return static_cast<int>(encoders.size()); }
  int num_classes() const { return static_cast<int>(heads.front().out()); }
  int feature_dim(int k) const { return static_cast<int>(encoders[static_cast<std::size_t>(k)].out()); }
  /// Throws DimensionError on inconsistent wiring.
  void validate() const;
};

MultimodalModel make_model(const ModelShape& shape, std::mt19937_64& rng);
MultimodalModel zeros_like(const MultimodalModel& m);

enum class ParamGroup { Encoder, Fusion, Head };

struct TensorInfo {
  std::string name;
  ParamGroup group;
  int modality;  // -1 for the fusion head
};

/// Tensor order shared by tensors(), tensor_layout() and checkpoints:
/// encoders (in modality order), fusion head, unimodal heads.
std::vector<TensorInfo> tensor_layout(const MultimodalModel& m);
std::vector<std::span<double>> tensors(MultimodalModel& m);
std::vector<std::span<const double>> tensors(const MultimodalModel& m);
std::size_t parameter_count(const MultimodalModel& m);
/// Concatenation of every tensor of encoder k.
Eigen::VectorXd flatten_encoder(const MultimodalModel& m, int k);

/// Column-batched inputs as presented to the model.
struct Batch {
  std::vector<Eigen::MatrixXd> inputs;  // per modality: dim x |B|, zero where masked
  std::vector<Eigen::VectorXd> live;    // per modality: 1 live, 0 masked
  std::vector<int> labels;
  std::vector<SampleId> ids;

  std::size_t size() const { return labels.size(); }
  int modalities() const { return static_cast<int>(inputs.size()); }
};

/// Gathers `rows` of `ds`. Masks come from `masks_by_row` (indexed by dataset
/// row) when given, else from each sample's own flags.
Batch make_batch(const data::MultimodalDataset& ds, std::span<const std::size_t> rows,
                 const std::vector<std::vector<bool>>* masks_by_row = nullptr);
Batch make_batch(const data::MultimodalSample& sample);
/// Same samples with modality k masked (k < 0: nothing extra masked).
Batch with_masked(Batch b, int k);

struct Forward {
  std::vector<nn::MlpTape> tapes;
  std::vector<Eigen::MatrixXd> features;     // z^k, after feature masking
  Eigen::MatrixXd fused;                      // M x |B|
  std::vector<Eigen::MatrixXd> head_logits;  // per modality, M x |B|
};

Forward forward(const MultimodalModel& m, const Batch& b);

/// Fused logits from per-modality features, block form: sum_k W^k z^k + b.
Eigen::MatrixXd fuse(const MultimodalModel& m, std::span<const Eigen::MatrixXd> features);
/// Concat only: W [z^1; ...; z^K] + b on the stacked feature matrix.
Eigen::MatrixXd fuse_monolithic(const MultimodalModel& m,
                                std::span<const Eigen::MatrixXd> features);

Eigen::MatrixXd fused_logits(const MultimodalModel& m, const Batch& b);
Eigen::VectorXd fused_logits(const MultimodalModel& m, const data::MultimodalSample& s);

/// Per-modality class probabilities (M x |B|). Head: softmax(head_k(z^k)).
/// ZeroMask: softmax of the fused logits with every other modality zeroed.
/// Throws EvaluationError if modality k is masked for any sample.
Eigen::MatrixXd unimodal_probs(const MultimodalModel& m, const Batch& b, int modality,
                               UniMode mode);
Eigen::VectorXd unimodal_probs(const MultimodalModel& m, const data::MultimodalSample& s,
                               int modality, UniMode mode);

struct LossOptions {
  bool fused = true;
  bool heads = true;
  HeadTerms head_terms = HeadTerms::LiveOnly;
  /// Restrict the head terms to one modality (-1: all).
  int only_head = -1;
  /// Apply w_k to head terms; false gives plain per-head CE.
  bool weighted_heads = true;
};

struct LossBreakdown {
  double total = 0.0;
  double fused = 0.0;
  std::vector<double> heads;  // unweighted per-head CE terms
};

LossBreakdown total_loss(const MultimodalModel& m, const Batch& b, const LossOptions& opt = {});

struct LossAndGradient {
  LossBreakdown loss;
  MultimodalModel grad;
};

/// Analytic gradient of total_loss. Non-finite per-sample losses raise
/// GradientError carrying the sample id.
LossAndGradient loss_and_gradient(const MultimodalModel& m, const Batch& b,
                                  const LossOptions& opt = {});

}  // namespace remixlab::model
