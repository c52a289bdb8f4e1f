#pragma once

// Synthetic two-modality classification data with a strong and a weak
// modality, plus per-sample hard sets where one modality's signal is
// attenuated.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "remixlab/error.hpp"

namespace remixlab::data {

inline constexpr int kAudio = 0;
inline constexpr int kVideo = 1;

/// Human-readable modality name ("audio", "video" for the two-branch case).
std::string modality_name(int modality);

struct SynthSpec {
  int num_classes = 4;
  int samples_per_class = 250;
  int dim_a = 8;
  int dim_v = 128;
  double strength_a = 3.0;
  double strength_v = 0.4;
  double noise_sigma = 1.5;
  double hard_fraction_a = 0.3;
  double hard_fraction_v = 0.2;
  double attenuation_factor = 0.0;
  std::uint64_t seed = 7;

  /// Throws ValidationError naming the first violated constraint.
  void validate() const;
  int dim(int modality) const { return modality == kAudio ? dim_a : dim_v; }
  double strength(int modality) const { return modality == kAudio ? strength_a : strength_v; }
  double hard_fraction(int modality) const {
    return modality == kAudio ? hard_fraction_a : hard_fraction_v;
  }
};

struct MultimodalSample {
  SampleId id = 0;
  int label = 0;
  /// One feature vector per modality.
  std::vector<Eigen::VectorXd> inputs;
  /// true = that modality is presented as zeros.
  std::vector<bool> masked;

  int modalities() const { return static_cast<int>(inputs.size()); }
  /// Input as presented to the model: the stored vector, or zeros when masked.
  Eigen::VectorXd presented(int modality) const;
};

struct MultimodalDataset {
  SynthSpec spec;
  /// Sorted by id.
  std::vector<MultimodalSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int num_classes() const { return spec.num_classes; }
  int modalities() const { return samples.empty() ? 2 : samples.front().modalities(); }

  /// Row index of a sample id, or -1 when absent.
  std::ptrdiff_t find(SampleId id) const;
  std::vector<SampleId> ids() const;
};

struct DatasetSplits {
  MultimodalDataset train;
  MultimodalDataset val;
  MultimodalDataset test;
};

/// Class prototypes for one modality: `num_classes` orthonormal rows of a
/// fixed basis of R^dim.
Eigen::MatrixXd class_prototypes(int modality, int num_classes, int dim);

MultimodalDataset generate_dataset(const SynthSpec& spec);

/// Per-sample flags (indexed by id) marking the attenuated samples of one
/// modality. Recomputed from the SynthSpec, so it survives a JSON-lines round trip.
std::vector<bool> hard_set(const SynthSpec& spec, int modality);

/// Stratified split; the test set receives the remainder of each class.
DatasetSplits split_dataset(const MultimodalDataset& ds, double train_frac, double val_frac,
                            std::uint64_t seed);

/// Nearest-prototype prediction (argmax of prototype inner product).
int nearest_prototype(const Eigen::MatrixXd& prototypes, const Eigen::VectorXd& x);

/// Inner-product margin of the true class over the best competitor.
double prototype_margin(const Eigen::MatrixXd& prototypes, const Eigen::VectorXd& x, int label);

/// Accuracy of the nearest-prototype classifier on one modality.
double nearest_prototype_accuracy(const MultimodalDataset& ds, int modality);

/// JSON-lines persistence: a header line with the SynthSpec, then one sample per line.
void save_jsonl(const MultimodalDataset& ds, const std::filesystem::path& path);
MultimodalDataset load_jsonl(const std::filesystem::path& path);

}  // namespace remixlab::data
