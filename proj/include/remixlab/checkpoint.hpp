#pragma once

#include <filesystem>
#include <string>

#include "remixlab/model.hpp"
#include "remixlab/nn.hpp"

namespace remixlab::model {

/// Everything needed to resume a run: parameters, optimizer moments and the
/// serialized state of the training RNG.
struct Checkpoint {
  MultimodalModel model;
  nn::AdamState adam;
  std::string rng_state;
  int epoch = 0;
};

/// JSON with layer shapes, bias mode, fusion kind, head wiring and flat
/// parameter arrays. Doubles are written in shortest round-trip form, so
/// load(save(x)) reproduces x bit for bit.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// True when both models have identical wiring and bit-identical parameters.
bool bitwise_equal(const MultimodalModel& a, const MultimodalModel& b);

}  // namespace remixlab::model
