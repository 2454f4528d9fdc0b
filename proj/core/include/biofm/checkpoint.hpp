#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "biofm/pretrain.hpp"

namespace biofm {

inline constexpr int kCheckpointFormatVersion = 1;

// A checkpoint directory holds manifest.json and weights.bin. Tensor names are
// prefixed by group: online/param/, online/buffer/, momentum/param/,
// momentum/buffer/, adam/m/, adam/v/.
struct Checkpoint {
  nlohmann::json manifest;
  std::map<std::string, Tensor<float>> tensors;

  Framework framework() const;
  EncoderConfig encoder_config() const;
  HeadConfig head_config() const;
  std::size_t input_channels() const;
  std::size_t input_length() const;
  std::string modality() const;
  int epoch() const;
};

Checkpoint make_checkpoint(TrainState& state, const PretrainSetup& setup, const ModalityConfig& input);

// Replaces `dir` atomically: written under a sibling temporary name, then renamed.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Rebuilds training state. Throws ValidationError if the checkpoint was written
// by a different framework or architecture than `setup`.
TrainState restore_state(const Checkpoint& ckpt, const PretrainSetup& setup);

// Online network only, for embedding.
std::unique_ptr<Network<float>> load_online_network(const Checkpoint& ckpt);

}  // namespace biofm
