#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "biofm/augment.hpp"
#include "biofm/corpus.hpp"
#include "biofm/encoder.hpp"
#include "biofm/evalsuite.hpp"
#include "biofm/objective.hpp"
#include "biofm/pretrain.hpp"

namespace biofm {

using Json = nlohmann::ordered_json;

// Full run description. Every section is optional in the input file; unknown
// keys anywhere are rejected with ValidationError naming the key.
struct RunConfig {
  CorpusConfig corpus;
  AugmentationPolicy augmentation = AugmentationPolicy::ppg_default();
  std::string encoder_preset = "desk";  // desk | paper | explicit
  EncoderConfig encoder = EncoderConfig::desk(4);
  HeadConfig head;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;

  PretrainSetup setup() const;
  void validate() const;
};

Json to_json(const ModalityConfig& c);
Json to_json(const CorpusConfig& c);
Json to_json(const AugmentationPolicy& p);
Json to_json(const EncoderConfig& c);
Json to_json(const HeadConfig& c);
Json to_json(const LossConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const EvalConfig& c);
Json to_json(const RunConfig& c);

CorpusConfig corpus_config_from_json(const nlohmann::json& j);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
HeadConfig head_config_from_json(const nlohmann::json& j);
LossConfig loss_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Missing sections take defaults that depend on the corpus modality (default
// augmentation policy, encoder input channels).
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig default_run_config(Modality modality);

}  // namespace biofm
