#include "biofm/config.hpp"

#include <set>

#include "biofm/io.hpp"

namespace biofm {

namespace {

// Reads keys of one JSON object and rejects any key that was never asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(path_ + "." + key + " has the wrong type");
    }
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("unknown config key " + path_ + "." + it.key());
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ModalityConfig modality_defaults(Modality m) { return m == Modality::Ppg ? ModalityConfig::ppg() : ModalityConfig::ecg(); }

CorpusConfig read_corpus(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  CorpusConfig c;
  std::string modality = "ppg";
  s.get("modality", modality);
  c.modality = modality_defaults(modality_from_string(modality));
  int channels = c.modality.channels;
  s.get("channels", channels);
  if (channels != c.modality.channels) {
    throw ValidationError(path + ".channels must be " + std::to_string(c.modality.channels) + " for " + modality);
  }
  s.get("sample_rate_hz", c.modality.sample_rate_hz);
  s.get("segment_seconds", c.modality.segment_seconds);
  s.get("within_participant_jitter", c.modality.within_participant_jitter);
  s.get("n_participants", c.n_participants);
  s.get("segments_per_participant", c.segments_per_participant);
  s.get("seed", c.seed);
  s.get("train_fraction", c.train_fraction);
  s.get("val_fraction", c.val_fraction);
  s.finish();
  c.validate();
  return c;
}

AugmentationParams read_aug_params(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  AugmentationParams p;
  s.get("cut_out_min_fraction", p.cut_out_min_fraction);
  s.get("cut_out_max_fraction", p.cut_out_max_fraction);
  s.get("noise_min_sigma", p.noise_min_sigma);
  s.get("noise_max_sigma", p.noise_max_sigma);
  s.get("magnitude_knots", p.magnitude_knots);
  s.get("magnitude_sigma", p.magnitude_sigma);
  s.get("time_knots", p.time_knots);
  s.get("time_sigma", p.time_sigma);
  s.get("time_warp_retries", p.time_warp_retries);
  s.finish();
  return p;
}

AugmentationPolicy read_augmentation(const nlohmann::json& j, const std::string& path, Modality modality) {
  Section s(j, path);
  std::string policy = "default";
  s.get("policy", policy);
  AugmentationPolicy out;
  if (policy == "default") {
    out = modality == Modality::Ppg ? AugmentationPolicy::ppg_default() : AugmentationPolicy::ecg_default();
    if (s.has("entries")) throw ValidationError(path + ".entries requires policy \"custom\"");
  } else if (policy == "none") {
    out = AugmentationPolicy::none();
    if (s.has("entries")) throw ValidationError(path + ".entries requires policy \"custom\"");
  } else if (policy == "custom") {
    const auto* entries = s.child("entries");
    if (!entries || !entries->is_array()) throw ValidationError(path + ".entries must be an array");
    for (std::size_t i = 0; i < entries->size(); ++i) {
      Section e((*entries)[i], path + ".entries[" + std::to_string(i) + "]");
      std::string kind;
      double probability = 1.0;
      e.get("kind", kind);
      e.get("probability", probability);
      e.finish();
      out.entries.push_back({augmentation_from_string(kind), probability});
    }
  } else {
    throw ValidationError(path + ".policy must be default|none|custom");
  }
  s.child("entries");
  if (const auto* params = s.child("params")) out.params = read_aug_params(*params, path + ".params");
  s.finish();
  return out;
}

HeadConfig read_head(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  HeadConfig h;
  s.get("hidden_units", h.hidden_units);
  s.get("output_dim", h.output_dim);
  s.get("batch_norm", h.batch_norm);
  s.finish();
  if (h.hidden_units <= 0 || h.output_dim <= 0) throw ValidationError(path + " sizes must be positive");
  return h;
}

MBConvSpec read_block(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  MBConvSpec b;
  for (const char* key : {"expansion_ratio", "kernel_size", "stride", "out_width"}) {
    if (!s.has(key)) throw ValidationError(path + "." + key + " is required");
  }
  s.get("expansion_ratio", b.expansion_ratio);
  s.get("kernel_size", b.kernel_size);
  s.get("stride", b.stride);
  s.get("out_width", b.out_width);
  s.get("se_ratio", b.se_ratio);
  s.finish();
  return b;
}

struct EncoderSection {
  std::string preset;
  EncoderConfig encoder;
  HeadConfig head;
};

EncoderSection read_encoder(const nlohmann::json& j, const std::string& path, int in_channels) {
  Section s(j, path);
  EncoderSection out;
  out.preset = "desk";
  s.get("preset", out.preset);
  if (out.preset == "desk" || out.preset == "paper") {
    out.encoder = out.preset == "desk" ? EncoderConfig::desk(in_channels) : EncoderConfig::paper(in_channels);
  } else if (out.preset == "explicit") {
    EncoderConfig& e = out.encoder;
    e.in_channels = in_channels;
    s.get("stem_width", e.stem_width);
    s.get("stem_kernel", e.stem_kernel);
    s.get("stem_stride", e.stem_stride);
    s.get("embedding_dim", e.embedding_dim);
    const auto* blocks = s.child("blocks");
    if (!blocks || !blocks->is_array()) throw ValidationError(path + ".blocks must be an array");
    for (std::size_t i = 0; i < blocks->size(); ++i) {
      e.blocks.push_back(read_block((*blocks)[i], path + ".blocks[" + std::to_string(i) + "]"));
    }
  } else {
    throw ValidationError(path + ".preset must be desk|paper|explicit");
  }
  if (const auto* head = s.child("head")) out.head = read_head(*head, path + ".head");
  s.finish();
  return out;
}

LossConfig read_loss(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  LossConfig c;
  s.get("temperature", c.temperature);
  s.get("koleo_weight", c.koleo_weight);
  s.get("koleo_eps", c.koleo_eps);
  s.get("eq3_halving", c.eq3_halving);
  s.finish();
  c.validate();
  return c;
}

TrainConfig read_train(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  TrainConfig c;
  std::string framework = to_string(c.framework), pair_mode = to_string(c.pair_mode);
  s.get("framework", framework);
  s.get("pair_mode", pair_mode);
  c.framework = framework_from_string(framework);
  c.pair_mode = pair_mode_from_string(pair_mode);
  s.get("batch_pairs", c.batch_pairs);
  s.get("momentum_rate", c.momentum_rate);
  if (const auto* lr = s.child("lr"); lr && !lr->is_null()) {
    if (!lr->is_number()) throw ValidationError(path + ".lr must be a number or null");
    c.lr = lr->get<double>();
  }
  if (const auto* adam = s.child("adam")) {
    Section a(*adam, path + ".adam");
    a.get("beta1", c.adam.beta1);
    a.get("beta2", c.adam.beta2);
    a.get("eps", c.adam.eps);
    a.finish();
  }
  s.get("lr_step_epochs", c.lr_step_epochs);
  s.get("lr_step_factor", c.lr_step_factor);
  s.get("epochs", c.epochs);
  s.get("seed", c.seed);
  s.get("ser_batch", c.ser_batch);
  s.get("max_val_batches", c.max_val_batches);
  s.finish();
  c.validate();
  return c;
}

EvalConfig read_eval(const nlohmann::json& j, const std::string& path) {
  Section s(j, path);
  EvalConfig c;
  s.get("targets", c.targets);
  s.get("ridge_grid", c.ridge_grid);
  s.get("cv_folds", c.cv_folds);
  s.get("ser_batch", c.ser_batch);
  s.get("seed", c.seed);
  std::vector<std::string> splits;
  s.get("test_splits", splits);
  if (!splits.empty()) {
    c.test_splits.clear();
    for (const auto& name : splits) c.test_splits.push_back(split_from_string(name));
  }
  s.finish();
  c.validate();
  return c;
}

}  // namespace

Json to_json(const ModalityConfig& c) {
  return {{"modality", to_string(c.modality)},
          {"channels", c.channels},
          {"sample_rate_hz", c.sample_rate_hz},
          {"segment_seconds", c.segment_seconds},
          {"within_participant_jitter", c.within_participant_jitter}};
}

Json to_json(const CorpusConfig& c) {
  Json j = to_json(c.modality);
  j["n_participants"] = c.n_participants;
  j["segments_per_participant"] = c.segments_per_participant;
  j["seed"] = c.seed;
  j["train_fraction"] = c.train_fraction;
  j["val_fraction"] = c.val_fraction;
  return j;
}

Json to_json(const AugmentationPolicy& p) {
  Json entries = Json::array();
  for (const auto& e : p.entries) entries.push_back({{"kind", to_string(e.kind)}, {"probability", e.probability}});
  const auto& a = p.params;
  return {{"policy", "custom"},
          {"entries", entries},
          {"params",
           {{"cut_out_min_fraction", a.cut_out_min_fraction},
            {"cut_out_max_fraction", a.cut_out_max_fraction},
            {"noise_min_sigma", a.noise_min_sigma},
            {"noise_max_sigma", a.noise_max_sigma},
            {"magnitude_knots", a.magnitude_knots},
            {"magnitude_sigma", a.magnitude_sigma},
            {"time_knots", a.time_knots},
            {"time_sigma", a.time_sigma},
            {"time_warp_retries", a.time_warp_retries}}}};
}

Json to_json(const EncoderConfig& c) {
  Json blocks = Json::array();
  for (const auto& b : c.blocks) {
    blocks.push_back({{"expansion_ratio", b.expansion_ratio},
                      {"kernel_size", b.kernel_size},
                      {"stride", b.stride},
                      {"out_width", b.out_width},
                      {"se_ratio", b.se_ratio}});
  }
  return {{"preset", "explicit"},
          {"stem_width", c.stem_width},
          {"stem_kernel", c.stem_kernel},
          {"stem_stride", c.stem_stride},
          {"embedding_dim", c.embedding_dim},
          {"blocks", blocks}};
}

Json to_json(const HeadConfig& c) {
  return {{"hidden_units", c.hidden_units}, {"output_dim", c.output_dim}, {"batch_norm", c.batch_norm}};
}

Json to_json(const LossConfig& c) {
  return {{"temperature", c.temperature},
          {"koleo_weight", c.koleo_weight},
          {"koleo_eps", c.koleo_eps},
          {"eq3_halving", c.eq3_halving}};
}

Json to_json(const TrainConfig& c) {
  Json j = {{"framework", to_string(c.framework)},
            {"pair_mode", to_string(c.pair_mode)},
            {"batch_pairs", c.batch_pairs},
            {"momentum_rate", c.momentum_rate},
            {"lr", c.resolved_lr()},
            {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
            {"lr_step_epochs", c.resolved_step_epochs()},
            {"lr_step_factor", c.lr_step_factor},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"ser_batch", c.ser_batch},
            {"max_val_batches", c.max_val_batches}};
  return j;
}

Json to_json(const EvalConfig& c) {
  Json splits = Json::array();
  for (Split s : c.test_splits) splits.push_back(to_string(s));
  return {{"targets", c.targets},
          {"ridge_grid", c.ridge_grid},
          {"cv_folds", c.cv_folds},
          {"ser_batch", c.ser_batch},
          {"test_splits", splits},
          {"seed", c.seed}};
}

Json to_json(const RunConfig& c) {
  Json encoder = to_json(c.encoder);
  encoder["head"] = to_json(c.head);
  Json loss = to_json(c.setup().effective_loss());
  return {{"corpus", to_json(c.corpus)},
          {"augmentation", to_json(c.augmentation)},
          {"encoder", encoder},
          {"loss", loss},
          {"train", to_json(c.train)},
          {"eval", to_json(c.eval)}};
}

CorpusConfig corpus_config_from_json(const nlohmann::json& j) { return read_corpus(j, "corpus"); }

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  int in_channels = 0;
  if (j.is_object() && j.contains("in_channels")) in_channels = j.at("in_channels").get<int>();
  nlohmann::json copy = j;
  copy.erase("in_channels");
  auto section = read_encoder(copy, "encoder", in_channels);
  return section.encoder;
}

HeadConfig head_config_from_json(const nlohmann::json& j) { return read_head(j, "head"); }
LossConfig loss_config_from_json(const nlohmann::json& j) { return read_loss(j, "loss"); }
TrainConfig train_config_from_json(const nlohmann::json& j) { return read_train(j, "train"); }

PretrainSetup RunConfig::setup() const { return {encoder, head, loss, train, augmentation}; }

void RunConfig::validate() const {
  corpus.validate();
  augmentation.validate(static_cast<std::size_t>(corpus.modality.channels));
  if (encoder.in_channels != corpus.modality.channels) {
    throw ValidationError("encoder input channels do not match the corpus");
  }
  setup().validate(corpus.modality.segment_length());
  eval.validate();
}

RunConfig default_run_config(Modality modality) {
  RunConfig c;
  c.corpus.modality = modality_defaults(modality);
  c.augmentation = modality == Modality::Ppg ? AugmentationPolicy::ppg_default() : AugmentationPolicy::ecg_default();
  c.encoder = EncoderConfig::desk(c.corpus.modality.channels);
  return c;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  Section s(j, "config");
  RunConfig c;
  if (const auto* corpus = s.child("corpus")) c.corpus = read_corpus(*corpus, "corpus");
  const Modality modality = c.corpus.modality.modality;
  const int channels = c.corpus.modality.channels;
  c.augmentation = modality == Modality::Ppg ? AugmentationPolicy::ppg_default() : AugmentationPolicy::ecg_default();
  if (const auto* aug = s.child("augmentation")) c.augmentation = read_augmentation(*aug, "augmentation", modality);
  c.encoder = EncoderConfig::desk(channels);
  if (const auto* enc = s.child("encoder")) {
    auto section = read_encoder(*enc, "encoder", channels);
    c.encoder_preset = section.preset;
    c.encoder = section.encoder;
    c.head = section.head;
  }
  if (const auto* loss = s.child("loss")) c.loss = read_loss(*loss, "loss");
  if (const auto* train = s.child("train")) c.train = read_train(*train, "train");
  if (const auto* eval = s.child("eval")) c.eval = read_eval(*eval, "eval");
  s.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace biofm
