#include "biofm/checkpoint.hpp"

#include "biofm/config.hpp"
#include "biofm/io.hpp"

namespace biofm {

namespace {

Json encoder_json(const EncoderConfig& e) {
  Json j = to_json(e);
  j["in_channels"] = e.in_channels;
  return j;
}

template <typename Fn>
void for_each_tensor(TrainState& state, Fn&& fn) {
  auto network = [&](Network<float>& net, const std::string& group) {
    for (const auto& p : net.params().params()) fn(group + "/param/" + p.name, p.var->value);
    for (auto& b : net.params().buffers()) fn(group + "/buffer/" + b.name, *b.tensor);
  };
  network(*state.online, "online");
  if (state.momentum) network(*state.momentum, "momentum");
  const auto& names = state.adam->names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    fn("adam/m/" + names[k], state.adam->first_moments()[k]);
    fn("adam/v/" + names[k], state.adam->second_moments()[k]);
  }
}

void load_network(Network<float>& net, const std::string& group, const Checkpoint& ckpt) {
  auto take = [&](const std::string& name, Tensor<float>& dst) {
    const auto it = ckpt.tensors.find(group + name);
    if (it == ckpt.tensors.end()) throw ValidationError("checkpoint is missing tensor " + group + name);
    if (!it->second.same_shape(dst)) {
      throw ShapeError("checkpoint tensor " + group + name + " has shape " + shape_str(it->second.shape()) +
                       ", expected " + shape_str(dst.shape()));
    }
    dst = it->second;
  };
  for (const auto& p : net.params().params()) take("/param/" + p.name, p.var->value);
  for (auto& b : net.params().buffers()) take("/buffer/" + b.name, *b.tensor);
}

}  // namespace

Framework Checkpoint::framework() const { return framework_from_string(manifest.at("framework").get<std::string>()); }
EncoderConfig Checkpoint::encoder_config() const { return encoder_config_from_json(manifest.at("encoder")); }
HeadConfig Checkpoint::head_config() const { return head_config_from_json(manifest.at("head")); }
std::size_t Checkpoint::input_channels() const { return manifest.at("input").at("channels").get<std::size_t>(); }
std::size_t Checkpoint::input_length() const { return manifest.at("input").at("length").get<std::size_t>(); }
std::string Checkpoint::modality() const { return manifest.at("input").at("modality").get<std::string>(); }
int Checkpoint::epoch() const { return manifest.at("epoch").get<int>(); }

Checkpoint make_checkpoint(TrainState& state, const PretrainSetup& setup, const ModalityConfig& input) {
  Checkpoint ckpt;
  Json m;
  m["format"] = "biofm-checkpoint";
  m["version"] = kCheckpointFormatVersion;
  m["framework"] = to_string(setup.train.framework);
  m["encoder"] = encoder_json(setup.encoder);
  m["head"] = to_json(setup.head);
  m["loss"] = to_json(setup.effective_loss());
  m["train"] = to_json(setup.train);
  m["input"] = {{"modality", to_string(input.modality)},
                {"channels", input.channels},
                {"length", input.segment_length()}};
  m["has_momentum"] = state.momentum != nullptr;
  m["has_predictor"] = state.online->has_predictor();
  m["epoch"] = state.epoch;
  m["step"] = state.step;
  m["adam_steps"] = state.adam->steps();
  m["best_val_loss"] = std::isfinite(state.best_val_loss) ? Json(state.best_val_loss) : Json(nullptr);
  ckpt.manifest = nlohmann::json::parse(m.dump());
  for_each_tensor(state, [&](const std::string& name, const Tensor<float>& t) { ckpt.tensors.emplace(name, t); });
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<std::uint8_t> blob;
  Json table = Json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", blob.size()}});
    io::append_f32_le(blob, t.data());
  }
  Json m = Json::parse(ckpt.manifest.dump());
  m["tensors"] = table;
  m["weights_bytes"] = blob.size();
  m["weights_crc32"] = io::crc32(blob);

  fs::path tmp = dir;
  tmp += ".tmp";
  fs::path old = dir;
  old += ".old";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  io::write_atomic(tmp / "weights.bin", blob);
  io::write_atomic(tmp / "manifest.json", m.dump(2) + "\n");
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw IoError("no checkpoint manifest in " + dir.string());
  Checkpoint ckpt;
  try {
    ckpt.manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  const auto& m = ckpt.manifest;
  if (m.value("format", "") != "biofm-checkpoint") throw IoError("not a biofm checkpoint: " + dir.string());
  if (m.value("version", -1) != kCheckpointFormatVersion) throw IoError("unsupported checkpoint version");
  const auto blob = io::read_bytes(dir / "weights.bin");
  if (blob.size() != m.at("weights_bytes").get<std::size_t>()) throw IoError("checkpoint weights.bin is truncated");
  if (io::crc32(blob) != m.at("weights_crc32").get<std::uint32_t>()) throw IoError("checkpoint checksum mismatch");
  for (const auto& entry : m.at("tensors")) {
    Tensor<float> t(entry.at("shape").get<Shape>());
    io::read_f32_le(blob, entry.at("offset").get<std::size_t>(), t.data());
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  ckpt.manifest.erase("tensors");
  return ckpt;
}

TrainState restore_state(const Checkpoint& ckpt, const PretrainSetup& setup) {
  const Framework f = ckpt.framework();
  if (f != setup.train.framework) {
    throw ValidationError("checkpoint was trained with framework " + to_string(f) + ", config asks for " +
                          to_string(setup.train.framework));
  }
  if (nlohmann::json::parse(encoder_json(setup.encoder).dump()) != ckpt.manifest.at("encoder") ||
      nlohmann::json::parse(to_json(setup.head).dump()) != ckpt.manifest.at("head")) {
    throw ValidationError("checkpoint architecture does not match the config");
  }
  TrainState state = init_state(setup);
  load_network(*state.online, "online", ckpt);
  if (state.momentum) load_network(*state.momentum, "momentum", ckpt);
  const auto& names = state.adam->names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    for (auto [prefix, store] : {std::pair{"adam/m/", &state.adam->first_moments()},
                                 std::pair{"adam/v/", &state.adam->second_moments()}}) {
      const auto it = ckpt.tensors.find(prefix + names[k]);
      if (it == ckpt.tensors.end() || !it->second.same_shape((*store)[k])) {
        throw ValidationError(std::string("checkpoint optimizer state is missing or mismatched for ") + names[k]);
      }
      (*store)[k] = it->second;
    }
  }
  state.adam->set_steps(ckpt.manifest.at("adam_steps").get<long long>());
  state.epoch = ckpt.epoch();
  state.step = ckpt.manifest.at("step").get<long long>();
  const auto& best = ckpt.manifest.at("best_val_loss");
  state.best_val_loss = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
  return state;
}

std::unique_ptr<Network<float>> load_online_network(const Checkpoint& ckpt) {
  auto net = std::make_unique<Network<float>>(ckpt.encoder_config(), ckpt.head_config(),
                                              ckpt.manifest.at("has_predictor").get<bool>(), 0);
  load_network(*net, "online", ckpt);
  return net;
}

}  // namespace biofm
