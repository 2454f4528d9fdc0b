#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biofm/params.hpp"
#include "biofm/rng.hpp"

namespace biofm {

struct MBConvSpec {
  int expansion_ratio = 4;
  int kernel_size = 3;
  int stride = 1;
  int out_width = 16;
  double se_ratio = 0.25;
};

struct EncoderConfig {
  int in_channels = 4;
  int stem_width = 16;
  int stem_kernel = 5;
  int stem_stride = 2;
  std::vector<MBConvSpec> blocks;
  int embedding_dim = 256;

  // 16 blocks in 7 stages, widths 16 -> 256, stride 2 at six stage boundaries.
  static EncoderConfig paper(int in_channels);
  // 4 blocks, width <= 64, 64-d embedding.
  static EncoderConfig desk(int in_channels);

  // Throws ValidationError when a field is out of range or the strides reduce
  // `input_length` below one sample.
  void validate(std::size_t input_length) const;
  std::size_t output_length(std::size_t input_length) const;
};

struct HeadConfig {
  int hidden_units = 1024;
  int output_dim = 128;
  bool batch_norm = true;
};

std::size_t count_params(const EncoderConfig& config);
std::size_t count_params(const HeadConfig& config, int input_dim);

// Trainable layers. Each registers its leaves into a ParamSet at construction.
template <typename T>
struct Conv1dLayer {
  Var<T> weight;
  Var<T> bias;  // null when followed by batch norm
  int stride = 1, padding = 0, groups = 1;

  Conv1dLayer() = default;
  Conv1dLayer(ParamSet<T>& ps, const std::string& name, int in_ch, int out_ch, int kernel,
              int stride, int groups, bool with_bias, Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const {
    return ops::conv1d(g, x, weight, bias, stride, padding, groups);
  }
};

template <typename T>
struct BatchNormLayer {
  Var<T> gamma, beta;
  BatchNormStats<T>* stats = nullptr;

  BatchNormLayer() = default;
  BatchNormLayer(ParamSet<T>& ps, const std::string& name, int channels);
  Var<T> operator()(Graph<T>& g, const Var<T>& x, Mode mode) const {
    return ops::batchnorm1d(g, x, gamma, beta, stats, mode);
  }
};

template <typename T>
struct LinearLayer {
  Var<T> weight, bias;

  LinearLayer() = default;
  LinearLayer(ParamSet<T>& ps, const std::string& name, int in_dim, int out_dim, bool with_bias,
              Rng& rng);
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return ops::linear(g, x, weight, bias); }
};

// expand 1x1 -> depthwise -> squeeze-and-excitation gate -> project 1x1,
// residual iff stride == 1 and in_width == out_width.
template <typename T>
class MBConvBlock {
 public:
  MBConvBlock(ParamSet<T>& ps, const std::string& name, int in_width, const MBConvSpec& spec,
              Rng& rng);
  Var<T> forward(Graph<T>& g, const Var<T>& x, Mode mode) const;
  bool has_residual() const { return residual_; }
  // Replaces the SE gate by a constant 1 (plain MBConv).
  void set_gate_bypass(bool bypass) { gate_bypass_ = bypass; }

  // Squeeze-and-excitation expand layer; exposed for gate-limit tests.
  LinearLayer<T>& se_expand() { return se_expand_; }

 private:
  bool has_expand_;
  bool residual_;
  bool gate_bypass_ = false;
  Conv1dLayer<T> expand_conv_;
  BatchNormLayer<T> expand_bn_;
  Conv1dLayer<T> dw_conv_;
  BatchNormLayer<T> dw_bn_;
  LinearLayer<T> se_reduce_, se_expand_;
  Conv1dLayer<T> project_conv_;
  BatchNormLayer<T> project_bn_;
};

template <typename T>
class Encoder {
 public:
  Encoder(ParamSet<T>& ps, const std::string& name, const EncoderConfig& config, Rng& rng);
  // [B, C, L] -> [B, embedding_dim]
  Var<T> forward(Graph<T>& g, const Var<T>& x, Mode mode) const;
  std::vector<MBConvBlock<T>>& blocks() { return blocks_; }
  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Conv1dLayer<T> stem_conv_;
  BatchNormLayer<T> stem_bn_;
  std::vector<MBConvBlock<T>> blocks_;
  Conv1dLayer<T> head_conv_;
  BatchNormLayer<T> head_bn_;
};

// linear -> [batch norm] -> swish -> linear. Output is not normalized.
template <typename T>
class MlpHead {
 public:
  MlpHead(ParamSet<T>& ps, const std::string& name, int input_dim, const HeadConfig& config,
          Rng& rng);
  Var<T> forward(Graph<T>& g, const Var<T>& x, Mode mode) const;

 private:
  bool batch_norm_;
  LinearLayer<T> fc1_;
  BatchNormLayer<T> bn_;
  LinearLayer<T> fc2_;
};

// One side of the joint embedding architecture: encoder + projection head,
// plus the prediction head when `with_predictor` (BYOL online side).
template <typename T>
class Network {
 public:
  Network(const EncoderConfig& encoder, const HeadConfig& head, bool with_predictor,
          std::uint64_t init_seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  Var<T> forward_embed(Graph<T>& g, const Var<T>& x, Mode mode) const {
    return encoder_.forward(g, x, mode);
  }
  Var<T> forward_project(Graph<T>& g, const Var<T>& h, Mode mode) const {
    return projector_.forward(g, h, mode);
  }
  Var<T> forward_predict(Graph<T>& g, const Var<T>& z, Mode mode) const;

  bool has_predictor() const { return predictor_.has_value(); }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  const EncoderConfig& encoder_config() const { return encoder_config_; }
  const HeadConfig& head_config() const { return head_config_; }
  Encoder<T>& encoder() { return encoder_; }

  // Trainable leaves shared with a momentum copy (encoder + projector).
  std::vector<NamedParam<T>> shared_params() const;

  // Copies values and batch-norm statistics for every name present in `other`
  // and this network; every shared name must have matching shapes.
  void copy_state_from(Network& other);

 private:
  EncoderConfig encoder_config_;
  HeadConfig head_config_;
  ParamSet<T> params_;
  Rng init_rng_;
  Encoder<T> encoder_;
  MlpHead<T> projector_;
  std::optional<MlpHead<T>> predictor_;
};

extern template class MBConvBlock<float>;
extern template class MBConvBlock<double>;
extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class MlpHead<float>;
extern template class MlpHead<double>;
extern template class Network<float>;
extern template class Network<double>;

}  // namespace biofm
