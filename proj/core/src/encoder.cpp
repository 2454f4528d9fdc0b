#include "biofm/encoder.hpp"

#include <algorithm>

namespace biofm {
namespace {

template <typename T>
Tensor<T> kaiming_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

int se_channels(int in_width, double se_ratio) {
  return std::max(1, static_cast<int>(in_width * se_ratio));
}

// A strided layer that sees fewer samples than its stride only reads padding.
std::size_t conv_out(std::size_t length, int kernel, int stride) {
  if (length < static_cast<std::size_t>(stride)) return 0;
  const std::size_t pad = static_cast<std::size_t>(kernel / 2);
  if (length + 2 * pad < static_cast<std::size_t>(kernel)) return 0;
  return (length + 2 * pad - kernel) / stride + 1;
}

}  // namespace

EncoderConfig EncoderConfig::paper(int in_channels) {
  EncoderConfig c;
  c.in_channels = in_channels;
  c.stem_width = 16;
  c.stem_kernel = 7;
  c.stem_stride = 2;
  c.embedding_dim = 256;
  struct Stage {
    int repeats, expansion, kernel, stride, width;
  };
  const Stage stages[] = {{1, 1, 3, 1, 16}, {2, 4, 5, 2, 24},  {2, 4, 3, 2, 40}, {3, 4, 5, 2, 80},
                          {3, 6, 3, 2, 112}, {3, 6, 5, 2, 192}, {2, 6, 3, 2, 256}};
  for (const Stage& s : stages) {
    for (int r = 0; r < s.repeats; ++r) {
      c.blocks.push_back({s.expansion, s.kernel, r == 0 ? s.stride : 1, s.width, 0.25});
    }
  }
  return c;
}

EncoderConfig EncoderConfig::desk(int in_channels) {
  EncoderConfig c;
  c.in_channels = in_channels;
  c.stem_width = 16;
  c.stem_kernel = 5;
  c.stem_stride = 2;
  c.embedding_dim = 64;
  c.blocks = {{2, 3, 2, 24, 0.25}, {4, 5, 2, 32, 0.25}, {4, 3, 2, 48, 0.25}, {4, 5, 1, 48, 0.25}};
  return c;
}

std::size_t EncoderConfig::output_length(std::size_t input_length) const {
  std::size_t len = conv_out(input_length, stem_kernel, stem_stride);
  for (const auto& b : blocks) {
    if (len == 0) return 0;
    len = conv_out(len, b.kernel_size, b.stride);
  }
  return len;
}

void EncoderConfig::validate(std::size_t input_length) const {
  auto fail = [](const std::string& m) { throw ValidationError("encoder config: " + m); };
  if (in_channels <= 0) fail("in_channels must be positive");
  if (stem_width <= 0) fail("stem_width must be positive");
  if (stem_kernel <= 0 || stem_kernel % 2 == 0) fail("stem_kernel must be a positive odd integer");
  if (stem_stride != 1 && stem_stride != 2) fail("stem_stride must be 1 or 2");
  if (embedding_dim <= 0) fail("embedding_dim must be positive");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string at = "block " + std::to_string(i) + ": ";
    if (b.expansion_ratio < 1) fail(at + "expansion_ratio must be >= 1");
    if (b.kernel_size <= 0 || b.kernel_size % 2 == 0) fail(at + "kernel_size must be odd");
    if (b.stride != 1 && b.stride != 2) fail(at + "stride must be 1 or 2");
    if (b.out_width <= 0) fail(at + "out_width must be positive");
    if (!(b.se_ratio > 0.0 && b.se_ratio <= 1.0)) fail(at + "se_ratio must be in (0, 1]");
  }
  if (output_length(input_length) < 1) {
    fail("strides reduce input length " + std::to_string(input_length) + " below one sample");
  }
}

std::size_t count_params(const EncoderConfig& config) {
  std::size_t n = 0;
  auto bn = [](std::size_t c) { return 2 * c; };
  n += static_cast<std::size_t>(config.stem_width) * config.in_channels * config.stem_kernel +
       bn(config.stem_width);
  int in = config.stem_width;
  for (const auto& b : config.blocks) {
    const std::size_t exp = static_cast<std::size_t>(in) * b.expansion_ratio;
    if (b.expansion_ratio != 1) n += exp * in + bn(exp);
    n += exp * b.kernel_size + bn(exp);
    const std::size_t se = se_channels(in, b.se_ratio);
    n += exp * se + se + se * exp + exp;
    n += static_cast<std::size_t>(b.out_width) * exp + bn(b.out_width);
    in = b.out_width;
  }
  n += static_cast<std::size_t>(config.embedding_dim) * in + bn(config.embedding_dim);
  return n;
}

std::size_t count_params(const HeadConfig& config, int input_dim) {
  const std::size_t h = config.hidden_units, o = config.output_dim;
  std::size_t n = h * input_dim + h;  // fc1 (+bias)
  if (config.batch_norm) n += 2 * h;
  n += o * h + o;
  return n;
}

template <typename T>
Conv1dLayer<T>::Conv1dLayer(ParamSet<T>& ps, const std::string& name, int in_ch, int out_ch,
                            int kernel, int stride_, int groups_, bool with_bias, Rng& rng)
    : stride(stride_), padding(kernel / 2), groups(groups_) {
  const std::size_t per_group = static_cast<std::size_t>(in_ch / groups_);
  weight = ps.add(name + ".weight",
                  kaiming_normal<T>({static_cast<std::size_t>(out_ch), per_group,
                                     static_cast<std::size_t>(kernel)},
                                    per_group * kernel, rng));
  if (with_bias) bias = ps.add(name + ".bias", Tensor<T>({static_cast<std::size_t>(out_ch)}));
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(ParamSet<T>& ps, const std::string& name, int channels) {
  const std::size_t c = static_cast<std::size_t>(channels);
  gamma = ps.add(name + ".gamma", Tensor<T>({c}, T{1}));
  beta = ps.add(name + ".beta", Tensor<T>({c}, T{0}));
  stats = ps.add_bn_stats(name, c);
}

template <typename T>
LinearLayer<T>::LinearLayer(ParamSet<T>& ps, const std::string& name, int in_dim, int out_dim,
                            bool with_bias, Rng& rng) {
  weight = ps.add(name + ".weight",
                  kaiming_normal<T>({static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim)},
                                    static_cast<std::size_t>(in_dim), rng));
  if (with_bias) bias = ps.add(name + ".bias", Tensor<T>({static_cast<std::size_t>(out_dim)}));
}

template <typename T>
MBConvBlock<T>::MBConvBlock(ParamSet<T>& ps, const std::string& name, int in_width,
                            const MBConvSpec& spec, Rng& rng)
    : has_expand_(spec.expansion_ratio != 1),
      residual_(spec.stride == 1 && in_width == spec.out_width) {
  const int exp = in_width * spec.expansion_ratio;
  if (has_expand_) {
    expand_conv_ = Conv1dLayer<T>(ps, name + ".expand.conv", in_width, exp, 1, 1, 1, false, rng);
    expand_bn_ = BatchNormLayer<T>(ps, name + ".expand.bn", exp);
  }
  dw_conv_ = Conv1dLayer<T>(ps, name + ".depthwise.conv", exp, exp, spec.kernel_size, spec.stride,
                            exp, false, rng);
  dw_bn_ = BatchNormLayer<T>(ps, name + ".depthwise.bn", exp);
  const int se = se_channels(in_width, spec.se_ratio);
  se_reduce_ = LinearLayer<T>(ps, name + ".se.reduce", exp, se, true, rng);
  se_expand_ = LinearLayer<T>(ps, name + ".se.expand", se, exp, true, rng);
  project_conv_ = Conv1dLayer<T>(ps, name + ".project.conv", exp, spec.out_width, 1, 1, 1, false, rng);
  project_bn_ = BatchNormLayer<T>(ps, name + ".project.bn", spec.out_width);
}

template <typename T>
Var<T> MBConvBlock<T>::forward(Graph<T>& g, const Var<T>& x, Mode mode) const {
  Var<T> h = x;
  if (has_expand_) h = ops::swish(g, expand_bn_(g, expand_conv_(g, h), mode));
  h = ops::swish(g, dw_bn_(g, dw_conv_(g, h), mode));
  if (!gate_bypass_) {
    Var<T> s = ops::global_avg_pool1d(g, h);
    s = ops::swish(g, se_reduce_(g, s));
    s = ops::sigmoid(g, se_expand_(g, s));
    h = ops::scale_channels(g, h, s);
  }
  h = project_bn_(g, project_conv_(g, h), mode);
  if (residual_) h = ops::add(g, h, x);
  return h;
}

template <typename T>
Encoder<T>::Encoder(ParamSet<T>& ps, const std::string& name, const EncoderConfig& config, Rng& rng)
    : config_(config) {
  stem_conv_ = Conv1dLayer<T>(ps, name + ".stem.conv", config.in_channels, config.stem_width,
                              config.stem_kernel, config.stem_stride, 1, false, rng);
  stem_bn_ = BatchNormLayer<T>(ps, name + ".stem.bn", config.stem_width);
  int in = config.stem_width;
  blocks_.reserve(config.blocks.size());
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    blocks_.emplace_back(ps, name + ".blocks." + std::to_string(i), in, config.blocks[i], rng);
    in = config.blocks[i].out_width;
  }
  head_conv_ = Conv1dLayer<T>(ps, name + ".head.conv", in, config.embedding_dim, 1, 1, 1, false, rng);
  head_bn_ = BatchNormLayer<T>(ps, name + ".head.bn", config.embedding_dim);
}

template <typename T>
Var<T> Encoder<T>::forward(Graph<T>& g, const Var<T>& x, Mode mode) const {
  if (x->value.rank() != 3 || x->value.dim(1) != static_cast<std::size_t>(config_.in_channels)) {
    throw ShapeError("encoder: expected [B," + std::to_string(config_.in_channels) + ",L], got " +
                     shape_str(x->value.shape()));
  }
  Var<T> h = ops::swish(g, stem_bn_(g, stem_conv_(g, x), mode));
  for (const auto& block : blocks_) h = block.forward(g, h, mode);
  h = ops::swish(g, head_bn_(g, head_conv_(g, h), mode));
  return ops::global_avg_pool1d(g, h);
}

template <typename T>
MlpHead<T>::MlpHead(ParamSet<T>& ps, const std::string& name, int input_dim,
                    const HeadConfig& config, Rng& rng)
    : batch_norm_(config.batch_norm) {
  fc1_ = LinearLayer<T>(ps, name + ".fc1", input_dim, config.hidden_units, true, rng);
  if (batch_norm_) bn_ = BatchNormLayer<T>(ps, name + ".bn", config.hidden_units);
  fc2_ = LinearLayer<T>(ps, name + ".fc2", config.hidden_units, config.output_dim, true, rng);
}

template <typename T>
Var<T> MlpHead<T>::forward(Graph<T>& g, const Var<T>& x, Mode mode) const {
  Var<T> h = fc1_(g, x);
  if (batch_norm_) h = bn_(g, h, mode);
  return fc2_(g, ops::swish(g, h));
}

template <typename T>
Network<T>::Network(const EncoderConfig& encoder, const HeadConfig& head, bool with_predictor,
                    std::uint64_t init_seed)
    : encoder_config_(encoder),
      head_config_(head),
      init_rng_(derive_seed({init_seed, 0x1917ULL})),
      encoder_(params_, "encoder", encoder, init_rng_),
      projector_(params_, "projector", encoder.embedding_dim, head, init_rng_) {
  if (with_predictor) predictor_.emplace(params_, "predictor", head.output_dim, head, init_rng_);
}

template <typename T>
Var<T> Network<T>::forward_predict(Graph<T>& g, const Var<T>& z, Mode mode) const {
  if (!predictor_) throw ValidationError("network has no prediction head");
  return predictor_->forward(g, z, mode);
}

template <typename T>
std::vector<NamedParam<T>> Network<T>::shared_params() const {
  auto out = params_.select("encoder.");
  auto proj = params_.select("projector.");
  out.insert(out.end(), proj.begin(), proj.end());
  return out;
}

template <typename T>
void Network<T>::copy_state_from(Network& other) {
  for (const auto& p : other.params_.params()) {
    const Var<T>* mine = params_.find(p.name);
    if (!mine) continue;
    if (!(*mine)->value.same_shape(p.var->value)) {
      throw ValidationError("parameter shape mismatch for " + p.name);
    }
    (*mine)->value = p.var->value;
  }
  auto theirs = other.params_.buffers();
  for (auto& b : params_.buffers()) {
    for (auto& o : theirs) {
      if (o.name == b.name) *b.tensor = *o.tensor;
    }
  }
}

#define BIOFM_INSTANTIATE_LAYERS(T) \
  template struct Conv1dLayer<T>;   \
  template struct BatchNormLayer<T>; \
  template struct LinearLayer<T>;   \
  template class MBConvBlock<T>;    \
  template class Encoder<T>;        \
  template class MlpHead<T>;        \
  template class Network<T>;

BIOFM_INSTANTIATE_LAYERS(float)
BIOFM_INSTANTIATE_LAYERS(double)

}  // namespace biofm
