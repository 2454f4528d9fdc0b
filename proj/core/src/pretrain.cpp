#include "biofm/pretrain.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <numeric>
#include <sstream>

#include "biofm/checkpoint.hpp"
#include "biofm/evalsuite.hpp"
#include "biofm/io.hpp"

namespace biofm {

std::string to_string(Framework f) {
  switch (f) {
    case Framework::Ours: return "ours";
    case Framework::OursNoKoleo: return "ours_no_koleo";
    case Framework::SimClr: return "simclr";
    case Framework::Byol: return "byol";
  }
  return "?";
}

std::string to_string(PairMode p) { return p == PairMode::Participant ? "participant" : "segment"; }

Framework framework_from_string(const std::string& s) {
  if (s == "ours") return Framework::Ours;
  if (s == "ours_no_koleo") return Framework::OursNoKoleo;
  if (s == "simclr") return Framework::SimClr;
  if (s == "byol") return Framework::Byol;
  throw ValidationError("unknown framework '" + s + "' (expected ours|ours_no_koleo|simclr|byol)");
}

PairMode pair_mode_from_string(const std::string& s) {
  if (s == "participant") return PairMode::Participant;
  if (s == "segment") return PairMode::Segment;
  throw ValidationError("unknown pair mode '" + s + "' (expected participant|segment)");
}

double TrainConfig::resolved_lr() const {
  if (lr) return *lr;
  return framework == Framework::Byol ? 2.5e-4 : 1e-3;
}

int TrainConfig::resolved_step_epochs() const {
  return lr_step_epochs > 0 ? lr_step_epochs : std::max(1, epochs / 3);
}

void TrainConfig::validate() const {
  if (batch_pairs < 2) throw ValidationError("train.batch_pairs must be >= 2");
  if (!(momentum_rate >= 0.0 && momentum_rate <= 1.0)) throw ValidationError("train.momentum_rate must be in [0,1]");
  if (!(resolved_lr() > 0.0)) throw ValidationError("train.lr must be positive");
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (lr_step_epochs < 0) throw ValidationError("train.lr_step_epochs must be >= 0");
  if (!(lr_step_factor > 0.0 && lr_step_factor <= 1.0)) throw ValidationError("train.lr_step_factor must be in (0,1]");
  if (ser_batch < 2) throw ValidationError("train.ser_batch must be >= 2");
  if (max_val_batches < 1) throw ValidationError("train.max_val_batches must be >= 1");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
    throw ValidationError("train.adam settings out of range");
  }
}

LossConfig PretrainSetup::effective_loss() const {
  LossConfig out = loss;
  if (train.framework != Framework::Ours) out.koleo_weight = 0.0;
  return out;
}

void PretrainSetup::validate(std::size_t input_length) const {
  encoder.validate(input_length);
  if (head.hidden_units <= 0 || head.output_dim <= 0) throw ValidationError("head sizes must be positive");
  loss.validate();
  train.validate();
  augmentation.validate(static_cast<std::size_t>(encoder.in_channels));
}

PairSampler::PairSampler(const Corpus& corpus, Split split) : corpus_(&corpus) {
  for (int pid : corpus.split_participants(split)) {
    std::vector<int> segs;
    for (const auto& s : corpus.segments)
      if (s.participant_id == pid) segs.push_back(s.segment_id);
    if (segs.empty()) continue;
    n_segments_ += segs.size();
    participant_ids_.push_back(pid);
    by_participant_.push_back(std::move(segs));
  }
}

PairBatch PairSampler::sample(PairMode mode, int n_pairs, Rng& rng) const {
  const std::size_t n = static_cast<std::size_t>(n_pairs);
  if (n > by_participant_.size()) {
    throw ValidationError("batch of " + std::to_string(n_pairs) + " pairs needs that many distinct participants, split has " +
                          std::to_string(by_participant_.size()));
  }
  const auto& first = corpus_->segments.at(static_cast<std::size_t>(by_participant_[0][0])).samples;
  const std::size_t C = first.dim(0), L = first.dim(1), item = C * L;
  PairBatch batch;
  batch.x1 = Tensor<float>({n, C, L});
  batch.x2 = Tensor<float>({n, C, L});

  std::vector<std::size_t> order(by_participant_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
    const auto& segs = by_participant_[order[i]];
    std::uniform_int_distribution<std::size_t> first_pick(0, segs.size() - 1);
    const std::size_t a = first_pick(rng);
    std::size_t b = a;
    if (mode == PairMode::Participant) {
      if (segs.size() < 2) throw ValidationError("participant pairs need at least two segments per participant");
      std::uniform_int_distribution<std::size_t> second_pick(0, segs.size() - 2);
      b = second_pick(rng);
      if (b >= a) ++b;
    }
    const auto& s1 = corpus_->segments[static_cast<std::size_t>(segs[a])].samples;
    const auto& s2 = corpus_->segments[static_cast<std::size_t>(segs[b])].samples;
    std::copy(s1.ptr(), s1.ptr() + item, batch.x1.ptr() + i * item);
    std::copy(s2.ptr(), s2.ptr() + item, batch.x2.ptr() + i * item);
    batch.participants.push_back(participant_ids_[order[i]]);
    batch.segments1.push_back(segs[a]);
    batch.segments2.push_back(segs[b]);
  }
  return batch;
}

void augment_pair_batch(PairBatch& batch, const AugmentationPolicy& policy, std::uint64_t seed,
                        std::uint64_t epoch, std::uint64_t batch_index) {
  if (policy.entries.empty()) return;
  const std::size_t n = batch.x1.dim(0), C = batch.x1.dim(1), L = batch.x1.dim(2), item = C * L;
  Tensor<float>* views[2] = {&batch.x1, &batch.x2};
  for (std::uint64_t v = 0; v < 2; ++v) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng = make_rng({seed, epoch, batch_index, v + 1, static_cast<std::uint64_t>(i)});
      float* dst = views[v]->ptr() + i * item;
      Segment seg({C, L}, std::vector<float>(dst, dst + item));
      const Segment out = augment::apply_policy(seg, policy, rng);
      std::copy(out.ptr(), out.ptr() + item, dst);
    }
  }
}

TrainState init_state(const PretrainSetup& setup) {
  TrainState state;
  const std::uint64_t init_seed = derive_seed({setup.train.seed, 0x1417ULL});
  const bool byol = setup.train.framework == Framework::Byol;
  state.online = std::make_unique<Network<float>>(setup.encoder, setup.head, byol, init_seed);
  if (setup.train.uses_momentum()) {
    state.momentum = std::make_unique<Network<float>>(setup.encoder, setup.head, false, init_seed);
    state.momentum->copy_state_from(*state.online);
  }
  state.adam = std::make_unique<Adam<float>>(state.online->params().params(), setup.train.adam);
  return state;
}

namespace {

struct Views {
  Var<float> a, b;
};

// Projections (and, for the online BYOL side, predictions) of both views.
Views online_views(Graph<float>& g, const Network<float>& net, const PairBatch& batch, Mode mode, bool predict) {
  auto x1 = make_var(batch.x1), x2 = make_var(batch.x2);
  auto z1 = net.forward_project(g, net.forward_embed(g, x1, mode), mode);
  auto z2 = net.forward_project(g, net.forward_embed(g, x2, mode), mode);
  if (predict) {
    z1 = net.forward_predict(g, z1, mode);
    z2 = net.forward_predict(g, z2, mode);
  }
  return {z1, z2};
}

Var<float> symmetric_infonce(Graph<float>& g, const Views& online, const Views& target, double temperature,
                             bool halve) {
  auto l = ops::add(g, loss::infonce(g, online.a, target.b, temperature),
                    loss::infonce(g, online.b, target.a, temperature));
  return halve ? ops::scale(g, l, 0.5f) : l;
}

Var<float> byol_objective(Graph<float>& g, const Views& pred, const Views& target) {
  return ops::scale(g, ops::add(g, loss::byol(g, pred.a, target.b), loss::byol(g, pred.b, target.a)), 0.5f);
}

void check_gradients(const ParamSet<float>& params) {
  for (const auto& p : params.params()) {
    if (!p.var->grad.empty() && !p.var->grad.all_finite()) {
      throw NumericError("non-finite gradient for " + p.name);
    }
  }
}

}  // namespace

double train_step(TrainState& state, const PretrainSetup& setup, const PairBatch& augmented, double lr) {
  Network<float>& online = *state.online;
  const LossConfig lc = setup.effective_loss();
  Graph<float> g;
  Var<float> loss;
  switch (setup.train.framework) {
    case Framework::Ours:
    case Framework::OursNoKoleo: {
      const Views h = online_views(g, online, augmented, Mode::Train, false);
      Graph<float> frozen(false);
      const Views hm = online_views(frozen, *state.momentum, augmented, Mode::Train, false);
      loss = loss::combined(g, h.a, h.b, hm.a, hm.b, lc);
      break;
    }
    case Framework::SimClr: {
      const Views h = online_views(g, online, augmented, Mode::Train, false);
      loss = symmetric_infonce(g, h, h, lc.temperature, lc.eq3_halving);
      break;
    }
    case Framework::Byol: {
      const Views p = online_views(g, online, augmented, Mode::Train, true);
      Graph<float> frozen(false);
      const Views t = online_views(frozen, *state.momentum, augmented, Mode::Train, false);
      loss = byol_objective(g, p, t);
      break;
    }
  }
  const double value = loss->value[0];
  if (!std::isfinite(value)) throw NumericError("non-finite training loss at step " + std::to_string(state.step));
  online.params().zero_grad();
  g.backward(loss);
  check_gradients(online.params());
  state.adam->step(online.params().params(), lr);
  if (state.momentum) {
    ema_update(online.shared_params(), state.momentum->shared_params(), setup.train.momentum_rate);
  }
  ++state.step;
  return value;
}

double validation_loss(TrainState& state, const PretrainSetup& setup, const PairBatch& augmented) {
  Graph<float> g(false);
  const double tau = setup.loss.temperature;
  const Network<float>& online = *state.online;
  switch (setup.train.framework) {
    case Framework::Ours:
    case Framework::OursNoKoleo: {
      const Views h = online_views(g, online, augmented, Mode::Eval, false);
      const Views hm = online_views(g, *state.momentum, augmented, Mode::Eval, false);
      return symmetric_infonce(g, h, hm, tau, true)->value[0];
    }
    case Framework::SimClr: {
      const Views h = online_views(g, online, augmented, Mode::Eval, false);
      return symmetric_infonce(g, h, h, tau, true)->value[0];
    }
    case Framework::Byol: {
      const Views p = online_views(g, online, augmented, Mode::Eval, true);
      const Views t = online_views(g, *state.momentum, augmented, Mode::Eval, false);
      return byol_objective(g, p, t)->value[0];
    }
  }
  return 0.0;
}

int batches_per_epoch(const PairSampler& sampler, int batch_pairs) {
  return std::max(1, static_cast<int>(sampler.n_segments() / (2 * static_cast<std::size_t>(batch_pairs))));
}

Tensor<float> embed_segments(Network<float>& net, const std::vector<const SegmentRecord*>& segments,
                             std::size_t batch_size) {
  if (segments.empty()) throw ValidationError("no segments to embed");
  const std::size_t C = segments[0]->samples.dim(0), L = segments[0]->samples.dim(1), item = C * L;
  const std::size_t D = static_cast<std::size_t>(net.encoder_config().embedding_dim);
  Tensor<float> out({segments.size(), D});
  for (std::size_t start = 0; start < segments.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, segments.size() - start);
    Tensor<float> x({n, C, L});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = segments[start + i]->samples;
      if (s.dim(0) != C || s.dim(1) != L) throw ShapeError("segments differ in shape");
      std::copy(s.ptr(), s.ptr() + item, x.ptr() + i * item);
    }
    Graph<float> g(false);
    auto h = net.forward_embed(g, make_var(std::move(x)), Mode::Eval);
    std::copy(h->value.ptr(), h->value.ptr() + n * D, out.ptr() + start * D);
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,effective_rank,lr\n";
  for (const auto& m : history) {
    os << m.epoch << ',' << io::format_double(m.train_loss) << ',' << io::format_double(m.val_loss) << ','
       << io::format_double(m.effective_rank) << ',' << io::format_double(m.lr) << '\n';
  }
  return os.str();
}

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,train_loss,val_loss,effective_rank,lr") {
    throw IoError("metrics.csv: unexpected header");
  }
  std::vector<EpochMetrics> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != 5) throw IoError("metrics.csv: wrong column count");
    EpochMetrics m;
    double* dst[4] = {&m.train_loss, &m.val_loss, &m.effective_rank, &m.lr};
    m.epoch = std::stoi(f[0]);
    for (int k = 0; k < 4; ++k) {
      auto res = std::from_chars(f[k + 1].data(), f[k + 1].data() + f[k + 1].size(), *dst[k]);
      if (res.ec != std::errc()) throw IoError("metrics.csv: malformed number");
    }
    out.push_back(m);
  }
  return out;
}

namespace {

constexpr std::uint64_t kValidationEpochKey = 0xFFFFFFFFULL;

struct ValidationData {
  std::vector<PairBatch> batches;  // augmented, identical every epoch
  std::vector<const SegmentRecord*> segments;
};

ValidationData prepare_validation(const Corpus& corpus, const PretrainSetup& setup) {
  ValidationData v;
  PairSampler sampler(corpus, Split::Val);
  v.segments = corpus.split_segments(Split::Val);
  const int n_pairs = std::min<int>(setup.train.batch_pairs, static_cast<int>(sampler.n_participants()));
  if (n_pairs < 2) return v;
  const int n_batches = std::min(setup.train.max_val_batches, batches_per_epoch(sampler, n_pairs));
  for (int b = 0; b < n_batches; ++b) {
    Rng rng = make_rng({setup.train.seed, kValidationEpochKey, static_cast<std::uint64_t>(b), 0});
    PairBatch batch = sampler.sample(setup.train.pair_mode, n_pairs, rng);
    augment_pair_batch(batch, setup.augmentation, setup.train.seed, kValidationEpochKey, static_cast<std::uint64_t>(b));
    v.batches.push_back(std::move(batch));
  }
  return v;
}

EpochMetrics evaluate_epoch(TrainState& state, const PretrainSetup& setup, const ValidationData& val) {
  EpochMetrics m;
  if (!val.batches.empty()) {
    double total = 0;
    for (const auto& b : val.batches) total += validation_loss(state, setup, b);
    m.val_loss = total / static_cast<double>(val.batches.size());
  } else {
    m.val_loss = std::numeric_limits<double>::quiet_NaN();
  }
  if (val.segments.size() >= static_cast<std::size_t>(setup.train.ser_batch)) {
    const Tensor<float> emb = embed_segments(*state.online, val.segments);
    Eigen::MatrixXd H = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                            emb.ptr(), static_cast<Eigen::Index>(emb.dim(0)), static_cast<Eigen::Index>(emb.dim(1)))
                            .cast<double>();
    m.effective_rank = mean_smooth_effective_rank(H, static_cast<std::size_t>(setup.train.ser_batch),
                                                  derive_seed({setup.train.seed, 0x5E4ULL}));
  } else {
    m.effective_rank = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace

PretrainResult run_pretraining(const Corpus& corpus, const PretrainSetup& setup, const PretrainOptions& options) {
  const std::size_t length = corpus.config.modality.segment_length();
  setup.validate(length);
  if (setup.encoder.in_channels != corpus.config.modality.channels) {
    throw ValidationError("encoder expects " + std::to_string(setup.encoder.in_channels) + " channels, corpus has " +
                          std::to_string(corpus.config.modality.channels));
  }
  PairSampler sampler(corpus, Split::Train);
  if (sampler.n_participants() < static_cast<std::size_t>(setup.train.batch_pairs)) {
    throw ValidationError("train split has " + std::to_string(sampler.n_participants()) +
                          " participants, fewer than batch_pairs = " + std::to_string(setup.train.batch_pairs));
  }

  PretrainResult result;
  const bool persist = !options.out_dir.empty();
  if (persist) std::filesystem::create_directories(options.out_dir);
  if (options.resume_from) {
    const auto& from = *options.resume_from;
    result.state = restore_state(load_checkpoint(from), setup);
    // Earlier rows come from the output directory, or from the run the checkpoint belongs to.
    for (const auto& csv : {options.out_dir / "metrics.csv", from.parent_path() / "metrics.csv"}) {
      if (csv.empty() || csv == "metrics.csv" || !std::filesystem::exists(csv)) continue;
      for (const auto& m : parse_metrics_csv(io::read_text(csv))) {
        if (m.epoch < result.state.epoch) result.history.push_back(m);
      }
      break;
    }
    if (static_cast<int>(result.history.size()) != result.state.epoch) result.history.clear();
  } else {
    result.state = init_state(setup);
  }
  TrainState& state = result.state;

  const ValidationData val = prepare_validation(corpus, setup);
  const LrSchedule schedule = setup.train.schedule();
  const int n_batches = batches_per_epoch(sampler, setup.train.batch_pairs);
  int ran = 0;
  while (state.epoch < setup.train.epochs) {
    if (options.stop_after_epochs && ran >= *options.stop_after_epochs) break;
    const int epoch = state.epoch;
    const double lr = schedule.at(epoch);
    double total = 0;
    for (int b = 0; b < n_batches; ++b) {
      const auto e = static_cast<std::uint64_t>(epoch), bi = static_cast<std::uint64_t>(b);
      Rng rng = make_rng({setup.train.seed, e, bi, 0});
      PairBatch batch = sampler.sample(setup.train.pair_mode, setup.train.batch_pairs, rng);
      augment_pair_batch(batch, setup.augmentation, setup.train.seed, e, bi);
      total += train_step(state, setup, batch, lr);
    }
    EpochMetrics m = evaluate_epoch(state, setup, val);
    m.epoch = epoch;
    m.train_loss = total / n_batches;
    m.lr = lr;
    result.history.push_back(m);
    state.epoch = epoch + 1;
    ++ran;
    const bool improved = std::isfinite(m.val_loss) && m.val_loss < state.best_val_loss;
    if (improved) state.best_val_loss = m.val_loss;
    if (persist) {
      const Checkpoint ckpt = make_checkpoint(state, setup, corpus.config.modality);
      save_checkpoint(ckpt, options.out_dir / "last");
      if (improved) save_checkpoint(ckpt, options.out_dir / "best");
      io::write_atomic(options.out_dir / "metrics.csv", metrics_csv(result.history));
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  if (persist && state.epoch >= setup.train.epochs) {
    save_checkpoint(make_checkpoint(state, setup, corpus.config.modality), options.out_dir / "final");
  }
  return result;
}

}  // namespace biofm
