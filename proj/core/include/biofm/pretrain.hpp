#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biofm/augment.hpp"
#include "biofm/corpus.hpp"
#include "biofm/encoder.hpp"
#include "biofm/objective.hpp"
#include "biofm/optim.hpp"

namespace biofm {

enum class Framework { Ours, OursNoKoleo, SimClr, Byol };
enum class PairMode { Participant, Segment };

std::string to_string(Framework f);
std::string to_string(PairMode p);
Framework framework_from_string(const std::string& s);
PairMode pair_mode_from_string(const std::string& s);

struct TrainConfig {
  Framework framework = Framework::Ours;
  PairMode pair_mode = PairMode::Participant;
  int batch_pairs = 64;
  double momentum_rate = 0.99;
  std::optional<double> lr;  // unset: 1e-3, or 2.5e-4 for byol
  AdamConfig adam;
  int lr_step_epochs = 0;  // 0: max(1, epochs / 3)
  double lr_step_factor = 0.5;
  int epochs = 10;
  std::uint64_t seed = 0;
  int ser_batch = 64;
  int max_val_batches = 8;

  double resolved_lr() const;
  int resolved_step_epochs() const;
  LrSchedule schedule() const { return {resolved_lr(), resolved_step_epochs(), lr_step_factor}; }
  bool uses_momentum() const { return framework != Framework::SimClr; }
  void validate() const;
};

// Everything a run needs besides data.
struct PretrainSetup {
  EncoderConfig encoder;
  HeadConfig head;
  LossConfig loss;
  TrainConfig train;
  AugmentationPolicy augmentation;

  // Loss settings after framework-specific overrides (koleo off unless `ours`).
  LossConfig effective_loss() const;
  void validate(std::size_t input_length) const;
};

// Positive pairs drawn from one split. Participant mode pairs two distinct
// segments of one participant; segment mode pairs a segment with itself.
// Within a batch every participant appears at most once.
struct PairBatch {
  Tensor<float> x1, x2;  // [N, C, L]
  std::vector<int> participants;
  std::vector<int> segments1, segments2;
};

class PairSampler {
 public:
  PairSampler(const Corpus& corpus, Split split);
  PairBatch sample(PairMode mode, int n_pairs, Rng& rng) const;
  std::size_t n_participants() const { return by_participant_.size(); }
  std::size_t n_segments() const { return n_segments_; }

 private:
  const Corpus* corpus_;
  std::vector<int> participant_ids_;
  std::vector<std::vector<int>> by_participant_;
  std::size_t n_segments_ = 0;
};

// Applies the policy to every item; the stream of item i of view v is keyed by
// (seed, epoch, batch, v, i) so it does not depend on anything else in the run.
void augment_pair_batch(PairBatch& batch, const AugmentationPolicy& policy, std::uint64_t seed,
                        std::uint64_t epoch, std::uint64_t batch_index);

struct TrainState {
  std::unique_ptr<Network<float>> online;
  std::unique_ptr<Network<float>> momentum;  // null for simclr
  std::unique_ptr<Adam<float>> adam;
  int epoch = 0;  // next epoch to run
  long long step = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

// Online and momentum networks start from identical weights.
TrainState init_state(const PretrainSetup& setup);

// One optimization step on an augmented batch. Throws NumericError on a
// non-finite loss or activation, before any parameter is modified.
double train_step(TrainState& state, const PretrainSetup& setup, const PairBatch& augmented,
                  double lr);

// Loss of the framework on an augmented batch with all networks in eval mode.
double validation_loss(TrainState& state, const PretrainSetup& setup, const PairBatch& augmented);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double effective_rank = 0;
  double lr = 0;
};

struct PretrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  // Checkpoint directory to continue from; its epoch counter is kept.
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const EpochMetrics&)> on_epoch;
  // Stops after this many epochs of the current invocation (used by resume tests).
  std::optional<int> stop_after_epochs;
};

struct PretrainResult {
  TrainState state;
  std::vector<EpochMetrics> history;
};

int batches_per_epoch(const PairSampler& sampler, int batch_pairs);

PretrainResult run_pretraining(const Corpus& corpus, const PretrainSetup& setup,
                               const PretrainOptions& options = {});

// Writes epoch,train_loss,val_loss,effective_rank,lr.
std::string metrics_csv(const std::vector<EpochMetrics>& history);
std::vector<EpochMetrics> parse_metrics_csv(const std::string& text);

// Embeddings [N, D] of the given segments in eval mode.
Tensor<float> embed_segments(Network<float>& net, const std::vector<const SegmentRecord*>& segments,
                             std::size_t batch_size = 128);

}  // namespace biofm
