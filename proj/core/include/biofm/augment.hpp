#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "biofm/rng.hpp"
#include "biofm/tensor.hpp"

namespace biofm {

enum class AugmentationKind { CutOut, MagnitudeWarp, GaussianNoise, ChannelPermute, TimeWarp };

// Application order of the cascade.
inline constexpr std::array<AugmentationKind, 5> kAugmentationOrder = {
    AugmentationKind::CutOut, AugmentationKind::MagnitudeWarp, AugmentationKind::GaussianNoise,
    AugmentationKind::ChannelPermute, AugmentationKind::TimeWarp};

std::string to_string(AugmentationKind kind);
AugmentationKind augmentation_from_string(const std::string& name);

struct AugmentationParams {
  double cut_out_min_fraction = 0.1;
  double cut_out_max_fraction = 0.5;
  double noise_min_sigma = 0.05;
  double noise_max_sigma = 0.25;
  int magnitude_knots = 4;
  double magnitude_sigma = 0.2;
  int time_knots = 4;
  double time_sigma = 0.1;
  int time_warp_retries = 10;
};

struct AugmentationEntry {
  AugmentationKind kind;
  double probability;
};

struct AugmentationPolicy {
  std::vector<AugmentationEntry> entries;  // kept in kAugmentationOrder
  AugmentationParams params;

  static AugmentationPolicy ppg_default();
  static AugmentationPolicy ecg_default();
  // One augmentation applied with probability 1.
  static AugmentationPolicy isolated(AugmentationKind kind, const AugmentationParams& params = {});
  static AugmentationPolicy none();

  // Probabilities in [0,1], no duplicates, order sorted into the cascade order.
  void validate(std::size_t channels) const;
};

// Segments are [C, L] float tensors.
using Segment = Tensor<float>;

namespace augment {

// Draws Bernoulli(p) per entry in order and applies the ones that fire.
Segment apply_policy(const Segment& segment, const AugmentationPolicy& policy, Rng& rng);

// Zeroes samples [start, start + length) on every channel.
Segment cut_out_window(const Segment& segment, std::size_t start, std::size_t length);
Segment cut_out(const Segment& segment, const AugmentationParams& params, Rng& rng);

Segment add_gaussian_noise(const Segment& segment, double sigma, Rng& rng);
Segment gaussian_noise(const Segment& segment, const AugmentationParams& params, Rng& rng);

// Knot i sits at time i * (L - 1) / (k - 1); the curve is a natural cubic spline
// through the knot values, shared by all channels.
std::vector<double> magnitude_curve(std::size_t length, const std::vector<double>& knot_values);
Segment magnitude_warp_with_knots(const Segment& segment, const std::vector<double>& knot_values);
Segment magnitude_warp(const Segment& segment, const AugmentationParams& params, Rng& rng);

// Time remapping: endpoints fixed, `offsets.size()` interior knots evenly spaced,
// each shifted by offset * knot spacing, cubic-spline interpolated. Returns
// nullopt if the result is not strictly increasing.
std::optional<std::vector<double>> time_warp_map(std::size_t length, const std::vector<double>& offsets);
Segment resample(const Segment& segment, const std::vector<double>& positions);
Segment time_warp_with_offsets(const Segment& segment, const std::vector<double>& offsets);
Segment time_warp(const Segment& segment, const AugmentationParams& params, Rng& rng);

Segment permute_channels(const Segment& segment, const std::vector<std::size_t>& permutation);
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);
Segment channel_permute(const Segment& segment, Rng& rng);

// Natural cubic spline through (xs[i], ys[i]) evaluated at `at`; xs strictly increasing.
std::vector<double> natural_cubic_spline(const std::vector<double>& xs, const std::vector<double>& ys,
                                         const std::vector<double>& at);

}  // namespace augment
}  // namespace biofm
