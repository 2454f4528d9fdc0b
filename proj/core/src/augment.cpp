#include "biofm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace biofm {

std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::CutOut: return "cut_out";
    case AugmentationKind::MagnitudeWarp: return "magnitude_warp";
    case AugmentationKind::GaussianNoise: return "gaussian_noise";
    case AugmentationKind::ChannelPermute: return "channel_permute";
    case AugmentationKind::TimeWarp: return "time_warp";
  }
  return "unknown";
}

AugmentationKind augmentation_from_string(const std::string& name) {
  for (AugmentationKind k : kAugmentationOrder)
    if (to_string(k) == name) return k;
  throw ValidationError("unknown augmentation kind '" + name + "'");
}

AugmentationPolicy AugmentationPolicy::ppg_default() {
  return {{{AugmentationKind::CutOut, 0.4},
           {AugmentationKind::MagnitudeWarp, 0.25},
           {AugmentationKind::GaussianNoise, 0.25},
           {AugmentationKind::ChannelPermute, 0.25},
           {AugmentationKind::TimeWarp, 0.15}},
          {}};
}

AugmentationPolicy AugmentationPolicy::ecg_default() {
  return {{{AugmentationKind::CutOut, 0.8},
           {AugmentationKind::MagnitudeWarp, 0.5},
           {AugmentationKind::GaussianNoise, 0.5},
           {AugmentationKind::TimeWarp, 0.3}},
          {}};
}

AugmentationPolicy AugmentationPolicy::isolated(AugmentationKind kind, const AugmentationParams& params) {
  return {{{kind, 1.0}}, params};
}

AugmentationPolicy AugmentationPolicy::none() { return {}; }

void AugmentationPolicy::validate(std::size_t channels) const {
  auto rank = [](AugmentationKind k) {
    return std::find(kAugmentationOrder.begin(), kAugmentationOrder.end(), k) - kAugmentationOrder.begin();
  };
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!(e.probability >= 0.0 && e.probability <= 1.0)) {
      throw ValidationError("augmentation " + to_string(e.kind) + ": probability must be in [0,1]");
    }
    if (i > 0 && rank(entries[i - 1].kind) >= rank(e.kind)) {
      throw ValidationError("augmentation entries must be unique and in cascade order "
                            "(cut_out, magnitude_warp, gaussian_noise, channel_permute, time_warp)");
    }
    if (e.kind == AugmentationKind::ChannelPermute && channels < 2) {
      throw ValidationError("channel_permute needs at least 2 channels; omit it for 1-channel signals");
    }
  }
  const auto& p = params;
  if (!(p.cut_out_min_fraction > 0 && p.cut_out_min_fraction <= p.cut_out_max_fraction &&
        p.cut_out_max_fraction < 1)) {
    throw ValidationError("cut_out window fraction range must lie inside (0,1)");
  }
  if (!(p.noise_min_sigma > 0 && p.noise_min_sigma <= p.noise_max_sigma)) {
    throw ValidationError("gaussian_noise sigma range must be positive");
  }
  if (p.magnitude_knots < 3) throw ValidationError("magnitude_warp needs >= 3 knots");
  if (p.time_knots < 1) throw ValidationError("time_warp needs >= 1 interior knot");
  if (p.magnitude_sigma < 0 || p.time_sigma < 0) throw ValidationError("warp sigma must be >= 0");
}

namespace augment {

std::vector<double> natural_cubic_spline(const std::vector<double>& xs, const std::vector<double>& ys,
                                         const std::vector<double>& at) {
  const std::size_t n = xs.size();
  if (n < 2 || ys.size() != n) throw ValidationError("spline needs >= 2 matching knots");
  // Second derivatives via the tridiagonal system with M_0 = M_{n-1} = 0.
  std::vector<double> M(n, 0.0);
  if (n > 2) {
    std::vector<double> diag(n - 2), upper(n - 2), rhs(n - 2);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs[i] - xs[i - 1], h1 = xs[i + 1] - xs[i];
      diag[i - 1] = 2.0 * (h0 + h1);
      upper[i - 1] = h1;
      rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
    }
    // Thomas algorithm; the lower diagonal equals the previous row's upper term h_i.
    for (std::size_t i = 1; i < n - 2; ++i) {
      const double lower = xs[i + 1] - xs[i];
      const double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i-- > 0;) {
      const double next = (i + 1 < n - 2) ? M[i + 2] : 0.0;
      M[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
  }
  std::vector<double> out(at.size());
  for (std::size_t q = 0; q < at.size(); ++q) {
    const double x = at[q];
    std::size_t seg = static_cast<std::size_t>(
        std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    seg = std::clamp<std::size_t>(seg, 1, n - 1) - 1;
    const double h = xs[seg + 1] - xs[seg];
    const double a = (xs[seg + 1] - x) / h, b = (x - xs[seg]) / h;
    out[q] = a * ys[seg] + b * ys[seg + 1] +
             ((a * a * a - a) * M[seg] + (b * b * b - b) * M[seg + 1]) * h * h / 6.0;
  }
  return out;
}

namespace {

std::vector<double> index_grid(std::size_t length) {
  std::vector<double> at(length);
  std::iota(at.begin(), at.end(), 0.0);
  return at;
}

}  // namespace

Segment cut_out_window(const Segment& segment, std::size_t start, std::size_t length) {
  Segment out = segment;
  const std::size_t C = segment.dim(0), L = segment.dim(1);
  const std::size_t end = std::min(L, start + length);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = std::min(start, L); t < end; ++t) out.at(c, t) = 0.0f;
  return out;
}

Segment cut_out(const Segment& segment, const AugmentationParams& params, Rng& rng) {
  const std::size_t L = segment.dim(1);
  const double frac = uniform(rng, params.cut_out_min_fraction, params.cut_out_max_fraction);
  const std::size_t len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * L)));
  const std::size_t start = std::uniform_int_distribution<std::size_t>(0, L - len)(rng);
  return cut_out_window(segment, start, len);
}

Segment add_gaussian_noise(const Segment& segment, double sigma, Rng& rng) {
  Segment out = segment;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> dist(0.0, sigma);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(out[i] + dist(rng));
  return out;
}

Segment gaussian_noise(const Segment& segment, const AugmentationParams& params, Rng& rng) {
  return add_gaussian_noise(segment, uniform(rng, params.noise_min_sigma, params.noise_max_sigma), rng);
}

std::vector<double> magnitude_curve(std::size_t length, const std::vector<double>& knot_values) {
  const std::size_t k = knot_values.size();
  if (k < 2) throw ValidationError("magnitude_warp needs >= 2 knot values");
  std::vector<double> xs(k);
  for (std::size_t i = 0; i < k; ++i)
    xs[i] = static_cast<double>(i) * static_cast<double>(length - 1) / static_cast<double>(k - 1);
  return natural_cubic_spline(xs, knot_values, index_grid(length));
}

Segment magnitude_warp_with_knots(const Segment& segment, const std::vector<double>& knot_values) {
  const std::size_t C = segment.dim(0), L = segment.dim(1);
  const std::vector<double> curve = magnitude_curve(L, knot_values);
  Segment out = segment;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < L; ++t) out.at(c, t) = static_cast<float>(segment.at(c, t) * curve[t]);
  return out;
}

Segment magnitude_warp(const Segment& segment, const AugmentationParams& params, Rng& rng) {
  std::vector<double> knots(static_cast<std::size_t>(params.magnitude_knots));
  for (double& v : knots) v = normal(rng, 1.0, params.magnitude_sigma);
  return magnitude_warp_with_knots(segment, knots);
}

std::optional<std::vector<double>> time_warp_map(std::size_t length, const std::vector<double>& offsets) {
  const std::size_t interior = offsets.size();
  const double span = static_cast<double>(length - 1);
  const double spacing = span / static_cast<double>(interior + 1);
  std::vector<double> xs(interior + 2), ys(interior + 2);
  for (std::size_t i = 0; i < interior + 2; ++i) {
    xs[i] = spacing * static_cast<double>(i);
    ys[i] = xs[i];
  }
  xs.back() = ys.back() = span;
  for (std::size_t i = 0; i < interior; ++i) ys[i + 1] += offsets[i] * spacing;
  std::vector<double> map = natural_cubic_spline(xs, ys, index_grid(length));
  for (std::size_t t = 1; t < length; ++t)
    if (!(map[t] > map[t - 1])) return std::nullopt;
  for (double& v : map) v = std::clamp(v, 0.0, span);
  return map;
}

Segment resample(const Segment& segment, const std::vector<double>& positions) {
  const std::size_t C = segment.dim(0), L = segment.dim(1);
  Segment out({C, positions.size()});
  for (std::size_t t = 0; t < positions.size(); ++t) {
    const double p = std::clamp(positions[t], 0.0, static_cast<double>(L - 1));
    const std::size_t i0 = static_cast<std::size_t>(std::floor(p));
    const std::size_t i1 = std::min(i0 + 1, L - 1);
    const double w = p - static_cast<double>(i0);
    for (std::size_t c = 0; c < C; ++c) {
      out.at(c, t) = static_cast<float>((1.0 - w) * segment.at(c, i0) + w * segment.at(c, i1));
    }
  }
  return out;
}

Segment time_warp_with_offsets(const Segment& segment, const std::vector<double>& offsets) {
  auto map = time_warp_map(segment.dim(1), offsets);
  if (!map) throw NumericError("time_warp: perturbed remapping is not monotone");
  return resample(segment, *map);
}

Segment time_warp(const Segment& segment, const AugmentationParams& params, Rng& rng) {
  for (int attempt = 0; attempt <= params.time_warp_retries; ++attempt) {
    std::vector<double> offsets(static_cast<std::size_t>(params.time_knots));
    for (double& o : offsets) o = normal(rng, 0.0, params.time_sigma);
    if (auto map = time_warp_map(segment.dim(1), offsets)) return resample(segment, *map);
  }
  throw NumericError("time_warp: no monotone remapping after " +
                     std::to_string(params.time_warp_retries + 1) + " draws");
}

Segment permute_channels(const Segment& segment, const std::vector<std::size_t>& permutation) {
  const std::size_t C = segment.dim(0), L = segment.dim(1);
  if (permutation.size() != C) throw ValidationError("channel permutation has wrong length");
  Segment out(segment.shape());
  for (std::size_t c = 0; c < C; ++c) {
    if (permutation[c] >= C) throw ValidationError("channel permutation index out of range");
    std::copy_n(segment.ptr() + permutation[c] * L, L, out.ptr() + c * L);
  }
  return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

Segment channel_permute(const Segment& segment, Rng& rng) {
  if (segment.dim(0) < 2) throw ValidationError("channel_permute needs at least 2 channels");
  return permute_channels(segment, random_permutation(segment.dim(0), rng));
}

Segment apply_policy(const Segment& segment, const AugmentationPolicy& policy, Rng& rng) {
  if (segment.rank() != 2) throw ShapeError("augmentation input must be [C,L]");
  if (segment.dim(1) < 16) throw ValidationError("augmentation needs segments of length >= 16");
  Segment out = segment;
  for (const auto& e : policy.entries) {
    if (!bernoulli(rng, e.probability)) continue;
    switch (e.kind) {
      case AugmentationKind::CutOut: out = cut_out(out, policy.params, rng); break;
      case AugmentationKind::MagnitudeWarp: out = magnitude_warp(out, policy.params, rng); break;
      case AugmentationKind::GaussianNoise: out = gaussian_noise(out, policy.params, rng); break;
      case AugmentationKind::ChannelPermute: out = channel_permute(out, rng); break;
      case AugmentationKind::TimeWarp: out = time_warp(out, policy.params, rng); break;
    }
  }
  return out;
}

}  // namespace augment
}  // namespace biofm
