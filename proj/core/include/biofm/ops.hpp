#pragma once

#include "biofm/autodiff.hpp"

namespace biofm {

enum class Mode { Train, Eval };

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Differentiable primitives. Shapes are validated and reported as ShapeError.
namespace ops {

// Cross-correlation with zero padding. x: [B, C_in, L], weight: [C_out, C_in/groups, K],
// bias: [C_out] or null. Output length floor((L + 2*padding - K) / stride) + 1.
template <typename T>
Var<T> conv1d(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              int stride = 1, int padding = 0, int groups = 1);

// Per-channel normalization over (B, L) for [B, C, L], or over B for [B, C].
// Train mode uses batch statistics and updates `stats` when non-null; eval mode
// requires `stats`.
template <typename T>
Var<T> batchnorm1d(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   BatchNormStats<T>* stats, Mode mode, double momentum = kBatchNormMomentum,
                   double eps = kBatchNormEps);

// x: [B, D_in], weight: [D_out, D_in], bias: [D_out] or null.
template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> sigmoid(Graph<T>& g, const Var<T>& x);
template <typename T>
Var<T> swish(Graph<T>& g, const Var<T>& x);
template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& x, T factor);

// x: [B, C, L] times gate: [B, C], broadcast along L.
template <typename T>
Var<T> scale_channels(Graph<T>& g, const Var<T>& x, const Var<T>& gate);

// [B, C, L] -> [B, C]
template <typename T>
Var<T> global_avg_pool1d(Graph<T>& g, const Var<T>& x);

// Rows divided by max(||row||, eps).
template <typename T>
Var<T> l2_normalize_rows(Graph<T>& g, const Var<T>& x, double eps = 1e-12);

template <typename T>
Var<T> sum(Graph<T>& g, const Var<T>& x);
template <typename T>
Var<T> mean(Graph<T>& g, const Var<T>& x);

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace ops
}  // namespace biofm
