#pragma once

#include "biofm/autodiff.hpp"

namespace biofm {

struct LossConfig {
  double temperature = 0.04;
  double koleo_weight = 0.1;
  double koleo_eps = 1e-8;
  // true: 1/2 and lambda/2 weights of the combined objective; false: the
  // unhalved sum used by the reference pseudocode.
  bool eq3_halving = true;

  void validate() const;
};

namespace loss {

// Contrastive loss over cosine similarities with the positive excluded from the
// denominator:
//   -(1/N) sum_i [ s_ii / t - log sum_{j != i} exp(s_ij / t) ]
// Rows of both inputs are l2-normalized internally. N >= 2.
template <typename T>
Var<T> infonce(Graph<T>& g, const Var<T>& anchors, const Var<T>& positives, double temperature);

// -(1/N) sum_i log(min_{j != i} ||u_i - u_j||^2 + eps), u = normalized rows.
template <typename T>
Var<T> koleo(Graph<T>& g, const Var<T>& h, double eps = 1e-8);

// (1/N) sum_i [2 - 2 cos(pred_i, target_i)]. `target` must not require grad.
template <typename T>
Var<T> byol(Graph<T>& g, const Var<T>& pred, const Var<T>& target);

// Online projections h1, h2 against stop-gradient momentum projections h1_m, h2_m.
// Throws Error if either momentum input requires grad.
template <typename T>
Var<T> combined(Graph<T>& g, const Var<T>& h1, const Var<T>& h2, const Var<T>& h1_m,
                const Var<T>& h2_m, const LossConfig& cfg);

}  // namespace loss
}  // namespace biofm
