#include "biofm/objective.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

#include "biofm/ops.hpp"

namespace biofm {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw ValidationError("loss.temperature must be > 0");
  if (!(koleo_weight >= 0.0)) throw ValidationError("loss.koleo_weight must be >= 0");
  if (!(koleo_eps > 0.0)) throw ValidationError("loss.koleo_eps must be > 0");
}

namespace loss {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
void require_pair(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->value.rank() != 2 || !a->value.same_shape(b->value)) {
    throw ShapeError(std::string(op) + ": inputs must be matching [N,D], got " +
                     shape_str(a->value.shape()) + " and " + shape_str(b->value.shape()));
  }
}

// Loss on already-normalized rows.
template <typename T>
Var<T> infonce_unit(Graph<T>& g, const Var<T>& a, const Var<T>& b, double temperature) {
  const std::size_t N = a->value.dim(0), D = a->value.dim(1);
  const RowMat<double> A = CMap<T>(a->value.ptr(), N, D).template cast<double>();
  const RowMat<double> Bm = CMap<T>(b->value.ptr(), N, D).template cast<double>();
  const RowMat<double> S = (A * Bm.transpose()) / temperature;
  // Softmax over the negatives of each row; the diagonal entry stays zero.
  RowMat<double> P = RowMat<double>::Zero(N, N);
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < N; ++j)
      if (j != i) mx = std::max(mx, S(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < N; ++j)
      if (j != i) z += std::exp(S(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < N; ++j)
      if (j != i) P(i, j) = std::exp(S(i, j) - lse);
    total += lse - S(i, i);
  }
  const double value = total / static_cast<double>(N);
  const bool needs = Graph<T>::any_requires_grad({&a, &b});
  return g.record(Tensor<T>({1}, static_cast<T>(value)), needs, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      const double scale = static_cast<double>(dy[0]) / static_cast<double>(N);
      RowMat<double> dS = P;
      dS.diagonal().array() -= 1.0;
      dS *= scale / temperature;
      if (a->requires_grad) {
        Map<T>(a->ensure_grad().ptr(), N, D) += (dS * Bm).template cast<T>();
      }
      if (b->requires_grad) {
        Map<T>(b->ensure_grad().ptr(), N, D) += (dS.transpose() * A).template cast<T>();
      }
    };
  });
}

template <typename T>
Var<T> koleo_unit(Graph<T>& g, const Var<T>& u, double eps) {
  const std::size_t N = u->value.dim(0), D = u->value.dim(1);
  const RowMat<double> U = CMap<T>(u->value.ptr(), N, D).template cast<double>();
  std::vector<std::size_t> nearest(N);
  std::vector<double> dist(N);
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < N; ++j) {
      if (j == i) continue;
      const double d2 = (U.row(i) - U.row(j)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    nearest[i] = arg;
    dist[i] = best + eps;
    total += std::log(dist[i]);
  }
  const double value = -total / static_cast<double>(N);
  return g.record(Tensor<T>({1}, static_cast<T>(value)), u->requires_grad, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      const double scale = static_cast<double>(dy[0]) / static_cast<double>(N);
      RowMat<double> dU = RowMat<double>::Zero(N, D);
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t j = nearest[i];
        const auto diff = (U.row(i) - U.row(j)).eval();
        const double c = -scale * 2.0 / dist[i];
        dU.row(i) += c * diff;
        dU.row(j) -= c * diff;
      }
      Map<T>(u->ensure_grad().ptr(), N, D) += dU.template cast<T>();
    };
  });
}

template <typename T>
Var<T> byol_unit(Graph<T>& g, const Var<T>& p, const Var<T>& t) {
  const std::size_t N = p->value.dim(0), D = p->value.dim(1);
  double dots = 0.0;
  for (std::size_t k = 0; k < N * D; ++k) dots += static_cast<double>(p->value[k]) * t->value[k];
  const double value = 2.0 - 2.0 * dots / static_cast<double>(N);
  return g.record(Tensor<T>({1}, static_cast<T>(value)), p->requires_grad, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      const T c = static_cast<T>(-2.0 * static_cast<double>(dy[0]) / static_cast<double>(N));
      Tensor<T>& dp = p->ensure_grad();
      for (std::size_t k = 0; k < N * D; ++k) dp[k] += c * t->value[k];
    };
  });
}

}  // namespace

template <typename T>
Var<T> infonce(Graph<T>& g, const Var<T>& anchors, const Var<T>& positives, double temperature) {
  require_pair(anchors, positives, "infonce");
  if (anchors->value.dim(0) < 2) throw ValidationError("infonce: needs N >= 2 pairs");
  if (!(temperature > 0.0)) throw ValidationError("infonce: temperature must be > 0");
  return infonce_unit(g, ops::l2_normalize_rows(g, anchors), ops::l2_normalize_rows(g, positives),
                      temperature);
}

template <typename T>
Var<T> koleo(Graph<T>& g, const Var<T>& h, double eps) {
  if (h->value.rank() != 2) throw ShapeError("koleo: input must be [N,D]");
  if (h->value.dim(0) < 2) throw ValidationError("koleo: needs N >= 2 rows");
  return koleo_unit(g, ops::l2_normalize_rows(g, h), eps);
}

template <typename T>
Var<T> byol(Graph<T>& g, const Var<T>& pred, const Var<T>& target) {
  require_pair(pred, target, "byol_loss");
  if (target->requires_grad) throw Error("byol_loss: target must be stop-gradient");
  return byol_unit(g, ops::l2_normalize_rows(g, pred), ops::l2_normalize_rows(g, target));
}

template <typename T>
Var<T> combined(Graph<T>& g, const Var<T>& h1, const Var<T>& h2, const Var<T>& h1_m,
                const Var<T>& h2_m, const LossConfig& cfg) {
  if (h1_m->requires_grad || h2_m->requires_grad) {
    throw Error("combined_loss: momentum inputs must be stop-gradient");
  }
  require_pair(h1, h2, "combined_loss");
  require_pair(h1, h1_m, "combined_loss");
  require_pair(h2, h2_m, "combined_loss");
  const T half = static_cast<T>(cfg.eq3_halving ? 0.5 : 1.0);
  Var<T> contrastive = ops::scale(g,
                                  ops::add(g, infonce(g, h1, h2_m, cfg.temperature),
                                           infonce(g, h2, h1_m, cfg.temperature)),
                                  half);
  if (cfg.koleo_weight == 0.0) return contrastive;
  Var<T> reg = ops::add(g, koleo(g, h1, cfg.koleo_eps), koleo(g, h2, cfg.koleo_eps));
  return ops::add(g, contrastive, ops::scale(g, reg, static_cast<T>(cfg.koleo_weight) * half));
}

#define BIOFM_INSTANTIATE_LOSSES(T)                                                   \
  template Var<T> infonce(Graph<T>&, const Var<T>&, const Var<T>&, double);           \
  template Var<T> koleo(Graph<T>&, const Var<T>&, double);                            \
  template Var<T> byol(Graph<T>&, const Var<T>&, const Var<T>&);                      \
  template Var<T> combined(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&,    \
                           const Var<T>&, const LossConfig&);

BIOFM_INSTANTIATE_LOSSES(float)
BIOFM_INSTANTIATE_LOSSES(double)

}  // namespace loss
}  // namespace biofm
