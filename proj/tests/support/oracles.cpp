#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace oracle {

namespace {

template <typename T>
Mat to_mat_impl(const biofm::Tensor<T>& t) {
  if (t.rank() != 2) throw std::invalid_argument("to_mat needs a matrix");
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = static_cast<double>(t.at(i, j));
  return m;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec normalized(const Vec& v) {
  const double n = std::sqrt(dot(v, v));
  Vec out(v);
  if (n > 0)
    for (double& x : out) x /= n;
  return out;
}

double cosine(const Vec& a, const Vec& b) { return dot(normalized(a), normalized(b)); }

}  // namespace

Mat to_mat(const biofm::Tensor<double>& t) { return to_mat_impl(t); }
Mat to_mat(const biofm::Tensor<float>& t) { return to_mat_impl(t); }

Mat random_mat(std::size_t rows, std::size_t cols, biofm::Rng& rng, double stddev) {
  Mat m(rows, Vec(cols));
  for (auto& r : m)
    for (double& v : r) v = biofm::normal(rng, 0.0, stddev);
  return m;
}

Vec conv1d(const Vec& x, std::size_t B, std::size_t Cin, std::size_t L, const Vec& w, std::size_t Cout,
           std::size_t K, const Vec* bias, int stride, int padding, int groups) {
  const std::size_t cin_g = Cin / groups, cout_g = Cout / groups;
  const long Lout = (static_cast<long>(L) + 2 * padding - static_cast<long>(K)) / stride + 1;
  Vec out(B * Cout * Lout, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      const std::size_t g = co / cout_g;
      for (long t = 0; t < Lout; ++t) {
        double acc = bias ? (*bias)[co] : 0.0;
        for (std::size_t ci = 0; ci < cin_g; ++ci)
          for (std::size_t k = 0; k < K; ++k) {
            const long pos = t * stride + static_cast<long>(k) - padding;
            if (pos < 0 || pos >= static_cast<long>(L)) continue;
            acc += x[(b * Cin + g * cin_g + ci) * L + pos] * w[(co * cin_g + ci) * K + k];
          }
        out[(b * Cout + co) * Lout + t] = acc;
      }
    }
  return out;
}

Mat linear(const Mat& x, const Mat& w, const Vec* b) {
  Mat out(x.size(), Vec(w.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < w.size(); ++o) out[i][o] = dot(x[i], w[o]) + (b ? (*b)[o] : 0.0);
  return out;
}

double infonce(const Mat& a, const Mat& b, double tau) {
  const std::size_t n = a.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) denom += std::exp(cosine(a[i], b[j]) / tau);
    total += std::log(std::exp(cosine(a[i], b[i]) / tau) / denom);
  }
  return -total / static_cast<double>(n);
}

double koleo(const Mat& h, double eps) {
  const std::size_t n = h.size();
  std::vector<Vec> u;
  for (const auto& r : h) u.push_back(normalized(r));
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0;
      for (std::size_t k = 0; k < u[i].size(); ++k) d2 += (u[i][k] - u[j][k]) * (u[i][k] - u[j][k]);
      best = std::min(best, d2);
    }
    total += std::log(best + eps);
  }
  return -total / static_cast<double>(n);
}

double byol(const Mat& pred, const Mat& target) {
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += 2.0 - 2.0 * cosine(pred[i], target[i]);
  return total / static_cast<double>(pred.size());
}

double pairwise_auc(const Vec& scores, const std::vector<int>& labels) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

Vec jacobi_singular_values(Mat a) {
  // Rotate column pairs of A (m x n) until all columns are mutually orthogonal;
  // the column norms are then the singular values.
  const std::size_t m = a.size(), n = a.empty() ? 0 : a[0].size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += a[i][p] * a[i][p];
          beta += a[i][q] * a[i][q];
          gamma += a[i][p] * a[i][q];
        }
        if (gamma == 0) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
        const double c = 1 / std::sqrt(1 + t * t), s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = a[i][p], aq = a[i][q];
          a[i][p] = c * ap - s * aq;
          a[i][q] = s * ap + c * aq;
        }
      }
    if (off < 1e-15) break;
  }
  Vec sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < m; ++i) s += a[i][j] * a[i][j];
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.rbegin(), sv.rend());
  sv.resize(std::min(m, n));
  return sv;
}

double smooth_effective_rank(const Mat& h) {
  const Vec sv = jacobi_singular_values(h);
  double total = 0;
  for (double s : sv) total += s;
  double entropy = 0;
  for (double s : sv) {
    const double p = s / total;
    if (p > 0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

Ridge ridge_normal_equations(const Mat& x, const Vec& y, double alpha) {
  const std::size_t n = x.size(), d = x[0].size(), k = d + 1;
  // Augmented design [X, 1]; penalty on the first d coefficients only.
  Mat A(k, Vec(k + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    Vec row(x[i]);
    row.push_back(1.0);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) A[r][c] += row[r] * row[c];
      A[r][k] += row[r] * y[i];
    }
  }
  for (std::size_t r = 0; r < d; ++r) A[r][r] += alpha;
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col) continue;
      const double f = A[r][col] / A[col][col];
      for (std::size_t c = col; c <= k; ++c) A[r][c] -= f * A[col][c];
    }
  }
  Ridge out;
  for (std::size_t r = 0; r < d; ++r) out.w.push_back(A[r][k] / A[r][r]);
  out.b = A[d][k] / A[d][d];
  return out;
}

Vec dispersion(const Mat& h, const std::vector<int>& participant) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < participant.size(); ++i) groups[participant[i]].push_back(i);
  const std::size_t D = h[0].size();
  Vec out(D);
  for (std::size_t d = 0; d < D; ++d) {
    Vec means;
    double within = 0;
    for (const auto& [pid, rows] : groups) {
      double mu = 0;
      for (std::size_t r : rows) mu += h[r][d];
      mu /= static_cast<double>(rows.size());
      double var = 0;
      for (std::size_t r : rows) var += (h[r][d] - mu) * (h[r][d] - mu);
      within += var / static_cast<double>(rows.size());
      means.push_back(mu);
    }
    within /= static_cast<double>(groups.size());
    double grand = 0;
    for (double m : means) grand += m;
    grand /= static_cast<double>(means.size());
    double across = 0;
    for (double m : means) across += (m - grand) * (m - grand);
    across /= static_cast<double>(means.size());
    out[d] = across < 1e-12 ? std::numeric_limits<double>::infinity() : std::sqrt(within) / std::sqrt(across);
  }
  return out;
}

GradReport check_gradients(const LossBuilder& build, const std::vector<Leaf>& leaves, double h, double rtol,
                           double atol, std::size_t max_per_leaf) {
  for (const auto& l : leaves) l.var->grad = biofm::Tensor<double>();
  {
    biofm::Graph<double> g(true);
    auto loss = build(g);
    g.backward(loss);
  }
  GradReport rep;
  for (const auto& leaf : leaves) {
    auto& value = leaf.var->value;
    const biofm::Tensor<double> analytic =
        leaf.var->grad.empty() ? biofm::Tensor<double>(value.shape()) : leaf.var->grad;
    const std::size_t n = value.size();
    const std::size_t stride = (max_per_leaf == 0 || n <= max_per_leaf) ? 1 : n / max_per_leaf;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = value[i];
      value[i] = orig + h;
      double up, down;
      {
        biofm::Graph<double> g(false);
        up = build(g)->value[0];
      }
      value[i] = orig - h;
      {
        biofm::Graph<double> g(false);
        down = build(g)->value[0];
      }
      value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-300});
      ++rep.checked;
      const bool pass = rel < rtol || abs_err < atol;
      if (!pass) ++rep.failed;
      // Gradients below the absolute floor are not ranked, unless they fail.
      if ((!pass || std::max(std::abs(a), std::abs(numeric)) >= atol) && rel > rep.worst_rel) {
        rep.worst_rel = rel;
        rep.worst_where = leaf.name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                          std::to_string(numeric);
      }
    }
  }
  return rep;
}

}  // namespace oracle
