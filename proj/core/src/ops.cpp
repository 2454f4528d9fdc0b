#include "biofm/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace biofm::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op, const char* what) {
  require(v && v->value.rank() == rank, std::string(op) + ": " + what + " must have rank " +
                                            std::to_string(rank) + ", got " +
                                            (v ? shape_str(v->value.shape()) : "null"));
}

template <typename T>
bool grad_of(const Var<T>& v) {
  return v && v->requires_grad;
}

// col[(c*K + k), t] = x[c, t*stride + k - padding], zero outside [0, L).
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t length, std::size_t kernel,
            std::size_t stride, std::ptrdiff_t padding, std::size_t out_len, T* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * length;
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = col + (c * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - padding;
        row[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(length)) ? xc[src] : T{0};
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t length, std::size_t kernel,
                std::size_t stride, std::ptrdiff_t padding, std::size_t out_len, T* dx) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* dxc = dx + c * length;
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* row = col + (c * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - padding;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(length)) dxc[src] += row[t];
      }
    }
  }
}

// Output positions t whose tap k reads inside [0, L): t*stride + k - padding in range.
inline std::pair<std::size_t, std::size_t> valid_taps(std::size_t k, std::size_t stride, std::ptrdiff_t padding,
                                                      std::size_t length, std::size_t out_len) {
  const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - padding;
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t t0 = shift >= 0 ? 0 : (-shift + s - 1) / s;
  std::ptrdiff_t t1 = (static_cast<std::ptrdiff_t>(length) - 1 - shift) / s + 1;
  if (static_cast<std::ptrdiff_t>(length) - 1 - shift < 0) t1 = 0;
  t1 = std::min<std::ptrdiff_t>(t1, static_cast<std::ptrdiff_t>(out_len));
  if (t1 < t0) t1 = t0;
  return {static_cast<std::size_t>(t0), static_cast<std::size_t>(t1)};
}

}  // namespace

template <typename T>
Var<T> conv1d(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int padding, int groups) {
  require_rank(x, 3, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  require(stride >= 1 && padding >= 0 && groups >= 1, "conv1d: invalid stride/padding/groups");
  const std::size_t B = x->value.dim(0), Cin = x->value.dim(1), L = x->value.dim(2);
  const std::size_t Cout = weight->value.dim(0), K = weight->value.dim(2);
  const std::size_t G = static_cast<std::size_t>(groups);
  require(Cin % G == 0 && Cout % G == 0,
          "conv1d: channels " + std::to_string(Cin) + "->" + std::to_string(Cout) +
              " not divisible by groups " + std::to_string(G));
  const std::size_t cin_g = Cin / G, cout_g = Cout / G;
  require(weight->value.dim(1) == cin_g, "conv1d: weight " + shape_str(weight->value.shape()) +
                                             " does not match C_in/groups = " +
                                             std::to_string(cin_g));
  require(L + 2 * static_cast<std::size_t>(padding) >= K,
          "conv1d: padded length " + std::to_string(L + 2 * padding) + " shorter than kernel " +
              std::to_string(K));
  if (bias) {
    require(bias->value.rank() == 1 && bias->value.dim(0) == Cout, "conv1d: bias must be [C_out]");
  }
  const std::size_t S = static_cast<std::size_t>(stride);
  const std::ptrdiff_t P = padding;
  const std::size_t Lout = (L + 2 * padding - K) / S + 1;
  const bool depthwise = cin_g == 1 && cout_g == 1;
  const bool pointwise = K == 1 && S == 1 && P == 0;

  Tensor<T> out({B, Cout, Lout});
  const T* xp = x->value.ptr();
  const T* wp = weight->value.ptr();
  T* yp = out.ptr();

  if (depthwise) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < Cout; ++c) {
        const T* xc = xp + (b * Cin + c) * L;
        const T* wc = wp + c * K;
        T* yc = yp + (b * Cout + c) * Lout;
        for (std::size_t k = 0; k < K; ++k) {
          const auto [t0, t1] = valid_taps(k, S, P, L, Lout);
          const T w = wc[k];
          const T* src = xc + (static_cast<std::ptrdiff_t>(k) - P);
          for (std::size_t t = t0; t < t1; ++t) yc[t] += w * src[t * S];
        }
      }
    }
  } else {
    std::vector<T> col(pointwise ? 0 : cin_g * K * Lout);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t gi = 0; gi < G; ++gi) {
        const T* xg = xp + (b * Cin + gi * cin_g) * L;
        const T* colp = xg;
        if (!pointwise) {
          im2col(xg, cin_g, L, K, S, P, Lout, col.data());
          colp = col.data();
        }
        CMapMat<T> W(wp + gi * cout_g * cin_g * K, cout_g, cin_g * K);
        CMapMat<T> C(colp, cin_g * K, Lout);
        MapMat<T> Y(yp + (b * Cout + gi * cout_g) * Lout, cout_g, Lout);
        Y.noalias() = W * C;
      }
    }
  }
  if (bias) {
    const T* bp = bias->value.ptr();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < Cout; ++c) {
        T* yc = yp + (b * Cout + c) * Lout;
        for (std::size_t t = 0; t < Lout; ++t) yc[t] += bp[c];
      }
  }

  const bool needs = Graph<T>::any_requires_grad({&x, &weight, &bias});
  return g.record(std::move(out), needs, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      const T* dyp = dy.ptr();
      const T* xv = x->value.ptr();
      const T* wv = weight->value.ptr();
      T* dx = grad_of(x) ? x->ensure_grad().ptr() : nullptr;
      T* dw = grad_of(weight) ? weight->ensure_grad().ptr() : nullptr;
      if (grad_of(bias)) {
        T* db = bias->ensure_grad().ptr();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < Cout; ++c) {
            const T* d = dyp + (b * Cout + c) * Lout;
            T acc{0};
            for (std::size_t t = 0; t < Lout; ++t) acc += d[t];
            db[c] += acc;
          }
      }
      if (depthwise) {
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < Cout; ++c) {
            const T* xc = xv + (b * Cin + c) * L;
            const T* wc = wv + c * K;
            const T* d = dyp + (b * Cout + c) * Lout;
            T* dxc = dx ? dx + (b * Cin + c) * L : nullptr;
            T* dwc = dw ? dw + c * K : nullptr;
            for (std::size_t k = 0; k < K; ++k) {
              const auto [t0, t1] = valid_taps(k, S, P, L, Lout);
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - P;
              if (dxc) {
                const T w = wc[k];
                T* dst = dxc + off;
                for (std::size_t t = t0; t < t1; ++t) dst[t * S] += d[t] * w;
              }
              if (dwc) {
                const T* src = xc + off;
                T acc{0};
                for (std::size_t t = t0; t < t1; ++t) acc += d[t] * src[t * S];
                dwc[k] += acc;
              }
            }
          }
        }
        return;
      }
      std::vector<T> col(pointwise ? 0 : cin_g * K * Lout);
      std::vector<T> dcol(dx && !pointwise ? cin_g * K * Lout : 0);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t gi = 0; gi < G; ++gi) {
          CMapMat<T> dY(dyp + (b * Cout + gi * cout_g) * Lout, cout_g, Lout);
          CMapMat<T> W(wv + gi * cout_g * cin_g * K, cout_g, cin_g * K);
          const T* xg = xv + (b * Cin + gi * cin_g) * L;
          if (dw) {
            const T* colp = xg;
            if (!pointwise) {
              im2col(xg, cin_g, L, K, S, P, Lout, col.data());
              colp = col.data();
            }
            MapMat<T> dW(dw + gi * cout_g * cin_g * K, cout_g, cin_g * K);
            dW.noalias() += dY * CMapMat<T>(colp, cin_g * K, Lout).transpose();
          }
          if (dx) {
            T* dxg = dx + (b * Cin + gi * cin_g) * L;
            if (pointwise) {
              MapMat<T>(dxg, cin_g, L).noalias() += W.transpose() * dY;
            } else {
              MapMat<T> dC(dcol.data(), cin_g * K, Lout);
              dC.noalias() = W.transpose() * dY;
              col2im_add(dcol.data(), cin_g, L, K, S, P, Lout, dxg);
            }
          }
        }
      }
    };
  });
}

template <typename T>
Var<T> batchnorm1d(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   BatchNormStats<T>* stats, Mode mode, double momentum, double eps) {
  require(x && (x->value.rank() == 2 || x->value.rank() == 3),
          "batchnorm1d: input must be [B,C] or [B,C,L]");
  const std::size_t B = x->value.dim(0), C = x->value.dim(1);
  const std::size_t L = x->value.rank() == 3 ? x->value.dim(2) : 1;
  require(gamma && gamma->value.size() == C && beta && beta->value.size() == C,
          "batchnorm1d: gamma/beta must have C entries");
  const std::size_t n = B * L;
  if (mode == Mode::Train && n <= 1) {
    throw ValidationError("batchnorm1d: train mode needs more than one value per channel");
  }
  if (mode == Mode::Eval) {
    require(stats != nullptr && stats->running_mean.size() == C && stats->running_var.size() == C,
            "batchnorm1d: eval mode needs running statistics");
  }

  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  using CRow = Eigen::Map<const Arr>;
  using Row = Eigen::Map<Arr>;
  const auto Li = static_cast<Eigen::Index>(L);
  std::vector<T> mu(C), inv_std(C);
  const T* xp = x->value.ptr();
  if (mode == Mode::Train) {
    // Rows of length L are reduced in T, row partials accumulate in double.
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0, ss = 0;
      for (std::size_t b = 0; b < B; ++b) s += CRow(xp + (b * C + c) * L, Li).sum();
      const double m = s / static_cast<double>(n);
      const T mt = static_cast<T>(m);
      for (std::size_t b = 0; b < B; ++b) ss += (CRow(xp + (b * C + c) * L, Li) - mt).square().sum();
      const double var = ss / static_cast<double>(n);
      mu[c] = mt;
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      if (stats) {
        T& rm = stats->running_mean[c];
        T& rv = stats->running_var[c];
        rm = static_cast<T>((1.0 - momentum) * rm + momentum * m);
        rv = static_cast<T>((1.0 - momentum) * rv +
                            momentum * var * static_cast<double>(n) / static_cast<double>(n - 1));
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats->running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats->running_var[c]) + eps));
    }
  }

  Tensor<T> xhat(x->value.shape());
  Tensor<T> out(x->value.shape());
  const T* gp = gamma->value.ptr();
  const T* bp = beta->value.ptr();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * L;
      Row h(xhat.ptr() + off, Li);
      h = (CRow(xp + off, Li) - mu[c]) * inv_std[c];
      Row(out.ptr() + off, Li) = h * gp[c] + bp[c];
    }

  const bool needs = Graph<T>::any_requires_grad({&x, &gamma, &beta});
  const bool train = mode == Mode::Train;
  return g.record(std::move(out), needs, [&, xhat = std::move(xhat), inv_std](Node<T>*) mutable {
    return [x, gamma, beta, xhat = std::move(xhat), inv_std, B, C, L, n, train](const Tensor<T>& dy) {
      const auto Li = static_cast<Eigen::Index>(L);
      const T* gp = gamma->value.ptr();
      T* dg = grad_of(gamma) ? gamma->ensure_grad().ptr() : nullptr;
      T* db = grad_of(beta) ? beta->ensure_grad().ptr() : nullptr;
      T* dx = grad_of(x) ? x->ensure_grad().ptr() : nullptr;
      for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * L;
          const CRow d(dy.ptr() + off, Li);
          sum_dy += d.sum();
          sum_dy_xhat += (d * CRow(xhat.ptr() + off, Li)).sum();
        }
        if (dg) dg[c] += static_cast<T>(sum_dy_xhat);
        if (db) db[c] += static_cast<T>(sum_dy);
        if (!dx) continue;
        const T gi = static_cast<T>(static_cast<double>(gp[c]) * inv_std[c]);
        const T a = static_cast<T>(sum_dy / static_cast<double>(n));
        const T k = static_cast<T>(sum_dy_xhat / static_cast<double>(n));
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * L;
          Row out(dx + off, Li);
          if (train) {
            out += gi * (CRow(dy.ptr() + off, Li) - a - k * CRow(xhat.ptr() + off, Li));
          } else {
            out += gi * CRow(dy.ptr() + off, Li);
          }
        }
      }
    };
  });
}

template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t B = x->value.dim(0), Din = x->value.dim(1), Dout = weight->value.dim(0);
  require(weight->value.dim(1) == Din, "linear: input " + shape_str(x->value.shape()) +
                                           " incompatible with weight " +
                                           shape_str(weight->value.shape()));
  if (bias) require(bias->value.size() == Dout, "linear: bias must be [D_out]");
  Tensor<T> out({B, Dout});
  MapMat<T> Y(out.ptr(), B, Dout);
  Y.noalias() = CMapMat<T>(x->value.ptr(), B, Din) * CMapMat<T>(weight->value.ptr(), Dout, Din).transpose();
  if (bias) {
    Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->value.ptr(), Dout);
  }
  const bool needs = Graph<T>::any_requires_grad({&x, &weight, &bias});
  return g.record(std::move(out), needs, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      CMapMat<T> dY(dy.ptr(), B, Dout);
      if (grad_of(x)) {
        MapMat<T>(x->ensure_grad().ptr(), B, Din).noalias() +=
            dY * CMapMat<T>(weight->value.ptr(), Dout, Din);
      }
      if (grad_of(weight)) {
        MapMat<T>(weight->ensure_grad().ptr(), Dout, Din).noalias() +=
            dY.transpose() * CMapMat<T>(x->value.ptr(), B, Din);
      }
      if (grad_of(bias)) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->ensure_grad().ptr(), Dout) +=
            dY.colwise().sum();
      }
    };
  });
}

namespace {

// 1 / (1 + exp(-x)), vectorized; saturates to exactly 0 or 1 without NaN.
template <typename T>
Tensor<T> sigmoid_tensor(const Tensor<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  Tensor<T> s(x.shape());
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Map<Arr>(s.ptr(), n) = T{1} / (T{1} + (-Eigen::Map<const Arr>(x.ptr(), n)).exp());
  return s;
}

}  // namespace

template <typename T>
Var<T> sigmoid(Graph<T>& g, const Var<T>& x) {
  Tensor<T> out = sigmoid_tensor(x->value);
  return g.record(std::move(out), x->requires_grad, [x](Node<T>* self) {
    return [x, self](const Tensor<T>& dy) {
      using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
      const auto n = static_cast<Eigen::Index>(dy.size());
      const Eigen::Map<const Arr> s(self->value.ptr(), n);
      Eigen::Map<Arr>(x->ensure_grad().ptr(), n) += Eigen::Map<const Arr>(dy.ptr(), n) * s * (T{1} - s);
    };
  });
}

template <typename T>
Var<T> swish(Graph<T>& g, const Var<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(x->value.size());
  Tensor<T> s = sigmoid_tensor(x->value);
  Tensor<T> out(x->value.shape());
  Eigen::Map<Arr>(out.ptr(), n) = Eigen::Map<const Arr>(x->value.ptr(), n) * Eigen::Map<const Arr>(s.ptr(), n);
  return g.record(std::move(out), x->requires_grad, [x, &s](Node<T>*) {
    return [x, s = std::move(s)](const Tensor<T>& dy) {
      using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
      const auto n = static_cast<Eigen::Index>(dy.size());
      const Eigen::Map<const Arr> sv(s.ptr(), n), xv(x->value.ptr(), n);
      Eigen::Map<Arr>(x->ensure_grad().ptr(), n) += Eigen::Map<const Arr>(dy.ptr(), n) * sv * (T{1} + xv * (T{1} - sv));
    };
  });
}

template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch " + shape_str(a->value.shape()) +
                                             " vs " + shape_str(b->value.shape()));
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  const bool needs = Graph<T>::any_requires_grad({&a, &b});
  return g.record(std::move(out), needs, [a, b](Node<T>*) {
    return [a, b](const Tensor<T>& dy) {
      for (const Var<T>* v : {&a, &b}) {
        if (!(*v)->requires_grad) continue;
        Tensor<T>& d = (*v)->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
    };
  });
}

template <typename T>
Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  require(a->value.same_shape(b->value), "mul: shape mismatch " + shape_str(a->value.shape()) +
                                             " vs " + shape_str(b->value.shape()));
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  const bool needs = Graph<T>::any_requires_grad({&a, &b});
  return g.record(std::move(out), needs, [a, b](Node<T>*) {
    return [a, b](const Tensor<T>& dy) {
      if (a->requires_grad) {
        Tensor<T>& d = a->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * b->value[i];
      }
      if (b->requires_grad) {
        Tensor<T>& d = b->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * a->value[i];
      }
    };
  });
}

template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& x, T factor) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * factor;
  return g.record(std::move(out), x->requires_grad, [x, factor](Node<T>*) {
    return [x, factor](const Tensor<T>& dy) {
      Tensor<T>& d = x->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * factor;
    };
  });
}

template <typename T>
Var<T> scale_channels(Graph<T>& g, const Var<T>& x, const Var<T>& gate) {
  require_rank(x, 3, "scale_channels", "input");
  require_rank(gate, 2, "scale_channels", "gate");
  const std::size_t B = x->value.dim(0), C = x->value.dim(1), L = x->value.dim(2);
  require(gate->value.dim(0) == B && gate->value.dim(1) == C,
          "scale_channels: gate must be [B,C]");
  Tensor<T> out(x->value.shape());
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T s = gate->value[bc];
    for (std::size_t l = 0; l < L; ++l) out[bc * L + l] = x->value[bc * L + l] * s;
  }
  const bool needs = Graph<T>::any_requires_grad({&x, &gate});
  return g.record(std::move(out), needs, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      T* dx = x->requires_grad ? x->ensure_grad().ptr() : nullptr;
      T* dg = gate->requires_grad ? gate->ensure_grad().ptr() : nullptr;
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T s = gate->value[bc];
        T acc{0};
        for (std::size_t l = 0; l < L; ++l) {
          if (dx) dx[bc * L + l] += dy[bc * L + l] * s;
          acc += dy[bc * L + l] * x->value[bc * L + l];
        }
        if (dg) dg[bc] += acc;
      }
    };
  });
}

template <typename T>
Var<T> global_avg_pool1d(Graph<T>& g, const Var<T>& x) {
  require_rank(x, 3, "global_avg_pool1d", "input");
  const std::size_t B = x->value.dim(0), C = x->value.dim(1), L = x->value.dim(2);
  Tensor<T> out({B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    T acc{0};
    for (std::size_t l = 0; l < L; ++l) acc += x->value[bc * L + l];
    out[bc] = acc / static_cast<T>(L);
  }
  return g.record(std::move(out), x->requires_grad, [=](Node<T>*) {
    return [=](const Tensor<T>& dy) {
      T* dx = x->ensure_grad().ptr();
      const T inv = T{1} / static_cast<T>(L);
      for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t l = 0; l < L; ++l) dx[bc * L + l] += dy[bc] * inv;
    };
  });
}

template <typename T>
Var<T> l2_normalize_rows(Graph<T>& g, const Var<T>& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows", "input");
  const std::size_t N = x->value.dim(0), D = x->value.dim(1);
  Tensor<T> out(x->value.shape());
  std::vector<T> norms(N);
  for (std::size_t i = 0; i < N; ++i) {
    double ss = 0;
    for (std::size_t d = 0; d < D; ++d) ss += static_cast<double>(x->value[i * D + d]) * x->value[i * D + d];
    norms[i] = static_cast<T>(std::max(std::sqrt(ss), eps));
    for (std::size_t d = 0; d < D; ++d) out[i * D + d] = x->value[i * D + d] / norms[i];
  }
  return g.record(std::move(out), x->requires_grad, [=](Node<T>* self) {
    return [=](const Tensor<T>& dy) {
      T* dx = x->ensure_grad().ptr();
      for (std::size_t i = 0; i < N; ++i) {
        const T* y = self->value.ptr() + i * D;
        const T* d = dy.ptr() + i * D;
        // Below the eps floor the map is a plain scaling by 1/eps.
        const bool clamped = static_cast<double>(norms[i]) <= eps;
        T proj{0};
        if (!clamped)
          for (std::size_t k = 0; k < D; ++k) proj += y[k] * d[k];
        for (std::size_t k = 0; k < D; ++k) dx[i * D + k] += (d[k] - y[k] * proj) / norms[i];
      }
    };
  });
}

template <typename T>
Var<T> sum(Graph<T>& g, const Var<T>& x) {
  T acc{0};
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return g.record(Tensor<T>({1}, acc), x->requires_grad, [x](Node<T>*) {
    return [x](const Tensor<T>& dy) {
      Tensor<T>& d = x->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[0];
    };
  });
}

template <typename T>
Var<T> mean(Graph<T>& g, const Var<T>& x) {
  const T n = static_cast<T>(x->value.size());
  T acc{0};
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return g.record(Tensor<T>({1}, acc / n), x->requires_grad, [x, n](Node<T>*) {
    return [x, n](const Tensor<T>& dy) {
      Tensor<T>& d = x->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[0] / n;
    };
  });
}

#define BIOFM_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> conv1d(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int, int, int); \
  template Var<T> batchnorm1d(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&,            \
                              BatchNormStats<T>*, Mode, double, double);                         \
  template Var<T> linear(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> sigmoid(Graph<T>&, const Var<T>&);                                             \
  template Var<T> swish(Graph<T>&, const Var<T>&);                                               \
  template Var<T> add(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> scale(Graph<T>&, const Var<T>&, T);                                            \
  template Var<T> scale_channels(Graph<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> global_avg_pool1d(Graph<T>&, const Var<T>&);                                   \
  template Var<T> l2_normalize_rows(Graph<T>&, const Var<T>&, double);                           \
  template Var<T> sum(Graph<T>&, const Var<T>&);                                                 \
  template Var<T> mean(Graph<T>&, const Var<T>&);

BIOFM_INSTANTIATE_OPS(float)
BIOFM_INSTANTIATE_OPS(double)

}  // namespace biofm::ops
