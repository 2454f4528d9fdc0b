#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "biofm/params.hpp"

namespace biofm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam without weight decay. Moments are kept per parameter in
// registration order of the ParamSet it was built for.
template <typename T>
class Adam {
 public:
  Adam(const std::vector<NamedParam<T>>& params, AdamConfig cfg = {}) : cfg_(cfg) {
    for (const auto& p : params) {
      names_.push_back(p.name);
      m_.emplace_back(p.var->value.shape());
      v_.emplace_back(p.var->value.shape());
    }
  }

  void step(const std::vector<NamedParam<T>>& params, double lr) {
    if (params.size() != m_.size()) throw ValidationError("adam: parameter list changed size");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Node<T>& node = *params[k].var;
      if (params[k].name != names_[k]) {
        throw ValidationError("adam: parameter order changed at " + params[k].name);
      }
      if (node.grad.empty()) continue;
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (std::size_t i = 0; i < node.value.size(); ++i) {
        const double gi = node.grad[i];
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps);
        node.value[i] = static_cast<T>(node.value[i] - update);
      }
    }
  }

  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<std::string>& names() const { return names_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> m_, v_;
};

// momentum <- m * momentum + (1 - m) * online, elementwise, for two parameter
// lists with identical names and shapes in the same order.
template <typename T>
void ema_update(std::span<const NamedParam<T>> online, std::span<const NamedParam<T>> momentum,
                double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("ema_update: momentum rate must be in [0,1]");
  if (online.size() != momentum.size()) {
    throw ValidationError("ema_update: parameter trees differ in size (" +
                          std::to_string(online.size()) + " vs " +
                          std::to_string(momentum.size()) + ")");
  }
  for (std::size_t k = 0; k < online.size(); ++k) {
    if (online[k].name != momentum[k].name ||
        !online[k].var->value.same_shape(momentum[k].var->value)) {
      throw ValidationError("ema_update: parameter tree mismatch at " + online[k].name + " / " +
                            momentum[k].name);
    }
  }
  const T keep = static_cast<T>(m);
  const T take = static_cast<T>(1.0 - m);
  for (std::size_t k = 0; k < online.size(); ++k) {
    const Tensor<T>& theta = online[k].var->value;
    Tensor<T>& xi = momentum[k].var->value;
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = keep * xi[i] + take * theta[i];
  }
}

template <typename T>
void ema_update(const std::vector<NamedParam<T>>& online,
                const std::vector<NamedParam<T>>& momentum, double m) {
  ema_update<T>(std::span<const NamedParam<T>>(online), std::span<const NamedParam<T>>(momentum), m);
}

struct LrSchedule {
  double base_lr = 1e-3;
  int step_epochs = 1;
  double factor = 0.5;

  // base_lr * factor^floor(epoch / step_epochs)
  double at(int epoch) const {
    const int steps = step_epochs > 0 ? epoch / step_epochs : 0;
    return base_lr * std::pow(factor, steps);
  }
};

}  // namespace biofm
