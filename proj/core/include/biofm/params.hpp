#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "biofm/ops.hpp"

namespace biofm {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// Owns the trainable leaves and batch-norm running statistics of one network,
// in registration order. Names are dotted paths such as "encoder.stem.conv.weight".
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) = default;
  ParamSet& operator=(ParamSet&&) = default;

  Var<T> add(std::string name, Tensor<T> init) {
    for (const auto& p : params_) {
      if (p.name == name) throw ValidationError("duplicate parameter name " + name);
    }
    auto v = make_var(std::move(init), true);
    params_.push_back({std::move(name), v});
    return v;
  }

  BatchNormStats<T>* add_bn_stats(const std::string& prefix, std::size_t channels) {
    auto& entry = bn_.emplace_back(prefix, BatchNormStats<T>{Tensor<T>({channels}, T{0}),
                                                            Tensor<T>({channels}, T{1})});
    return &entry.second;
  }

  const std::vector<NamedParam<T>>& params() const { return params_; }

  std::vector<NamedParam<T>> select(const std::string& prefix) const {
    std::vector<NamedParam<T>> out;
    for (const auto& p : params_)
      if (p.name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
  }

  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> out;
    for (auto& [prefix, stats] : bn_) {
      out.push_back({prefix + ".running_mean", &stats.running_mean});
      out.push_back({prefix + ".running_var", &stats.running_var});
    }
    return out;
  }

  const Var<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p.var;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) {
      p.var->ensure_grad().zero();
    }
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
  }

 private:
  std::vector<NamedParam<T>> params_;
  std::deque<std::pair<std::string, BatchNormStats<T>>> bn_;
};

}  // namespace biofm
