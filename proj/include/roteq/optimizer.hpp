#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "roteq/autodiff.hpp"
#include "roteq/common.hpp"

namespace roteq {

/// Adam with decoupled weight decay. Parameters are referenced, not
/// owned; the moment buffers follow the parameter order and are exposed
/// for checkpointing under the names adam.m/<param> and adam.v/<param>.
template <typename T>
class AdamW {
 public:
  struct Hyper {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.1;
  };

  AdamW(std::vector<ad::Parameter<T>*> params, Hyper h)
      : params_(std::move(params)), h_(h) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.dims);
      v_.emplace_back(p->value.dims);
    }
  }

  int64_t steps() const { return t_; }
  const Hyper& hyper() const { return h_; }

  /// One update from the gradients currently held by the parameters.
  /// Every gradient entry passes a non-finite guard first.
  void step() {
    for (auto* p : params_)
      for (T g : p->grad.v)
        if (!std::isfinite(double(g)))
          throw NonFiniteLoss("non-finite gradient in parameter " + p->name);
    ++t_;
    const double bc1 = 1.0 - std::pow(h_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(h_.beta2, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      for (size_t j = 0; j < p.value.size(); ++j) {
        const double g = double(p.grad.v[j]);
        const double m = h_.beta1 * double(m_[i].v[j]) + (1 - h_.beta1) * g;
        const double v = h_.beta2 * double(v_[i].v[j]) + (1 - h_.beta2) * g * g;
        m_[i].v[j] = T(m);
        v_[i].v[j] = T(v);
        const double update = (m / bc1) / (std::sqrt(v / bc2) + h_.eps) +
                              h_.weight_decay * double(p.value.v[j]);
        p.value.v[j] = T(double(p.value.v[j]) - h_.lr * update);
      }
    }
  }

  /// Named views of the optimizer state for checkpointing.
  std::vector<std::pair<std::string, const ad::Buf<T>*>> state() const {
    std::vector<std::pair<std::string, const ad::Buf<T>*>> s;
    for (size_t i = 0; i < params_.size(); ++i) {
      s.emplace_back("adam.m/" + params_[i]->name, &m_[i]);
      s.emplace_back("adam.v/" + params_[i]->name, &v_[i]);
    }
    return s;
  }

  /// Restores one moment buffer by checkpoint name; returns false when
  /// the name is not an optimizer entry for these parameters.
  bool restore(const std::string& name, const std::vector<float>& data) {
    for (size_t i = 0; i < params_.size(); ++i) {
      ad::Buf<T>* dst = nullptr;
      if (name == "adam.m/" + params_[i]->name) dst = &m_[i];
      if (name == "adam.v/" + params_[i]->name) dst = &v_[i];
      if (!dst) continue;
      if (dst->size() != data.size())
        throw ShapeMismatch("optimizer state size mismatch for " + name);
      for (size_t j = 0; j < data.size(); ++j) dst->v[j] = T(data[j]);
      return true;
    }
    return false;
  }

  void set_steps(int64_t t) { t_ = t; }

 private:
  std::vector<ad::Parameter<T>*> params_;
  Hyper h_;
  std::vector<ad::Buf<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace roteq
