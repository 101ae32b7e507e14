#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polydiff/errors.hpp"
#include "polydiff/net_layers.hpp"

namespace polydiff {

// Adam with bias correction.  Moment buffers are lazily sized to the store on
// the first step and kept in the store's scalar type.
template <typename S>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  std::int64_t step_count() const { return step_; }
  std::vector<VecX<S>>& first_moments() { return m_; }
  std::vector<VecX<S>>& second_moments() { return v_; }
  const std::vector<VecX<S>>& first_moments() const { return m_; }
  const std::vector<VecX<S>>& second_moments() const { return v_; }
  void set_step_count(std::int64_t n) { step_ = n; }

  void step(ParamStore<S>& store, double lr) {
    if (m_.empty()) {
      m_.resize(store.count());
      v_.resize(store.count());
      for (int i = 0; i < store.count(); ++i) {
        m_[i] = VecX<S>::Zero(store.at(i).value.size());
        v_[i] = VecX<S>::Zero(store.at(i).value.size());
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S one_m_b1 = static_cast<S>(1.0 - beta1_), one_m_b2 = static_cast<S>(1.0 - beta2_);
    const S alpha = static_cast<S>(lr * std::sqrt(bc2) / bc1);
    const S eps = static_cast<S>(eps_ * std::sqrt(bc2));
    for (int i = 0; i < store.count(); ++i) {
      auto& p = store.at(i);
      m_[i] = b1 * m_[i] + one_m_b1 * p.grad;
      v_[i] = (b2 * v_[i].array() + one_m_b2 * p.grad.array().square()).matrix();
      p.value.array() -= alpha * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
  std::vector<VecX<S>> m_, v_;
};

// Learning-rate decay applied at the start of epoch k (1-based) out of K:
// eta_k = eta_{k-1} * (1 - k/K).
inline double lr_for_epoch(double lr_prev, int k, int total_epochs) {
  if (k < 1 || total_epochs < 1 || k > total_epochs)
    throw ConfigError("lr_for_epoch: epoch index out of range");
  return lr_prev * (1.0 - static_cast<double>(k) / static_cast<double>(total_epochs));
}

}  // namespace polydiff
