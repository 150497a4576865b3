#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpt/tensor.hpp"

namespace mpt {

// Linear warmup to base_lr over warmup steps, then cosine decay to exactly 0
// at total. step counts from 1 for the first optimizer update.
inline double lr_schedule(int step, int total, int warmup, double base_lr) {
  if (total < 1) throw std::invalid_argument("lr_schedule: total must be >= 1");
  if (warmup < 0 || warmup >= total) throw std::invalid_argument("lr_schedule: warmup must be in [0, total)");
  if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
  if (step <= warmup) return warmup == 0 ? base_lr : base_lr * double(step) / double(warmup);
  if (step >= total) return 0.0;
  const double t = double(step - warmup) / double(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// AdamW with decoupled weight decay. Decay applies only to parameters
// registered with decay=true (weight matrices, not biases/gains/tokens),
// and uses the pre-update parameter value:
//   theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta_prev)
template <typename S>
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void add_param(const std::string& name, Tensor<S> t, bool decay) {
    if (!t.requires_grad()) throw std::invalid_argument("AdamW: parameter '" + name + "' does not require grad");
    slots_.push_back({name, t, std::vector<S>(size_t(t.size()), S(0)), std::vector<S>(size_t(t.size()), S(0)), decay});
  }

  int64_t step_count() const { return t_; }
  size_t param_count() const { return slots_.size(); }

  void zero_grad() {
    for (auto& s : slots_) s.tensor.zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& s : slots_) {
      auto& theta = s.tensor.value_mut();
      const auto& g = s.tensor.grad();
      for (size_t i = 0; i < theta.size(); ++i) {
        const double gi = double(g[i]);
        if (!std::isfinite(gi)) throw std::runtime_error("AdamW: non-finite gradient in '" + s.name + "'");
        s.m[i] = S(beta1_ * double(s.m[i]) + (1.0 - beta1_) * gi);
        s.v[i] = S(beta2_ * double(s.v[i]) + (1.0 - beta2_) * gi * gi);
        const double mhat = double(s.m[i]) / bc1;
        const double vhat = double(s.v[i]) / bc2;
        double update = mhat / (std::sqrt(vhat) + eps_);
        if (s.decay) update += weight_decay_ * double(theta[i]);
        theta[i] = S(double(theta[i]) - lr * update);
      }
    }
  }

 private:
  struct Slot {
    std::string name;
    Tensor<S> tensor;
    std::vector<S> m, v;
    bool decay;
  };
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace mpt
