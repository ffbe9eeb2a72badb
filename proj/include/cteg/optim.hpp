#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cteg/params.hpp"

namespace cteg {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;  // decoupled (applied to the parameter, not the gradient)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Moments and step counters are kept per
/// parameter name, so filtered steps stay exact per-parameter Adam.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Update every trainable parameter from its accumulated gradient.
  void step(ParamStore& params) {
    step_filtered(params, [](const Parameter&) { return true; });
  }

  /// Update only parameters the predicate accepts (e.g. the confusion
  /// projection during a projection-only phase).
  void step_filtered(ParamStore& params, const std::function<bool(const Parameter&)>& want) {
    for (auto& p : params.all()) {
      if (!p.trainable || !want(p)) continue;
      State& st = state_[p.name];
      if (st.m.empty()) {
        st.m.assign(p.tensor.numel(), 0.0);
        st.v.assign(p.tensor.numel(), 0.0);
      }
      st.t += 1;
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
      auto& values = p.tensor.mutable_values();
      const auto& grad = p.tensor.grad();
      for (std::size_t i = 0; i < values.size(); ++i) {
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * grad[i];
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        values[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * values[i]);
      }
    }
  }

  const AdamConfig& config() const { return cfg_; }

 private:
  struct State {
    long t = 0;
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, State> state_;
};

}  // namespace cteg
