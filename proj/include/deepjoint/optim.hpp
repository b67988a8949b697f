// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepjoint/autodiff.hpp"

namespace deepjoint {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global L2 norm cap on the gradient; off unless set.
  std::optional<double> clip_norm;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
  long step = 0;
};

using AdamState = std::map<std::string, AdamMoments>;

/// One bias-corrected Adam update of every parameter that has a gradient.
/// Parameters without an entry in grads, or with requires_grad unset, are untouched.
inline void adam_step(const std::vector<ad::Parameter*>& params, const ad::Gradients& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) {
    throw ContractError("adam: beta1 and beta2 must lie in (0, 1)");
  }
  double clip_scale = 1.0;
  if (cfg.clip_norm) {
    double sq = 0.0;
    for (const auto* p : params)
      if (auto it = grads.find(p->id); it != grads.end())
        for (double g : it->second.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > *cfg.clip_norm) clip_scale = *cfg.clip_norm / norm;
  }
  for (auto* p : params) {
    if (!p->requires_grad) continue;
    auto it = grads.find(p->id);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (!g.same_shape(p->value)) {
      throw ShapeError("adam: gradient " + g.shape_string() + " for parameter '" + p->id +
                       "' of shape " + p->value.shape_string());
    }
    auto& mom = state[p->id];
    if (mom.m.empty()) {
      mom.m = Tensor(g.rows(), g.cols());
      mom.v = Tensor(g.rows(), g.cols());
    }
    ++mom.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(mom.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(mom.step));
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double gk = g[k] * clip_scale;
      mom.m[k] = cfg.beta1 * mom.m[k] + (1.0 - cfg.beta1) * gk;
      mom.v[k] = cfg.beta2 * mom.v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = mom.m[k] / c1;
      const double vhat = mom.v[k] / c2;
      p->value[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace deepjoint
