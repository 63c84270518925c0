// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/optim.hpp"

#include <cmath>

namespace voxfuse {

Adam::Adam(std::vector<Param<float>*> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i]->value.size(), 0.0f);
    v_[i].assign(params_[i]->value.size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(opt_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(opt_.beta2), static_cast<double>(t_));
  const float step_size = static_cast<float>(opt_.lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param<float>& p = *params_[i];
    if (!p.trainable || !p.value.grad) continue;
    const auto& g = *p.value.grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = opt_.beta1 * m[j] + (1.0f - opt_.beta1) * g[j];
      v[j] = opt_.beta2 * v[j] + (1.0f - opt_.beta2) * g[j] * g[j];
      p.value.values[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + opt_.eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto* p : params_) p->value.grad.reset();
}

}  // namespace voxfuse
