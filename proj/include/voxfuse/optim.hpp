// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "voxfuse/tensor.hpp"

namespace voxfuse {

struct AdamOptions {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam with bias correction over a fixed list of parameters. Frozen
/// parameters and parameters without a gradient are skipped; gradients are
/// cleared after each step.
class Adam {
 public:
  Adam(std::vector<Param<float>*> params, AdamOptions options);

  void step();
  void zero_grad();
  [[nodiscard]] long steps() const { return t_; }
  [[nodiscard]] const AdamOptions& options() const { return opt_; }
  void set_lr(float lr) { opt_.lr = lr; }

 private:
  std::vector<Param<float>*> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamOptions opt_;
  long t_ = 0;
};

}  // namespace voxfuse
