// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "voxfuse/corpus.hpp"
#include "voxfuse/model.hpp"

namespace voxfuse {

/// Regularised canonical correlations between two views sharing the sample
/// axis (rows). Columns are centred internally; returns `components` values
/// sorted descending and clipped to [0, 1].
std::vector<double> rcca(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int components, double lambda);

struct RccaLayer {
  int layer = 0;  // 1-based LM block index
  double mean_corr = 0.0;
};

struct RccaReport {
  std::vector<RccaLayer> layers;
  int components = 0;
  double lambda = 0.0;
  int n = 0;
  bool fused = false;
  int injection = 0;
};

struct RccaOptions {
  int components = 16;
  double lambda = 1e-4;
  int min_samples = 500;
};

/// Per-utterance mean-pooled views: LM hidden states after each block versus
/// the acoustic decoder states. With `fused` the LM runs with the fusion layer
/// in `mode`; otherwise it runs as a plain LM.
RccaReport alignment_report(FusedModel& model, const std::vector<CorpusSample>& corpus, bool fused,
                            FusionMode mode = FusionMode::kCausal, const RccaOptions& opts = {});

nlohmann::ordered_json to_json(const RccaReport& report);

}  // namespace voxfuse
