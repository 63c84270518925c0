// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/rcca.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxfuse/decode.hpp"
#include "voxfuse/errors.hpp"

namespace voxfuse {

namespace {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.transpose() * b) / static_cast<double>(a.rows() - 1);
}

// Lower Cholesky factor of a ridge-regularised covariance.
Eigen::MatrixXd whitening_factor(const Eigen::MatrixXd& c, double lambda, const char* view) {
  Eigen::MatrixXd reg = c;
  reg.diagonal().array() += lambda;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(reg, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success || !(cond < 1e14)) {
    std::ostringstream msg;
    msg << "rcca: covariance of view " << view << " is singular beyond regularisation (condition estimate " << cond
        << ", lambda " << lambda << ")";
    throw NumericError(msg.str());
  }
  return llt.matrixL();
}

}  // namespace

std::vector<double> rcca(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int components, double lambda) {
  if (x.rows() != y.rows()) {
    throw ShapeError("rcca: views have " + std::to_string(x.rows()) + " and " + std::to_string(y.rows()) + " rows");
  }
  if (components < 1) throw DomainError("rcca: components must be >= 1");
  if (components > std::min(x.cols(), y.cols())) {
    throw DomainError("rcca: components " + std::to_string(components) + " exceed min(p, q) = " +
                      std::to_string(std::min(x.cols(), y.cols())));
  }
  if (x.rows() <= components) throw DomainError("rcca: need more samples than components");
  if (!(lambda >= 0.0)) throw DomainError("rcca: lambda must be >= 0");

  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
  const Eigen::MatrixXd lx = whitening_factor(covariance(xc, xc), lambda, "X");
  const Eigen::MatrixXd ly = whitening_factor(covariance(yc, yc), lambda, "Y");

  // Singular values of Lx⁻¹ Sxy Ly⁻ᵀ are the canonical correlations.
  const Eigen::MatrixXd sxy = covariance(xc, yc);
  const Eigen::MatrixXd left = lx.triangularView<Eigen::Lower>().solve(sxy);
  const Eigen::MatrixXd m = ly.triangularView<Eigen::Lower>().solve(left.transpose()).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();

  std::vector<double> out;
  for (int i = 0; i < components; ++i) out.push_back(std::clamp(sv(i), 0.0, 1.0));
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

RccaReport alignment_report(FusedModel& model, const std::vector<CorpusSample>& corpus, bool fused, FusionMode mode,
                            const RccaOptions& opts) {
  const int n = static_cast<int>(corpus.size());
  if (n < opts.min_samples) {
    throw UsageError("alignment_report: need at least " + std::to_string(opts.min_samples) + " samples, got " +
                     std::to_string(n));
  }
  if (fused && mode == FusionMode::kNone) throw UsageError("alignment_report: fused report needs causal or full mode");
  const int layers = model.lm.config.layers;
  const int d = model.lm.config.d_model;
  const int da = model.acoustic.config.d_model;

  std::vector<Eigen::MatrixXd> text(layers, Eigen::MatrixXd(n, d));
  Eigen::MatrixXd audio(n, da);
  for (int i = 0; i < n; ++i) {
    const auto& s = corpus[i];
    const Tensor a = audio_hidden(model.acoustic, s.frames, s.tokens);
    for (int c = 0; c < da; ++c) {
      double acc = 0.0;
      for (int r = 0; r < a.rows(); ++r) acc += a.at(r, c);
      audio(i, c) = acc / a.rows();
    }
    std::vector<int> input{kBos};
    input.insert(input.end(), s.tokens.begin(), s.tokens.end());
    Graph g;
    const auto out = fused ? lm_forward(g, model, input, g.input(a), mode) : lm_forward(g, model, input, std::nullopt, FusionMode::kNone);
    for (int l = 0; l < layers; ++l) {
      const auto& h = g.value(out.layer_hidden[l]);
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int r = 0; r < h.rows(); ++r) acc += h.at(r, c);
        text[l](i, c) = acc / h.rows();
      }
    }
  }

  RccaReport rep;
  rep.components = opts.components;
  rep.lambda = opts.lambda;
  rep.n = n;
  rep.fused = fused;
  rep.injection = model.injection();
  for (int l = 0; l < layers; ++l) {
    const auto corr = rcca(text[l], audio, opts.components, opts.lambda);
    double mean = 0.0;
    for (double c : corr) mean += c;
    rep.layers.push_back(RccaLayer{l + 1, mean / static_cast<double>(corr.size())});
  }
  return rep;
}

nlohmann::ordered_json to_json(const RccaReport& report) {
  nlohmann::ordered_json j;
  j["components"] = report.components;
  j["lambda"] = report.lambda;
  j["n"] = report.n;
  j["fused"] = report.fused;
  j["injection"] = report.injection;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& l : report.layers) rows.push_back({{"layer", l.layer}, {"mean_corr", l.mean_corr}});
  j["layers"] = rows;
  return j;
}

}  // namespace voxfuse
