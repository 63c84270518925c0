// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "voxfuse/corpus.hpp"

namespace voxfuse::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("voxfuse-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

/// Full-matrix edit distance, kept separate from the library implementation.
inline int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

/// Frame-wise nearest prototype, then run-length collapse into token counts.
inline std::vector<int> nearest_prototype_labels(const Tensor& frames) {
  const Tensor& proto = prototype_table();
  std::vector<int> labels;
  for (int r = 0; r < frames.rows(); ++r) {
    int best = 0;
    double best_d = 1e300;
    for (int m = 0; m < proto.rows(); ++m) {
      double d = 0.0;
      for (int c = 0; c < proto.cols(); ++c) {
        const double x = frames.at(r, c) - proto.at(m, c);
        d += x * x;
      }
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    labels.push_back(best);
  }
  return labels;
}

inline std::vector<int> nearest_prototype_decode(const Tensor& frames, int frames_per_token = 4) {
  const auto labels = nearest_prototype_labels(frames);
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    const int run = static_cast<int>(j - i);
    const int count = std::max(1, (run + frames_per_token / 2) / frames_per_token);
    out.insert(out.end(), count, labels[i]);
    i = j;
  }
  return out;
}

}  // namespace voxfuse::testing
