// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <string>
#include <unordered_map>

#include "voxfuse/errors.hpp"

namespace voxfuse {

int edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  // Two-row Levenshtein.
  std::vector<int> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double wer(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw DomainError("wer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

double wer(std::string_view ref, std::string_view hyp) {
  std::unordered_map<std::string, int> vocab;
  auto words = [&vocab](std::string_view s) {
    std::istringstream in{std::string(s)};
    std::vector<int> ids;
    for (std::string w; in >> w;) ids.push_back(vocab.emplace(w, static_cast<int>(vocab.size())).first->second);
    return ids;
  };
  const auto r = words(ref);
  const auto h = words(hyp);
  return wer(r, h);
}

void WerAccumulator::add(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw DomainError("wer: empty reference");
  edits_ += edit_distance(ref, hyp);
  ref_tokens_ += static_cast<long>(ref.size());
}

double WerAccumulator::value() const {
  if (ref_tokens_ == 0) throw DomainError("wer: no references accumulated");
  return static_cast<double>(edits_) / static_cast<double>(ref_tokens_);
}

}  // namespace voxfuse
