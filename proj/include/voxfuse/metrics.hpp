// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace voxfuse {

/// Minimum number of substitutions, insertions and deletions turning ref into hyp.
int edit_distance(std::span<const int> ref, std::span<const int> hyp);

/// edit_distance / |ref|. Throws DomainError for an empty reference.
double wer(std::span<const int> ref, std::span<const int> hyp);

/// Whitespace-separated word form, e.g. wer("a b c", "a c") == 1/3.
double wer(std::string_view ref, std::string_view hyp);

/// Corpus-level accumulator: total edits over total reference length.
class WerAccumulator {
 public:
  void add(std::span<const int> ref, std::span<const int> hyp);
  [[nodiscard]] double value() const;
  [[nodiscard]] long edits() const { return edits_; }
  [[nodiscard]] long ref_tokens() const { return ref_tokens_; }

 private:
  long edits_ = 0;
  long ref_tokens_ = 0;
};

}  // namespace voxfuse
