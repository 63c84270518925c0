// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "voxfuse/graph.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse {

/// Monotone map from text position t to the last audio state it may read.
struct AlignVector {
  std::vector<int> s;
  int text_len = 0;
  int audio_len = 0;
};

enum class MaskMode { kCausal, kFull };

/// T×S attention mask. `open(t, s)` is true where the additive value is 0;
/// everything else is minus infinity.
class AlignMask {
 public:
  AlignMask(MaskMode mode, int text_len, int audio_len, std::vector<int> last_open);

  [[nodiscard]] MaskMode mode() const { return mode_; }
  [[nodiscard]] int text_len() const { return text_len_; }
  [[nodiscard]] int audio_len() const { return audio_len_; }
  [[nodiscard]] bool open(int t, int s) const { return s <= last_open_.at(t); }
  /// Additive form with 0 for open and kMaskedLogit for closed entries.
  template <typename T>
  [[nodiscard]] BasicTensor<T> additive() const;

  friend bool operator==(const AlignMask& a, const AlignMask& b) {
    return a.text_len_ == b.text_len_ && a.audio_len_ == b.audio_len_ && a.last_open_ == b.last_open_;
  }

 private:
  MaskMode mode_;
  int text_len_;
  int audio_len_;
  std::vector<int> last_open_;
};

/// s[t] = floor(S·t / T) in exact integer arithmetic.
AlignVector proportional_alignment(int text_len, int audio_len);

/// Alignment for decoding when the final text length is not yet known: the
/// text length is replaced by an estimate and positions past the estimate
/// are clamped to the last audio state.
AlignVector estimated_alignment(int rows, int audio_len, int text_len_estimate);

/// s_t for a single position under the estimated alignment; used by the
/// streaming decoder without materialising the vector.
int estimated_prefix(int t, int audio_len, int text_len_estimate);

AlignMask build_mask(const AlignVector& align, MaskMode mode);

/// Last audio state position t may consume.
int streaming_prefix(const AlignVector& align, int t);

/// One line per text position, '0' for open and '-' for masked entries.
std::string render_mask(const AlignMask& mask);

MaskMode parse_mask_mode(const std::string& s);
std::string to_string(MaskMode mode);

}  // namespace voxfuse
