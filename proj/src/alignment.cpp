// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/alignment.hpp"

#include <algorithm>
#include <cstdint>

namespace voxfuse {

AlignMask::AlignMask(MaskMode mode, int text_len, int audio_len, std::vector<int> last_open)
    : mode_(mode), text_len_(text_len), audio_len_(audio_len), last_open_(std::move(last_open)) {
  if (text_len_ <= 0 || audio_len_ <= 0) throw DomainError("AlignMask: lengths must be positive");
  if (static_cast<int>(last_open_.size()) != text_len_) throw ShapeError("AlignMask: one entry per text position");
  for (int s : last_open_) {
    if (s < 0 || s >= audio_len_) throw DomainError("AlignMask: open prefix outside [0, S-1]");
  }
}

template <typename T>
BasicTensor<T> AlignMask::additive() const {
  BasicTensor<T> out({text_len_, audio_len_});
  for (int t = 0; t < text_len_; ++t) {
    for (int s = last_open_[t] + 1; s < audio_len_; ++s) out.at(t, s) = static_cast<T>(kMaskedLogit);
  }
  return out;
}

template BasicTensor<float> AlignMask::additive<float>() const;
template BasicTensor<double> AlignMask::additive<double>() const;

AlignVector proportional_alignment(int text_len, int audio_len) {
  if (text_len <= 0 || audio_len <= 0) {
    throw DomainError("proportional_alignment: T and S must be >= 1 (got T=" + std::to_string(text_len) +
                      ", S=" + std::to_string(audio_len) + ")");
  }
  AlignVector a{std::vector<int>(text_len), text_len, audio_len};
  for (int t = 0; t < text_len; ++t) {
    a.s[t] = static_cast<int>(static_cast<std::int64_t>(audio_len) * t / text_len);
  }
  return a;
}

int estimated_prefix(int t, int audio_len, int text_len_estimate) {
  if (audio_len <= 0 || text_len_estimate <= 0) throw DomainError("estimated_prefix: lengths must be >= 1");
  if (t < 0) throw IndexError("estimated_prefix: negative position");
  const auto s = static_cast<std::int64_t>(audio_len) * t / text_len_estimate;
  return static_cast<int>(std::min<std::int64_t>(s, audio_len - 1));
}

AlignVector estimated_alignment(int rows, int audio_len, int text_len_estimate) {
  if (rows <= 0) throw DomainError("estimated_alignment: rows must be >= 1");
  AlignVector a{std::vector<int>(rows), rows, audio_len};
  for (int t = 0; t < rows; ++t) a.s[t] = estimated_prefix(t, audio_len, text_len_estimate);
  return a;
}

AlignMask build_mask(const AlignVector& align, MaskMode mode) {
  if (align.text_len <= 0 || align.audio_len <= 0 || static_cast<int>(align.s.size()) != align.text_len) {
    throw DomainError("build_mask: invalid alignment vector");
  }
  if (mode == MaskMode::kFull) {
    return AlignMask(mode, align.text_len, align.audio_len, std::vector<int>(align.text_len, align.audio_len - 1));
  }
  return AlignMask(mode, align.text_len, align.audio_len, align.s);
}

int streaming_prefix(const AlignVector& align, int t) {
  if (t < 0 || t >= static_cast<int>(align.s.size())) {
    throw IndexError("streaming_prefix: t=" + std::to_string(t) + " outside [0, " +
                     std::to_string(static_cast<int>(align.s.size()) - 1) + "]");
  }
  return align.s[t];
}

std::string render_mask(const AlignMask& mask) {
  std::string out;
  out.reserve(static_cast<std::size_t>(mask.text_len()) * (mask.audio_len() + 1));
  for (int t = 0; t < mask.text_len(); ++t) {
    for (int s = 0; s < mask.audio_len(); ++s) out += mask.open(t, s) ? '0' : '-';
    out += '\n';
  }
  return out;
}

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "causal") return MaskMode::kCausal;
  if (s == "full") return MaskMode::kFull;
  throw UsageError("unknown mask mode '" + s + "' (expected causal or full)");
}

std::string to_string(MaskMode mode) { return mode == MaskMode::kCausal ? "causal" : "full"; }

}  // namespace voxfuse
