// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "voxfuse/model.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse {

/// Frames per token in the synthetic corpus; bounds hypothesis length.
/// Greedy length cap: 2·S/k, at least 1.
int max_decode_length(int frames);

/// Acoustic decoder states for BOS + tokens, teacher-forced: (T+1) × d_a.
Tensor audio_hidden(AcousticModel& model, const Tensor& frames, std::span<const int> tokens);

struct Transcript {
  std::vector<int> tokens;  // without BOS / EOS
  Tensor hidden;            // one row per decoder step, including the step that emitted EOS
  bool truncated = false;
};

/// Greedy transcription with the acoustic model alone.
Transcript transcribe(AcousticModel& model, const Tensor& frames, int max_len);

/// Incremental acoustic decoder. Rows are produced on demand, so a consumer
/// that only needs states 0..s never causes later rows to be computed.
class AudioStream {
 public:
  AudioStream(AcousticModel& model, const Tensor& frames, int max_len);

  /// Ensures rows 0..row exist when the decoder has not finished earlier.
  void pull(int row);
  [[nodiscard]] bool finished() const { return finished_; }
  [[nodiscard]] int available() const { return static_cast<int>(rows_.size()); }
  [[nodiscard]] Tensor rows(int count) const;
  [[nodiscard]] const std::vector<int>& tokens() const { return tokens_; }
  [[nodiscard]] bool truncated() const { return truncated_; }

 private:
  void advance();

  AcousticModel* model_;
  AcousticModel::StepState state_;
  std::vector<std::vector<float>> rows_;
  std::vector<int> tokens_;
  int next_ = kBos;
  int max_len_;
  bool finished_ = false;
  bool truncated_ = false;
};

enum class DecodeMode { kOffline, kStreaming, kOfflineCausal, kTextOnly, kAcoustic };

DecodeMode parse_decode_mode(const std::string& s);
std::string to_string(DecodeMode mode);

struct DecodeResult {
  std::vector<int> tokens;  // without BOS / EOS
  bool truncated = false;
  /// Audio states visible when predicting each emitted token (empty for text-only).
  std::vector<int> visible;
  int audio_rows = 0;
};

/// Greedy decoding.
///  offline         full mask over the complete acoustic transcript states
///  streaming       causal mask, acoustic states pulled lazily up to s_t
///  offline-causal  full re-forward per step under the causal mask (reference
///                  for streaming)
///  text-only       LM without fusion
///  acoustic        the acoustic model's own transcript
/// Decoding alignment uses the audio state count as the text-length estimate.
DecodeResult decode(FusedModel& model, const Tensor& frames, DecodeMode mode);

}  // namespace voxfuse
