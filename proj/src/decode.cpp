// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/decode.hpp"

#include <algorithm>

namespace voxfuse {

namespace {

// Greedy choice over the output row; BOS is never emitted.
int argmax_token(const Tensor& logits, int row) {
  const auto r = logits.row(row);
  int best = -1;
  for (int i = 0; i < static_cast<int>(r.size()); ++i) {
    if (i == kBos) continue;
    if (best < 0 || r[i] > r[best]) best = i;
  }
  return best;
}

Tensor open_row(int cols) { return Tensor({1, cols}); }

}  // namespace

int max_decode_length(int frames) { return std::max(1, 2 * frames / kFramesPerToken); }

Tensor audio_hidden(AcousticModel& model, const Tensor& frames, std::span<const int> tokens) {
  std::vector<int> input{kBos};
  input.insert(input.end(), tokens.begin(), tokens.end());
  Graph g;
  const Var memory = model.encode(g, frames);
  return g.value(model.decode(g, memory, input).hidden);
}

AudioStream::AudioStream(AcousticModel& model, const Tensor& frames, int max_len)
    : model_(&model), max_len_(max_len) {
  if (max_len < 1) throw DomainError("AudioStream: max_len must be >= 1");
  Graph g;
  state_ = model.start(g.value(model.encode(g, frames)));
}

void AudioStream::advance() {
  Graph g;
  const auto out = model_->step(g, next_, state_);
  const auto& h = g.value(out.hidden);
  rows_.emplace_back(h.values.begin(), h.values.end());
  const int tok = argmax_token(g.value(out.logits), 0);
  if (tok == kEos) {
    finished_ = true;
  } else {
    tokens_.push_back(tok);
    next_ = tok;
    if (static_cast<int>(tokens_.size()) >= max_len_) {
      finished_ = true;
      truncated_ = true;
    }
  }
}

void AudioStream::pull(int row) {
  while (!finished_ && available() <= row) advance();
}

Tensor AudioStream::rows(int count) const {
  if (count < 1 || count > available()) throw IndexError("AudioStream: requested rows beyond those decoded");
  const int width = static_cast<int>(rows_.front().size());
  Tensor t({count, width});
  for (int i = 0; i < count; ++i) std::copy(rows_[i].begin(), rows_[i].end(), t.row(i).begin());
  return t;
}

Transcript transcribe(AcousticModel& model, const Tensor& frames, int max_len) {
  AudioStream stream(model, frames, max_len);
  while (!stream.finished()) stream.pull(stream.available());
  return Transcript{stream.tokens(), stream.rows(stream.available()), stream.truncated()};
}

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "offline") return DecodeMode::kOffline;
  if (s == "streaming") return DecodeMode::kStreaming;
  if (s == "offline-causal") return DecodeMode::kOfflineCausal;
  if (s == "text-only") return DecodeMode::kTextOnly;
  if (s == "acoustic") return DecodeMode::kAcoustic;
  throw UsageError("unknown decode mode '" + s + "' (expected offline, streaming, offline-causal, text-only or acoustic)");
}

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kOffline: return "offline";
    case DecodeMode::kStreaming: return "streaming";
    case DecodeMode::kOfflineCausal: return "offline-causal";
    case DecodeMode::kTextOnly: return "text-only";
    case DecodeMode::kAcoustic: return "acoustic";
  }
  return "?";
}

DecodeResult decode(FusedModel& model, const Tensor& frames, DecodeMode mode) {
  const int max_len = max_decode_length(frames.rows());
  DecodeResult res;

  if (mode == DecodeMode::kAcoustic) {
    auto tr = transcribe(model.acoustic, frames, max_len);
    res.tokens = std::move(tr.tokens);
    res.truncated = tr.truncated;
    res.audio_rows = tr.hidden.rows();
    return res;
  }

  // Emits tokens until EOS or the length cap; `next` maps the input prefix to logits of its last row.
  auto run = [&](auto&& next) {
    std::vector<int> prefix{kBos};
    while (true) {
      const int tok = next(prefix);
      if (tok == kEos) return;
      res.tokens.push_back(tok);
      prefix.push_back(tok);
      if (static_cast<int>(res.tokens.size()) >= max_len) {
        res.truncated = true;
        return;
      }
    }
  };

  if (mode == DecodeMode::kOfflineCausal) {
    const Tensor audio = transcribe(model.acoustic, frames, max_len).hidden;
    const int s_rows = audio.rows();
    res.audio_rows = s_rows;
    run([&](const std::vector<int>& prefix) {
      const int n = static_cast<int>(prefix.size());
      const AlignVector align = estimated_alignment(n, s_rows, s_rows);
      Graph g;
      const auto out = lm_forward(g, model, prefix, g.input(audio), FusionMode::kCausal, {}, &align);
      res.visible.push_back(align.s.back() + 1);
      return argmax_token(g.value(out.logits), n - 1);
    });
    return res;
  }

  KvCache<float> cache;
  if (mode == DecodeMode::kTextOnly) {
    run([&](const std::vector<int>& prefix) {
      Graph g;
      return argmax_token(g.value(model.lm.step(g, prefix.back(), cache, 0, nullptr)), 0);
    });
    return res;
  }

  if (mode == DecodeMode::kOffline) {
    const Tensor audio = transcribe(model.acoustic, frames, max_len).hidden;
    res.audio_rows = audio.rows();
    const Tensor mask = open_row(audio.rows());
    auto hook = [&](Graph& g, Var h, int) { return cross_modal_fuse(g, h, g.input(audio), model.fusion, mask); };
    run([&](const std::vector<int>& prefix) {
      Graph g;
      res.visible.push_back(audio.rows());
      return argmax_token(g.value(model.lm.step(g, prefix.back(), cache, model.injection(), hook)), 0);
    });
    return res;
  }

  AudioStream stream(model.acoustic, frames, max_len);
  run([&](const std::vector<int>& prefix) {
    const int t = static_cast<int>(prefix.size()) - 1;
    stream.pull(t);
    const int visible = std::min(t, stream.available() - 1) + 1;
    res.visible.push_back(visible);
    const Tensor audio = stream.rows(visible);
    const Tensor mask = open_row(visible);
    auto hook = [&](Graph& g, Var h, int) { return cross_modal_fuse(g, h, g.input(audio), model.fusion, mask); };
    Graph g;
    return argmax_token(g.value(model.lm.step(g, prefix.back(), cache, model.injection(), hook)), 0);
  });
  res.audio_rows = stream.available();
  return res;
}

}  // namespace voxfuse
