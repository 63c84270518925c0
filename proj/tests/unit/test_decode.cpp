// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "voxfuse/decode.hpp"
#include "voxfuse/errors.hpp"
#include "voxfuse/train.hpp"

using namespace voxfuse;

namespace {

AcousticConfig small_acoustic() { return AcousticConfig{8, 16, 2, 32, 1, 1, kVocabSize, 128}; }
LmConfig small_lm() { return LmConfig{kVocabSize, 16, 2, 32, 3, 128}; }

std::vector<CorpusSample> corpus(int n, float sigma, std::uint64_t seed) {
  CorpusOptions opts;
  opts.n = n;
  opts.sigma = sigma;
  opts.seed = seed;
  opts.max_len = 10;
  return synthesize_corpus(opts);
}

// Random fusion weights scaled up so audio visibly changes the predictions.
FusedModel noisy_fused(int injection, std::uint64_t seed) {
  FusedModel model(small_acoustic(), small_lm(), injection, seed);
  for (auto& [name, p] : model.named_params()) {
    if (name.rfind("fusion.", 0) == 0) {
      for (float& v : p->value.values) v *= 4.0f;
    }
  }
  return model;
}

}  // namespace

TEST_CASE("decode length limit") {
  CHECK(max_decode_length(1) == 1);
  CHECK(max_decode_length(40) == 20);
  CHECK(max_decode_length(41) == 20);
}

TEST_CASE("decode mode names") {
  for (auto m : {DecodeMode::kOffline, DecodeMode::kStreaming, DecodeMode::kOfflineCausal, DecodeMode::kTextOnly,
                 DecodeMode::kAcoustic}) {
    CHECK(parse_decode_mode(to_string(m)) == m);
  }
  CHECK_THROWS(parse_decode_mode("beam"));
}

TEST_CASE("streaming decode equals the causal-masked full forward") {
  for (int injection : {1, 2, 3}) {
    FusedModel model = noisy_fused(injection, 40 + injection);
    int differing = 0;
    for (const auto& s : corpus(30, 0.1f, 3)) {
      const auto stream = decode(model, s.frames, DecodeMode::kStreaming);
      const auto oracle = decode(model, s.frames, DecodeMode::kOfflineCausal);
      CHECK(stream.tokens == oracle.tokens);
      CHECK(stream.truncated == oracle.truncated);
      CHECK(stream.visible == oracle.visible);
      differing += decode(model, s.frames, DecodeMode::kTextOnly).tokens != stream.tokens;
    }
    // The fusion path must actually matter for the comparison to mean anything.
    CHECK(differing > 0);
  }
}

TEST_CASE("streaming sees a non-decreasing audio prefix and never more than offline") {
  FusedModel model = noisy_fused(2, 50);
  for (const auto& s : corpus(10, 0.1f, 4)) {
    const auto r = decode(model, s.frames, DecodeMode::kStreaming);
    const auto full = decode(model, s.frames, DecodeMode::kOffline);
    for (std::size_t i = 0; i < r.visible.size(); ++i) {
      CHECK(r.visible[i] >= 1);
      CHECK(r.visible[i] <= full.audio_rows);
      if (i > 0) CHECK(r.visible[i - 1] <= r.visible[i]);
    }
    for (int v : full.visible) CHECK(v == full.audio_rows);
  }
}

TEST_CASE("decoding never emits the start symbol and flags truncation") {
  FusedModel model = noisy_fused(1, 60);
  for (const auto& s : corpus(10, 0.1f, 5)) {
    for (auto mode : {DecodeMode::kOffline, DecodeMode::kStreaming, DecodeMode::kTextOnly, DecodeMode::kAcoustic}) {
      const auto r = decode(model, s.frames, mode);
      const int limit = max_decode_length(s.frames.rows());
      CHECK(static_cast<int>(r.tokens.size()) <= limit);
      for (int t : r.tokens) {
        CHECK(t >= 0);
        CHECK(t < kAlphabetSize);
      }
      if (!r.truncated) CHECK(static_cast<int>(r.tokens.size()) < limit + 1);
    }
  }
}

TEST_CASE("decoding rejects malformed frames") {
  FusedModel model = noisy_fused(1, 61);
  CHECK_THROWS(decode(model, Tensor({0, 8}), DecodeMode::kOffline));
  CHECK_THROWS(decode(model, Tensor({4, 5}), DecodeMode::kOffline));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = corpus(24, 0.1f, 6);
  auto run = [&] {
    FusedModel model(small_acoustic(), small_lm(), 1, 7);
    TrainConfig cfg;
    cfg.stage = Stage::kAcoustic;
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.lr = 1e-3;
    cfg.seed = 7;
    return train(cfg, model, split_corpus(data, 4)).epoch_losses;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);
}

TEST_CASE("a short acoustic run lowers the loss") {
  const auto data = corpus(64, 0.1f, 8);
  FusedModel model(small_acoustic(), small_lm(), 1, 9);
  TrainConfig cfg;
  cfg.stage = Stage::kAcoustic;
  cfg.epochs = 4;
  cfg.batch = 8;
  cfg.lr = 3e-3;
  const auto rep = train(cfg, model, split_corpus(data, 8));
  CHECK(rep.epoch_losses.back() < rep.epoch_losses.front());
  CHECK(rep.final_held_out_loss < rep.initial_held_out_loss);
  CHECK(rep.params.by_prefix.at("lm").first == 0);
}

TEST_CASE("fusion training leaves the acoustic model untouched") {
  const auto data = corpus(16, 0.1f, 10);
  FusedModel model(small_acoustic(), small_lm(), 2, 11);
  model.freeze_acoustic();
  std::vector<std::vector<float>> before;
  for (auto& [name, p] : model.named_params())
    if (name.rfind("acoustic.", 0) == 0) before.push_back(p->value.values);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 4;
  const auto rep = train(cfg, model, split_corpus(data, 4));
  CHECK(rep.params.by_prefix.at("acoustic").first == 0);
  std::size_t i = 0;
  for (auto& [name, p] : model.named_params())
    if (name.rfind("acoustic.", 0) == 0) CHECK(p->value.values == before[i++]);
}

TEST_CASE("split keeps the trailing samples for evaluation") {
  const auto data = corpus(10, 0.1f, 12);
  const auto split = split_corpus(data, 3);
  REQUIRE(split.train.size() == 7);
  REQUIRE(split.held_out.size() == 3);
  CHECK(split.held_out[0].id == data[7].id);
  CHECK_THROWS(split_corpus(data, 10));
}

TEST_CASE("training errors") {
  const auto data = corpus(8, 0.1f, 13);
  FusedModel model(small_acoustic(), small_lm(), 1, 14);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(cfg, model, split_corpus(data, 2)), DomainError);
  TrainConfig fusion;
  CHECK_THROWS_AS(prepare_model(fusion), UsageError);
}

TEST_CASE("non-finite loss aborts with a diagnostic naming the stage") {
  const auto data = corpus(8, 0.1f, 15);
  FusedModel model(small_acoustic(), small_lm(), 1, 16);
  for (auto& [name, p] : model.named_params())
    if (name == "lm.tok_emb") p->value.values.assign(p->value.values.size(), std::nanf(""));
  TrainConfig cfg;
  cfg.stage = Stage::kLm;
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(train(cfg, model, split_corpus(data, 2)), doctest::Contains("lm"), NumericError);
}
