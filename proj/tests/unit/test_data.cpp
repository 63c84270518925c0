// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "test_util.hpp"
#include "voxfuse/corpus.hpp"
#include "voxfuse/tokenizer.hpp"

using namespace voxfuse;
namespace fs = std::filesystem;

TEST_CASE("tokenizer examples") {
  CHECK(tokenize("").empty());
  CHECK(detokenize({}).empty());
  CHECK(tokenize("abca") == std::vector<int>{0, 1, 2, 0});
  CHECK(tokenize("p") == std::vector<int>{15});
  CHECK(detokenize(std::vector<int>{16, 0, 17}) == "<a>");
}

TEST_CASE("tokenizer names the offending symbol and offset") {
  try {
    tokenize("abz");
    FAIL("expected EncodingError");
  } catch (const EncodingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'z'") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(detokenize(std::vector<int>{18}), EncodingError);
}

TEST_CASE("tokenizer round trip on random strings") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(0, 30);
  std::uniform_int_distribution<int> sym(0, 15);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const int n = len(rng);
    for (int j = 0; j < n; ++j) s.push_back(static_cast<char>('a' + sym(rng)));
    CHECK(detokenize(tokenize(s)) == s);
  }
}

TEST_CASE("prototype table is injective with minimum distance 4") {
  const Tensor& p = prototype_table();
  for (int a = 0; a < 16; ++a) {
    for (int b = a + 1; b < 16; ++b) {
      int diff = 0;
      for (int c = 0; c < 8; ++c) diff += p.at(a, c) != p.at(b, c);
      CHECK(diff >= 4);
    }
  }
}

TEST_CASE("a noiseless sample is recovered exactly by nearest prototype decoding") {
  CorpusOptions opts;
  opts.n = 1;
  opts.sigma = 0.0f;
  const auto s = synthesize_corpus(opts).at(0);
  CHECK(testing::nearest_prototype_decode(s.frames) == s.tokens);
}

TEST_CASE("noiseless frames are exact prototype repetitions") {
  CorpusOptions opts;
  opts.n = 50;
  opts.sigma = 0.0f;
  const Tensor& proto = prototype_table();
  auto dedupe = [](std::vector<int> v) {
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  for (const auto& s : synthesize_corpus(opts)) {
    std::vector<int> labels;
    for (int r = 0; r < s.frames.rows(); ++r) {
      int match = -1;
      for (int m = 0; m < proto.rows(); ++m) {
        bool eq = true;
        for (int c = 0; c < proto.cols(); ++c) eq = eq && s.frames.at(r, c) == proto.at(m, c);
        if (eq) match = m;
      }
      REQUIRE(match >= 0);
      labels.push_back(match);
    }
    CHECK(dedupe(labels) == dedupe(s.tokens));
  }
}

TEST_CASE("sample lengths and frame spans stay in range") {
  CorpusOptions opts;
  opts.n = 300;
  int lo = 100, hi = 0;
  for (const auto& s : synthesize_corpus(opts)) {
    const int t = static_cast<int>(s.tokens.size());
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    CHECK(s.frames.rows() >= 3 * t);
    CHECK(s.frames.rows() <= 5 * t);
    CHECK(s.frames.cols() == 8);
  }
  CHECK(lo == 4);
  CHECK(hi == 24);
}

TEST_CASE("nearest prototype decoding stays within 2% token error at sigma 0.1") {
  CorpusOptions opts;
  opts.n = 2000;
  opts.sigma = 0.1f;
  long edits = 0, total = 0;
  for (const auto& s : synthesize_corpus(opts)) {
    edits += testing::levenshtein(s.tokens, testing::nearest_prototype_decode(s.frames));
    total += static_cast<long>(s.tokens.size());
  }
  CHECK(static_cast<double>(edits) / static_cast<double>(total) <= 0.02);
}

TEST_CASE("corpus generation is byte-reproducible and loads back") {
  testing::TempDir dir;
  CorpusOptions opts;
  opts.n = 20;
  opts.seed = 9;
  generate_corpus(opts, dir.path() / "a");
  generate_corpus(opts, dir.path() / "b");
  CHECK(testing::read_file(dir.path() / "a" / "manifest.jsonl") == testing::read_file(dir.path() / "b" / "manifest.jsonl"));
  for (const auto& e : read_manifest(dir.path() / "a")) {
    CHECK(testing::read_file(dir.path() / "a" / e.frames) == testing::read_file(dir.path() / "b" / e.frames));
    CHECK(fs::file_size(dir.path() / "a" / e.frames) == static_cast<std::uintmax_t>(e.S * e.d_in * 4));
  }
  const auto first = testing::read_file(dir.path() / "a" / "manifest.jsonl");
  CHECK(first.rfind("{\"id\":\"utt00000\",\"frames\":\"frames/utt00000.f32\",\"S\":", 0) == 0);

  const auto original = synthesize_corpus(opts);
  const auto loaded = load_corpus(dir.path() / "a");
  REQUIRE(loaded.size() == original.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == original[i].id);
    CHECK(loaded[i].tokens == original[i].tokens);
    CHECK(loaded[i].frames.values == original[i].frames.values);
  }
}

TEST_CASE("different seeds give different corpora") {
  CorpusOptions a, b;
  a.n = b.n = 5;
  b.seed = a.seed + 1;
  CHECK(synthesize_corpus(a)[0].text != synthesize_corpus(b)[0].text);
}

TEST_CASE("corrupt or missing frame files are rejected") {
  testing::TempDir dir;
  CorpusOptions opts;
  opts.n = 3;
  const auto entries = generate_corpus(opts, dir.path());
  const fs::path victim = dir.path() / entries[1].frames;
  SUBCASE("truncated") {
    fs::resize_file(victim, fs::file_size(victim) - 4);
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("corrupt frames file"), IoError);
  }
  SUBCASE("extended") {
    std::ofstream(victim, std::ios::app | std::ios::binary) << "xxxx";
    CHECK_THROWS_AS(load_corpus(dir.path()), IoError);
  }
  SUBCASE("missing") {
    fs::remove(victim);
    CHECK_THROWS_AS(load_corpus(dir.path()), IoError);
  }
}

TEST_CASE("invalid generation options are rejected") {
  CorpusOptions opts;
  opts.n = 0;
  CHECK_THROWS_AS(synthesize_corpus(opts), DomainError);
  opts.n = 1;
  opts.sigma = -1.0f;
  CHECK_THROWS_AS(synthesize_corpus(opts), DomainError);
}

TEST_CASE("unwritable output directory is an I/O error") {
  testing::TempDir dir;
  const fs::path blocker = dir.path() / "file";
  std::ofstream(blocker) << "x";
  CorpusOptions opts;
  opts.n = 1;
  CHECK_THROWS_AS(generate_corpus(opts, blocker / "sub"), IoError);
}

TEST_CASE("retimed frames keep the transcript and respect span bounds") {
  CorpusOptions opts;
  opts.n = 200;
  opts.seed = 9;
  const auto samples = synthesize_corpus(opts);
  std::mt19937_64 rng(4);
  int changed = 0;
  for (const auto& s : samples) {
    const Tensor out = retime_frames(s.frames, s.tokens, opts.frames_per_token, rng);
    REQUIRE(out.cols() == s.frames.cols());
    const int T = static_cast<int>(s.tokens.size());
    CHECK(out.rows() >= 3 * T);
    CHECK(out.rows() <= 5 * T);
    changed += out.rows() != s.frames.rows();
    // Each output row is a copy of some input row.
    std::vector<int> dedup_in, dedup_out;
    const auto labels_in = testing::nearest_prototype_labels(s.frames);
    const auto labels_out = testing::nearest_prototype_labels(out);
    for (int l : labels_in)
      if (dedup_in.empty() || dedup_in.back() != l) dedup_in.push_back(l);
    for (int l : labels_out)
      if (dedup_out.empty() || dedup_out.back() != l) dedup_out.push_back(l);
    CHECK(dedup_in == dedup_out);
  }
  CHECK(changed > 100);
}

TEST_CASE("retiming leaves mismatched samples unchanged") {
  CorpusOptions opts;
  opts.n = 1;
  opts.sigma = 0.0f;
  const auto s = synthesize_corpus(opts).front();
  std::mt19937_64 rng(1);
  auto wrong = s.tokens;
  wrong.push_back(wrong.back() == 0 ? 1 : 0);
  const Tensor out = retime_frames(s.frames, wrong, 4, rng);
  CHECK(out.values == s.frames.values);
}
