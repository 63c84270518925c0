// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "voxfuse/alignment.hpp"

using namespace voxfuse;

TEST_CASE("proportional alignment examples") {
  CHECK(proportional_alignment(4, 4).s == std::vector<int>{0, 1, 2, 3});
  CHECK(proportional_alignment(3, 7).s == std::vector<int>{0, 2, 4});
  CHECK(proportional_alignment(1, 5).s == std::vector<int>{0});
  CHECK_THROWS_AS(proportional_alignment(0, 3), DomainError);
  CHECK_THROWS_AS(proportional_alignment(3, 0), DomainError);
}

TEST_CASE("proportional alignment has no floating-point drift for large lengths") {
  const auto a = proportional_alignment(999'983, 1'000'003);
  CHECK(a.s.back() == static_cast<int>(1'000'003LL * 999'982 / 999'983));
}

TEST_CASE("causal and full masks") {
  const float inf = static_cast<float>(kMaskedLogit);
  CHECK(build_mask(proportional_alignment(2, 2), MaskMode::kCausal).additive<float>().values ==
        std::vector<float>{0, inf, 0, 0});
  CHECK(build_mask(proportional_alignment(1, 3), MaskMode::kCausal).additive<float>().values ==
        std::vector<float>{0, inf, inf});
  for (float v : build_mask(proportional_alignment(5, 9), MaskMode::kFull).additive<float>().values) CHECK(v == 0.0f);
}

TEST_CASE("streaming prefix") {
  CHECK(streaming_prefix(proportional_alignment(3, 7), 2) == 4);
  CHECK(streaming_prefix(proportional_alignment(4, 4), 3) == 3);
  for (int t = 1; t <= 9; ++t) CHECK(streaming_prefix(proportional_alignment(t, 11), 0) == 0);
  CHECK_THROWS_AS(streaming_prefix(proportional_alignment(3, 7), 3), IndexError);
  CHECK_THROWS_AS(streaming_prefix(proportional_alignment(3, 7), -1), IndexError);
}

TEST_CASE("alignment and mask properties for all lengths up to 64") {
  for (int text = 1; text <= 64; ++text) {
    for (int audio = 1; audio <= 64; ++audio) {
      const auto a = proportional_alignment(text, audio);
      REQUIRE(static_cast<int>(a.s.size()) == text);
      CHECK(a.s[0] == 0);
      for (int t = 0; t < text; ++t) {
        CHECK(a.s[t] == audio * t / text);
        CHECK(a.s[t] >= 0);
        CHECK(a.s[t] <= audio - 1);
        if (t > 0) CHECK(a.s[t - 1] <= a.s[t]);
      }
      const auto causal = build_mask(a, MaskMode::kCausal);
      for (int t = 0; t < text; ++t) {
        CHECK(causal.open(t, 0));
        for (int s = 0; s < audio; ++s) CHECK(causal.open(t, s) == (s <= a.s[t]));
      }
      AlignVector last{std::vector<int>(text, audio - 1), text, audio};
      CHECK(build_mask(a, MaskMode::kFull) == build_mask(last, MaskMode::kCausal));
      if (audio % text == 0) {
        const int k = audio / text;
        for (int t = 1; t < text; ++t) CHECK(a.s[t] - a.s[t - 1] == k);
      }
    }
  }
}

TEST_CASE("estimated alignment clamps past the estimate") {
  const auto a = estimated_alignment(6, 4, 4);
  CHECK(a.s == std::vector<int>{0, 1, 2, 3, 3, 3});
  CHECK(estimated_prefix(2, 7, 3) == 4);
  CHECK(estimated_alignment(3, 7, 3).s == proportional_alignment(3, 7).s);
}

TEST_CASE("render_mask prints one row per text position") {
  CHECK(render_mask(build_mask(proportional_alignment(3, 7), MaskMode::kCausal)) == "0------\n000----\n00000--\n");
  CHECK(render_mask(build_mask(proportional_alignment(2, 3), MaskMode::kFull)) == "000\n000\n");
}

TEST_CASE("mask mode names") {
  CHECK(parse_mask_mode("causal") == MaskMode::kCausal);
  CHECK(parse_mask_mode("full") == MaskMode::kFull);
  CHECK(to_string(MaskMode::kFull) == "full");
  CHECK_THROWS(parse_mask_mode("diagonal"));
}
