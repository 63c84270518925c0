// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>

#include <doctest.h>

#include "test_util.hpp"
#include "voxfuse/checkpoint.hpp"
#include "voxfuse/errors.hpp"

using namespace voxfuse;

namespace {

AcousticConfig small_acoustic() { return AcousticConfig{8, 8, 2, 16, 1, 1, kVocabSize, 64}; }
LmConfig small_lm() { return LmConfig{kVocabSize, 8, 2, 16, 3, 64}; }

void expect_same(FusedModel& a, FusedModel& b, const std::string& prefix) {
  auto pa = a.named_params();
  auto pb = b.named_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first.rfind(prefix, 0) != 0) continue;
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second->value.values == pb[i].second->value.values);
  }
}

}  // namespace

TEST_CASE("tensor files round trip bit for bit") {
  testing::TempDir dir;
  NamedTensors ts;
  ts.emplace_back("a", Tensor({2, 3}, std::vector<float>{1.5f, -0.0f, 3e-38f, 7.0f, 1e30f, -2.25f}));
  ts.emplace_back("b.c", Tensor({1}, std::vector<float>{42.0f}));
  save_tensors(dir.path() / "t.voxk", ts);
  const auto back = load_tensors(dir.path() / "t.voxk");
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "a");
  CHECK(back[0].second.dims == ts[0].second.dims);
  CHECK(std::memcmp(back[0].second.values.data(), ts[0].second.values.data(), 6 * sizeof(float)) == 0);
  CHECK(back[1].first == "b.c");
}

TEST_CASE("tensor files with bad magic or truncated payload are rejected") {
  testing::TempDir dir;
  NamedTensors ts;
  ts.emplace_back("a", Tensor({4}, std::vector<float>{1, 2, 3, 4}));
  const auto path = dir.path() / "t.voxk";
  save_tensors(path, ts);
  const std::string bytes = testing::read_file(path);
  SUBCASE("magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(path, std::ios::binary) << bad;
    CHECK_THROWS_AS(load_tensors(path), IoError);
  }
  SUBCASE("truncated") {
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(load_tensors(path), IoError);
  }
  SUBCASE("missing") { CHECK_THROWS_AS(load_tensors(dir.path() / "nope.voxk"), IoError); }
}

TEST_CASE("model checkpoints round trip and carry their configuration") {
  testing::TempDir dir;
  FusedModel model(small_acoustic(), small_lm(), 2, 3);
  apply_adapters(model, LoraConfig{2, 4.0f, 0.0f}, AdapterTargets{true, true}, 5);
  for (auto& [name, p] : model.named_params()) {
    if (name.ends_with(".lora_b")) p->value.values.assign(p->value.values.size(), 0.125f);
  }
  save_model(dir.path() / "all.voxk", model, {true, true, true});
  FusedModel back = load_model({dir.path() / "all.voxk"});
  CHECK(back.injection() == 2);
  CHECK(back.lm.config.layers == 3);
  CHECK(back.acoustic.config.d_model == 8);
  REQUIRE(back.lora.has_value());
  CHECK(back.lora->rank == 2);
  expect_same(model, back, "");
}

TEST_CASE("loading an acoustic checkpoint freezes the acoustic model") {
  testing::TempDir dir;
  FusedModel model(small_acoustic(), small_lm(), 1, 4);
  save_model(dir.path() / "ac.voxk", model, {true, false, false});
  FusedModel other(small_acoustic(), small_lm(), 1, 99);
  const auto found = load_model_into(load_tensors(dir.path() / "ac.voxk"), other);
  CHECK(found.acoustic);
  CHECK_FALSE(found.lm);
  expect_same(model, other, "acoustic.");
  CHECK(other.param_report().by_prefix.at("acoustic").first == 0);
}

TEST_CASE("separate stage checkpoints combine into one model") {
  testing::TempDir dir;
  FusedModel a(small_acoustic(), small_lm(), 1, 6);
  FusedModel b(small_acoustic(), small_lm(), 1, 7);
  save_model(dir.path() / "ac.voxk", a, {true, false, false});
  save_model(dir.path() / "lm.voxk", b, {false, true, false});
  FusedModel both = load_model({dir.path() / "ac.voxk", dir.path() / "lm.voxk"});
  expect_same(a, both, "acoustic.");
  expect_same(b, both, "lm.");
}

TEST_CASE("checkpoint layout mismatches are reported") {
  testing::TempDir dir;
  FusedModel model(small_acoustic(), small_lm(), 1, 8);
  save_model(dir.path() / "lm.voxk", model, {false, true, false});
  FusedModel wider(small_acoustic(), LmConfig{kVocabSize, 16, 2, 16, 3, 64}, 1, 8);
  CHECK_THROWS_AS(load_model_into(load_tensors(dir.path() / "lm.voxk"), wider), IoError);
  auto ts = load_tensors(dir.path() / "lm.voxk");
  ts.erase(ts.begin() + 3);
  FusedModel same(small_acoustic(), small_lm(), 1, 8);
  CHECK_THROWS_WITH_AS(load_model_into(ts, same), doctest::Contains("missing tensor"), IoError);
}
