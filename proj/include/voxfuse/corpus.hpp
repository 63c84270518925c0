// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "voxfuse/tensor.hpp"

namespace voxfuse {

struct CorpusOptions {
  int n = 2000;
  std::uint64_t seed = 1;
  float sigma = 0.1f;
  int min_len = 4;
  int max_len = 24;
  int frames_per_token = 4;
  int d_in = 8;
};

struct CorpusSample {
  std::string id;
  std::string text;
  std::vector<int> tokens;
  Tensor frames;  // S × d_in
};

struct ManifestEntry {
  std::string id;
  std::string frames;  // path relative to the corpus directory
  int S = 0;
  int d_in = 0;
  std::string text;
};

/// 16 × 8 table of ±1 prototypes built from the extended Hamming [8,4,4]
/// code, so any two prototypes differ in at least four coordinates.
const Tensor& prototype_table();

/// Builds samples in memory. Each token spans frames_per_token + j frames,
/// j uniform in {-1, 0, +1}; every frame is the token prototype plus
/// N(0, sigma²) noise per coordinate.
std::vector<CorpusSample> synthesize_corpus(const CorpusOptions& opts);

/// Training augmentation: frames are labelled by nearest prototype, each run
/// of k equal tokens gets a fresh length (k spans drawn as in
/// synthesize_corpus) and its frames are stretched to it. Samples whose runs
/// do not match the tokens are returned unchanged.
Tensor retime_frames(const Tensor& frames, const std::vector<int>& tokens, int frames_per_token, std::mt19937_64& rng);

/// Writes manifest.jsonl and frames/<id>.f32 under out_dir.
std::vector<ManifestEntry> write_corpus(const std::vector<CorpusSample>& samples, const std::filesystem::path& out_dir);

std::vector<ManifestEntry> generate_corpus(const CorpusOptions& opts, const std::filesystem::path& out_dir);

/// Reads and validates a corpus directory. Frame files whose byte length
/// differs from S·d_in·4 are rejected with IoError.
std::vector<CorpusSample> load_corpus(const std::filesystem::path& dir);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

}  // namespace voxfuse
