// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/corpus.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "voxfuse/tokenizer.hpp"

namespace voxfuse {

namespace fs = std::filesystem;

const Tensor& prototype_table() {
  static const Tensor table = [] {
    Tensor t({16, 8});
    for (int m = 0; m < 16; ++m) {
      const int d1 = (m >> 3) & 1, d2 = (m >> 2) & 1, d3 = (m >> 1) & 1, d4 = m & 1;
      const int p1 = d1 ^ d2 ^ d4, p2 = d1 ^ d3 ^ d4, p3 = d2 ^ d3 ^ d4;
      const int bits[7] = {p1, p2, d1, p3, d2, d3, d4};
      int overall = 0;
      for (int c = 0; c < 7; ++c) {
        t.at(m, c) = bits[c] ? 1.0f : -1.0f;
        overall ^= bits[c];
      }
      t.at(m, 7) = overall ? 1.0f : -1.0f;
    }
    return t;
  }();
  return table;
}

std::vector<CorpusSample> synthesize_corpus(const CorpusOptions& opts) {
  if (opts.n < 1) throw DomainError("generate_corpus: n must be >= 1");
  if (!(opts.sigma >= 0.0f)) throw DomainError("generate_corpus: sigma must be >= 0");
  if (opts.min_len < 1 || opts.max_len < opts.min_len) throw DomainError("generate_corpus: bad length range");
  if (opts.frames_per_token < 2) throw DomainError("generate_corpus: frames_per_token must be >= 2");
  if (opts.d_in != prototype_table().cols()) throw DomainError("generate_corpus: d_in must be 8");

  const Tensor& proto = prototype_table();
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> length(opts.min_len, opts.max_len);
  std::uniform_int_distribution<int> symbol(0, static_cast<int>(kAlphabet.size()) - 1);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::normal_distribution<double> noise(0.0, static_cast<double>(opts.sigma));

  std::vector<CorpusSample> out;
  out.reserve(static_cast<std::size_t>(opts.n));
  for (int i = 0; i < opts.n; ++i) {
    CorpusSample s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "utt%05d", i);
    s.id = buf;
    const int len = length(rng);
    for (int t = 0; t < len; ++t) s.tokens.push_back(symbol(rng));
    s.text = detokenize(s.tokens);
    std::vector<int> span(len);
    int total = 0;
    for (int t = 0; t < len; ++t) {
      span[t] = opts.frames_per_token + jitter(rng);
      total += span[t];
    }
    s.frames = Tensor({total, opts.d_in});
    int row = 0;
    for (int t = 0; t < len; ++t) {
      for (int f = 0; f < span[t]; ++f, ++row) {
        for (int c = 0; c < opts.d_in; ++c) {
          const double v = proto.at(s.tokens[t], c) + (opts.sigma > 0.0f ? noise(rng) : 0.0);
          s.frames.at(row, c) = static_cast<float>(v);
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

Tensor retime_frames(const Tensor& frames, const std::vector<int>& tokens, int frames_per_token, std::mt19937_64& rng) {
  const Tensor& proto = prototype_table();
  if (frames.cols() != proto.cols() || tokens.empty()) return frames;
  std::vector<int> label(static_cast<std::size_t>(frames.rows()));
  for (int r = 0; r < frames.rows(); ++r) {
    float best = std::numeric_limits<float>::infinity();
    for (int m = 0; m < proto.rows(); ++m) {
      float d = 0.0f;
      for (int c = 0; c < proto.cols(); ++c) {
        const float x = frames.at(r, c) - proto.at(m, c);
        d += x * x;
      }
      if (d < best) best = d, label[r] = m;
    }
  }
  // (symbol, first row, row count) of frame runs and (symbol, count) of token runs.
  std::vector<std::array<int, 3>> frame_runs;
  for (int r = 0; r < frames.rows(); ++r) {
    if (frame_runs.empty() || frame_runs.back()[0] != label[r]) frame_runs.push_back({label[r], r, 0});
    ++frame_runs.back()[2];
  }
  std::vector<std::pair<int, int>> token_runs;
  for (int t : tokens) {
    if (token_runs.empty() || token_runs.back().first != t) token_runs.emplace_back(t, 0);
    ++token_runs.back().second;
  }
  if (frame_runs.size() != token_runs.size()) return frames;
  for (std::size_t i = 0; i < token_runs.size(); ++i)
    if (frame_runs[i][0] != token_runs[i].first) return frames;

  std::uniform_int_distribution<int> jitter(-1, 1);
  std::vector<int> lengths(token_runs.size());
  int total = 0;
  for (std::size_t i = 0; i < token_runs.size(); ++i) {
    for (int k = 0; k < token_runs[i].second; ++k) lengths[i] += frames_per_token + jitter(rng);
    total += lengths[i];
  }
  Tensor out({total, frames.cols()});
  int row = 0;
  for (std::size_t i = 0; i < token_runs.size(); ++i) {
    const auto [sym, first, count] = frame_runs[i];
    for (int j = 0; j < lengths[i]; ++j, ++row) {
      const int src = first + static_cast<int>((static_cast<double>(j) + 0.5) * count / lengths[i]);
      for (int c = 0; c < frames.cols(); ++c) out.at(row, c) = frames.at(src, c);
    }
  }
  return out;
}

namespace {

void write_f32(const fs::path& path, const std::vector<float>& values) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>((u >> (8 * b)) & 0xffu);
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("missing frames file " + path.string());
  if (size != expected * 4) {
    throw IoError("corrupt frames file " + path.string() + ": expected " + std::to_string(expected * 4) +
                  " bytes, found " + std::to_string(size));
  }
  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> bytes(expected * 4);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("read failed for " + path.string());
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

}  // namespace

std::vector<ManifestEntry> write_corpus(const std::vector<CorpusSample>& samples, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "frames").string() + ": " + ec.message());
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (out_dir / "manifest.jsonl").string());

  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) {
    ManifestEntry e{s.id, "frames/" + s.id + ".f32", s.frames.rows(), s.frames.cols(), s.text};
    write_f32(out_dir / e.frames, s.frames.values);
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["frames"] = e.frames;
    j["S"] = e.S;
    j["d_in"] = e.d_in;
    j["text"] = e.text;
    manifest << j.dump() << '\n';
    entries.push_back(std::move(e));
  }
  if (!manifest) throw IoError("write failed for manifest.jsonl");
  return entries;
}

std::vector<ManifestEntry> generate_corpus(const CorpusOptions& opts, const fs::path& out_dir) {
  return write_corpus(synthesize_corpus(opts), out_dir);
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.jsonl", std::ios::binary);
  if (!in) throw IoError("cannot read " + (dir / "manifest.jsonl").string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e{j.at("id").get<std::string>(), j.at("frames").get<std::string>(), j.at("S").get<int>(),
                      j.at("d_in").get<int>(), j.at("text").get<std::string>()};
      if (e.S < 1 || e.d_in < 1) throw IoError("non-positive dims");
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("manifest.jsonl line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const IoError& ex) {
      throw IoError("manifest.jsonl line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return entries;
}

std::vector<CorpusSample> load_corpus(const fs::path& dir) {
  std::vector<CorpusSample> out;
  for (auto& e : read_manifest(dir)) {
    CorpusSample s;
    s.id = e.id;
    s.text = e.text;
    s.tokens = tokenize(e.text);
    const auto count = static_cast<std::size_t>(e.S) * static_cast<std::size_t>(e.d_in);
    s.frames = Tensor({e.S, e.d_in}, read_f32(dir / e.frames, count));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace voxfuse
