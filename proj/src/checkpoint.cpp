// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>

namespace voxfuse {

namespace fs = std::filesystem;

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int b = 0; b < 2; ++b) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> data, std::string source) : buf_(std::move(data)), src_(std::move(source)) {}
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  [[nodiscard]] bool done() const { return pos_ == buf_.size(); }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("truncated checkpoint " + src_);
    const auto* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::vector<std::uint8_t> buf_;
  std::string src_;
  std::size_t pos_ = 0;
};

Tensor ints_tensor(std::initializer_list<double> v) {
  std::vector<float> vals;
  for (double x : v) vals.push_back(static_cast<float>(x));
  const int n = static_cast<int>(vals.size());
  return Tensor({n}, std::move(vals));
}

const Tensor* find(const NamedTensors& ts, const std::string& name) {
  for (const auto& [n, t] : ts) {
    if (n == name) return &t;
  }
  return nullptr;
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

int as_int(const Tensor& t, std::size_t i) {
  if (i >= t.size()) throw IoError("meta tensor too short");
  return static_cast<int>(t.values[i]);
}

}  // namespace

void save_tensors(const fs::path& path, const NamedTensors& tensors) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw IoError("tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  if (!f) throw IoError("write failed for " + path.string());
}

NamedTensors load_tensors(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r(std::move(data), path.string());
  if (r.str(4) != std::string(kCheckpointMagic, 4)) throw IoError("bad magic in " + path.string());
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16());
    const int rank = r.u8();
    if (rank < 1 || rank > 3) throw IoError("tensor " + name + ": bad rank " + std::to_string(rank));
    std::vector<int> dims(rank);
    for (int& d : dims) d = static_cast<int>(r.u32());
    std::size_t n = 1;
    for (int d : dims) {
      if (d <= 0) throw IoError("tensor " + name + ": non-positive dim");
      n *= static_cast<std::size_t>(d);
    }
    std::vector<float> vals(n);
    for (auto& v : vals) v = r.f32();
    out.emplace_back(std::move(name), Tensor(std::move(dims), std::move(vals)));
  }
  if (!r.done()) throw IoError("trailing bytes in " + path.string());
  return out;
}

NamedTensors model_state(FusedModel& model, CheckpointContents parts) {
  NamedTensors out;
  if (parts.acoustic) {
    const auto& c = model.acoustic.config;
    out.emplace_back("meta.acoustic", ints_tensor({static_cast<double>(c.d_in), static_cast<double>(c.d_model),
                                                   static_cast<double>(c.heads), static_cast<double>(c.ff),
                                                   static_cast<double>(c.enc_layers), static_cast<double>(c.dec_layers),
                                                   static_cast<double>(c.vocab), static_cast<double>(c.max_tokens)}));
  }
  if (parts.lm) {
    const auto& c = model.lm.config;
    out.emplace_back("meta.lm", ints_tensor({static_cast<double>(c.vocab), static_cast<double>(c.d_model),
                                             static_cast<double>(c.heads), static_cast<double>(c.ff),
                                             static_cast<double>(c.layers), static_cast<double>(c.max_positions)}));
  }
  if (parts.fusion) out.emplace_back("meta.fusion", ints_tensor({static_cast<double>(model.injection())}));
  if (model.lora && (parts.lm || parts.fusion)) {
    const auto& l = *model.lora;
    out.emplace_back("meta.lora", ints_tensor({static_cast<double>(l.rank), static_cast<double>(l.alpha),
                                               static_cast<double>(l.dropout), model.lm.blocks.empty() ? 0.0 : (model.lm.blocks[0].attn.wq.lora ? 1.0 : 0.0),
                                               model.fusion_adapters ? 1.0 : 0.0}));
  }
  for (auto& [name, p] : model.named_params()) {
    const bool take = (parts.acoustic && starts_with(name, "acoustic.")) || (parts.lm && starts_with(name, "lm.")) ||
                      (parts.fusion && starts_with(name, "fusion."));
    if (!take) continue;
    Tensor t = p->value;
    t.grad.reset();
    out.emplace_back(name, std::move(t));
  }
  return out;
}

void save_model(const fs::path& path, FusedModel& model, CheckpointContents parts) {
  save_tensors(path, model_state(model, parts));
}

CheckpointContents load_model_into(const NamedTensors& tensors, FusedModel& model) {
  CheckpointContents found;
  for (const auto& [name, t] : tensors) {
    found.acoustic = found.acoustic || starts_with(name, "acoustic.");
    found.lm = found.lm || starts_with(name, "lm.");
    found.fusion = found.fusion || starts_with(name, "fusion.");
  }
  if (const Tensor* f = find(tensors, "meta.fusion")) model.set_injection(as_int(*f, 0));

  std::map<std::string, Param<float>*> params;
  for (auto& [name, p] : model.named_params()) params.emplace(name, p);

  for (const auto& [name, t] : tensors) {
    if (starts_with(name, "meta.")) continue;
    auto it = params.find(name);
    if (it == params.end()) throw IoError("checkpoint tensor '" + name + "' does not belong to this model");
    if (it->second->value.dims != t.dims) {
      throw IoError("checkpoint tensor '" + name + "' has dims " + Tensor::dims_string(t.dims) + ", model expects " +
                    Tensor::dims_string(it->second->value.dims));
    }
    it->second->value.values = t.values;
  }
  const bool has_adapters = find(tensors, "meta.lora") != nullptr;
  for (auto& [name, p] : params) {
    const bool adapter = name.ends_with(".lora_a") || name.ends_with(".lora_b");
    if (adapter && !has_adapters) continue;
    const bool expected = (found.acoustic && starts_with(name, "acoustic.")) || (found.lm && starts_with(name, "lm.")) ||
                          (found.fusion && starts_with(name, "fusion."));
    if (expected && !find(tensors, name)) throw IoError("checkpoint is missing tensor '" + name + "'");
  }
  if (found.acoustic) model.freeze_acoustic();
  return found;
}

FusedModel load_model(const std::vector<fs::path>& paths) {
  std::vector<NamedTensors> all;
  for (const auto& p : paths) all.push_back(load_tensors(p));

  AcousticConfig ac;
  LmConfig lc;
  int injection = 1;
  std::optional<Tensor> lora;
  for (const auto& ts : all) {
    if (const Tensor* m = find(ts, "meta.acoustic")) {
      ac = AcousticConfig{as_int(*m, 0), as_int(*m, 1), as_int(*m, 2), as_int(*m, 3),
                          as_int(*m, 4), as_int(*m, 5), as_int(*m, 6), as_int(*m, 7)};
    }
    if (const Tensor* m = find(ts, "meta.lm")) {
      lc = LmConfig{as_int(*m, 0), as_int(*m, 1), as_int(*m, 2), as_int(*m, 3), as_int(*m, 4), as_int(*m, 5)};
    }
    if (const Tensor* m = find(ts, "meta.fusion")) injection = as_int(*m, 0);
    if (const Tensor* m = find(ts, "meta.lora")) lora = *m;
  }
  FusedModel model(ac, lc, std::min(std::max(injection, 1), lc.layers), 0);
  if (lora) {
    const LoraConfig cfg{as_int(*lora, 0), lora->values.at(1), lora->values.at(2)};
    apply_adapters(model, cfg, AdapterTargets{as_int(*lora, 3) != 0, as_int(*lora, 4) != 0}, 0);
  }
  for (const auto& ts : all) load_model_into(ts, model);
  return model;
}

}  // namespace voxfuse
