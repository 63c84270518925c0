// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/model.hpp"

#include <cmath>

namespace voxfuse {

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "none") return FusionMode::kNone;
  if (s == "causal") return FusionMode::kCausal;
  if (s == "full") return FusionMode::kFull;
  throw UsageError("unknown fusion mode '" + s + "' (expected none, causal or full)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kNone: return "none";
    case FusionMode::kCausal: return "causal";
    case FusionMode::kFull: return "full";
  }
  return "?";
}

namespace {

template <typename T>
Param<T> uniform_param(std::vector<int> dims, double bound, std::mt19937_64& rng) {
  BasicTensor<T> t(std::move(dims));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.values) v = static_cast<T>(u(rng));
  return Param<T>{std::move(t), true};
}

template <typename T>
Param<T> normal_param(std::vector<int> dims, double stddev, std::mt19937_64& rng) {
  BasicTensor<T> t(std::move(dims));
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& v : t.values) v = static_cast<T>(n(rng));
  return Param<T>{std::move(t), true};
}

template <typename T>
Param<T> filled_param(std::vector<int> dims, T value) {
  BasicTensor<T> t(std::move(dims));
  std::fill(t.values.begin(), t.values.end(), value);
  return Param<T>{std::move(t), true};
}

template <typename T>
BasicTensor<T> causal_self_mask(int n) {
  BasicTensor<T> m({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) m.at(i, j) = static_cast<T>(kMaskedLogit);
  }
  return m;
}

template <typename T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.values.empty()) return b;
  if (a.cols() != b.cols()) throw ShapeError("concat_rows: column mismatch");
  BasicTensor<T> out({a.rows() + b.rows(), a.cols()});
  std::copy(a.values.begin(), a.values.end(), out.values.begin());
  std::copy(b.values.begin(), b.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

std::vector<int> iota_positions(int begin, int count) {
  std::vector<int> p(count);
  for (int i = 0; i < count; ++i) p[i] = begin + i;
  return p;
}

}  // namespace

// --- Linear ----------------------------------------------------------------

template <typename T>
BasicLinear<T>::BasicLinear(int in, int out, bool with_bias, std::mt19937_64& rng) {
  weight = uniform_param<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (with_bias) bias = filled_param<T>({out}, T(0));
}

template <typename T>
void BasicLinear<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".weight", weight);
  if (bias) fn(prefix + ".bias", *bias);
  if (lora) {
    fn(prefix + ".lora_a", lora->a);
    fn(prefix + ".lora_b", lora->b);
  }
}

template <typename T>
void BasicLinear<T>::attach_lora(const LoraConfig& cfg, std::mt19937_64& rng) {
  const int in = in_features(), out = out_features();
  if (cfg.rank < 1) throw DomainError("apply_adapters: rank must be >= 1");
  if (cfg.rank > in || cfg.rank > out) {
    throw DomainError("apply_adapters: rank " + std::to_string(cfg.rank) + " exceeds matrix dims " +
                      std::to_string(in) + "x" + std::to_string(out));
  }
  if (cfg.dropout < 0.0f || cfg.dropout >= 1.0f) throw DomainError("apply_adapters: dropout must lie in [0, 1)");
  LoraAdapter<T> ad;
  ad.a = uniform_param<T>({in, cfg.rank}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  ad.b = filled_param<T>({cfg.rank, out}, T(0));
  ad.rank = cfg.rank;
  ad.alpha = static_cast<T>(cfg.alpha);
  ad.dropout = static_cast<T>(cfg.dropout);
  lora = std::move(ad);
  weight.trainable = false;
  if (bias) bias->trainable = false;
}

template <typename T>
Var linear(BasicGraph<T>& g, BasicLinear<T>& layer, Var x, const ForwardContext<T>& ctx) {
  Var y = g.matmul(x, g.param(layer.weight));
  if (layer.bias) y = g.add_bias(y, g.param(*layer.bias));
  if (layer.lora) {
    auto& ad = *layer.lora;
    Var xin = x;
    if (ctx.train && ad.dropout > T(0)) {
      if (!ctx.rng) throw UsageError("linear: training with adapter dropout needs an RNG");
      xin = g.dropout(x, ad.dropout, *ctx.rng);
    }
    Var low = g.matmul(g.matmul(xin, g.param(ad.a)), g.param(ad.b));
    y = g.add(y, g.scale(low, ad.scaling()));
  }
  return y;
}

// --- LayerNorm / attention / MLP ------------------------------------------

template <typename T>
BasicLayerNorm<T>::BasicLayerNorm(int width) : gamma(filled_param<T>({width}, T(1))), beta(filled_param<T>({width}, T(0))) {}

template <typename T>
void BasicLayerNorm<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

template <typename T>
BasicAttentionProj<T>::BasicAttentionProj(int d_query, int d_memory, std::mt19937_64& rng)
    : wq(d_query, d_query, true, rng),
      wk(d_memory, d_query, true, rng),
      wv(d_memory, d_query, true, rng),
      wo(d_query, d_query, true, rng) {}

template <typename T>
void BasicAttentionProj<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  wq.visit(prefix + ".wq", fn);
  wk.visit(prefix + ".wk", fn);
  wv.visit(prefix + ".wv", fn);
  wo.visit(prefix + ".wo", fn);
}

template <typename T>
BasicMlp<T>::BasicMlp(int d, int ff, std::mt19937_64& rng) : fc1(d, ff, true, rng), fc2(ff, d, true, rng) {}

template <typename T>
void BasicMlp<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

template <typename T>
Var BasicMlp<T>::operator()(BasicGraph<T>& g, Var x, const ForwardContext<T>& ctx) {
  return linear(g, fc2, g.gelu(linear(g, fc1, x, ctx)), ctx);
}

template <typename T>
void KvCache<T>::append(std::size_t layer, const BasicTensor<T>& k, const BasicTensor<T>& v) {
  if (keys.size() <= layer) {
    keys.resize(layer + 1);
    values.resize(layer + 1);
  }
  keys[layer] = concat_rows(keys[layer], k);
  values[layer] = concat_rows(values[layer], v);
}

// --- Language model -------------------------------------------------------

template <typename T>
void BasicLmBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  ln1.visit(prefix + ".ln1", fn);
  attn.visit(prefix + ".attn", fn);
  ln2.visit(prefix + ".ln2", fn);
  mlp.visit(prefix + ".mlp", fn);
}

template <typename T>
BasicLanguageModel<T>::BasicLanguageModel(const LmConfig& cfg, std::uint64_t seed) : config(cfg) {
  if (cfg.d_model % cfg.heads != 0) throw DomainError("LmConfig: d_model must be divisible by heads");
  std::mt19937_64 rng(seed);
  tok_emb = normal_param<T>({cfg.vocab, cfg.d_model}, 0.1, rng);
  pos_emb = normal_param<T>({cfg.max_positions, cfg.d_model}, 0.1, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    BasicLmBlock<T> b;
    b.ln1 = BasicLayerNorm<T>(cfg.d_model);
    b.ln2 = BasicLayerNorm<T>(cfg.d_model);
    b.attn = BasicAttentionProj<T>(cfg.d_model, cfg.d_model, rng);
    b.mlp = BasicMlp<T>(cfg.d_model, cfg.ff, rng);
    blocks.push_back(std::move(b));
  }
  final_ln = BasicLayerNorm<T>(cfg.d_model);
  head = BasicLinear<T>(cfg.d_model, cfg.vocab, true, rng);
}

template <typename T>
void BasicLanguageModel<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".tok_emb", tok_emb);
  fn(prefix + ".pos_emb", pos_emb);
  for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].visit(prefix + ".blocks." + std::to_string(l), fn);
  final_ln.visit(prefix + ".final_ln", fn);
  head.visit(prefix + ".head", fn);
}

template <typename T>
typename BasicLanguageModel<T>::Output BasicLanguageModel<T>::forward(BasicGraph<T>& g, std::span<const int> tokens,
                                                                      int hook_layer, const Hook& hook,
                                                                      const ForwardContext<T>& ctx) {
  if (tokens.empty()) throw DomainError("lm forward: empty token sequence");
  const int n = static_cast<int>(tokens.size());
  if (n > config.max_positions) throw IndexError("lm forward: sequence longer than max_positions");
  const auto positions = iota_positions(0, n);
  Var x = g.add(g.embedding(g.param(tok_emb), tokens), g.embedding(g.param(pos_emb), positions));
  const BasicTensor<T> mask = causal_self_mask<T>(n);
  Output out;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    auto& b = blocks[l];
    Var a = b.ln1(g, x);
    Var q = linear(g, b.attn.wq, a, ctx);
    Var k = linear(g, b.attn.wk, a, ctx);
    Var v = linear(g, b.attn.wv, a, ctx);
    x = g.add(x, linear(g, b.attn.wo, g.attention(q, k, v, &mask, config.heads), ctx));
    x = g.add(x, b.mlp(g, b.ln2(g, x), ctx));
    if (hook && static_cast<int>(l) + 1 == hook_layer) x = hook(g, x, 0);
    out.layer_hidden.push_back(x);
  }
  out.logits = linear(g, head, final_ln(g, x), ctx);
  return out;
}

template <typename T>
Var BasicLanguageModel<T>::step(BasicGraph<T>& g, int token, KvCache<T>& cache, int hook_layer, const Hook& hook) {
  const int pos = cache.length;
  if (pos >= config.max_positions) throw IndexError("lm step: position beyond max_positions");
  const ForwardContext<T> ctx{};
  const int tok[1] = {token};
  const int p[1] = {pos};
  Var x = g.add(g.embedding(g.param(tok_emb), tok), g.embedding(g.param(pos_emb), p));
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    auto& b = blocks[l];
    Var a = b.ln1(g, x);
    Var q = linear(g, b.attn.wq, a, ctx);
    Var k = linear(g, b.attn.wk, a, ctx);
    Var v = linear(g, b.attn.wv, a, ctx);
    cache.append(l, g.value(k), g.value(v));
    Var att = g.attention(q, g.input(cache.keys[l]), g.input(cache.values[l]), nullptr, config.heads);
    x = g.add(x, linear(g, b.attn.wo, att, ctx));
    x = g.add(x, b.mlp(g, b.ln2(g, x), ctx));
    if (hook && static_cast<int>(l) + 1 == hook_layer) x = hook(g, x, pos);
  }
  ++cache.length;
  return linear(g, head, final_ln(g, x), ctx);
}

// --- Acoustic model -------------------------------------------------------

template <typename T>
BasicTensor<T> sinusoidal_positions(int rows, int width) {
  BasicTensor<T> pe({rows, width});
  for (int p = 0; p < rows; ++p) {
    for (int i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / width);
      pe.at(p, i) = static_cast<T>(std::sin(p * freq));
      if (i + 1 < width) pe.at(p, i + 1) = static_cast<T>(std::cos(p * freq));
    }
  }
  return pe;
}

template <typename T>
void BasicEncoderBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  ln1.visit(prefix + ".ln1", fn);
  attn.visit(prefix + ".attn", fn);
  ln2.visit(prefix + ".ln2", fn);
  mlp.visit(prefix + ".mlp", fn);
}

template <typename T>
void BasicCrossBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  ln1.visit(prefix + ".ln1", fn);
  self_attn.visit(prefix + ".self_attn", fn);
  ln2.visit(prefix + ".ln2", fn);
  cross_attn.visit(prefix + ".cross_attn", fn);
  ln3.visit(prefix + ".ln3", fn);
  mlp.visit(prefix + ".mlp", fn);
}

template <typename T>
BasicAcousticModel<T>::BasicAcousticModel(const AcousticConfig& cfg, std::uint64_t seed) : config(cfg) {
  if (cfg.d_model % cfg.heads != 0) throw DomainError("AcousticConfig: d_model must be divisible by heads");
  std::mt19937_64 rng(seed);
  in_proj = BasicLinear<T>(cfg.d_in, cfg.d_model, true, rng);
  for (int l = 0; l < cfg.enc_layers; ++l) {
    BasicEncoderBlock<T> b;
    b.ln1 = BasicLayerNorm<T>(cfg.d_model);
    b.ln2 = BasicLayerNorm<T>(cfg.d_model);
    b.attn = BasicAttentionProj<T>(cfg.d_model, cfg.d_model, rng);
    b.mlp = BasicMlp<T>(cfg.d_model, cfg.ff, rng);
    encoder.push_back(std::move(b));
  }
  enc_ln = BasicLayerNorm<T>(cfg.d_model);
  tok_emb = normal_param<T>({cfg.vocab, cfg.d_model}, 0.1, rng);
  pos_emb = normal_param<T>({cfg.max_tokens, cfg.d_model}, 0.1, rng);
  // Start decoder position t at the encoder's code for frame kFramesPerToken * t.
  const auto table = sinusoidal_positions<T>(kFramesPerToken * cfg.max_tokens, cfg.d_model);
  for (int t = 0; t < cfg.max_tokens; ++t) {
    for (int c = 0; c < cfg.d_model; ++c) pos_emb.value.at(t, c) = table.at(kFramesPerToken * t, c);
  }
  for (int l = 0; l < cfg.dec_layers; ++l) {
    BasicCrossBlock<T> b;
    b.ln1 = BasicLayerNorm<T>(cfg.d_model);
    b.ln2 = BasicLayerNorm<T>(cfg.d_model);
    b.ln3 = BasicLayerNorm<T>(cfg.d_model);
    b.self_attn = BasicAttentionProj<T>(cfg.d_model, cfg.d_model, rng);
    b.cross_attn = BasicAttentionProj<T>(cfg.d_model, cfg.d_model, rng);
    b.mlp = BasicMlp<T>(cfg.d_model, cfg.ff, rng);
    decoder.push_back(std::move(b));
  }
  dec_ln = BasicLayerNorm<T>(cfg.d_model);
  head = BasicLinear<T>(cfg.d_model, cfg.vocab, true, rng);
}

template <typename T>
void BasicAcousticModel<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  in_proj.visit(prefix + ".in_proj", fn);
  for (std::size_t l = 0; l < encoder.size(); ++l) encoder[l].visit(prefix + ".encoder." + std::to_string(l), fn);
  enc_ln.visit(prefix + ".enc_ln", fn);
  fn(prefix + ".tok_emb", tok_emb);
  fn(prefix + ".pos_emb", pos_emb);
  for (std::size_t l = 0; l < decoder.size(); ++l) decoder[l].visit(prefix + ".decoder." + std::to_string(l), fn);
  dec_ln.visit(prefix + ".dec_ln", fn);
  head.visit(prefix + ".head", fn);
}

namespace {

template <typename T>
Var residual_drop(BasicGraph<T>& g, Var x, const ForwardContext<T>& ctx) {
  if (!ctx.train || ctx.residual_dropout <= T(0)) return x;
  if (!ctx.rng) throw UsageError("acoustic model: training with residual dropout needs an RNG");
  return g.dropout(x, ctx.residual_dropout, *ctx.rng);
}

}  // namespace

template <typename T>
Var BasicAcousticModel<T>::encode(BasicGraph<T>& g, const BasicTensor<T>& frames, const ForwardContext<T>& ctx) {
  if (frames.rank() != 2 || frames.rows() < 1) throw DomainError("acoustic encode: frames must be a non-empty S x d_in matrix");
  if (frames.cols() != config.d_in) {
    throw ShapeError("acoustic encode: frame width " + std::to_string(frames.cols()) + " != d_in " +
                     std::to_string(config.d_in));
  }
  Var x = linear(g, in_proj, g.input(frames), ctx);
  x = g.add(x, g.input(sinusoidal_positions<T>(frames.rows(), config.d_model)));
  for (auto& b : encoder) {
    Var a = b.ln1(g, x);
    Var att = g.attention(linear(g, b.attn.wq, a, ctx), linear(g, b.attn.wk, a, ctx), linear(g, b.attn.wv, a, ctx),
                          nullptr, config.heads);
    x = g.add(x, residual_drop(g, linear(g, b.attn.wo, att, ctx), ctx));
    x = g.add(x, residual_drop(g, b.mlp(g, b.ln2(g, x), ctx), ctx));
  }
  return enc_ln(g, x);
}

template <typename T>
typename BasicAcousticModel<T>::Output BasicAcousticModel<T>::decode(BasicGraph<T>& g, Var memory,
                                                                     std::span<const int> tokens,
                                                                     const ForwardContext<T>& ctx) {
  if (tokens.empty()) throw DomainError("acoustic decode: empty token sequence");
  const int n = static_cast<int>(tokens.size());
  if (n > config.max_tokens) throw IndexError("acoustic decode: sequence longer than max_tokens");
  const auto positions = iota_positions(0, n);
  Var x = g.add(g.embedding(g.param(tok_emb), tokens), g.embedding(g.param(pos_emb), positions));
  const BasicTensor<T> mask = causal_self_mask<T>(n);
  for (auto& b : decoder) {
    Var a = b.ln1(g, x);
    Var att = g.attention(linear(g, b.self_attn.wq, a, ctx), linear(g, b.self_attn.wk, a, ctx),
                          linear(g, b.self_attn.wv, a, ctx), &mask, config.heads);
    x = g.add(x, residual_drop(g, linear(g, b.self_attn.wo, att, ctx), ctx));
    Var c = b.ln2(g, x);
    Var cross = g.attention(linear(g, b.cross_attn.wq, c, ctx), linear(g, b.cross_attn.wk, memory, ctx),
                            linear(g, b.cross_attn.wv, memory, ctx), nullptr, config.heads);
    x = g.add(x, residual_drop(g, linear(g, b.cross_attn.wo, cross, ctx), ctx));
    x = g.add(x, residual_drop(g, b.mlp(g, b.ln3(g, x), ctx), ctx));
  }
  Output out;
  out.hidden = dec_ln(g, x);
  out.logits = linear(g, head, out.hidden, ctx);
  return out;
}

template <typename T>
typename BasicAcousticModel<T>::StepState BasicAcousticModel<T>::start(const BasicTensor<T>& memory) {
  StepState st;
  BasicGraph<T> g;
  const ForwardContext<T> ctx{};
  Var m = g.input(memory);
  for (auto& b : decoder) {
    st.cross_k.push_back(g.value(linear(g, b.cross_attn.wk, m, ctx)));
    st.cross_v.push_back(g.value(linear(g, b.cross_attn.wv, m, ctx)));
  }
  return st;
}

template <typename T>
typename BasicAcousticModel<T>::Output BasicAcousticModel<T>::step(BasicGraph<T>& g, int token, StepState& st) {
  const int pos = st.cache.length;
  if (pos >= config.max_tokens) throw IndexError("acoustic step: position beyond max_tokens");
  const ForwardContext<T> ctx{};
  const int tok[1] = {token};
  const int p[1] = {pos};
  Var x = g.add(g.embedding(g.param(tok_emb), tok), g.embedding(g.param(pos_emb), p));
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    auto& b = decoder[l];
    Var a = b.ln1(g, x);
    Var q = linear(g, b.self_attn.wq, a, ctx);
    Var k = linear(g, b.self_attn.wk, a, ctx);
    Var v = linear(g, b.self_attn.wv, a, ctx);
    st.cache.append(l, g.value(k), g.value(v));
    Var att = g.attention(q, g.input(st.cache.keys[l]), g.input(st.cache.values[l]), nullptr, config.heads);
    x = g.add(x, linear(g, b.self_attn.wo, att, ctx));
    Var c = b.ln2(g, x);
    Var cross = g.attention(linear(g, b.cross_attn.wq, c, ctx), g.input(st.cross_k[l]), g.input(st.cross_v[l]),
                            nullptr, config.heads);
    x = g.add(x, linear(g, b.cross_attn.wo, cross, ctx));
    x = g.add(x, b.mlp(g, b.ln3(g, x), ctx));
  }
  ++st.cache.length;
  Output out;
  out.hidden = dec_ln(g, x);
  out.logits = linear(g, head, out.hidden, ctx);
  return out;
}

// --- Fusion ---------------------------------------------------------------

template <typename T>
BasicFusionLayer<T>::BasicFusionLayer(int d_model, int d_audio, std::mt19937_64& rng)
    : q(d_model, d_model, false, rng), k(d_audio, d_model, false, rng), v(d_audio, d_model, false, rng) {}

template <typename T>
void BasicFusionLayer<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  q.visit(prefix + ".q", fn);
  k.visit(prefix + ".k", fn);
  v.visit(prefix + ".v", fn);
}

template <typename T>
Var cross_modal_fuse(BasicGraph<T>& g, Var h, Var audio, BasicFusionLayer<T>& layer, const BasicTensor<T>& mask,
                     const ForwardContext<T>& ctx) {
  const auto& hv = g.value(h);
  const auto& av = g.value(audio);
  if (hv.rank() != 2 || av.rank() != 2) throw ShapeError("cross_modal_fuse: h and audio must be matrices");
  if (hv.cols() != layer.d_model()) {
    throw ShapeError("cross_modal_fuse: text width " + std::to_string(hv.cols()) + " != d " +
                     std::to_string(layer.d_model()));
  }
  if (av.cols() != layer.d_audio()) {
    throw ShapeError("cross_modal_fuse: audio width " + std::to_string(av.cols()) + " != d_a " +
                     std::to_string(layer.d_audio()));
  }
  if (mask.rank() != 2 || mask.rows() != hv.rows() || mask.cols() != av.rows()) {
    throw ShapeError("cross_modal_fuse: mask " + BasicTensor<T>::dims_string(mask.dims) + " is not T x S = " +
                     std::to_string(hv.rows()) + "x" + std::to_string(av.rows()));
  }
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(layer.d_model()));
  Var q = linear(g, layer.q, h, ctx);
  Var k = linear(g, layer.k, audio, ctx);
  Var v = linear(g, layer.v, audio, ctx);
  Var weights = g.masked_softmax(g.scale(g.matmul_nt(q, k), inv_sqrt_d), mask);
  return g.add(h, g.matmul(weights, v));
}

// --- Fused model ----------------------------------------------------------

template <typename T>
BasicFusedModel<T>::BasicFusedModel(const AcousticConfig& ac, const LmConfig& lc, int injection, std::uint64_t seed)
    : acoustic(ac, seed * 3 + 1), lm(lc, seed * 3 + 2) {
  std::mt19937_64 rng(seed * 3 + 3);
  fusion = BasicFusionLayer<T>(lc.d_model, ac.d_model, rng);
  set_injection(injection);
}

template <typename T>
void BasicFusedModel<T>::set_injection(int layer) {
  if (layer < 1 || layer > lm.config.layers) {
    throw DomainError("injection layer " + std::to_string(layer) + " outside [1, " + std::to_string(lm.config.layers) +
                      "]");
  }
  injection_ = layer;
}

template <typename T>
void BasicFusedModel<T>::freeze_acoustic() {
  acoustic.visit("acoustic", [](const std::string&, Param<T>& p) { p.trainable = false; });
}

template <typename T>
void BasicFusedModel<T>::visit(const ParamVisitor<T>& fn) {
  acoustic.visit("acoustic", fn);
  lm.visit("lm", fn);
  fusion.visit("fusion", fn);
}

template <typename T>
std::vector<std::pair<std::string, Param<T>*>> BasicFusedModel<T>::named_params() {
  std::vector<std::pair<std::string, Param<T>*>> out;
  visit([&out](const std::string& name, Param<T>& p) { out.emplace_back(name, &p); });
  return out;
}

template <typename T>
ParamReport BasicFusedModel<T>::param_report() {
  ParamReport r;
  for (auto& [name, p] : named_params()) {
    const auto n = static_cast<long long>(p->value.size());
    const std::string prefix = name.substr(0, name.find('.'));
    auto& slot = r.by_prefix[prefix];
    slot.second += n;
    r.total += n;
    if (p->trainable) {
      slot.first += n;
      r.trainable += n;
    }
  }
  r.fraction = r.total > 0 ? static_cast<double>(r.trainable) / static_cast<double>(r.total) : 0.0;
  return r;
}

template <typename T>
typename BasicLanguageModel<T>::Output lm_forward(BasicGraph<T>& g, BasicFusedModel<T>& model,
                                                   std::span<const int> tokens, std::optional<Var> audio,
                                                   FusionMode mode, const ForwardContext<T>& ctx,
                                                   const AlignVector* align) {
  if (mode == FusionMode::kNone) {
    if (audio) throw UsageError("lm_forward: audio given with fusion mode none");
    return model.lm.forward(g, tokens, 0, nullptr, ctx);
  }
  if (!audio) throw UsageError("lm_forward: fusion mode " + to_string(mode) + " requires audio states");
  const int text_len = static_cast<int>(tokens.size());
  const int audio_len = g.value(*audio).rows();
  const AlignVector al = align ? *align : proportional_alignment(text_len, audio_len);
  if (al.text_len != text_len || al.audio_len != audio_len) throw ShapeError("lm_forward: alignment does not match T x S");
  const auto mask = build_mask(al, mode == FusionMode::kCausal ? MaskMode::kCausal : MaskMode::kFull).template additive<T>();
  const Var a = *audio;
  auto hook = [&model, &mask, &ctx, a](BasicGraph<T>& gg, Var h, int) {
    return cross_modal_fuse(gg, h, a, model.fusion, mask, ctx);
  };
  return model.lm.forward(g, tokens, model.injection(), hook, ctx);
}

template <typename T>
ParamReport apply_adapters(BasicFusedModel<T>& model, const LoraConfig& cfg, AdapterTargets targets,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (targets.lm_blocks) {
    model.lm.visit("lm", [](const std::string&, Param<T>& p) { p.trainable = false; });
    for (auto& b : model.lm.blocks) {
      for (auto* l : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo, &b.mlp.fc1, &b.mlp.fc2}) l->attach_lora(cfg, rng);
    }
  }
  if (targets.fusion) {
    for (auto* l : {&model.fusion.q, &model.fusion.k, &model.fusion.v}) l->attach_lora(cfg, rng);
    model.fusion_adapters = true;
  }
  model.lora = cfg;
  return model.param_report();
}

#define VOXFUSE_INSTANTIATE(T)                                                                                      \
  template struct BasicLinear<T>;                                                                                  \
  template Var linear<T>(BasicGraph<T>&, BasicLinear<T>&, Var, const ForwardContext<T>&);                          \
  template struct BasicLayerNorm<T>;                                                                               \
  template struct BasicAttentionProj<T>;                                                                           \
  template struct BasicMlp<T>;                                                                                     \
  template struct KvCache<T>;                                                                                      \
  template struct BasicLmBlock<T>;                                                                                 \
  template class BasicLanguageModel<T>;                                                                            \
  template struct BasicEncoderBlock<T>;                                                                            \
  template struct BasicCrossBlock<T>;                                                                              \
  template class BasicAcousticModel<T>;                                                                            \
  template BasicTensor<T> sinusoidal_positions<T>(int, int);                                                       \
  template struct BasicFusionLayer<T>;                                                                             \
  template Var cross_modal_fuse<T>(BasicGraph<T>&, Var, Var, BasicFusionLayer<T>&, const BasicTensor<T>&,          \
                                   const ForwardContext<T>&);                                                      \
  template class BasicFusedModel<T>;                                                                               \
  template typename BasicLanguageModel<T>::Output lm_forward<T>(BasicGraph<T>&, BasicFusedModel<T>&,               \
                                                                std::span<const int>, std::optional<Var>,         \
                                                                FusionMode, const ForwardContext<T>&,             \
                                                                const AlignVector*);                              \
  template ParamReport apply_adapters<T>(BasicFusedModel<T>&, const LoraConfig&, AdapterTargets, std::uint64_t);

VOXFUSE_INSTANTIATE(float)
VOXFUSE_INSTANTIATE(double)

#undef VOXFUSE_INSTANTIATE

}  // namespace voxfuse
