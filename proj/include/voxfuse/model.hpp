// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/alignment.hpp"
#include "voxfuse/graph.hpp"
#include "voxfuse/tensor.hpp"

namespace voxfuse {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct AcousticConfig {
  int d_in = 8;
  int d_model = 48;
  int heads = 4;
  int ff = 192;
  int enc_layers = 2;
  int dec_layers = 2;
  int vocab = 18;
  int max_tokens = 128;
};

struct LmConfig {
  int vocab = 18;
  int d_model = 64;
  int heads = 4;
  int ff = 256;
  int layers = 6;
  int max_positions = 128;
};

struct LoraConfig {
  int rank = 8;
  float alpha = 16.0f;
  float dropout = 0.1f;
};

enum class FusionMode { kNone, kCausal, kFull };

FusionMode parse_fusion_mode(const std::string& s);
std::string to_string(FusionMode mode);

template <typename T>
struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // dropout source; required when train is set
  /// Dropout on residual branches of the acoustic model (training only).
  T residual_dropout = 0;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Low-rank update W + (alpha / r) · A · B with B zero at initialisation.
template <typename T>
struct LoraAdapter {
  Param<T> a;  // in × r
  Param<T> b;  // r × out
  int rank = 0;
  T alpha = 0;
  T dropout = 0;

  [[nodiscard]] T scaling() const { return alpha / static_cast<T>(rank); }
};

template <typename T>
struct BasicLinear {
  Param<T> weight;  // in × out
  std::optional<Param<T>> bias;
  std::optional<LoraAdapter<T>> lora;

  BasicLinear() = default;
  BasicLinear(int in, int out, bool with_bias, std::mt19937_64& rng);

  [[nodiscard]] int in_features() const { return weight.value.rows(); }
  [[nodiscard]] int out_features() const { return weight.value.cols(); }
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  /// Attaches an adapter and freezes the base weight and bias.
  void attach_lora(const LoraConfig& cfg, std::mt19937_64& rng);
};

template <typename T>
Var linear(BasicGraph<T>& g, BasicLinear<T>& layer, Var x, const ForwardContext<T>& ctx);

template <typename T>
struct BasicLayerNorm {
  Param<T> gamma;
  Param<T> beta;

  BasicLayerNorm() = default;
  explicit BasicLayerNorm(int width);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  Var operator()(BasicGraph<T>& g, Var x) { return g.layer_norm(x, g.param(gamma), g.param(beta)); }
};

template <typename T>
struct BasicAttentionProj {
  BasicLinear<T> wq, wk, wv, wo;

  BasicAttentionProj() = default;
  BasicAttentionProj(int d_query, int d_memory, std::mt19937_64& rng);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

template <typename T>
struct BasicMlp {
  BasicLinear<T> fc1, fc2;

  BasicMlp() = default;
  BasicMlp(int d, int ff, std::mt19937_64& rng);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  Var operator()(BasicGraph<T>& g, Var x, const ForwardContext<T>& ctx);
};

/// Keys and values already produced for earlier positions, one entry per layer.
template <typename T>
struct KvCache {
  std::vector<BasicTensor<T>> keys;
  std::vector<BasicTensor<T>> values;
  int length = 0;

  void append(std::size_t layer, const BasicTensor<T>& k, const BasicTensor<T>& v);
};

// ---------------------------------------------------------------------------
// Language model (decoder-only)
// ---------------------------------------------------------------------------

template <typename T>
struct BasicLmBlock {
  BasicLayerNorm<T> ln1, ln2;
  BasicAttentionProj<T> attn;
  BasicMlp<T> mlp;

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

template <typename T>
class BasicLanguageModel {
 public:
  /// Called on the hidden states of rows [offset, offset + rows) after the
  /// hooked layer; returns the states passed to the next layer.
  using Hook = std::function<Var(BasicGraph<T>&, Var hidden, int offset)>;

  struct Output {
    Var logits;
    std::vector<Var> layer_hidden;  // output of block l (1-based index l+1)
  };

  BasicLanguageModel() = default;
  BasicLanguageModel(const LmConfig& config, std::uint64_t seed);

  Output forward(BasicGraph<T>& g, std::span<const int> tokens, int hook_layer, const Hook& hook,
                 const ForwardContext<T>& ctx);
  /// Consumes one token at position cache.length; returns 1×vocab logits.
  Var step(BasicGraph<T>& g, int token, KvCache<T>& cache, int hook_layer, const Hook& hook);

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  LmConfig config;
  Param<T> tok_emb;
  Param<T> pos_emb;
  std::vector<BasicLmBlock<T>> blocks;
  BasicLayerNorm<T> final_ln;
  BasicLinear<T> head;
};

// ---------------------------------------------------------------------------
// Acoustic encoder-decoder (frozen stand-in for the speech model)
// ---------------------------------------------------------------------------

template <typename T>
struct BasicEncoderBlock {
  BasicLayerNorm<T> ln1, ln2;
  BasicAttentionProj<T> attn;
  BasicMlp<T> mlp;

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

template <typename T>
struct BasicCrossBlock {
  BasicLayerNorm<T> ln1, ln2, ln3;
  BasicAttentionProj<T> self_attn;
  BasicAttentionProj<T> cross_attn;
  BasicMlp<T> mlp;

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

template <typename T>
class BasicAcousticModel {
 public:
  struct Output {
    Var logits;
    Var hidden;  // last decoder layer after the final norm: AudioHidden
  };

  /// Per-utterance decoding state: encoder memory projected per layer plus
  /// the self-attention cache.
  struct StepState {
    std::vector<BasicTensor<T>> cross_k, cross_v;
    KvCache<T> cache;
  };

  BasicAcousticModel() = default;
  BasicAcousticModel(const AcousticConfig& config, std::uint64_t seed);

  /// frames: S×d_in → S×d_model
  Var encode(BasicGraph<T>& g, const BasicTensor<T>& frames, const ForwardContext<T>& ctx = {});
  /// Teacher-forced decoder pass over tokens (starting with BOS).
  Output decode(BasicGraph<T>& g, Var memory, std::span<const int> tokens, const ForwardContext<T>& ctx = {});
  StepState start(const BasicTensor<T>& memory);
  /// Consumes one token; logits and hidden are 1-row.
  Output step(BasicGraph<T>& g, int token, StepState& state);

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  AcousticConfig config;
  BasicLinear<T> in_proj;
  std::vector<BasicEncoderBlock<T>> encoder;
  BasicLayerNorm<T> enc_ln;
  Param<T> tok_emb;
  Param<T> pos_emb;
  std::vector<BasicCrossBlock<T>> decoder;
  BasicLayerNorm<T> dec_ln;
  BasicLinear<T> head;
};

/// Sinusoidal position table, rows × width.
template <typename T>
BasicTensor<T> sinusoidal_positions(int rows, int width);

// ---------------------------------------------------------------------------
// Cross-modal fusion
// ---------------------------------------------------------------------------

/// Single-head residual cross-attention from LM states (T×d) to audio
/// states (S×d_a): Q is d×d, K and V are d_a×d, no biases.
template <typename T>
struct BasicFusionLayer {
  BasicLinear<T> q, k, v;

  BasicFusionLayer() = default;
  BasicFusionLayer(int d_model, int d_audio, std::mt19937_64& rng);
  [[nodiscard]] int d_model() const { return q.in_features(); }
  [[nodiscard]] int d_audio() const { return k.in_features(); }
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

/// h + softmax((hQ)(aK)ᵀ/√d + M)(aV); `mask` is the additive T×S form.
template <typename T>
Var cross_modal_fuse(BasicGraph<T>& g, Var h, Var audio, BasicFusionLayer<T>& layer, const BasicTensor<T>& mask,
                     const ForwardContext<T>& ctx = {});

struct ParamReport {
  long long trainable = 0;
  long long total = 0;
  double fraction = 0.0;
  /// prefix ("acoustic", "lm", "fusion") → {trainable, total}
  std::map<std::string, std::pair<long long, long long>> by_prefix;
};

/// The complete model: frozen acoustic model, decoder-only LM and the fusion
/// layer injected after LM block `injection` (1-based).
template <typename T>
class BasicFusedModel {
 public:
  BasicFusedModel() = default;
  BasicFusedModel(const AcousticConfig& ac, const LmConfig& lc, int injection, std::uint64_t seed);

  void set_injection(int layer);
  [[nodiscard]] int injection() const { return injection_; }
  void freeze_acoustic();

  /// Names follow the checkpoint convention: acoustic.*, lm.*, fusion.*.
  void visit(const ParamVisitor<T>& fn);
  [[nodiscard]] std::vector<std::pair<std::string, Param<T>*>> named_params();
  [[nodiscard]] ParamReport param_report();

  BasicAcousticModel<T> acoustic;
  BasicLanguageModel<T> lm;
  BasicFusionLayer<T> fusion;
  std::optional<LoraConfig> lora;
  bool fusion_adapters = false;

 private:
  int injection_ = 1;
};

/// LM forward with optional fusion. `audio` must be present iff mode is not
/// kNone. When `align` is null the alignment uses T = tokens.size() and
/// S = audio rows.
template <typename T>
typename BasicLanguageModel<T>::Output lm_forward(BasicGraph<T>& g, BasicFusedModel<T>& model,
                                                   std::span<const int> tokens, std::optional<Var> audio,
                                                   FusionMode mode, const ForwardContext<T>& ctx = {},
                                                   const AlignVector* align = nullptr);

struct AdapterTargets {
  bool lm_blocks = true;
  bool fusion = false;
};

/// Attaches low-rank adapters to the selected matrices and returns the
/// parameter accounting after attachment.
template <typename T>
ParamReport apply_adapters(BasicFusedModel<T>& model, const LoraConfig& cfg, AdapterTargets targets,
                           std::uint64_t seed);

/// Copies values and trainable flags between two models of identical layout.
template <typename Src, typename Dst>
void copy_params(BasicFusedModel<Src>& src, BasicFusedModel<Dst>& dst) {
  auto s = src.named_params();
  auto d = dst.named_params();
  if (s.size() != d.size()) throw ShapeError("copy_params: models have different layouts");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].first != d[i].first || s[i].second->value.dims != d[i].second->value.dims) {
      throw ShapeError("copy_params: mismatch at " + s[i].first);
    }
    d[i].second->value.values.assign(s[i].second->value.values.begin(), s[i].second->value.values.end());
    d[i].second->trainable = s[i].second->trainable;
  }
}

using AcousticModel = BasicAcousticModel<float>;
using LanguageModel = BasicLanguageModel<float>;
using FusionLayer = BasicFusionLayer<float>;
using FusedModel = BasicFusedModel<float>;

inline constexpr int kAlphabetSize = 16;
inline constexpr int kBos = 16;
inline constexpr int kEos = 17;
inline constexpr int kVocabSize = 18;
/// Nominal frames per text symbol in the synthetic corpus.
inline constexpr int kFramesPerToken = 4;

}  // namespace voxfuse
