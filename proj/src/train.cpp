// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/train.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <memory>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "voxfuse/checkpoint.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/optim.hpp"
#include "voxfuse/tokenizer.hpp"

namespace voxfuse {

Stage parse_stage(const std::string& s) {
  if (s == "acoustic") return Stage::kAcoustic;
  if (s == "lm") return Stage::kLm;
  if (s == "fusion") return Stage::kFusion;
  throw UsageError("unknown stage '" + s + "' (expected acoustic, lm or fusion)");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kAcoustic: return "acoustic";
    case Stage::kLm: return "lm";
    case Stage::kFusion: return "fusion";
  }
  return "?";
}

LrSchedule parse_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "cosine") return LrSchedule::kCosine;
  throw UsageError("unknown schedule '" + s + "' (expected constant or cosine)");
}

std::string to_string(LrSchedule schedule) { return schedule == LrSchedule::kCosine ? "cosine" : "constant"; }

TrainConfig stage_defaults(Stage stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  switch (stage) {
    case Stage::kAcoustic:
      cfg.lr = 1e-3;
      cfg.batch = 8;
      cfg.schedule = LrSchedule::kCosine;
      cfg.retime = true;
      break;
    case Stage::kLm:
      cfg.lr = 3e-4;
      break;
    case Stage::kFusion:
      cfg.lr = 1e-3;
      cfg.batch = 8;
      cfg.schedule = LrSchedule::kCosine;
      break;
  }
  return cfg;
}

double effective_lr(const TrainConfig& cfg) {
  if (cfg.lr > 0.0) return cfg.lr;
  return stage_defaults(cfg.stage).lr;
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["stage"] = to_string(cfg.stage);
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["lr"] = effective_lr(cfg);
  j["schedule"] = to_string(cfg.schedule);
  if (cfg.stage == Stage::kAcoustic) {
    j["dropout"] = cfg.dropout;
    j["retime"] = cfg.retime;
  }
  j["seed"] = cfg.seed;
  j["injection"] = cfg.injection;
  j["mode"] = to_string(cfg.mode);
  j["lora"] = {{"rank", cfg.lora.rank}, {"alpha", cfg.lora.alpha}, {"dropout", cfg.lora.dropout}};
  j["held_out"] = cfg.held_out;
  j["data"] = cfg.data;
  j["out"] = cfg.out;
  j["acoustic_ckpt"] = cfg.acoustic_ckpt;
  j["lm_ckpt"] = cfg.lm_ckpt;
  return j;
}

nlohmann::ordered_json to_json(const ParamReport& report) {
  nlohmann::ordered_json j;
  j["trainable"] = report.trainable;
  j["total"] = report.total;
  j["fraction"] = report.fraction;
  nlohmann::ordered_json by = nlohmann::ordered_json::object();
  for (const auto& [prefix, counts] : report.by_prefix) by[prefix] = {{"trainable", counts.first}, {"total", counts.second}};
  j["by_prefix"] = by;
  return j;
}

nlohmann::ordered_json to_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["config"] = report.config;
  j["epoch_losses"] = report.epoch_losses;
  j["held_out_losses"] = report.held_out_losses;
  j["best_epoch"] = report.best_epoch;
  j["initial_held_out_loss"] = report.initial_held_out_loss;
  j["final_held_out_loss"] = report.final_held_out_loss;
  j["params"] = to_json(report.params);
  j["wer"] = report.wer;
  j["seconds"] = report.seconds;
  return j;
}

Split split_corpus(std::vector<CorpusSample> corpus, int held_out) {
  if (held_out < 0) throw DomainError("split_corpus: held_out must be >= 0");
  if (held_out >= static_cast<int>(corpus.size())) {
    throw UsageError("split_corpus: corpus of " + std::to_string(corpus.size()) + " samples cannot hold out " +
                     std::to_string(held_out));
  }
  Split s;
  const auto cut = corpus.end() - held_out;
  s.held_out.assign(std::make_move_iterator(cut), std::make_move_iterator(corpus.end()));
  corpus.erase(cut, corpus.end());
  s.train = std::move(corpus);
  return s;
}

FusedModel prepare_model(const TrainConfig& cfg) {
  if (cfg.stage != Stage::kFusion) return FusedModel(AcousticConfig{}, LmConfig{}, 1, cfg.seed);
  if (cfg.acoustic_ckpt.empty()) throw UsageError("fusion training requires an acoustic checkpoint");
  if (cfg.lm_ckpt.empty()) throw UsageError("fusion training requires a language model checkpoint");
  FusedModel model = load_model({cfg.acoustic_ckpt, cfg.lm_ckpt});
  // Fusion weights are drawn from the run seed, not the loader's placeholder.
  std::mt19937_64 rng(cfg.seed * 3 + 3);
  model.fusion = FusionLayer(model.lm.config.d_model, model.acoustic.config.d_model, rng);
  model.set_injection(cfg.injection);
  model.freeze_acoustic();
  apply_adapters(model, cfg.lora, AdapterTargets{}, cfg.seed * 3 + 4);
  return model;
}

namespace {

struct Example {
  std::vector<int> input;    // BOS + text
  std::vector<int> targets;  // text + EOS
};

Example make_example(const CorpusSample& s) {
  Example e;
  e.input.push_back(kBos);
  e.input.insert(e.input.end(), s.tokens.begin(), s.tokens.end());
  e.targets = s.tokens;
  e.targets.push_back(kEos);
  return e;
}

// Teacher-forced summed NLL of one sample.
class LossFn {
 public:
  LossFn(Stage stage, FusedModel& model, const std::vector<CorpusSample>& samples, FusionMode mode)
      : stage_(stage), model_(model), samples_(samples), mode_(mode) {
    for (const auto& s : samples) examples_.push_back(make_example(s));
    if (stage == Stage::kFusion) {
      if (mode == FusionMode::kNone) throw UsageError("fusion training needs mode causal or full");
      // The acoustic model is frozen, so its states are fixed per sample.
      for (const auto& s : samples) audio_.push_back(audio_hidden(model.acoustic, s.frames, s.tokens));
    }
  }

  Var operator()(Graph& g, std::size_t i, const ForwardContext<float>& ctx) {
    const auto& e = examples_[i];
    Var logits;
    switch (stage_) {
      case Stage::kAcoustic: {
        const auto& s = samples_[i];
        const Var memory = retime_ && ctx.train && ctx.rng != nullptr
                               ? model_.acoustic.encode(g, retime_frames(s.frames, s.tokens, kFramesPerToken, *ctx.rng), ctx)
                               : model_.acoustic.encode(g, s.frames, ctx);
        logits = model_.acoustic.decode(g, memory, e.input, ctx).logits;
        break;
      }
      case Stage::kLm:
        logits = model_.lm.forward(g, e.input, 0, nullptr, ctx).logits;
        break;
      case Stage::kFusion:
        logits = lm_forward(g, model_, e.input, g.input(audio_[i]), mode_, ctx).logits;
        break;
    }
    return g.cross_entropy(logits, e.targets, Reduction::kSum);
  }

  void set_retime(bool on) { retime_ = on; }

  [[nodiscard]] int tokens(std::size_t i) const { return static_cast<int>(examples_[i].targets.size()); }
  [[nodiscard]] std::size_t size() const { return examples_.size(); }

 private:
  Stage stage_;
  FusedModel& model_;
  const std::vector<CorpusSample>& samples_;
  FusionMode mode_;
  std::vector<Example> examples_;
  std::vector<Tensor> audio_;
  bool retime_ = false;
};

double mean_loss(LossFn& fn) {
  double total = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < fn.size(); ++i) {
    Graph g;
    total += g.value(fn(g, i, {})).values[0];
    count += fn.tokens(i);
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

double held_out_loss(Stage stage, FusedModel& model, const std::vector<CorpusSample>& samples, FusionMode mode) {
  LossFn fn(stage, model, samples, mode);
  return mean_loss(fn);
}

RunReport train(const TrainConfig& cfg, FusedModel& model, const Split& data, const ProgressFn& progress) {
  if (cfg.epochs < 1) throw DomainError("train: epochs must be >= 1");
  if (cfg.batch < 1) throw DomainError("train: batch must be >= 1");
  if (data.train.empty()) throw UsageError("train: empty training set");
  const auto start = std::chrono::steady_clock::now();

  // Only the parameters the stage is meant to update.
  const std::string own = cfg.stage == Stage::kAcoustic ? "acoustic." : cfg.stage == Stage::kLm ? "lm." : "";
  std::vector<Param<float>*> params;
  for (auto& [name, p] : model.named_params()) {
    if (!own.empty() && name.rfind(own, 0) != 0) p->trainable = false;
    if (p->trainable) params.push_back(p);
  }
  Adam adam(params, AdamOptions{static_cast<float>(effective_lr(cfg))});

  RunReport rep;
  rep.config = to_json(cfg);
  rep.params = model.param_report();

  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value.values;
  rep.best_epoch = 0;

  LossFn train_fn(cfg.stage, model, data.train, cfg.mode);
  train_fn.set_retime(cfg.stage == Stage::kAcoustic && cfg.retime);
  std::unique_ptr<LossFn> held_fn;
  if (!data.held_out.empty()) {
    held_fn = std::make_unique<LossFn>(cfg.stage, model, data.held_out, cfg.mode);
    rep.initial_held_out_loss = mean_loss(*held_fn);
    best_loss = rep.initial_held_out_loss;
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_fn.size());
  std::iota(order.begin(), order.end(), 0);
  ForwardContext<float> ctx{true, &rng};
  if (cfg.stage == Stage::kAcoustic) ctx.residual_dropout = cfg.dropout;
  const std::size_t per_epoch = (order.size() + static_cast<std::size_t>(cfg.batch) - 1) / static_cast<std::size_t>(cfg.batch);
  const double total_steps = static_cast<double>(per_epoch) * cfg.epochs;
  const double base_lr = effective_lr(cfg);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    long epoch_tokens = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
      int batch_tokens = 0;
      for (std::size_t i = b; i < e; ++i) batch_tokens += train_fn.tokens(order[i]);
      for (std::size_t i = b; i < e; ++i) {
        Graph g;
        const Var nll = train_fn(g, order[i], ctx);
        const float value = g.value(nll).values[0];
        if (!std::isfinite(value)) {
          std::string where;
          try {
            g.check_finite();
          } catch (const NumericError& err) {
            where = std::string(": ") + err.what();
          }
          throw NumericError("non-finite loss in " + to_string(cfg.stage) + " stage, epoch " + std::to_string(epoch) +
                             ", sample " + data.train[order[i]].id + where);
        }
        epoch_loss += value;
        g.backward(g.scale(nll, 1.0f / static_cast<float>(batch_tokens)));
        g.accumulate_param_grads();
      }
      epoch_tokens += batch_tokens;
      if (cfg.schedule == LrSchedule::kCosine) {
        const double progress_frac = static_cast<double>(adam.steps()) / total_steps;
        adam.set_lr(static_cast<float>(0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress_frac))));
      }
      adam.step();
    }
    rep.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_tokens));
    if (held_fn) {
      rep.held_out_losses.push_back(mean_loss(*held_fn));
      if (rep.held_out_losses.back() < best_loss) {
        best_loss = rep.held_out_losses.back();
        rep.best_epoch = epoch;
        for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value.values;
      }
    }
    if (progress) progress(epoch, rep.epoch_losses.back(), held_fn ? rep.held_out_losses.back() : 0.0);
  }

  if (held_fn) {
    // Keep the epoch with the lowest held-out loss.
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.values = best[i];
    rep.final_held_out_loss = best_loss;
    const DecodeMode mode = cfg.stage == Stage::kAcoustic ? DecodeMode::kAcoustic
                            : cfg.stage == Stage::kLm     ? DecodeMode::kTextOnly
                            : cfg.mode == FusionMode::kCausal ? DecodeMode::kStreaming
                                                              : DecodeMode::kOffline;
    rep.wer[to_string(mode)] = evaluate(model, data.held_out, mode).wer;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

EvalResult evaluate(FusedModel& model, const std::vector<CorpusSample>& samples, DecodeMode mode) {
  EvalResult res;
  res.mode = mode;
  WerAccumulator acc;
  for (const auto& s : samples) {
    const auto out = decode(model, s.frames, mode);
    acc.add(s.tokens, out.tokens);
    res.truncated += out.truncated ? 1 : 0;
    res.hyps.emplace_back(s.id, detokenize(out.tokens));
  }
  res.wer = acc.value();
  return res;
}

}  // namespace voxfuse
