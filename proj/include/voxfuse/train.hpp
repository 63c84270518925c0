// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxfuse/corpus.hpp"
#include "voxfuse/decode.hpp"
#include "voxfuse/model.hpp"

namespace voxfuse {

enum class Stage { kAcoustic, kLm, kFusion };

Stage parse_stage(const std::string& s);
std::string to_string(Stage stage);

enum class LrSchedule { kConstant, kCosine };

LrSchedule parse_schedule(const std::string& s);
std::string to_string(LrSchedule schedule);

struct TrainConfig {
  Stage stage = Stage::kFusion;
  int epochs = 20;
  int batch = 32;
  /// Non-positive selects the stage default.
  double lr = 0.0;
  /// Cosine decays the rate from lr to zero over all optimizer steps.
  LrSchedule schedule = LrSchedule::kConstant;
  /// Residual dropout for acoustic pretraining.
  float dropout = 0.0f;
  /// Fresh token durations per epoch for acoustic pretraining (retime_frames).
  bool retime = false;
  std::uint64_t seed = 1;
  int injection = 3;
  FusionMode mode = FusionMode::kCausal;
  LoraConfig lora;
  /// Trailing samples kept out of training for held-out loss and WER.
  int held_out = 200;
  std::string data;
  std::string out;
  std::string acoustic_ckpt;
  std::string lm_ckpt;
};

/// Tuned per-stage hyperparameters (epochs, batch, lr, schedule, dropout).
TrainConfig stage_defaults(Stage stage);

[[nodiscard]] double effective_lr(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);

struct Split {
  std::vector<CorpusSample> train;
  std::vector<CorpusSample> held_out;
};

/// Last `held_out` samples form the held-out set.
Split split_corpus(std::vector<CorpusSample> corpus, int held_out);

struct RunReport {
  nlohmann::ordered_json config;
  std::vector<double> epoch_losses;    // mean training NLL per token
  std::vector<double> held_out_losses;  // after each epoch
  int best_epoch = 0;                   // restored epoch; 0 = initial weights
  double initial_held_out_loss = 0.0;  // before the first update
  double final_held_out_loss = 0.0;
  ParamReport params;
  nlohmann::ordered_json wer = nlohmann::ordered_json::object();
  double seconds = 0.0;
};

nlohmann::ordered_json to_json(const RunReport& report);
nlohmann::ordered_json to_json(const ParamReport& report);

/// Builds the model a stage starts from: fresh for acoustic and LM
/// pretraining; for fusion the checkpoints are loaded, the acoustic part
/// frozen, the injection layer set and adapters attached.
FusedModel prepare_model(const TrainConfig& cfg);

using ProgressFn = std::function<void(int epoch, double train_loss, double held_out_loss)>;

/// Runs one training stage in place and keeps the weights of the epoch with
/// the lowest held-out loss. Throws NumericError on a non-finite loss.
RunReport train(const TrainConfig& cfg, FusedModel& model, const Split& data, const ProgressFn& progress = {});

/// Mean held-out NLL per predicted token for a stage.
double held_out_loss(Stage stage, FusedModel& model, const std::vector<CorpusSample>& samples, FusionMode mode);

struct EvalResult {
  DecodeMode mode;
  double wer = 0.0;
  int truncated = 0;
  std::vector<std::pair<std::string, std::string>> hyps;  // id, text
};

EvalResult evaluate(FusedModel& model, const std::vector<CorpusSample>& samples, DecodeMode mode);

}  // namespace voxfuse
