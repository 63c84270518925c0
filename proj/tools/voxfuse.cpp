// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

// voxfuse command-line entry point.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxfuse/alignment.hpp"
#include "voxfuse/checkpoint.hpp"
#include "voxfuse/corpus.hpp"
#include "voxfuse/decode.hpp"
#include "voxfuse/errors.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/rcca.hpp"
#include "voxfuse/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Reads a flat JSON object; keys are long flag names without dashes.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string section) : section_(std::move(section)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      if (!section_.empty()) item.parents = {section_};
      item.name = key;
      auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else if (value.is_object()) {
        throw CLI::ConversionError("config key '" + key + "' must not be an object");
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  std::string section_;
};

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> ia(a.begin(), a.end()), ib(b.begin(), b.end());
  return voxfuse::edit_distance(ia, ib);
}

std::string suggest(const CLI::App& app, const std::string& arg) {
  const std::string bare = arg.substr(0, arg.find('='));
  std::string best;
  int best_d = std::numeric_limits<int>::max();
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& n : opt->get_lnames()) {
      const int d = levenshtein(bare, "--" + n);
      if (d < best_d) {
        best_d = d;
        best = "--" + n;
      }
    }
  }
  return best_d <= 3 ? best : "";
}

json resolved_config(const CLI::App& app) {
  json j;
  j["command"] = app.get_name();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::vector<std::string> vals = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (vals.empty() && !opt->get_default_str().empty()) vals.push_back(opt->get_default_str());
    auto typed = [](const std::string& s) {
      try {
        return json::parse(s);
      } catch (const json::exception&) {
        return json(s);
      }
    };
    if (opt->get_expected_max() > 1) {
      json arr = json::array();
      for (const auto& v : vals) arr.push_back(typed(v));
      j[name] = arr;
    } else if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0 || (!vals.empty() && vals.front() == "true");
    } else {
      j[name] = vals.empty() ? json(nullptr) : typed(vals.front());
    }
  }
  return j;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw voxfuse::IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

bool has_fusion(const std::vector<std::string>& ckpts) {
  for (const auto& p : ckpts) {
    for (const auto& [name, t] : voxfuse::load_tensors(p)) {
      if (name.rfind("fusion.", 0) == 0) return true;
    }
  }
  return false;
}

struct StageFlags {
  explicit StageFlags(voxfuse::Stage stage)
      : cfg(voxfuse::stage_defaults(stage)), schedule(voxfuse::to_string(cfg.schedule)) {}
  voxfuse::TrainConfig cfg;
  std::string schedule;
};

struct Options {
  // gen-data
  voxfuse::CorpusOptions corpus{2200};
  // training
  StageFlags acoustic{voxfuse::Stage::kAcoustic};
  StageFlags lm{voxfuse::Stage::kLm};
  StageFlags fusion{voxfuse::Stage::kFusion};
  std::string mode = "causal";
  // eval / analyze-cca
  std::vector<std::string> ckpts;
  std::string decode_mode = "offline";
  bool text_only = false;
  bool fused = false;
  int samples = 0;
  int components = 16;
  double lambda = 1e-4;
  // dump-mask
  int text_len = 0;
  int audio_len = 0;
  std::string mask_mode = "causal";
  std::string out;
  std::string data;
};

void add_training_flags(CLI::App* sub, Options& o, StageFlags& f) {
  sub->add_option("--data", o.data, "Corpus directory")->required();
  sub->add_option("--out", o.out, "Output directory")->required();
  sub->add_option("--epochs", f.cfg.epochs, "Training epochs")->check(CLI::Range(1, 1000));
  sub->add_option("--batch", f.cfg.batch, "Samples per update")->check(CLI::Range(1, 100000));
  sub->add_option("--lr", f.cfg.lr, "Learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--schedule", f.schedule, "Learning-rate schedule")->check(CLI::IsMember({"constant", "cosine"}));
  sub->add_option("--seed", f.cfg.seed, "Random seed");
  sub->add_option("--held-out", f.cfg.held_out, "Trailing samples kept out of training")->check(CLI::NonNegativeNumber);
}

void run_training(voxfuse::Stage stage, Options& o, const StageFlags& f) {
  auto cfg = f.cfg;
  cfg.schedule = voxfuse::parse_schedule(f.schedule);
  cfg.data = o.data;
  cfg.out = o.out;
  if (stage == voxfuse::Stage::kFusion) cfg.mode = voxfuse::parse_fusion_mode(o.mode);
  auto split = voxfuse::split_corpus(voxfuse::load_corpus(o.data), cfg.held_out);
  auto model = voxfuse::prepare_model(cfg);
  const auto rep = voxfuse::train(cfg, model, split, [](int epoch, double loss, double held) {
    std::cerr << "epoch " << epoch << " loss " << loss << " held-out " << held << '\n';
  });
  const fs::path out(o.out);
  const voxfuse::CheckpointContents parts{stage != voxfuse::Stage::kLm, stage != voxfuse::Stage::kAcoustic,
                                          stage == voxfuse::Stage::kFusion};
  voxfuse::save_model(out / "checkpoint.voxk", model, parts);
  write_json(out / "report.json", voxfuse::to_json(rep));
  std::cout << voxfuse::to_string(stage) << ": final epoch loss " << rep.epoch_losses.back() << ", best epoch "
            << rep.best_epoch << ", held-out loss " << rep.final_held_out_loss;
  for (const auto& [mode, wer] : rep.wer.items()) std::cout << ", " << mode << " WER " << wer.get<double>();
  std::cout << '\n';
}

void run_eval(Options& o) {
  const auto mode = o.text_only ? voxfuse::DecodeMode::kTextOnly : voxfuse::parse_decode_mode(o.decode_mode);
  const bool needs_fusion = mode == voxfuse::DecodeMode::kOffline || mode == voxfuse::DecodeMode::kStreaming ||
                            mode == voxfuse::DecodeMode::kOfflineCausal;
  if (needs_fusion && !has_fusion(o.ckpts)) {
    throw voxfuse::UsageError("decode mode " + voxfuse::to_string(mode) + " needs a checkpoint with fusion weights");
  }
  auto model = voxfuse::load_model({o.ckpts.begin(), o.ckpts.end()});
  auto corpus = voxfuse::load_corpus(o.data);
  if (o.samples > 0 && o.samples < static_cast<int>(corpus.size())) corpus.erase(corpus.begin(), corpus.end() - o.samples);
  const auto res = voxfuse::evaluate(model, corpus, mode);
  const fs::path out(o.out);
  fs::create_directories(out);
  std::ofstream hyps(out / "hyps.txt", std::ios::binary | std::ios::trunc);
  for (const auto& [id, text] : res.hyps) hyps << id << '\t' << text << '\n';
  if (!hyps) throw voxfuse::IoError("cannot write " + (out / "hyps.txt").string());
  json rep;
  rep["mode"] = voxfuse::to_string(mode);
  rep["n"] = corpus.size();
  rep["wer"] = res.wer;
  rep["truncated"] = res.truncated;
  rep["checkpoints"] = o.ckpts;
  rep["injection"] = model.injection();
  write_json(out / "report.json", rep);
  std::cout << voxfuse::to_string(mode) << " WER " << res.wer << " over " << corpus.size() << " samples\n";
}

void run_cca(Options& o) {
  auto model = voxfuse::load_model({o.ckpts.begin(), o.ckpts.end()});
  auto corpus = voxfuse::load_corpus(o.data);
  if (o.samples > 0 && o.samples < static_cast<int>(corpus.size())) corpus.resize(o.samples);
  if (o.fused && !has_fusion(o.ckpts)) throw voxfuse::UsageError("--fused needs a checkpoint with fusion weights");
  voxfuse::RccaOptions opts;
  opts.components = o.components;
  opts.lambda = o.lambda;
  const auto rep = voxfuse::alignment_report(model, corpus, o.fused, voxfuse::parse_fusion_mode(o.mode), opts);
  write_json(fs::path(o.out) / "report.json", voxfuse::to_json(rep));
  for (const auto& l : rep.layers) std::cout << "layer " << l.layer << " mean_corr " << l.mean_corr << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxfuse: cross-modal fusion of a frozen acoustic model and a language model"};
  app.require_subcommand(1);
  app.allow_extras();
  app.option_defaults()->always_capture_default();
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic paired corpus");
  gen->add_option("--n", o.corpus.n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.corpus.seed, "Random seed");
  gen->add_option("--sigma", o.corpus.sigma, "Frame noise standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* pa = app.add_subcommand("pretrain-acoustic", "Train the acoustic encoder-decoder");
  add_training_flags(pa, o, o.acoustic);
  pa->add_option("--dropout", o.acoustic.cfg.dropout, "Residual dropout rate")->check(CLI::Range(0.0, 0.9));
  pa->add_flag("--retime,!--no-retime", o.acoustic.cfg.retime, "Fresh token durations each epoch");

  auto* pl = app.add_subcommand("pretrain-lm", "Train the text-only language model");
  add_training_flags(pl, o, o.lm);

  auto* tf = app.add_subcommand("train-fusion", "Train the fusion layer and adapters");
  add_training_flags(tf, o, o.fusion);
  tf->add_option("--acoustic-ckpt", o.fusion.cfg.acoustic_ckpt, "Acoustic checkpoint")->required();
  tf->add_option("--lm-ckpt", o.fusion.cfg.lm_ckpt, "Language model checkpoint")->required();
  tf->add_option("--injection", o.fusion.cfg.injection, "LM block after which fusion is applied (1-based)");
  tf->add_option("--mode", o.mode, "Fusion mask")->check(CLI::IsMember({"causal", "full"}));
  tf->add_option("--lora-rank", o.fusion.cfg.lora.rank, "Adapter rank")->check(CLI::PositiveNumber);
  tf->add_option("--lora-alpha", o.fusion.cfg.lora.alpha, "Adapter scale numerator");
  tf->add_option("--lora-dropout", o.fusion.cfg.lora.dropout, "Adapter input dropout")->check(CLI::Range(0.0, 0.99));

  auto* ev = app.add_subcommand("eval", "Decode a corpus and score WER");
  ev->add_option("--ckpt", o.ckpts, "Checkpoint(s); later files override earlier parts")->required();
  ev->add_option("--data", o.data, "Corpus directory")->required();
  ev->add_option("--out", o.out, "Output directory")->required();
  auto* mode_opt = ev->add_option("--mode", o.decode_mode, "Decoding mode")
                       ->check(CLI::IsMember({"offline", "streaming", "offline-causal", "acoustic"}));
  ev->add_flag("--text-only", o.text_only, "Decode with the language model alone")->excludes(mode_opt);
  ev->add_option("--samples", o.samples, "Evaluate the last N samples (0 = all)")->check(CLI::NonNegativeNumber);

  auto* cca = app.add_subcommand("analyze-cca", "Layer-wise rCCA between LM states and acoustic states");
  cca->add_option("--ckpt", o.ckpts, "Checkpoint(s)")->required();
  cca->add_option("--data", o.data, "Corpus directory")->required();
  cca->add_option("--out", o.out, "Output directory")->required();
  cca->add_flag("--fused", o.fused, "Run the LM with the fusion layer");
  cca->add_option("--mode", o.mode, "Fusion mask when --fused")->check(CLI::IsMember({"causal", "full"}));
  cca->add_option("--components", o.components, "Canonical components")->check(CLI::PositiveNumber);
  cca->add_option("--lambda", o.lambda, "Ridge term")->check(CLI::NonNegativeNumber);
  cca->add_option("--samples", o.samples, "Use the first N samples (0 = all)")->check(CLI::NonNegativeNumber);

  auto* dm = app.add_subcommand("dump-mask", "Print an alignment mask");
  dm->add_option("--text-len", o.text_len, "Text length T")->required()->check(CLI::PositiveNumber);
  dm->add_option("--audio-len", o.audio_len, "Audio length S")->required()->check(CLI::PositiveNumber);
  dm->add_option("--mode", o.mask_mode, "Mask mode")->check(CLI::IsMember({"causal", "full"}));

  // Config keys apply to the subcommand named on the command line.
  std::string section;
  for (int i = 1; i < argc && section.empty(); ++i) {
    for (CLI::App* sub : app.get_subcommands({})) {
      if (sub->get_name() == argv[i]) section = argv[i];
    }
  }
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();
  app.set_config("--config", "", "JSON file with flag defaults; explicit flags win");
  app.config_formatter(std::make_shared<JsonConfig>(section));

  auto unknown_args = [&app]() {
    CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    std::vector<std::string> extras = app.remaining();
    if (extras.empty() || !sub) return false;
    std::cerr << "usage error: unknown argument '" << extras.front() << "' for " << sub->get_name();
    const std::string hint = suggest(*sub, extras.front());
    if (!hint.empty()) std::cerr << "; did you mean '" << hint << "'?";
    std::cerr << '\n';
    return true;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (!unknown_args()) std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (unknown_args()) return kExitUsage;
  CLI::App* sub = app.get_subcommands().front();

  std::cerr << "config: " << resolved_config(*sub).dump() << '\n';

  try {
    const std::string name = sub->get_name();
    if (name == "gen-data") {
      const auto entries = voxfuse::generate_corpus(o.corpus, o.out);
      std::cout << "wrote " << entries.size() << " samples to " << o.out << '\n';
    } else if (name == "pretrain-acoustic") {
      run_training(voxfuse::Stage::kAcoustic, o, o.acoustic);
    } else if (name == "pretrain-lm") {
      run_training(voxfuse::Stage::kLm, o, o.lm);
    } else if (name == "train-fusion") {
      run_training(voxfuse::Stage::kFusion, o, o.fusion);
    } else if (name == "eval") {
      run_eval(o);
    } else if (name == "analyze-cca") {
      run_cca(o);
    } else if (name == "dump-mask") {
      const auto mode = voxfuse::parse_mask_mode(o.mask_mode);
      const auto align = voxfuse::proportional_alignment(o.text_len, o.audio_len);
      std::cout << voxfuse::render_mask(voxfuse::build_mask(align, mode));
    }
  } catch (const voxfuse::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const voxfuse::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
