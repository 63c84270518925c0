// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "voxfuse/alignment.hpp"
#include "voxfuse/checkpoint.hpp"
#include "voxfuse/corpus.hpp"
#include "voxfuse/decode.hpp"
#include "voxfuse/errors.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/model.hpp"
#include "voxfuse/rcca.hpp"
#include "voxfuse/tokenizer.hpp"
#include "voxfuse/train.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace voxfuse;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
BasicTensor<T> to_tensor(const Array<T>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  BasicTensor<T> t({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.values.begin());
  return t;
}

template <typename T>
Array<T> to_array(const BasicTensor<T>& t) {
  Array<T> out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return out;
}

Eigen::MatrixXd to_matrix(const Array<double>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Eigen::MatrixXd m(a.shape(0), a.shape(1));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = r(i, j);
  return m;
}

py::object to_python(const nlohmann::ordered_json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict sample_dict(const CorpusSample& s) {
  py::dict d;
  d["id"] = s.id;
  d["text"] = s.text;
  d["tokens"] = s.tokens;
  d["frames"] = to_array(s.frames);
  return d;
}

std::vector<int> as_tokens(const py::object& o) {
  if (py::isinstance<py::str>(o)) return tokenize(o.cast<std::string>());
  return o.cast<std::vector<int>>();
}

}  // namespace

PYBIND11_MODULE(_voxfuse, m) {
  m.doc() = "Cross-modal fusion of an acoustic model and a decoder-only language model.";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "OutOfRangeError", PyExc_IndexError);
  py::register_exception<EncodingError>(m, "EncodingError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("proportional_alignment", [](int text_len, int audio_len) { return proportional_alignment(text_len, audio_len).s; },
        py::arg("text_len"), py::arg("audio_len"));
  m.def(
      "build_mask",
      [](int text_len, int audio_len, const std::string& mode) {
        return to_array(build_mask(proportional_alignment(text_len, audio_len), parse_mask_mode(mode)).additive<float>());
      },
      py::arg("text_len"), py::arg("audio_len"), py::arg("mode") = "causal", "Additive T x S mask (0 open, -1e9 closed).");
  m.def(
      "render_mask",
      [](int text_len, int audio_len, const std::string& mode) {
        return render_mask(build_mask(proportional_alignment(text_len, audio_len), parse_mask_mode(mode)));
      },
      py::arg("text_len"), py::arg("audio_len"), py::arg("mode") = "causal");

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("detokenize", [](const std::vector<int>& t) { return detokenize(t); }, py::arg("tokens"));

  m.def(
      "wer",
      [](const py::object& ref, const py::object& hyp) {
        if (py::isinstance<py::str>(ref) && py::isinstance<py::str>(hyp)) {
          return wer(ref.cast<std::string>(), hyp.cast<std::string>());
        }
        return wer(as_tokens(ref), as_tokens(hyp));
      },
      py::arg("ref"), py::arg("hyp"), "Word error rate; strings are split on whitespace, lists are token ids.");

  m.def(
      "cross_modal_fuse",
      [](const Array<double>& h, const Array<double>& audio, const Array<double>& q, const Array<double>& k,
         const Array<double>& v, const std::string& mode) {
        const auto ht = to_tensor(h);
        const auto at = to_tensor(audio);
        std::mt19937_64 rng(0);
        BasicFusionLayer<double> layer(ht.cols(), at.cols(), rng);
        layer.q.weight.value = to_tensor(q);
        layer.k.weight.value = to_tensor(k);
        layer.v.weight.value = to_tensor(v);
        const auto mask = build_mask(proportional_alignment(ht.rows(), at.rows()), parse_mask_mode(mode));
        BasicGraph<double> g;
        return to_array(g.value(cross_modal_fuse(g, g.input(ht), g.input(at), layer, mask.additive<double>())));
      },
      py::arg("hidden"), py::arg("audio"), py::arg("q"), py::arg("k"), py::arg("v"), py::arg("mode") = "causal",
      "Residual cross-attention h + softmax(hQ (aK)^T / sqrt(d) + M) aV in 64-bit.");

  m.def("rcca",
        [](const Array<double>& x, const Array<double>& y, int components, double lam) {
          return rcca(to_matrix(x), to_matrix(y), components, lam);
        },
        py::arg("x"), py::arg("y"), py::arg("components"), py::arg("lam") = 1e-4);

  m.def(
      "generate_corpus",
      [](const fs::path& out, int n, std::uint64_t seed, float sigma) {
        CorpusOptions opts;
        opts.n = n;
        opts.seed = seed;
        opts.sigma = sigma;
        return generate_corpus(opts, out).size();
      },
      py::arg("out"), py::arg("n") = 2200, py::arg("seed") = 1, py::arg("sigma") = 0.1f);
  m.def(
      "synthesize_corpus",
      [](int n, std::uint64_t seed, float sigma) {
        CorpusOptions opts;
        opts.n = n;
        opts.seed = seed;
        opts.sigma = sigma;
        py::list out;
        for (const auto& s : synthesize_corpus(opts)) out.append(sample_dict(s));
        return out;
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("sigma") = 0.1f);
  m.def(
      "load_corpus",
      [](const fs::path& dir) {
        py::list out;
        for (const auto& s : load_corpus(dir)) out.append(sample_dict(s));
        return out;
      },
      py::arg("dir"));

  m.def(
      "train",
      [](const std::string& stage, const std::string& data, const std::string& out, py::dict overrides) {
        TrainConfig cfg = stage_defaults(parse_stage(stage));
        cfg.data = data;
        cfg.out = out;
        for (auto [key, value] : overrides) {
          const auto k = key.cast<std::string>();
          if (k == "epochs") cfg.epochs = value.cast<int>();
          else if (k == "batch") cfg.batch = value.cast<int>();
          else if (k == "lr") cfg.lr = value.cast<double>();
          else if (k == "schedule") cfg.schedule = parse_schedule(value.cast<std::string>());
          else if (k == "seed") cfg.seed = value.cast<std::uint64_t>();
          else if (k == "held_out") cfg.held_out = value.cast<int>();
          else if (k == "injection") cfg.injection = value.cast<int>();
          else if (k == "mode") cfg.mode = parse_fusion_mode(value.cast<std::string>());
          else if (k == "dropout") cfg.dropout = value.cast<float>();
          else if (k == "retime") cfg.retime = value.cast<bool>();
          else if (k == "acoustic_ckpt") cfg.acoustic_ckpt = value.cast<std::string>();
          else if (k == "lm_ckpt") cfg.lm_ckpt = value.cast<std::string>();
          else throw UsageError("train: unknown option '" + k + "'");
        }
        auto split = split_corpus(load_corpus(cfg.data), cfg.held_out);
        FusedModel model = prepare_model(cfg);
        RunReport rep;
        {
          py::gil_scoped_release release;
          rep = train(cfg, model, split);
        }
        fs::create_directories(out);
        const CheckpointContents parts{cfg.stage != Stage::kLm, cfg.stage != Stage::kAcoustic,
                                       cfg.stage == Stage::kFusion};
        save_model(fs::path(out) / "checkpoint.voxk", model, parts);
        return to_python(to_json(rep));
      },
      py::arg("stage"), py::arg("data"), py::arg("out"), py::arg("overrides") = py::dict(),
      "Runs one training stage and writes out/checkpoint.voxk; returns the run report.");

  py::class_<FusedModel>(m, "Model")
      .def_static(
          "load", [](const std::vector<fs::path>& paths) { return load_model(paths); }, py::arg("paths"),
          "Builds a model from one or more checkpoints.")
      .def_static(
          "create",
          [](int injection, std::uint64_t seed) { return FusedModel(AcousticConfig{}, LmConfig{}, injection, seed); },
          py::arg("injection") = 3, py::arg("seed") = 1)
      .def_property_readonly("injection", &FusedModel::injection)
      .def(
          "decode",
          [](FusedModel& model, const Array<float>& frames, const std::string& mode) {
            const auto r = decode(model, to_tensor(frames), parse_decode_mode(mode));
            py::dict d;
            d["tokens"] = r.tokens;
            d["text"] = detokenize(r.tokens);
            d["truncated"] = r.truncated;
            d["visible"] = r.visible;
            return d;
          },
          py::arg("frames"), py::arg("mode") = "offline")
      .def(
          "logits",
          [](FusedModel& model, const Array<float>& frames, const py::object& text, const std::string& mode) {
            const auto tokens = as_tokens(text);
            std::vector<int> input{kBos};
            input.insert(input.end(), tokens.begin(), tokens.end());
            Graph g;
            const auto fm = parse_fusion_mode(mode);
            std::optional<Var> audio;
            if (fm != FusionMode::kNone) audio = g.input(audio_hidden(model.acoustic, to_tensor(frames), tokens));
            return to_array(g.value(lm_forward(g, model, input, audio, fm).logits));
          },
          py::arg("frames"), py::arg("text"), py::arg("mode") = "causal",
          "Teacher-forced next-symbol logits, one row per input position including the start symbol.")
      .def(
          "evaluate",
          [](FusedModel& model, const std::string& data, const std::string& mode, int samples) {
            auto corpus = load_corpus(data);
            if (samples > 0 && samples < static_cast<int>(corpus.size())) corpus.erase(corpus.begin(), corpus.end() - samples);
            const auto res = evaluate(model, corpus, parse_decode_mode(mode));
            py::dict d;
            d["wer"] = res.wer;
            d["truncated"] = res.truncated;
            d["hyps"] = res.hyps;
            return d;
          },
          py::arg("data"), py::arg("mode") = "offline", py::arg("samples") = 0)
      .def("param_report", [](FusedModel& model) { return to_python(to_json(model.param_report())); })
      .def(
          "save",
          [](FusedModel& model, const fs::path& path, bool acoustic, bool lm, bool fusion) {
            save_model(path, model, {acoustic, lm, fusion});
          },
          py::arg("path"), py::arg("acoustic") = true, py::arg("lm") = true, py::arg("fusion") = true);
}
