# Copyright 2026 The voxfuse Authors
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import voxfuse


def test_alignment_and_masks():
    assert voxfuse.proportional_alignment(3, 7) == [0, 2, 4]
    assert voxfuse.render_mask(3, 7, "causal") == "0------\n000----\n00000--\n"
    full = voxfuse.build_mask(4, 9, "full")
    assert full.shape == (4, 9)
    assert not full.any()
    causal = voxfuse.build_mask(2, 2, "causal")
    assert causal[0, 0] == 0 and causal[0, 1] < -1e8
    with pytest.raises(voxfuse.DomainError):
        voxfuse.proportional_alignment(0, 3)


def test_tokenizer_round_trip_and_errors():
    assert voxfuse.tokenize("abca") == [0, 1, 2, 0]
    assert voxfuse.detokenize(voxfuse.tokenize("ponmlk")) == "ponmlk"
    with pytest.raises(voxfuse.EncodingError, match="'z'"):
        voxfuse.tokenize("abz")


def test_wer():
    assert voxfuse.wer("a b c", "a c") == pytest.approx(1 / 3)
    assert voxfuse.wer([1, 2, 3, 4], [1, 9, 3]) == 0.5
    with pytest.raises(voxfuse.DomainError):
        voxfuse.wer("", "a")


def test_fusion_matches_numpy():
    rng = np.random.default_rng(0)
    h, a = rng.normal(size=(3, 4)), rng.normal(size=(5, 3))
    q, k, v = rng.normal(size=(4, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    got = voxfuse.cross_modal_fuse(h, a, q, k, v, "causal")
    s = [5 * t // 3 for t in range(3)]
    scores = (h @ q) @ (a @ k).T / math.sqrt(4)
    for t in range(3):
        scores[t, s[t] + 1 :] = -np.inf
    w = np.exp(scores - scores.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(got, h + w @ (a @ v), atol=1e-12)


def test_rcca():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(500, 6))
    assert min(voxfuse.rcca(x, x, 6, 1e-8)) >= 0.999
    c = voxfuse.rcca(rng.normal(size=(5000, 8)), rng.normal(size=(5000, 8)), 8, 1e-4)
    assert np.mean(c) <= 0.1


def test_corpus_round_trip(tmp_path):
    assert voxfuse.generate_corpus(tmp_path, n=5, seed=3) == 5
    loaded = voxfuse.load_corpus(tmp_path)
    made = voxfuse.synthesize_corpus(5, seed=3)
    assert [s["text"] for s in loaded] == [s["text"] for s in made]
    np.testing.assert_array_equal(loaded[0]["frames"], made[0]["frames"])
    assert loaded[0]["frames"].shape[1] == 8


def test_model_decode_and_checkpoint(tmp_path):
    model = voxfuse.Model.create(injection=2, seed=4)
    sample = voxfuse.synthesize_corpus(1, seed=5)[0]
    stream = model.decode(sample["frames"], "streaming")
    oracle = model.decode(sample["frames"], "offline-causal")
    assert stream["tokens"] == oracle["tokens"]
    model.save(tmp_path / "m.voxk")
    back = voxfuse.Model.load([tmp_path / "m.voxk"])
    assert back.injection == 2
    np.testing.assert_array_equal(
        model.logits(sample["frames"], sample["text"]), back.logits(sample["frames"], sample["text"])
    )
    report = back.param_report()
    assert report["by_prefix"]["acoustic"]["trainable"] == 0


def test_short_training_run(tmp_path):
    voxfuse.generate_corpus(tmp_path / "data", n=24, seed=2)
    rep = voxfuse.train("acoustic", str(tmp_path / "data"), str(tmp_path / "ac"), {"epochs": 1, "held_out": 4})
    assert len(rep["epoch_losses"]) == 1
    assert (tmp_path / "ac" / "checkpoint.voxk").exists()
    with pytest.raises(voxfuse.UsageError):
        voxfuse.train("fusion", str(tmp_path / "data"), str(tmp_path / "fu"), {"epochs": 1})
