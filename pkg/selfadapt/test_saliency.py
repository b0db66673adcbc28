#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 17:03:12 krylon>
#
# /data/code/python/selfadapt/test_saliency.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.test_saliency

(c) 2026 Benjamin Walkenhorst
"""


import json
import os
import shutil
import unittest
from datetime import datetime
from typing import Final, Optional

import numpy as np

from selfadapt import common
from selfadapt.config import ModelConfig
from selfadapt.grad import Graph, Node, OpKind, Tape, finite_difference_check
from selfadapt.model import AttentionRecord, Hypothesis, SequenceLayout, Vocab, alphabet_symbols
from selfadapt.saliency import (EmptyHypothesisError, MissingGradientError,
                                PromptRelianceProfile, QualityScore,
                                SaliencyError, SaliencyMatrix, TokenOutcomeSets,
                                classify_tokens, compute_saliency, dump_record,
                                hypothesis_profile, hypothesis_quality,
                                layer_saliency, prompt_reliance,
                                reliance_summary, threshold_filter, write_dump)
from selfadapt.transformer import Probes, bind_params, init_params, nll_loss

test_dir: Final[str] = os.path.join(
    "/tmp",
    datetime.now().strftime(f"{common.AppName.lower()}_test_saliency_%Y%m%d_%H%M%S"))

vocab: Final[Vocab] = Vocab.build(alphabet_symbols(4))
cfg: Final[ModelConfig] = ModelConfig(dim=8, heads=2, layers=2, maxlen=20, ff_mult=2,
                                      vocab_size=len(vocab))
instance_cnt: Final[int] = 1000


def record(head: int, a: list[list[float]], g: Optional[list[list[float]]]) -> AttentionRecord:
    """Build an AttentionRecord from literal matrices."""
    node = Node(nid=head,
                op=OpKind.Leaf,
                value=np.array(a),
                grad=None if g is None else np.array(g))
    return AttentionRecord(layer=0, head=head, node=node)


def hyp(tokens: tuple[int, ...], finished: bool = True) -> Hypothesis:
    """Return a Hypothesis with dummy scores."""
    return Hypothesis(tokens=tokens,
                      logprobs=(0.0, ) * (len(tokens) + int(finished)),
                      finished=finished)


class TestSaliency(unittest.TestCase):
    """Test saliency and prompt reliance."""

    @classmethod
    def setUpClass(cls) -> None:
        """Prepare the testing environment."""
        common.set_basedir(test_dir)

    @classmethod
    def tearDownClass(cls) -> None:
        """Clean up afterwards."""
        shutil.rmtree(test_dir, ignore_errors=True)

    def test_01_fixture(self) -> None:
        """Saliency is |sum over heads of A * dL/dA|, exactly."""
        lay = SequenceLayout(prompt=range(0, 1), input=range(1, 2), output=range(2, 2))
        one = record(0, [[1, 0], [0.5, 0.5]], [[2, 0], [-2, 2]])
        sal = compute_saliency([one], lay)
        np.testing.assert_array_equal(sal.values, [[2, 0], [1, 1]])

        other = record(1, [[1, 0], [0.5, 0.5]], [[-4, 0], [2, 2]])
        sal = compute_saliency([one, other], lay)
        np.testing.assert_array_equal(sal.values, [[2, 0], [0, 2]])

        with self.assertRaises(MissingGradientError):
            compute_saliency([record(0, [[1.0]], None)], lay)
        with self.assertRaises(SaliencyError):
            compute_saliency([], lay)

    def test_02_reliance(self) -> None:
        """R is the prompt share of a row; an all-zero row is degenerate."""
        lay = SequenceLayout(prompt=range(0, 2), input=range(2, 4), output=range(4, 7))
        values = np.zeros((7, 7))
        values[3, :4] = [1.0, 1.0, 2.0, 0.0]
        values[5, :6] = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        prof = prompt_reliance(SaliencyMatrix(layer=0, values=values, layout=lay))
        self.assertEqual(prof.positions, [4, 5, 6])
        np.testing.assert_array_equal(prof.reliance, [0.5, 0.0, 0.0])
        np.testing.assert_array_equal(prof.degenerate, [False, True, False])
        np.testing.assert_array_equal(prof.prompt_mass, [2.0, 0.0, 0.0])

    def test_03_probe_oracle(self) -> None:
        """Attention gradients agree with finite differences through probes."""
        params = init_params(cfg, 11)
        prompt = vocab.prompt()
        tokens, lay = prompt.context(vocab.encode(["a", "b", "b", "c"]),
                                     vocab.encode(["d", "a"]), finished=True)
        n = len(tokens)
        probes = Probes(attention={(li, h): f"probe.{li}.{h}"
                                   for li in range(cfg.layers) for h in range(cfg.heads)})
        bindings = {**params.tensors, **{name: np.zeros((n, n))
                                         for name in probes.attention.values()}}

        t = Tape(bindings=bindings)
        loss, records = nll_loss(bind_params(t, params), tokens, lay,
                                 capture=True, probes=probes)
        t.backward(loss, keep_all=False)
        for r in records:
            assert r.grad is not None
            np.testing.assert_array_equal(r.grad,
                                          t.leaf_grad(probes.attention[(r.layer, r.head)]))

        graph = Graph(build=lambda tp: nll_loss(bind_params(tp, params), tokens, lay,
                                                probes=probes)[0])
        for name in probes.attention.values():
            with self.subTest(probe=name):
                self.assertLess(finite_difference_check(graph, name, 1e-6, bindings), 1e-3)

        sal = layer_saliency(records, lay, -1)
        top = [r for r in records if r.layer == cfg.layers - 1]
        expect = np.abs(sum(r.matrix * t.leaf_grad(probes.attention[(r.layer, r.head)])
                            for r in top))
        np.testing.assert_allclose(sal.values, expect, rtol=1e-12, atol=0)

    def test_04_layers(self) -> None:
        """The mean layer averages the per-layer saliencies."""
        params = init_params(cfg, 12)
        prompt = vocab.prompt()
        tokens, lay = prompt.context(vocab.encode(["a", "b"]), vocab.encode(["c"]), True)
        t = Tape()
        loss, records = nll_loss(bind_params(t, params), tokens, lay, capture=True)
        t.backward(loss, keep_all=False)
        per_layer = [layer_saliency(records, lay, li).values for li in range(cfg.layers)]
        mean = layer_saliency(records, lay, "mean")
        np.testing.assert_allclose(mean.values, np.mean(per_layer, axis=0))
        np.testing.assert_array_equal(layer_saliency(records, lay, -1).values, per_layer[-1])
        with self.assertRaises(SaliencyError):
            layer_saliency(records, lay, cfg.layers)

    def test_05_ranges(self) -> None:
        """R and Q stay within [0, 1] on random instances."""
        rng = np.random.default_rng(5)
        prompt = vocab.prompt()
        symbols = vocab.encode(alphabet_symbols(4))
        params = [init_params(cfg, s) for s in range(4)]
        for i in range(instance_cnt):
            x = tuple(int(s) for s in rng.choice(symbols, int(rng.integers(1, 9))))
            y = tuple(int(s) for s in rng.choice(symbols, int(rng.integers(1, 6))))
            score = hypothesis_quality(params[i % len(params)], x,
                                       hyp(y, bool(rng.integers(0, 2))), prompt,
                                       layer="mean" if i % 3 == 0 else -1)
            self.assertGreaterEqual(score.q, 0.0)
            self.assertLessEqual(score.q, 1.0)
            assert score.profile is not None
            self.assertTrue(((score.profile.reliance >= 0) & (score.profile.reliance <= 1)).all())
            self.assertEqual(score.length, len(y))

    def test_06_scale_invariance(self) -> None:
        """Scaling the loss leaves R unchanged."""
        params = init_params(cfg, 13)
        prompt = vocab.prompt()
        x = vocab.encode(["a", "c", "c", "d"])
        h = hyp(vocab.encode(["b", "b", "a"]))
        p1 = hypothesis_profile(params, x, h, prompt, loss_scale=1.0)
        p2 = hypothesis_profile(params, x, h, prompt, loss_scale=7.5)
        np.testing.assert_allclose(p1.reliance, p2.reliance, rtol=1e-12, atol=1e-15)
        self.assertEqual(len(p1), 4)

        with self.assertRaises(EmptyHypothesisError):
            hypothesis_quality(params, x, hyp(()), prompt)

    def test_07_classify(self) -> None:
        """Tokens are split along the minimum edit alignment."""
        sets = classify_tokens("abc", "ac")
        self.assertEqual(sets.correct, {0, 2})
        self.assertEqual(sets.error, {1})
        sets = classify_tokens("ax", "ab")
        self.assertEqual(sets.correct, {0})
        self.assertEqual(sets.error, {1})
        sets = classify_tokens("", "ab")
        self.assertEqual(sets.correct | sets.error, set())
        sets = classify_tokens("abc", "abc")
        self.assertEqual(sets.error, set())

    def test_08_summary(self) -> None:
        """Mean reliance of correct and erroneous tokens, raw and normalized."""
        prof = PromptRelianceProfile(positions=[5, 6, 7],
                                     prompt_mass=np.zeros(3),
                                     reliance=np.array([0.2, 0.6, 0.4]),
                                     degenerate=np.zeros(3, dtype=bool))
        summary = reliance_summary(prof, TokenOutcomeSets(correct={0, 2}, error={1}))
        self.assertAlmostEqual(summary.mean_correct or 0.0, 0.3)
        self.assertAlmostEqual(summary.mean_error or 0.0, 0.6)
        norm = summary.normalized()
        assert norm is not None
        self.assertAlmostEqual(norm[0], 1 / 3)
        self.assertAlmostEqual(norm[1], 2 / 3)

        clean = reliance_summary(prof, TokenOutcomeSets(correct={0, 1, 2}))
        self.assertIsNone(clean.mean_error)
        self.assertIsNone(clean.normalized())
        with self.assertRaises(SaliencyError):
            reliance_summary(prof, TokenOutcomeSets(error={3}))

    def test_09_threshold(self) -> None:
        """threshold_filter keeps Q <= tau in order."""
        scored = [(hyp((4, )), QualityScore(q=q, length=1)) for q in (0.7, 0.2, 0.5, 0.9)]
        kept = threshold_filter(scored, 0.5)
        self.assertEqual([s.q for _, s in kept], [0.2, 0.5])
        self.assertEqual(len(threshold_filter(scored, 1.0)), 4)
        with self.assertRaises(SaliencyError):
            threshold_filter(scored, 1.5)

    def test_10_dump(self) -> None:
        """The saliency dump has one JSON record per line."""
        prof = PromptRelianceProfile(positions=[3, 4],
                                     prompt_mass=np.array([1.0, 0.0]),
                                     reliance=np.array([0.25, 0.0]),
                                     degenerate=np.array([False, True]))
        recs = [dump_record("u1", -1, QualityScore(q=0.25, length=1, profile=prof)),
                dump_record("u2", "mean", QualityScore(q=0.5, length=3), rank=1)]
        fpath = os.path.join(test_dir, "saliency.jsonl")
        self.assertEqual(write_dump(fpath, recs), 2)
        with open(fpath, "r", encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh]
        self.assertEqual(lines[0]["reliance"], [0.25, 0.0])
        self.assertEqual(lines[0]["degenerate"], [False, True])
        self.assertEqual(lines[1]["layer"], "mean")
        self.assertEqual(lines[1]["rank"], 1)


# Local Variables: #
# python-indent: 4 #
# End: #
