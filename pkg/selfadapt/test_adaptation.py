#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 18:31:07 krylon>
#
# /data/code/python/selfadapt/test_adaptation.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.test_adaptation

(c) 2026 Benjamin Walkenhorst
"""


import math
import os
import shutil
import unittest
from datetime import datetime
from typing import Final, Optional, Sequence
from unittest import mock

import numpy as np

from selfadapt import common
from selfadapt.adaptation import (Candidates, EmptyBeamError, Example, Learner,
                                  LengthMismatchError, Preference,
                                  adapt_si_sda, baseline_conf, baseline_dpo,
                                  baseline_filtering, baseline_min_q,
                                  baseline_re_atten, baseline_self_train,
                                  baseline_sft, compute_advantages,
                                  confidence_weights, cross_entropy_epoch,
                                  dpo_epoch, dpo_loss, dpo_step, drop_diverse,
                                  make_learner, max_q, min_q, preference_pairs,
                                  rl_loss, si_sda_step)
from selfadapt.config import AdapterConfig, Method, ModelConfig, TrainConfig
from selfadapt.decoding import DecodeContext
from selfadapt.grad import Tape
from selfadapt.model import (BeamSet, Hypothesis, Split, UnlabeledUtterance,
                             Utterance, Vocab, alphabet_symbols)
from selfadapt.optim import Adam
from selfadapt.transformer import (ModelParams, bind_params, init_params,
                                   nll_loss, sequence_logprob, token_logprobs)

test_dir: Final[str] = os.path.join(
    "/tmp",
    datetime.now().strftime(f"{common.AppName.lower()}_test_adaptation_%Y%m%d_%H%M%S"))

letters: Final[list[str]] = alphabet_symbols(4)
vocab: Final[Vocab] = Vocab.build(letters)
mcfg: Final[ModelConfig] = ModelConfig(dim=8, heads=2, layers=1, maxlen=16, ff_mult=2,
                                       vocab_size=len(vocab))
ctx: Final[DecodeContext] = DecodeContext(vocab=vocab, prompt=vocab.prompt(), frames=1, max_len=4)
sign_cnt: Final[int] = 10
tiny_lr: Final[float] = 1e-6


def corpus(n: int, seed: int = 0) -> list[Utterance]:
    """Return n random labeled utterances of 3 to 5 symbols."""
    rng = np.random.default_rng(seed)
    out: list[Utterance] = []
    for i in range(n):
        xs = tuple(str(s) for s in rng.choice(letters, int(rng.integers(3, 6))))
        out.append(Utterance(uid=f"u{i}", inputs=xs, reference=xs[::-1],
                             domain="test", split=Split.TargetAdapt))
    return out


def random_hyp(rng: np.random.Generator) -> tuple[int, ...]:
    """Return a random symbol sequence of 1 to 3 tokens."""
    return vocab.encode([str(s) for s in rng.choice(letters, int(rng.integers(1, 4)))])


def score(params: ModelParams, x: tuple[int, ...], y: tuple[int, ...]) -> float:
    """Teacher forced log-probability of the finished hypothesis y."""
    total, _ = sequence_logprob(params, *ctx.prompt.context(x, y, True))
    return total


def same(a: ModelParams, b: ModelParams) -> bool:
    """True if both parameter sets are bitwise identical."""
    return all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)


class TestAdaptation(unittest.TestCase):
    """Test advantages, losses, SI-SDA and the baselines."""

    @classmethod
    def setUpClass(cls) -> None:
        """Prepare the testing environment."""
        common.set_basedir(test_dir)

    @classmethod
    def tearDownClass(cls) -> None:
        """Clean up afterwards."""
        shutil.rmtree(test_dir, ignore_errors=True)

    def test_01_advantages(self) -> None:
        """Advantages are the negated deviations from the mean Q."""
        adv = compute_advantages([0.2, 0.4])
        self.assertAlmostEqual(adv.baseline, 0.3)
        self.assertAlmostEqual(adv.advantages[0], 0.1)
        self.assertAlmostEqual(adv.advantages[1], -0.1)
        self.assertEqual(compute_advantages([0.7]).advantages, [0.0])
        self.assertTrue(compute_advantages([0.3] * 5).is_zero)
        with self.assertRaises(EmptyBeamError):
            compute_advantages([])

        rng = np.random.default_rng(1)
        for _ in range(1000):
            qs = list(rng.uniform(0.0, 1.0, int(rng.integers(1, 11))))
            self.assertLess(abs(math.fsum(compute_advantages(qs).advantages)), 1e-12)

        qs = [k / 16 for k in rng.integers(0, 16, 4)]
        base = compute_advantages(qs).advantages
        shifted = compute_advantages([q + 0.25 for q in qs]).advantages
        self.assertEqual(base, shifted)

        for n in range(2, 12):
            qs = list(rng.uniform(0.0, 0.9, n))
            for c in (0.1, 1 / 3, -0.07):
                with self.subTest(n=n, shift=c):
                    base = compute_advantages(qs).advantages
                    shifted = compute_advantages([q + c for q in qs]).advantages
                    np.testing.assert_allclose(shifted, base, rtol=0, atol=1e-12)

    def test_02_rl_loss(self) -> None:
        """The policy gradient loss of fixed numbers."""
        t = Tape()
        loss = rl_loss(t, compute_advantages([0.2, 0.4]), [-1.0, -2.0])
        self.assertAlmostEqual(loss.item(), -0.1)
        with self.assertRaises(LengthMismatchError):
            rl_loss(t, compute_advantages([0.2, 0.4]), [-1.0])

    def test_03_zero_advantage(self) -> None:
        """All-zero advantages give a zero loss and zero gradients."""
        params = init_params(mcfg, 3)
        x = vocab.encode(["a", "b", "c"])
        t = Tape()
        bound = bind_params(t, params)
        lps = [token_logprobs(bound, *ctx.prompt.context(x, y, True))[0]
               for y in (vocab.encode(["a"]), vocab.encode(["b", "d"]))]
        loss = rl_loss(t, compute_advantages([0.4, 0.4]), lps)
        self.assertEqual(loss.item(), 0.0)
        t.backward(loss)
        for name in params.tensors:
            self.assertFalse(t.leaf_grad(name).any())

    def test_04_collapsed_beam(self) -> None:
        """A single hypothesis per beam leaves the parameters alone."""
        params = init_params(mcfg, 4)
        cfg = TrainConfig(epochs=1, beam_size=3, keep=1, learning_rate=0.01)
        utts = [u.unlabeled() for u in corpus(3)]
        learner = make_learner(params, cfg)
        rec = si_sda_step(learner, utts[0], ctx, cfg)
        self.assertFalse(rec["stepped"])
        self.assertEqual(rec["n_hyp"], 1)
        self.assertTrue(same(learner.params, params))
        res = adapt_si_sda(params, utts, ctx, cfg)
        self.assertTrue(same(res.params, params))
        self.assertEqual(res.epochs[0].steps, 0)

    def test_05_rl_sign(self) -> None:
        """One step raises logP of the positive and lowers logP of the negative hypothesis."""
        rng = np.random.default_rng(5)
        adv = compute_advantages([0.2, 0.6])
        for i in range(sign_cnt):
            params = init_params(mcfg, 50 + i)
            x = random_hyp(rng) * 2
            y1, y2 = random_hyp(rng), random_hyp(rng)
            before1, before2 = score(params, x, y1), score(params, x, y2)
            for which in (0, 1):
                learner = Learner(params=params.copy(), optimizer=Adam(learning_rate=tiny_lr))
                t = Tape()
                bound = learner.bind(t)
                lp = token_logprobs(bound, *ctx.prompt.context(x, (y1, y2)[which], True))[0]
                lps = [lp, before2] if which == 0 else [before1, lp]
                learner.step(bound, rl_loss(t, adv, lps))
                with self.subTest(instance=i, hypothesis=which):
                    if which == 0:
                        self.assertGreater(score(learner.params, x, y1), before1)
                    else:
                        self.assertLess(score(learner.params, x, y2), before2)

    def test_06_dpo(self) -> None:
        """DPO starts at log 2 and one step widens the chosen-rejected margin."""
        t = Tape()
        flat = dpo_loss(t, t.leaf("c", np.array([-1.0, -2.0])), t.leaf("r", np.array([-0.5])),
                        -3.0, -0.5, 0.0)
        self.assertAlmostEqual(flat.item(), math.log(2))
        t.backward(flat)
        self.assertFalse(t.leaf_grad("c").any())

        rng = np.random.default_rng(6)
        for i in range(sign_cnt):
            params = init_params(mcfg, 60 + i)
            x = random_hyp(rng) * 2
            y1, y2 = random_hyp(rng), random_hyp(rng)
            if y1 == y2:
                y2 = (*y2, vocab.encode(["a"])[0])
            pref = Preference(uid=f"p{i}", x=x,
                              chosen=Hypothesis(tokens=y1, logprobs=()),
                              rejected=Hypothesis(tokens=y2, logprobs=()),
                              ref_chosen=score(params, x, y1),
                              ref_rejected=score(params, x, y2))
            learner = Learner(params=params.copy(), optimizer=Adam(learning_rate=tiny_lr))
            loss = dpo_step(learner, pref, ctx, 0.1)
            margin = score(learner.params, x, y1) - score(learner.params, x, y2)
            with self.subTest(instance=i):
                self.assertAlmostEqual(loss, math.log(2), places=12)
                self.assertGreater(margin, pref.ref_chosen - pref.ref_rejected)

    def test_07_confidence(self) -> None:
        """Confidence weights scale the cross-entropy between 0 and the unweighted loss."""
        h = Hypothesis(tokens=(5, 6), logprobs=(math.log(0.5), math.log(0.25), 0.0))
        np.testing.assert_allclose(confidence_weights(h), [0.5, 0.25, 1.0])

        params = init_params(mcfg, 7)
        x = vocab.encode(["a", "c"])
        tokens, lay = ctx.prompt.context(x, vocab.encode(["b", "b"]), True)

        def loss_of(weights: Optional[Sequence[float]]) -> float:
            t = Tape(grad_enabled=False)
            node, _ = nll_loss(bind_params(t, params, trainable=False), tokens, lay,
                               weights=weights)
            return node.item()

        plain = loss_of(None)
        self.assertEqual(loss_of([1.0, 1.0, 1.0]), plain)
        partial = loss_of([0.5, 0.25, 0.9])
        self.assertGreater(partial, 0.0)
        self.assertLess(partial, plain)

        learner = Learner(params=params.copy(), optimizer=Adam(learning_rate=0.1))
        zero = [Example(uid="z", x=x, y=vocab.encode(["b"]), weights=(0.0, 0.0))]
        loss, steps = cross_entropy_epoch(learner, zero, ctx, 1, np.random.default_rng(0))
        self.assertEqual((loss, steps), (0.0, 0))
        self.assertTrue(same(learner.params, params))

    def test_08_selection(self) -> None:
        """min-Q and max-Q picks, their tie breaks and their monotone invariance."""
        hyps = [Hypothesis(tokens=(5, ), logprobs=(-1.0, )),
                Hypothesis(tokens=(6, ), logprobs=(-2.0, ))]
        c = Candidates(uid="c", x=(5, ), beams=BeamSet(uid="c", hypotheses=hyps, beam_size=2),
                       qs=[0.9, 0.1])
        self.assertEqual(min_q(c).tokens, (6, ))
        self.assertEqual(max_q(c).tokens, (5, ))
        c.qs = [q ** 3 for q in c.qs]
        self.assertEqual(min_q(c).tokens, (6, ))
        c.qs = [0.5, 0.5]
        self.assertEqual(min_q(c).tokens, (5, ))
        self.assertEqual(preference_pairs(init_params(mcfg, 8), [c], ctx), [])

    def test_09_drop_diverse(self) -> None:
        """The most diverse N-best lists are dropped, ties by utterance id."""
        def cand(uid: str, seqs: list[tuple[int, ...]]) -> Candidates:
            hyps = [Hypothesis(tokens=s, logprobs=(-float(i), )) for i, s in enumerate(seqs)]
            return Candidates(uid=uid, x=(5, ), beams=BeamSet(uid=uid, hypotheses=hyps,
                                                              beam_size=len(hyps)))

        self.assertEqual(len(drop_diverse([cand("a", [(5, ), (6, )])], 0.2)), 1)
        same_beams = [cand(f"u{i}", [(5, 6), (5, 6)]) for i in range(5)]
        kept = drop_diverse(same_beams, 0.2)
        self.assertEqual([c.uid for c in kept], ["u1", "u2", "u3", "u4"])
        mixed = [cand("a", [(5, ), (5, )]), cand("b", [(5, 6, 7), (8, )]), cand("c", [(5, ), (6, )]),
                 cand("d", [(5, ), (5, )]), cand("e", [(5, ), (5, )])]
        self.assertEqual([c.uid for c in drop_diverse(mixed, 0.4)], ["a", "d", "e"])

    def test_10_adapters(self) -> None:
        """With adapters only the adapter factors change."""
        params = init_params(mcfg, 10)
        cfg = TrainConfig(epochs=1, beam_size=4, keep=4, learning_rate=0.01,
                          adapter=AdapterConfig(rank=2, targets=("wq", "wv")))
        learner = make_learner(params, cfg)
        assert learner.adapters is not None
        v_before = learner.adapters.tensors["l0.wq.v"].copy()
        x = vocab.encode(["a", "b"])
        t = Tape()
        bound = learner.bind(t)
        lps = [token_logprobs(bound, *ctx.prompt.context(x, y, True))[0]
               for y in (vocab.encode(["a"]), vocab.encode(["c"]))]
        learner.step(bound, rl_loss(t, compute_advantages([0.1, 0.5]), lps))
        self.assertTrue(same(learner.params, params))
        self.assertFalse(np.array_equal(learner.adapters.tensors["l0.wq.v"], v_before))

    def test_11_determinism(self) -> None:
        """Two SI-SDA runs with the same seed give identical parameters."""
        params = init_params(mcfg, 11)
        cfg = TrainConfig(epochs=1, beam_size=3, keep=3, learning_rate=0.01, seed=3)
        utts = [u.unlabeled() for u in corpus(4, 11)]
        a = adapt_si_sda(params, utts, ctx, cfg)
        b = adapt_si_sda(params, utts, ctx, cfg)
        self.assertTrue(same(a.params, b.params))
        self.assertEqual(a.mean_q, b.mean_q)
        self.assertIsNotNone(a.mean_q)

    def test_12_baselines(self) -> None:
        """Every baseline runs and leaves its input parameters untouched."""
        params = init_params(mcfg, 12)
        snapshot = params.copy()
        cfg = TrainConfig(epochs=1, beam_size=3, keep=3, learning_rate=0.01, seed=4,
                          batch_size=2)
        labeled = corpus(5, 12)
        utts = [u.unlabeled() for u in labeled]
        runs = {
            Method.SelfTrain: baseline_self_train(params, utts, ctx, cfg),
            Method.Filtering: baseline_filtering(params, utts, ctx, cfg),
            Method.Conf: baseline_conf(params, utts, ctx, cfg),
            Method.ReAtten: baseline_re_atten(params, utts, ctx, cfg),
            Method.MinQ: baseline_min_q(params, utts, ctx, cfg),
            Method.DPO: baseline_dpo(params, utts, ctx, cfg),
            Method.SFT: baseline_sft(params, labeled, ctx, cfg),
        }
        for method, res in runs.items():
            with self.subTest(method=method.value):
                self.assertEqual(res.method, method)
                self.assertTrue(res.params.is_finite())
        self.assertTrue(same(params, snapshot))
        self.assertEqual(cfg.method, Method.SISDA)
        self.assertIsNotNone(runs[Method.MinQ].mean_q)

    def test_13_equal_rewards(self) -> None:
        """Equal rewards give advantages of exactly 0, whatever their value."""
        for qs in ([0.1] * 3, [1 / 3] * 7, [0.7] * 2, [0.1 + 0.2] * 5, [1e-17] * 9):
            with self.subTest(qs=qs):
                adv = compute_advantages(qs)
                self.assertEqual(adv.advantages, [0.0] * len(qs))
                self.assertTrue(adv.is_zero)
                loss = rl_loss(Tape(), adv, [-1.0 - i for i in range(len(qs))])
                self.assertEqual(loss.item(), 0.0)

        params = init_params(mcfg, 13)
        cfg = TrainConfig(epochs=1, beam_size=3, keep=3, learning_rate=0.01, dedupe=False)
        utts = [u.unlabeled() for u in corpus(4, 13)]
        with mock.patch("selfadapt.adaptation.score_beam",
                        side_effect=lambda p, a, x, beams, c, tc: [0.1] * len(beams)):
            learner = make_learner(params, cfg)
            recs = [si_sda_step(learner, u, ctx, cfg) for u in utts]
            res = adapt_si_sda(params, utts, ctx, cfg)
        self.assertTrue(any(r["n_hyp"] not in (0, 1) for r in recs))
        for r in recs:
            with self.subTest(uid=r["uid"]):
                self.assertFalse(r["stepped"])
                self.assertIsNone(r["loss"])
        self.assertTrue(same(learner.params, params))
        self.assertTrue(same(res.params, params))
        self.assertEqual(res.epochs[0].steps, 0)

    def test_14_dpo_skips(self) -> None:
        """A DPO pair that cannot be scored is skipped and counted, the epoch goes on."""
        params = init_params(mcfg, 14)
        rng = np.random.default_rng(14)
        x = random_hyp(rng) * 2
        y1, y2 = vocab.encode(["a", "b"]), vocab.encode(["c"])
        good = Preference(uid="good", x=x,
                          chosen=Hypothesis(tokens=y1, logprobs=()),
                          rejected=Hypothesis(tokens=y2, logprobs=()),
                          ref_chosen=score(params, x, y1),
                          ref_rejected=score(params, x, y2))
        # the context of this pair is longer than maxlen
        long_x = vocab.encode(["a"] * mcfg.maxlen)
        bad = Preference(uid="bad", x=long_x,
                         chosen=Hypothesis(tokens=y1, logprobs=()),
                         rejected=Hypothesis(tokens=y2, logprobs=()),
                         ref_chosen=-1.0,
                         ref_rejected=-2.0)
        traced: list[dict[str, object]] = []
        learner = Learner(params=params.copy(), optimizer=Adam(learning_rate=tiny_lr))
        losses, skipped = dpo_epoch(learner, [bad, good, bad], ctx, 0.1,
                                    np.random.default_rng(0), trace=traced.append)
        self.assertEqual(skipped, 2)
        self.assertEqual(len(losses), 1)
        self.assertAlmostEqual(losses[0], math.log(2), places=12)
        self.assertEqual([r["uid"] for r in traced], ["good"])
        self.assertEqual(learner.steps, 1)
        self.assertFalse(same(learner.params, params))


# Local Variables: #
# python-indent: 4 #
# End: #
