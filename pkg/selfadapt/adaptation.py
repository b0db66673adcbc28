#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 10:14:37 krylon>
#
# /data/code/python/selfadapt/adaptation.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.adaptation

(c) 2026 Benjamin Walkenhorst

Unsupervised adaptation of a trained model to a target domain, plus the
baselines it is compared against.

SI-SDA decodes an N-best list per utterance, scores every hypothesis by its
prompt reliance Q and takes one policy gradient step that favors the
hypotheses with below-average Q. The rewards are constants; gradients only
flow through the log-probabilities.

The baselines (self-training, filtering, confidence weighting, re-atten,
min-Q pseudo labels, DPO) fix their training targets once, with the model
they start from, and then fine-tune on them. SFT trains on the references.
"""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Final, Optional, Sequence, Union

import numpy as np

from selfadapt import common
from selfadapt.config import Method, TrainConfig
from selfadapt.decoding import DecodeContext, beam_search, dedupe_and_truncate
from selfadapt.grad import Node, Tape
from selfadapt.metrics import diversity
from selfadapt.model import BeamSet, Hypothesis, UnlabeledUtterance, Utterance
from selfadapt.optim import Adam
from selfadapt.pool import WorkerPool
from selfadapt.saliency import hypothesis_profile, hypothesis_quality
from selfadapt.transformer import (AdapterParams, Bound, ModelParams,
                                   bind_params, init_adapters, nll_loss,
                                   sequence_logprob, token_logprobs)

# Q assigned to a hypothesis without symbol tokens, the worst possible value.
empty_hypothesis_q: Final[float] = 1.0


class AdaptError(common.SelfAdaptError):
    """Base class for adaptation errors."""


class EmptyBeamError(AdaptError):
    """A beam set holds no hypotheses."""


class LengthMismatchError(AdaptError):
    """Two lists that must pair up have different lengths."""


@dataclass(kw_only=True, slots=True)
class AdvantageSet:
    """AdvantageSet holds the rewards of one beam set and their advantages."""

    advantages: list[float]
    baseline: float
    rewards: list[float]

    @property
    def is_zero(self) -> bool:
        """True if no hypothesis has a nonzero advantage."""
        return all(a == 0.0 for a in self.advantages)


def compute_advantages(qs: Sequence[float]) -> AdvantageSet:
    """A[n] = -(Q[n] - mean Q): hypotheses with below-mean Q get a positive advantage.

    The mean and the differences are exact rationals, rounded once at the
    end, so equal rewards give advantages of exactly 0.
    """
    if len(qs) == 0:
        raise EmptyBeamError("Cannot compute advantages of an empty beam set")
    rewards = [float(q) for q in qs]
    exact = [Fraction(q) for q in rewards]
    mean = sum(exact, Fraction(0)) / len(exact)
    return AdvantageSet(advantages=[float(mean - q) for q in exact],
                        baseline=float(mean),
                        rewards=rewards)


def rl_loss(tape: Tape, adv: AdvantageSet, logprobs: Sequence[Union[Node, float]]) -> Node:
    """Policy gradient loss, -sum_n A[n] * logP[n].

    A logprob may be a node of per-token values, a scalar node or a plain number.
    """
    if len(logprobs) != len(adv.advantages):
        raise LengthMismatchError(f"{len(adv.advantages)} advantages, "
                                  f"{len(logprobs)} log-probabilities")
    if len(logprobs) == 0:
        raise EmptyBeamError("rl_loss of an empty beam set")
    terms: list[Node] = []
    for a, lp in zip(adv.advantages, logprobs):
        node = lp if isinstance(lp, Node) else tape.const(np.asarray(float(lp)))
        terms.append(tape.weighted_sum(node, np.full(node.shape, -a)))
    total = terms[0]
    for t in terms[1:]:
        total = tape.add(total, t)
    return total


def dpo_loss(tape: Tape,
             chosen: Node,
             rejected: Node,
             ref_chosen: float,
             ref_rejected: float,
             beta: float) -> Node:
    """-log sigmoid(beta * margin), computed as log(1 + exp(-beta * margin)).

    chosen and rejected are per-token log-probability nodes of the policy.
    """
    lc = tape.sum(chosen)
    lr = tape.sum(rejected)
    margin = tape.add(tape.sub(lc, lr), tape.const(np.asarray(ref_rejected - ref_chosen)))
    neg = tape.exp(tape.scale(margin, -beta))
    return tape.log(tape.add(tape.const(np.asarray(1.0)), neg))


@dataclass(kw_only=True, slots=True)
class Learner:
    """Learner owns the parameters being trained and their optimizer.

    With adapters, only the adapter factors change and params stay as they
    are. Otherwise params are trained directly.
    """

    params: ModelParams
    adapters: Optional[AdapterParams] = None
    optimizer: Adam = field(default_factory=Adam)
    steps: int = 0

    def bind(self, tape: Tape) -> Bound:
        """Record the parameters on a fresh tape."""
        return bind_params(tape, self.params, self.adapters)

    def step(self, bound: Bound, loss: Node) -> float:
        """Backpropagate loss and apply one optimizer step."""
        tape = bound.tape
        tape.backward(loss, keep_all=False)
        grads: dict[str, np.ndarray] = {n: tape.leaf_grad(n) for n in bound.trainable}
        if self.adapters is None:
            self.optimizer.update(self.params.tensors, grads)
        else:
            g = {n[len("lora."):]: v for n, v in grads.items()}
            self.optimizer.update(self.adapters.tensors, g)
        self.steps += 1
        return loss.item()


def make_learner(params: ModelParams, cfg: TrainConfig) -> Learner:
    """Create a Learner for adaptation, with adapters if cfg asks for them."""
    adapters = None
    if cfg.adapter is not None:
        adapters = init_adapters(params.config, cfg.adapter, cfg.seed)
    return Learner(params=params.copy(),
                   adapters=adapters,
                   optimizer=Adam(learning_rate=cfg.learning_rate))


@dataclass(kw_only=True, slots=True)
class EpochStats:
    """EpochStats summarizes one epoch of adaptation."""

    epoch: int
    mean_q: Optional[float] = None
    mean_loss: Optional[float] = None
    steps: int = 0
    skipped: int = 0
    seconds: float = 0.0


@dataclass(kw_only=True, slots=True)
class AdaptResult:
    """AdaptResult is what every adaptation method returns."""

    method: Method
    params: ModelParams
    adapters: Optional[AdapterParams] = None
    epochs: list[EpochStats] = field(default_factory=list)
    mean_q: Optional[float] = None


TraceFn = Callable[[dict[str, object]], None]
EpochFn = Callable[[int, Learner], None]


def _nop_trace(_rec: dict[str, object]) -> None:
    pass


def _nop_epoch(_epoch: int, _learner: Learner) -> None:
    pass


def _mean(xs: Sequence[float]) -> Optional[float]:
    return float(np.mean(xs)) if len(xs) > 0 else None


def score_beam(learner_params: ModelParams,
               adapters: Optional[AdapterParams],
               x: Sequence[int],
               beams: BeamSet,
               ctx: DecodeContext,
               cfg: TrainConfig) -> list[float]:
    """Compute Q for every hypothesis of the beam set and store it on the hypothesis."""
    qs: list[float] = []
    for h in beams.hypotheses:
        if h.length == 0:
            h.quality = empty_hypothesis_q
        else:
            h.quality = hypothesis_quality(learner_params, x, h, ctx.prompt,
                                           cfg.saliency_layer, adapters).q
        qs.append(h.quality)
    return qs


def nbest(params: ModelParams,
          adapters: Optional[AdapterParams],
          utt: UnlabeledUtterance,
          ctx: DecodeContext,
          cfg: TrainConfig) -> tuple[tuple[int, ...], BeamSet]:
    """Decode the N-best list of one utterance, deduplicated and truncated to cfg.keep."""
    x = ctx.encode(utt.inputs)
    beams = beam_search(params, x, ctx.prompt, cfg.beam_size, ctx.budget(x), adapters, utt.uid)
    return x, dedupe_and_truncate(beams, cfg.keep, cfg.dedupe)


# SI-SDA

def si_sda_step(learner: Learner,
                utt: UnlabeledUtterance,
                ctx: DecodeContext,
                cfg: TrainConfig) -> dict[str, object]:
    """Run one adaptation step on one utterance and return its trace record."""
    x, beams = nbest(learner.params, learner.adapters, utt, ctx, cfg)
    if len(beams) == 0:
        raise EmptyBeamError(f"Utterance {utt.uid} produced no hypotheses")
    qs = score_beam(learner.params, learner.adapters, x, beams, ctx, cfg)
    hyps: list[Hypothesis] = list(beams.hypotheses)
    if cfg.tau < 1.0:
        keep = [i for i, q in enumerate(qs) if q <= cfg.tau]
        hyps = [hyps[i] for i in keep]
        qs = [qs[i] for i in keep]
    rec: dict[str, object] = {
        "uid": utt.uid,
        "n_hyp": len(hyps),
        "mean_q": _mean(qs),
        "loss": None,
        "stepped": False,
    }
    if len(hyps) == 0:
        return rec
    adv = compute_advantages(qs)
    if adv.is_zero:
        return rec

    tape = Tape()
    bound = learner.bind(tape)
    lps: list[Node] = []
    for h in hyps:
        tokens, layout = ctx.prompt.context(x, h.tokens, finished=h.finished)
        lp, _ = token_logprobs(bound, tokens, layout)
        lps.append(lp)
    rec["loss"] = learner.step(bound, rl_loss(tape, adv, lps))
    rec["stepped"] = True
    return rec


def adapt_si_sda(params: ModelParams,
                 corpus: Sequence[UnlabeledUtterance],
                 ctx: DecodeContext,
                 cfg: TrainConfig,
                 trace: TraceFn = _nop_trace,
                 on_epoch: EpochFn = _nop_epoch) -> AdaptResult:
    """Adapt params to the unlabeled corpus, one policy gradient step per utterance."""
    log: Final[logging.Logger] = common.get_logger("adaptation")
    if len(corpus) == 0:
        raise AdaptError("The adaptation corpus is empty")
    learner = make_learner(params, cfg)
    result = AdaptResult(method=Method.SISDA, params=learner.params, adapters=learner.adapters)
    order: Final[list[int]] = list(range(len(corpus)))

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.time()
        stats = EpochStats(epoch=epoch)
        rng = np.random.default_rng(common.derive_seed(cfg.seed, f"si-sda/epoch{epoch}"))
        qs: list[float] = []
        losses: list[float] = []
        for i in rng.permutation(order):
            utt = corpus[int(i)]
            try:
                rec = si_sda_step(learner, utt, ctx, cfg)
            except common.SelfAdaptError as err:
                stats.skipped += 1
                log.warning("Skipping %s: %s: %s", utt.uid, err.__class__.__name__, err)
                continue
            if rec["mean_q"] is not None:
                qs.append(float(rec["mean_q"]))  # type: ignore[arg-type]
            if rec["stepped"]:
                stats.steps += 1
                losses.append(float(rec["loss"]))  # type: ignore[arg-type]
            log.debug("Epoch %d, %s: Q = %s, loss = %s",
                      epoch, utt.uid, rec["mean_q"], rec["loss"])
            trace({"method": Method.SISDA.value, "epoch": epoch, **rec})
        stats.mean_q = _mean(qs)
        stats.mean_loss = _mean(losses)
        stats.seconds = time.time() - t0
        result.epochs.append(stats)
        log.info("SI-SDA epoch %d: mean Q %s, mean loss %s, %d steps, %d skipped",
                 epoch, stats.mean_q, stats.mean_loss, stats.steps, stats.skipped)
        on_epoch(epoch, learner)

    result.params = learner.params
    result.adapters = learner.adapters
    result.mean_q = result.epochs[-1].mean_q
    return result


# Cross-entropy training, shared by base training, SFT and the pseudo label baselines

@dataclass(kw_only=True, slots=True)
class Example:
    """Example is one training target: an input, an output and optional token weights.

    weights, if given, has one entry per output token plus one for <eos>
    when finished is set.
    """

    uid: str
    x: tuple[int, ...]
    y: tuple[int, ...]
    finished: bool = True
    weights: Optional[tuple[float, ...]] = None


def cross_entropy_epoch(learner: Learner,
                        examples: Sequence[Example],
                        ctx: DecodeContext,
                        batch_size: int,
                        rng: np.random.Generator) -> tuple[float, int]:
    """Run one shuffled epoch, return (mean batch loss, number of steps)."""
    perm = rng.permutation(len(examples))
    losses: list[float] = []
    for lo in range(0, len(perm), batch_size):
        batch = [examples[int(i)] for i in perm[lo:lo + batch_size]]
        if ex_weights_all_zero(batch):
            continue
        tape = Tape()
        bound = learner.bind(tape)
        total: Optional[Node] = None
        for ex in batch:
            tokens, layout = ctx.prompt.context(ex.x, ex.y, finished=ex.finished)
            loss, _ = nll_loss(bound, tokens, layout,
                               weights=ex.weights,
                               loss_scale=1.0 / len(batch))
            total = loss if total is None else tape.add(total, loss)
        assert total is not None
        losses.append(learner.step(bound, total))
    return (float(np.mean(losses)) if losses else 0.0), len(losses)


def ex_weights_all_zero(batch: Sequence[Example]) -> bool:
    """True if every example of the batch has all-zero token weights."""
    return all(ex.weights is not None and not any(ex.weights) for ex in batch)


def train_cross_entropy(learner: Learner,
                        examples: Sequence[Example],
                        ctx: DecodeContext,
                        epochs: int,
                        batch_size: int,
                        seed: int,
                        tag: str,
                        start_epoch: int = 1,
                        trace: TraceFn = _nop_trace,
                        on_epoch: EpochFn = _nop_epoch) -> list[EpochStats]:
    """Fine-tune on fixed targets for epochs start_epoch..start_epoch+epochs-1.

    The shuffle of epoch e depends only on (seed, tag, e), so a run resumed
    from a checkpoint sees the same batches as an uninterrupted one.
    """
    log: Final[logging.Logger] = common.get_logger("adaptation")
    out: list[EpochStats] = []
    if len(examples) == 0:
        log.warning("%s: no training examples", tag)
        return out
    for epoch in range(start_epoch, start_epoch + epochs):
        t0 = time.time()
        rng = np.random.default_rng(common.derive_seed(seed, f"{tag}/epoch{epoch}"))
        loss, steps = cross_entropy_epoch(learner, examples, ctx, batch_size, rng)
        stats = EpochStats(epoch=epoch, mean_loss=loss, steps=steps, seconds=time.time() - t0)
        out.append(stats)
        log.info("%s epoch %d: mean loss %.5f over %d steps (%.1f s)",
                 tag, epoch, loss, steps, stats.seconds)
        trace({"method": tag, "epoch": epoch, "loss": loss, "steps": steps})
        on_epoch(epoch, learner)
    return out


def train_supervised(learner: Learner,
                     corpus: Sequence[Utterance],
                     ctx: DecodeContext,
                     epochs: int,
                     batch_size: int,
                     seed: int,
                     tag: str = "base",
                     start_epoch: int = 1,
                     trace: TraceFn = _nop_trace,
                     on_epoch: EpochFn = _nop_epoch) -> list[EpochStats]:
    """Train on the references of a labeled corpus."""
    examples = [Example(uid=u.uid,
                        x=ctx.encode(u.inputs),
                        y=ctx.vocab.encode(u.reference)) for u in corpus]
    return train_cross_entropy(learner, examples, ctx, epochs, batch_size, seed, tag,
                               start_epoch, trace, on_epoch)


# Pseudo labels

@dataclass(kw_only=True, slots=True)
class Candidates:
    """Candidates is the scored N-best list of one utterance, decoded once up front."""

    uid: str
    x: tuple[int, ...]
    beams: BeamSet
    qs: list[float] = field(default_factory=list)

    @property
    def top(self) -> Hypothesis:
        """The highest scoring hypothesis."""
        return self.beams.best


def collect_candidates(params: ModelParams,
                       corpus: Sequence[UnlabeledUtterance],
                       ctx: DecodeContext,
                       cfg: TrainConfig,
                       with_q: bool,
                       workers: int = 1) -> list[Candidates]:
    """Decode (and optionally score) the corpus with fixed params, skipping failures."""
    def work(utt: UnlabeledUtterance) -> Candidates:
        x, beams = nbest(params, None, utt, ctx, cfg)
        if len(beams) == 0:
            raise EmptyBeamError(f"Utterance {utt.uid} produced no hypotheses")
        qs = score_beam(params, None, x, beams, ctx, cfg) if with_q else []
        return Candidates(uid=utt.uid, x=x, beams=beams, qs=qs)

    pool: WorkerPool[UnlabeledUtterance, Candidates] = WorkerPool(fn=work,
                                                                  wcnt=workers,
                                                                  name="candidates")
    return [c for c in pool.map(corpus) if c is not None]


def drop_diverse(cands: Sequence[Candidates], ratio: float) -> list[Candidates]:
    """Drop the floor(ratio * n) utterances whose N-best lists are most diverse.

    Ties in diversity are broken by utterance id.
    """
    n_drop: Final[int] = int(math.floor(ratio * len(cands)))
    ranked = sorted(cands, key=lambda c: (-diversity([h.tokens for h in c.beams.hypotheses]),
                                          c.uid))
    dropped = {c.uid for c in ranked[:n_drop]}
    return [c for c in cands if c.uid not in dropped]


def confidence_weights(h: Hypothesis) -> tuple[float, ...]:
    """The probability each emitted token had when it was decoded."""
    return tuple(math.exp(lp) for lp in h.logprobs)


def reliance_weights(params: ModelParams,
                     c: Candidates,
                     ctx: DecodeContext,
                     cfg: TrainConfig) -> Optional[tuple[float, ...]]:
    """Token weights 1 - R(i) of the top hypothesis, None if it has no symbols."""
    h = c.top
    if h.length == 0:
        return None
    profile = hypothesis_profile(params, c.x, h, ctx.prompt, cfg.saliency_layer)
    return tuple(1.0 - float(r) for r in profile.reliance)


def min_q(c: Candidates) -> Hypothesis:
    """The hypothesis with the lowest Q, ties going to the higher log-probability."""
    best = min(range(len(c.qs)), key=lambda i: (c.qs[i], -c.beams.hypotheses[i].total, i))
    return c.beams.hypotheses[best]


def max_q(c: Candidates) -> Hypothesis:
    """The hypothesis with the highest Q, ties going to the lower log-probability."""
    worst = max(range(len(c.qs)), key=lambda i: (c.qs[i], -c.beams.hypotheses[i].total, i))
    return c.beams.hypotheses[worst]


def pseudo_examples(params: ModelParams,
                    cands: Sequence[Candidates],
                    ctx: DecodeContext,
                    cfg: TrainConfig) -> list[Example]:
    """Turn candidate lists into training examples for the configured baseline."""
    log = common.get_logger("adaptation")
    out: list[Example] = []
    match cfg.method:
        case Method.SelfTrain | Method.Filtering:
            out = [Example(uid=c.uid, x=c.x, y=c.top.tokens, finished=c.top.finished)
                   for c in cands]
        case Method.Conf:
            out = [Example(uid=c.uid, x=c.x, y=c.top.tokens, finished=c.top.finished,
                           weights=confidence_weights(c.top)) for c in cands]
        case Method.ReAtten:
            for c in cands:
                try:
                    w = reliance_weights(params, c, ctx, cfg)
                except common.SelfAdaptError as err:
                    log.warning("Skipping %s: %s: %s", c.uid, err.__class__.__name__, err)
                    continue
                out.append(Example(uid=c.uid, x=c.x, y=c.top.tokens,
                                   finished=c.top.finished, weights=w))
        case Method.MinQ:
            for c in cands:
                h = min_q(c)
                out.append(Example(uid=c.uid, x=c.x, y=h.tokens, finished=h.finished))
        case _:
            raise AdaptError(f"{cfg.method.value} is not a pseudo label method")
    return out


def baseline_pseudo(params: ModelParams,
                    corpus: Sequence[UnlabeledUtterance],
                    ctx: DecodeContext,
                    cfg: TrainConfig,
                    workers: int = 1,
                    trace: TraceFn = _nop_trace,
                    on_epoch: EpochFn = _nop_epoch) -> AdaptResult:
    """Shared driver of the self-train, filtering, conf, re-atten and min-q baselines."""
    if len(corpus) == 0:
        raise AdaptError("The adaptation corpus is empty")
    with_q: Final[bool] = cfg.method == Method.MinQ
    cands = collect_candidates(params, corpus, ctx, cfg, with_q, workers)
    if cfg.method in (Method.Filtering, Method.ReAtten):
        cands = drop_diverse(cands, cfg.filter_ratio)
    learner = make_learner(params, cfg)
    examples = pseudo_examples(params, cands, ctx, cfg)
    epochs = train_cross_entropy(learner, examples, ctx, cfg.epochs, cfg.batch_size,
                                 cfg.seed, cfg.method.value, trace=trace, on_epoch=on_epoch)
    qs = [q for c in cands for q in c.qs]
    return AdaptResult(method=cfg.method,
                       params=learner.params,
                       adapters=learner.adapters,
                       epochs=epochs,
                       mean_q=_mean(qs))


def baseline_self_train(params: ModelParams,
                        corpus: Sequence[UnlabeledUtterance],
                        ctx: DecodeContext,
                        cfg: TrainConfig,
                        **kwargs) -> AdaptResult:
    """Fine-tune on the top-1 hypothesis of every utterance."""
    cfg = dataclasses.replace(cfg, method=Method.SelfTrain)
    return baseline_pseudo(params, corpus, ctx, cfg, **kwargs)


def baseline_filtering(params: ModelParams,
                       corpus: Sequence[UnlabeledUtterance],
                       ctx: DecodeContext,
                       cfg: TrainConfig,
                       **kwargs) -> AdaptResult:
    """Self-train after dropping the utterances with the most diverse N-best lists."""
    cfg = dataclasses.replace(cfg, method=Method.Filtering)
    return baseline_pseudo(params, corpus, ctx, cfg, **kwargs)


def baseline_conf(params: ModelParams,
                  corpus: Sequence[UnlabeledUtterance],
                  ctx: DecodeContext,
                  cfg: TrainConfig,
                  **kwargs) -> AdaptResult:
    """Self-train with every token's loss weighted by its decoding probability."""
    cfg = dataclasses.replace(cfg, method=Method.Conf)
    return baseline_pseudo(params, corpus, ctx, cfg, **kwargs)


def baseline_re_atten(params: ModelParams,
                      corpus: Sequence[UnlabeledUtterance],
                      ctx: DecodeContext,
                      cfg: TrainConfig,
                      **kwargs) -> AdaptResult:
    """Filtered self-training with token weights 1 - R(i)."""
    cfg = dataclasses.replace(cfg, method=Method.ReAtten)
    return baseline_pseudo(params, corpus, ctx, cfg, **kwargs)


def baseline_min_q(params: ModelParams,
                   corpus: Sequence[UnlabeledUtterance],
                   ctx: DecodeContext,
                   cfg: TrainConfig,
                   **kwargs) -> AdaptResult:
    """Fine-tune on the lowest-Q hypothesis of every utterance."""
    cfg = dataclasses.replace(cfg, method=Method.MinQ)
    return baseline_pseudo(params, corpus, ctx, cfg, **kwargs)


@dataclass(kw_only=True, slots=True)
class Preference:
    """Preference is one chosen/rejected pair with its reference log-probabilities."""

    uid: str
    x: tuple[int, ...]
    chosen: Hypothesis
    rejected: Hypothesis
    ref_chosen: float
    ref_rejected: float


def preference_pairs(ref: ModelParams,
                     cands: Sequence[Candidates],
                     ctx: DecodeContext) -> list[Preference]:
    """Pair the lowest-Q with the highest-Q hypothesis; beams with equal Q everywhere are skipped."""
    log = common.get_logger("adaptation")
    pairs: list[Preference] = []
    for c in cands:
        if len(c.qs) < 2 or max(c.qs) == min(c.qs):
            log.debug("No preference for %s, all Q are equal", c.uid)
            continue
        ch, rj = min_q(c), max_q(c)
        lc, _ = sequence_logprob(ref, *ctx.prompt.context(c.x, ch.tokens, ch.finished))
        lr, _ = sequence_logprob(ref, *ctx.prompt.context(c.x, rj.tokens, rj.finished))
        pairs.append(Preference(uid=c.uid, x=c.x, chosen=ch, rejected=rj,
                                ref_chosen=lc, ref_rejected=lr))
    return pairs


def dpo_step(learner: Learner, pref: Preference, ctx: DecodeContext, beta: float) -> float:
    """Take one DPO step on one preference pair, return the loss before the step."""
    tape = Tape()
    bound = learner.bind(tape)
    tc, lc = ctx.prompt.context(pref.x, pref.chosen.tokens, pref.chosen.finished)
    tr, lr = ctx.prompt.context(pref.x, pref.rejected.tokens, pref.rejected.finished)
    pc, _ = token_logprobs(bound, tc, lc)
    pr, _ = token_logprobs(bound, tr, lr)
    return learner.step(bound, dpo_loss(tape, pc, pr, pref.ref_chosen, pref.ref_rejected, beta))


def dpo_epoch(learner: Learner,
              pairs: Sequence[Preference],
              ctx: DecodeContext,
              beta: float,
              rng: np.random.Generator,
              epoch: int = 1,
              trace: TraceFn = _nop_trace) -> tuple[list[float], int]:
    """Take one DPO step per pair in shuffled order, return the losses and the skip count."""
    log: Final[logging.Logger] = common.get_logger("adaptation")
    losses: list[float] = []
    skipped: int = 0
    for i in rng.permutation(len(pairs)):
        p = pairs[int(i)]
        try:
            loss = dpo_step(learner, p, ctx, beta)
        except common.SelfAdaptError as err:
            skipped += 1
            log.warning("Skipping pair of %s: %s: %s", p.uid, err.__class__.__name__, err)
            continue
        losses.append(loss)
        trace({"method": Method.DPO.value, "epoch": epoch, "uid": p.uid, "loss": loss})
    return losses, skipped


def baseline_dpo(params: ModelParams,
                 corpus: Sequence[UnlabeledUtterance],
                 ctx: DecodeContext,
                 cfg: TrainConfig,
                 workers: int = 1,
                 trace: TraceFn = _nop_trace,
                 on_epoch: EpochFn = _nop_epoch) -> AdaptResult:
    """Preference optimization of lowest-Q over highest-Q hypotheses against the frozen start."""
    log: Final[logging.Logger] = common.get_logger("adaptation")
    if len(corpus) == 0:
        raise AdaptError("The adaptation corpus is empty")
    cfg = dataclasses.replace(cfg, method=Method.DPO)
    ref: Final[ModelParams] = params.copy()
    cands = collect_candidates(ref, corpus, ctx, cfg, True, workers)
    pairs = preference_pairs(ref, cands, ctx)
    learner = make_learner(params, cfg)
    result = AdaptResult(method=Method.DPO, params=learner.params, adapters=learner.adapters,
                         mean_q=_mean([q for c in cands for q in c.qs]))
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.time()
        rng = np.random.default_rng(common.derive_seed(cfg.seed, f"dpo/epoch{epoch}"))
        losses, failed = dpo_epoch(learner, pairs, ctx, cfg.dpo_beta, rng, epoch, trace)
        stats = EpochStats(epoch=epoch, mean_loss=_mean(losses), steps=len(losses),
                           skipped=len(corpus) - len(pairs) + failed, seconds=time.time() - t0)
        result.epochs.append(stats)
        log.info("DPO epoch %d: mean loss %s over %d pairs, %d failed",
                 epoch, stats.mean_loss, len(pairs), failed)
        on_epoch(epoch, learner)
    result.params = learner.params
    result.adapters = learner.adapters
    return result


def baseline_sft(params: ModelParams,
                 corpus: Sequence[Utterance],
                 ctx: DecodeContext,
                 cfg: TrainConfig,
                 trace: TraceFn = _nop_trace,
                 on_epoch: EpochFn = _nop_epoch) -> AdaptResult:
    """Supervised fine-tuning on the target references, the upper bound."""
    cfg = dataclasses.replace(cfg, method=Method.SFT)
    learner = make_learner(params, cfg)
    epochs = train_supervised(learner, corpus, ctx, cfg.epochs, cfg.batch_size, cfg.seed,
                              Method.SFT.value, trace=trace, on_epoch=on_epoch)
    return AdaptResult(method=Method.SFT,
                       params=learner.params,
                       adapters=learner.adapters,
                       epochs=epochs)


# Local Variables: #
# python-indent: 4 #
# End: #
