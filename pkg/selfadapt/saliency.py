#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 17:36:09 krylon>
#
# /data/code/python/selfadapt/saliency.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.saliency

(c) 2026 Benjamin Walkenhorst

Attention saliency and the prompt reliance derived from it.

The saliency of attention entry (i, j) in layer l is the absolute value of
the head sum of A * dL/dA. The prompt reliance of an output token is the
share of its query row's saliency that lands on prompt columns. A hypothesis
that leans on the prompt instead of the input tends to be a bad one, so the
mean reliance Q works as a label-free quality indicator: lower is better.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, Iterable, Optional, Sequence, Union

import numpy as np

from selfadapt import common
from selfadapt.grad import Tape
from selfadapt.metrics import EditOp, align
from selfadapt.model import AttentionRecord, Hypothesis, PromptConfig, SequenceLayout
from selfadapt.transformer import (AdapterParams, ModelParams, apply_adapter,
                                   bind_params, nll_loss)

LayerChoice = Union[int, str]


class SaliencyError(common.SelfAdaptError):
    """Base class for saliency errors."""


class MissingGradientError(SaliencyError):
    """An attention record has no gradient, backward has not run."""


class EmptyPromptError(SaliencyError):
    """The layout has no prompt span."""


class EmptyHypothesisError(SaliencyError):
    """A hypothesis without symbol tokens cannot be scored."""


@dataclass(kw_only=True, slots=True)
class SaliencyMatrix:
    """SaliencyMatrix holds the saliency of one layer, or the mean over all layers."""

    layer: LayerChoice
    values: np.ndarray
    layout: SequenceLayout


@dataclass(kw_only=True, slots=True)
class PromptRelianceProfile:
    """PromptRelianceProfile has one entry per output token.

    positions are context indices; entry k describes the k-th output token,
    whose distribution is computed at query row positions[k] - 1.
    """

    positions: list[int]
    prompt_mass: np.ndarray
    reliance: np.ndarray
    degenerate: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(kw_only=True, slots=True)
class TokenOutcomeSets:
    """TokenOutcomeSets splits hypothesis positions into correct and erroneous ones."""

    correct: set[int] = field(default_factory=set)
    error: set[int] = field(default_factory=set)


@dataclass(kw_only=True, slots=True)
class RelianceSummary:
    """RelianceSummary holds the mean reliance of correct and of erroneous tokens."""

    mean_correct: Optional[float]
    mean_error: Optional[float]
    n_correct: int
    n_error: int

    def normalized(self) -> Optional[tuple[float, float]]:
        """Return both means scaled to sum to 1, None unless both exist and are not both 0."""
        if self.mean_correct is None or self.mean_error is None:
            return None
        total = self.mean_correct + self.mean_error
        if total <= 0:
            return None
        return self.mean_correct / total, self.mean_error / total


@dataclass(kw_only=True, slots=True)
class QualityScore:
    """QualityScore is the mean prompt reliance of a hypothesis's symbol tokens."""

    q: float
    length: int
    profile: Optional[PromptRelianceProfile] = None


def compute_saliency(records: Sequence[AttentionRecord], layout: SequenceLayout) -> SaliencyMatrix:
    """Sum A * dL/dA over the heads of one layer and take the absolute value."""
    if len(records) == 0:
        raise SaliencyError("No attention records")
    layer: Final[int] = records[0].layer
    shape: Final[tuple[int, ...]] = records[0].matrix.shape
    acc = np.zeros(shape)
    for r in records:
        if r.layer != layer:
            raise SaliencyError(f"Records of layers {layer} and {r.layer} mixed")
        if r.matrix.shape != shape:
            raise SaliencyError(f"Attention shapes {shape} and {r.matrix.shape} differ")
        g = r.grad
        if g is None:
            raise MissingGradientError(f"Layer {r.layer} head {r.head} has no gradient")
        acc += r.matrix * g
    return SaliencyMatrix(layer=layer, values=np.abs(acc), layout=layout)


def layer_saliency(records: Sequence[AttentionRecord],
                   layout: SequenceLayout,
                   layer: LayerChoice) -> SaliencyMatrix:
    """Compute the saliency of one layer (negative indices count from the top) or the mean."""
    layers: Final[list[int]] = sorted({r.layer for r in records})
    if len(layers) == 0:
        raise SaliencyError("No attention records")
    if layer == "mean":
        mats = [compute_saliency([r for r in records if r.layer == li], layout).values
                for li in layers]
        return SaliencyMatrix(layer="mean", values=np.mean(mats, axis=0), layout=layout)
    if not isinstance(layer, int) or not -len(layers) <= layer < len(layers):
        raise SaliencyError(f"Invalid saliency layer {layer} for {len(layers)} layers")
    li = layers[layer]
    return compute_saliency([r for r in records if r.layer == li], layout)


def prompt_reliance(sal: SaliencyMatrix) -> PromptRelianceProfile:
    """Compute R for every output token of the layout.

    A query row without any saliency gets R = 0 and is flagged degenerate.
    """
    lay: Final[SequenceLayout] = sal.layout
    if len(lay.prompt) == 0:
        raise EmptyPromptError("The layout has no prompt span")
    positions = list(lay.output)
    rows = [i - 1 for i in positions]
    block = sal.values[rows, :] if rows else np.zeros((0, sal.values.shape[1]))
    mass = block[:, lay.prompt.start:lay.prompt.stop].sum(axis=1)
    total = block.sum(axis=1)
    degenerate = total <= 0
    reliance = np.where(degenerate, 0.0, mass / np.where(degenerate, 1.0, total))
    return PromptRelianceProfile(positions=positions,
                                 prompt_mass=mass,
                                 reliance=np.clip(reliance, 0.0, 1.0),
                                 degenerate=degenerate)


def classify_tokens(hypothesis: Sequence[object], reference: Sequence[object]) -> TokenOutcomeSets:
    """Split hypothesis positions into matches and errors along a minimum edit alignment."""
    sets = TokenOutcomeSets()
    for step in align(hypothesis, reference):
        if step.hyp is None:
            continue
        if step.op == EditOp.Match:
            sets.correct.add(step.hyp)
        else:
            sets.error.add(step.hyp)
    return sets


def reliance_summary(profile: PromptRelianceProfile, sets: TokenOutcomeSets) -> RelianceSummary:
    """Average R over the correct and over the erroneous positions.

    Positions in sets are relative to the hypothesis, 0 is its first token.
    """
    n: Final[int] = len(profile)
    bad = [k for k in sets.correct | sets.error if not 0 <= k < n]
    if bad:
        raise SaliencyError(f"Positions {sorted(bad)} are outside the profile of {n}")
    rc = [float(profile.reliance[k]) for k in sorted(sets.correct)]
    re = [float(profile.reliance[k]) for k in sorted(sets.error)]
    return RelianceSummary(mean_correct=float(np.mean(rc)) if rc else None,
                           mean_error=float(np.mean(re)) if re else None,
                           n_correct=len(rc),
                           n_error=len(re))


def hypothesis_profile(params: ModelParams,
                       x: Sequence[int],
                       hypothesis: Hypothesis,
                       prompt: PromptConfig,
                       layer: LayerChoice = -1,
                       adapters: Optional[AdapterParams] = None,
                       loss_scale: float = 1.0) -> PromptRelianceProfile:
    """Re-score the hypothesis under teacher forcing and return its reliance profile.

    The profile covers the <eos> step as well when the hypothesis is finished.
    """
    if hypothesis.length == 0:
        raise EmptyHypothesisError("The hypothesis has no symbol tokens")
    eff = apply_adapter(params, adapters) if adapters is not None else params
    tokens, layout = prompt.context(x, hypothesis.tokens, finished=hypothesis.finished)
    tape = Tape()
    bound = bind_params(tape, eff)
    loss, records = nll_loss(bound, tokens, layout, capture=True, loss_scale=loss_scale)
    tape.backward(loss, keep_all=False)
    return prompt_reliance(layer_saliency(records, layout, layer))


def hypothesis_quality(params: ModelParams,
                       x: Sequence[int],
                       hypothesis: Hypothesis,
                       prompt: PromptConfig,
                       layer: LayerChoice = -1,
                       adapters: Optional[AdapterParams] = None,
                       loss_scale: float = 1.0) -> QualityScore:
    """Compute Q, the mean prompt reliance over the hypothesis's symbol tokens."""
    profile = hypothesis_profile(params, x, hypothesis, prompt, layer, adapters, loss_scale)
    t: Final[int] = hypothesis.length
    return QualityScore(q=float(np.mean(profile.reliance[:t])), length=t, profile=profile)


def threshold_filter(scored: Sequence[tuple[Hypothesis, QualityScore]],
                     tau: float) -> list[tuple[Hypothesis, QualityScore]]:
    """Keep the hypotheses with Q <= tau, in their original order."""
    if not 0.0 <= tau <= 1.0:
        raise SaliencyError(f"tau must be within [0, 1], got {tau}")
    return [(h, s) for h, s in scored if s.q <= tau]


# Dumps

def dump_record(uid: str,
                layer: LayerChoice,
                score: QualityScore,
                rank: int = 0) -> dict[str, object]:
    """Return the JSON record of one scored hypothesis."""
    profile = score.profile
    return {
        "uid": uid,
        "rank": rank,
        "layer": layer,
        "q": score.q,
        "length": score.length,
        "reliance": [] if profile is None else [float(r) for r in profile.reliance],
        "degenerate": [] if profile is None else [bool(d) for d in profile.degenerate],
    }


def write_dump(fpath: Union[str, Path], records: Iterable[dict[str, object]]) -> int:
    """Write records as JSON lines, return the number written."""
    n: int = 0
    Path(fpath).parent.mkdir(parents=True, exist_ok=True)
    with open(fpath, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    return n


# Local Variables: #
# python-indent: 4 #
# End: #
