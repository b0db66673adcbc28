#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 16:05:48 krylon>
#
# /data/code/python/selfadapt/metrics.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.metrics

(c) 2026 Benjamin Walkenhorst

Edit distance, alignment and the error rates derived from them.
"""

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Final, Hashable, Optional, Sequence

import numpy as np
from scipy import stats

from selfadapt.common import SelfAdaptError


class MetricError(SelfAdaptError):
    """A metric is undefined for its input."""


class EditOp(Enum):
    """EditOp is one step of an alignment, seen from the hypothesis."""

    Match = "match"
    Sub = "sub"
    Ins = "ins"
    Del = "del"


@dataclass(kw_only=True, slots=True, frozen=True)
class AlignStep:
    """AlignStep pairs a hypothesis position with a reference position.

    hyp is None for deletions, ref is None for insertions.
    """

    op: EditOp
    hyp: Optional[int]
    ref: Optional[int]


def _table(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> np.ndarray:
    n, m = len(hyp), len(ref)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if hyp[i - 1] == ref[j - 1] else 1
            d[i, j] = min(d[i - 1, j - 1] + cost, d[i - 1, j] + 1, d[i, j - 1] + 1)
    return d


def edit_distance(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> int:
    """Levenshtein distance with unit costs."""
    return int(_table(hyp, ref)[len(hyp), len(ref)])


def align(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> list[AlignStep]:
    """Return a minimum edit alignment, in sequence order.

    Where several alignments are optimal, the backtrace prefers
    match, then substitution, then insertion, then deletion.
    """
    d: Final[np.ndarray] = _table(hyp, ref)
    i, j = len(hyp), len(ref)
    steps: list[AlignStep] = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and hyp[i - 1] == ref[j - 1] and d[i, j] == d[i - 1, j - 1]:
            steps.append(AlignStep(op=EditOp.Match, hyp=i - 1, ref=j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            steps.append(AlignStep(op=EditOp.Sub, hyp=i - 1, ref=j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            steps.append(AlignStep(op=EditOp.Ins, hyp=i - 1, ref=None))
            i -= 1
        else:
            steps.append(AlignStep(op=EditOp.Del, hyp=None, ref=j - 1))
            j -= 1
    steps.reverse()
    return steps


def token_error_rate(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> float:
    """Edit distance divided by the reference length."""
    if len(ref) == 0:
        raise MetricError("The reference is empty")
    return edit_distance(hyp, ref) / len(ref)


def corpus_error_rate(pairs: Sequence[tuple[Sequence[Hashable], Sequence[Hashable]]]) -> float:
    """Total edits over total reference tokens, for (hypothesis, reference) pairs."""
    edits: int = 0
    total: int = 0
    for hyp, ref in pairs:
        if len(ref) == 0:
            raise MetricError("The reference is empty")
        edits += edit_distance(hyp, ref)
        total += len(ref)
    if total == 0:
        raise MetricError("No reference tokens")
    return edits / total


def error_rate_reduction(before: float, after: float) -> float:
    """Relative reduction of an error rate, (before - after) / before."""
    if before <= 0:
        raise MetricError(f"The reduction relative to an error rate of {before} is undefined")
    return (before - after) / before


def diversity(seqs: Sequence[Sequence[Hashable]]) -> float:
    """Mean edit distance over all unordered pairs; 0 for fewer than two."""
    pairs = list(itertools.combinations(seqs, 2))
    if len(pairs) == 0:
        return 0.0
    return sum(edit_distance(a, b) for a, b in pairs) / len(pairs)


def rank_correlation(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Spearman's rho and its two-sided p-value; NaNs if either side is constant."""
    if len(xs) != len(ys):
        raise MetricError(f"Cannot correlate {len(xs)} with {len(ys)} values")
    if len(xs) < 3 or len(set(xs)) < 2 or len(set(ys)) < 2:
        return math.nan, math.nan
    rho, pvalue = stats.spearmanr(xs, ys)
    return float(rho), float(pvalue)


# Local Variables: #
# python-indent: 4 #
# End: #
