#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 18:22:51 krylon>
#
# /data/code/python/selfadapt/decoding.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.decoding

(c) 2026 Benjamin Walkenhorst

N-best generation. Scores are raw sums of log-probabilities, without any
length normalization. Equal scores are ordered by token sequence, so the
lowest token index wins a tie.

max_len counts decoding steps, the <eos> step included. A hypothesis that
has not emitted <eos> after max_len steps is kept with finished=False.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Iterable, Optional, Sequence, Union

import numpy as np

from selfadapt import common
from selfadapt.model import BeamSet, Hypothesis, PromptConfig, Vocab
from selfadapt.transformer import AdapterParams, ModelParams, apply_adapter, next_token_logprobs


class DecodeError(common.SelfAdaptError):
    """Decoding cannot proceed."""


def _check(x: Sequence[int], max_len: int) -> None:
    if len(x) == 0:
        raise DecodeError("The input is empty")
    if max_len < 1:
        raise DecodeError(f"max_len must be >= 1, got {max_len}")


def _effective(params: ModelParams, adapters: Optional[AdapterParams]) -> ModelParams:
    return apply_adapter(params, adapters) if adapters is not None else params


def beam_search(params: ModelParams,
                x: Sequence[int],
                prompt: PromptConfig,
                beam_size: int,
                max_len: int,
                adapters: Optional[AdapterParams] = None,
                uid: str = "") -> BeamSet:
    """Return up to beam_size hypotheses for input x, best first."""
    _check(x, max_len)
    if beam_size < 1:
        raise DecodeError(f"beam_size must be >= 1, got {beam_size}")
    eff: Final[ModelParams] = _effective(params, adapters)
    allowed: Final[np.ndarray] = np.asarray(prompt.allowed)

    live: list[Hypothesis] = [Hypothesis(tokens=(), logprobs=(), finished=False)]
    done: list[Hypothesis] = []

    for _ in range(max_len):
        cands: list[Hypothesis] = []
        for hyp in live:
            ctx, layout = prompt.context(x, hyp.tokens)
            dist = next_token_logprobs(eff, ctx, layout)
            for tok in allowed:
                lp = float(dist[tok])
                if tok == prompt.eos:
                    cands.append(Hypothesis(tokens=hyp.tokens,
                                            logprobs=(*hyp.logprobs, lp),
                                            finished=True))
                else:
                    cands.append(Hypothesis(tokens=(*hyp.tokens, int(tok)),
                                            logprobs=(*hyp.logprobs, lp),
                                            finished=False))
        cands.sort(key=lambda h: h.sort_key())
        live = []
        for h in cands[:beam_size]:
            (done if h.finished else live).append(h)

        if len(live) == 0:
            break
        if len(done) >= beam_size:
            done.sort(key=lambda h: h.sort_key())
            # Log-probabilities are <= 0, so extending never raises a score.
            if max(h.total for h in live) < done[beam_size - 1].total:
                live = []
                break

    pool: list[Hypothesis] = done + live
    pool.sort(key=lambda h: h.sort_key())
    return BeamSet(uid=uid, hypotheses=pool[:beam_size], beam_size=beam_size)


def greedy_decode(params: ModelParams,
                  x: Sequence[int],
                  prompt: PromptConfig,
                  max_len: int,
                  adapters: Optional[AdapterParams] = None) -> Hypothesis:
    """Pick the most likely allowed token at every step until <eos> or max_len."""
    _check(x, max_len)
    eff: Final[ModelParams] = _effective(params, adapters)
    allowed: Final[np.ndarray] = np.asarray(prompt.allowed)
    tokens: list[int] = []
    lps: list[float] = []
    for _ in range(max_len):
        ctx, layout = prompt.context(x, tokens)
        dist = next_token_logprobs(eff, ctx, layout)
        tok = int(allowed[int(np.argmax(dist[allowed]))])
        lps.append(float(dist[tok]))
        if tok == prompt.eos:
            return Hypothesis(tokens=tuple(tokens), logprobs=tuple(lps), finished=True)
        tokens.append(tok)
    return Hypothesis(tokens=tuple(tokens), logprobs=tuple(lps), finished=False)


def dedupe_and_truncate(beams: BeamSet, keep: int, dedupe: bool = True) -> BeamSet:
    """Drop repeated token sequences (keeping the better one), then keep the top entries."""
    if keep < 1:
        raise DecodeError(f"keep must be >= 1, got {keep}")
    hyps: list[Hypothesis] = sorted(beams.hypotheses, key=lambda h: h.sort_key())
    if dedupe:
        seen: set[tuple[int, ...]] = set()
        unique: list[Hypothesis] = []
        for h in hyps:
            if h.tokens in seen:
                continue
            seen.add(h.tokens)
            unique.append(h)
        hyps = unique
    return BeamSet(uid=beams.uid, hypotheses=hyps[:keep], beam_size=beams.beam_size)


def default_max_len(x: Sequence[int], frames: int, slack: int = 2) -> int:
    """Return a decoding budget for an input of len(x) frames."""
    return max(1, len(x) // max(1, frames) + slack)


@dataclass(kw_only=True, slots=True)
class DecodeContext:
    """DecodeContext bundles what turns an utterance into decoder input."""

    vocab: Vocab
    prompt: PromptConfig
    frames: int = 1
    max_len: int = 0

    def encode(self, inputs: Sequence[str]) -> tuple[int, ...]:
        """Map input frame symbols to token ids."""
        return self.vocab.encode(inputs)

    def budget(self, x: Sequence[int]) -> int:
        """Return max_len for input x, the configured value unless it is 0."""
        return self.max_len if self.max_len > 0 else default_max_len(x, self.frames)


def nbest_records(beams: BeamSet, vocab: Vocab) -> Iterable[dict[str, object]]:
    """Yield one JSON record per hypothesis of the BeamSet."""
    for rank, h in enumerate(beams.hypotheses):
        yield {
            "uid": beams.uid,
            "rank": rank,
            "total": h.total,
            "q": h.quality,
            "finished": h.finished,
            "tokens": " ".join(vocab.decode(h.tokens)),
        }


def write_nbest(fpath: Union[str, Path], beamsets: Iterable[BeamSet], vocab: Vocab) -> int:
    """Write the N-best lists as JSON lines, return the number of records."""
    n: int = 0
    Path(fpath).parent.mkdir(parents=True, exist_ok=True)
    with open(fpath, "w", encoding="utf-8") as fh:
        for bs in beamsets:
            for rec in nbest_records(bs, vocab):
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                n += 1
    return n


# Local Variables: #
# python-indent: 4 #
# End: #
