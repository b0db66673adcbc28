#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 12:20:03 krylon>
#
# /data/code/python/selfadapt/model.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.model

(c) 2026 Benjamin Walkenhorst

Plain data types shared by the model, the decoder, the scorer and the
corpus code.
"""

import string
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Final, Optional, Sequence

import numpy as np

from selfadapt.common import SelfAdaptError
from selfadapt.grad import Node

PAD: Final[str] = "<pad>"
BOS: Final[str] = "<bos>"
EOS: Final[str] = "<eos>"
SEP: Final[str] = "<sep>"
TRANSCRIBE: Final[str] = "<transcribe>"

specials: Final[tuple[str, ...]] = (PAD, BOS, EOS, SEP)


class ModelError(SelfAdaptError):
    """Base class for errors of the model and its data types."""


class LayoutError(ModelError):
    """A SequenceLayout is inconsistent."""


class VocabError(ModelError):
    """A token is not part of the Vocab."""


class Split(Enum):
    """Split names a partition of the synthetic benchmark."""

    SourceTrain = "source-train"
    TargetAdapt = "target-adapt"
    TargetTest = "target-test"
    SourceTest = "source-test"


class Segment(IntEnum):
    """Segment is the region of the context a position belongs to."""

    Prompt = 0
    Input = 1
    Output = 2


def alphabet_symbols(size: int) -> list[str]:
    """Return the names of the first <size> alphabet symbols."""
    if size <= 26:
        return list(string.ascii_lowercase[:size])
    return [f"s{i:02d}" for i in range(size)]


@dataclass(kw_only=True, slots=True)
class Vocab:
    """Vocab maps token strings to indices and back."""

    symbols: tuple[str, ...]
    index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if len(set(self.symbols)) != len(self.symbols):
            raise VocabError("Vocab symbols are not unique")
        for s in specials:
            if s not in self.symbols:
                raise VocabError(f"Vocab lacks the special token {s}")
        self.index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def build(cls, alphabet: Sequence[str], tags: Sequence[str] = (TRANSCRIBE, )) -> 'Vocab':
        """Create a Vocab of the special tokens, the task tags and the alphabet."""
        return cls(symbols=tuple([*specials, *tags, *alphabet]))

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def pad(self) -> int:
        """Index of the padding token."""
        return self.index[PAD]

    @property
    def bos(self) -> int:
        """Index of the begin-of-sequence token."""
        return self.index[BOS]

    @property
    def eos(self) -> int:
        """Index of the end-of-sequence token."""
        return self.index[EOS]

    @property
    def sep(self) -> int:
        """Index of the token closing the input span."""
        return self.index[SEP]

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        """Map token strings to indices."""
        try:
            return tuple(self.index[t] for t in tokens)
        except KeyError as err:
            raise VocabError(f"Token {err} is not in the vocabulary") from err

    def decode(self, ids: Sequence[int]) -> tuple[str, ...]:
        """Map indices to token strings."""
        if any(not 0 <= i < len(self.symbols) for i in ids):
            raise VocabError(f"Token index out of range in {list(ids)}")
        return tuple(self.symbols[i] for i in ids)

    def prompt(self, tags: Sequence[str] = (TRANSCRIBE, )) -> 'PromptConfig':
        """Resolve the prompt tokens and the decodable output tokens."""
        tag_ids: Final[tuple[int, ...]] = self.encode(tags)
        reserved: Final[set[int]] = {self.pad, self.bos, self.sep, *tag_ids}
        out = tuple(i for i in range(len(self.symbols)) if i not in reserved)
        return PromptConfig(prefix=(self.bos, *tag_ids),
                            sep=self.sep,
                            eos=self.eos,
                            allowed=out)


@dataclass(kw_only=True, slots=True, frozen=True)
class PromptConfig:
    """PromptConfig holds the resolved token ids used to frame a context."""

    prefix: tuple[int, ...]
    sep: int
    eos: int
    allowed: tuple[int, ...]

    def context(self,
                x: Sequence[int],
                y: Sequence[int] = (),
                finished: bool = False) -> tuple[tuple[int, ...], 'SequenceLayout']:
        """Build prompt + X + <sep> + Y (+ <eos>) and its layout."""
        ys: list[int] = list(y)
        if finished:
            ys.append(self.eos)
        tokens: Final[tuple[int, ...]] = (*self.prefix, *x, self.sep, *ys)
        p: Final[int] = len(self.prefix)
        i: Final[int] = p + len(x) + 1
        layout = SequenceLayout(prompt=range(0, p),
                                input=range(p, i),
                                output=range(i, i + len(ys)))
        return tokens, layout


@dataclass(kw_only=True, slots=True, frozen=True)
class SequenceLayout:
    """SequenceLayout partitions a context into prompt, input and output spans."""

    prompt: range
    input: range
    output: range

    def __post_init__(self) -> None:
        spans = (self.prompt, self.input, self.output)
        if any(s.step != 1 for s in spans):
            raise LayoutError("Spans must be contiguous")
        if self.prompt.start != 0 or self.prompt.stop != self.input.start \
           or self.input.stop != self.output.start:
            raise LayoutError(f"Spans are not ordered and adjacent: {spans}")

    @property
    def total(self) -> int:
        """Total context length."""
        return self.output.stop

    def segments(self) -> np.ndarray:
        """Return the Segment id of every position."""
        seg = np.empty(self.total, dtype=np.int64)
        seg[self.prompt.start:self.prompt.stop] = Segment.Prompt
        seg[self.input.start:self.input.stop] = Segment.Input
        seg[self.output.start:self.output.stop] = Segment.Output
        return seg

    def position_ids(self) -> np.ndarray:
        """Return position ids, which restart at 0 in every span."""
        return np.concatenate([np.arange(len(self.prompt)),
                               np.arange(len(self.input)),
                               np.arange(len(self.output))]).astype(np.int64)


@dataclass(kw_only=True, slots=True)
class AttentionRecord:
    """AttentionRecord is one head's attention matrix, captured in a forward pass."""

    layer: int
    head: int
    node: Node

    @property
    def matrix(self) -> np.ndarray:
        """The attention probabilities, rows sum to 1."""
        return self.node.value

    @property
    def grad(self) -> Optional[np.ndarray]:
        """The loss gradient wrt the matrix, None before backward."""
        return self.node.grad


@dataclass(kw_only=True, slots=True)
class Hypothesis:
    """Hypothesis is one decoded output sequence.

    logprobs has one entry per symbol token, plus one for <eos> if the
    hypothesis is finished.
    """

    tokens: tuple[int, ...]
    logprobs: tuple[float, ...]
    finished: bool = True
    quality: Optional[float] = None

    @property
    def total(self) -> float:
        """Total log-probability of the hypothesis."""
        return float(sum(self.logprobs))

    @property
    def length(self) -> int:
        """Number of symbol tokens, <eos> excluded."""
        return len(self.tokens)

    def sort_key(self) -> tuple[float, tuple[int, ...]]:
        """Descending total, then token sequence."""
        return (-self.total, self.tokens)


@dataclass(kw_only=True, slots=True)
class BeamSet:
    """BeamSet is the N-best list for one utterance."""

    uid: str
    hypotheses: list[Hypothesis]
    beam_size: int

    def __post_init__(self) -> None:
        self.hypotheses.sort(key=lambda h: h.sort_key())

    def __len__(self) -> int:
        return len(self.hypotheses)

    @property
    def best(self) -> Hypothesis:
        """The top-ranked Hypothesis."""
        return self.hypotheses[0]


@dataclass(kw_only=True, slots=True, frozen=True)
class UnlabeledUtterance:
    """UnlabeledUtterance is what unsupervised adaptation gets to see."""

    uid: str
    inputs: tuple[str, ...]
    domain: str
    split: Split


@dataclass(kw_only=True, slots=True, frozen=True)
class Utterance:
    """Utterance is one synthetic example, reference included."""

    uid: str
    inputs: tuple[str, ...]
    reference: tuple[str, ...]
    domain: str
    split: Split

    def unlabeled(self) -> UnlabeledUtterance:
        """Return the view of the Utterance without its reference."""
        return UnlabeledUtterance(uid=self.uid,
                                  inputs=self.inputs,
                                  domain=self.domain,
                                  split=self.split)


# Local Variables: #
# python-indent: 4 #
# End: #
