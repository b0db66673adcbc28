#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 16:48:30 krylon>
#
# /data/code/python/selfadapt/synth.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.synth

(c) 2026 Benjamin Walkenhorst

Synthetic transduction corpora. The clean input is a random symbol string,
every symbol repeated for a number of frames. The reference is the clean
string under a cyclic shift of the alphabet. Domains corrupt the input
frames only, never the reference.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, Iterator, Union

import numpy as np

from selfadapt import common
from selfadapt.config import DomainKind, DomainSpec, TaskConfig
from selfadapt.model import Split, UnlabeledUtterance, Utterance, alphabet_symbols

corpus_header: Final[str] = "# selfadapt corpus v1"


class CorpusError(common.SelfAdaptError):
    """A corpus cannot be generated or parsed."""


def neighbors(spec: DomainSpec, size: int) -> list[int]:
    """Return the cyclic offsets a noisy frame can be moved by."""
    offsets = [o for r in range(1, spec.radius + 1) for o in (-r, r)]
    if spec.include_self:
        offsets.insert(0, 0)
    # Offsets that wrap onto each other on a small alphabet count once.
    seen: dict[int, int] = {}
    for o in offsets:
        seen.setdefault(o % size, o)
    return list(seen.values())


def swap_table(spec: DomainSpec, symbols: list[str]) -> np.ndarray:
    """Return the index permutation of an accent domain."""
    index = {s: i for i, s in enumerate(symbols)}
    table = np.arange(len(symbols))
    for a, b in spec.swap_pairs:
        if a not in index or b not in index:
            raise CorpusError(f"Swap pair ({a}, {b}) is not part of the alphabet")
        table[index[a]], table[index[b]] = index[b], index[a]
    return table


def corrupt(frames: np.ndarray,
            spec: DomainSpec,
            size: int,
            rng: np.random.Generator) -> np.ndarray:
    """Apply the domain's corruption to a vector of frame indices."""
    match spec.kind:
        case DomainKind.Clean:
            return frames.copy()
        case DomainKind.Noise:
            offs = np.asarray(neighbors(spec, size))
            hit = rng.random(frames.shape[0]) < spec.p
            moves = offs[rng.integers(0, offs.shape[0], frames.shape[0])]
            return np.where(hit, (frames + moves) % size, frames)
        case DomainKind.Accent:
            return swap_table(spec, alphabet_symbols(size))[frames]
    raise CorpusError(f"Unknown domain kind {spec.kind}")


@dataclass(kw_only=True, slots=True)
class DomainCorpus:
    """DomainCorpus holds the utterances of one split of one domain.

    Unsupervised code gets the utterances through unlabeled(), which has no
    references to leak. Only supervised code calls labeled().
    """

    split: Split
    domain: str
    _utterances: list[Utterance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self._utterances)

    def labeled(self) -> list[Utterance]:
        """Return the utterances, references included."""
        return list(self._utterances)

    def unlabeled(self) -> list[UnlabeledUtterance]:
        """Return the utterances without their references."""
        return [u.unlabeled() for u in self._utterances]

    def head(self, n: int) -> 'DomainCorpus':
        """Return a corpus of the first n utterances, all of them if n is 0."""
        items = self._utterances if n <= 0 else self._utterances[:n]
        return type(self)(split=self.split, domain=self.domain, _utterances=list(items))


def generate_corpus(task: TaskConfig,
                    domain: DomainSpec,
                    count: int,
                    split: Split,
                    seed: int) -> DomainCorpus:
    """Draw count utterances of one split, deterministic in seed."""
    if count < 1:
        raise CorpusError(f"Cannot generate {count} utterances")
    if not 1 <= task.min_len <= task.max_len:
        raise CorpusError(f"Invalid length range [{task.min_len}, {task.max_len}]")
    log: Final[logging.Logger] = common.get_logger("synth")
    symbols: Final[list[str]] = alphabet_symbols(task.alphabet)
    content = np.random.default_rng(common.derive_seed(seed, f"corpus/{split.value}/{domain.seed}"))
    noise = np.random.default_rng(
        common.derive_seed(seed, f"noise/{split.value}/{domain.name}/{domain.seed}"))

    utts: list[Utterance] = []
    for i in range(count):
        length = int(content.integers(task.min_len, task.max_len + 1))
        clean = content.integers(0, task.alphabet, length)
        frames = corrupt(np.repeat(clean, task.frames), domain, task.alphabet, noise)
        ref = (clean + task.shift) % task.alphabet
        utts.append(Utterance(uid=f"{split.value}-{domain.name}-{i:05d}",
                              inputs=tuple(symbols[k] for k in frames),
                              reference=tuple(symbols[k] for k in ref),
                              domain=domain.name,
                              split=split))
    log.debug("Generated %d utterances for %s/%s", count, split.value, domain.name)
    return DomainCorpus(split=split, domain=domain.name, _utterances=utts)


def substitution_rate(corpus: DomainCorpus, task: TaskConfig) -> float:
    """Fraction of input frames that differ from the clean frames."""
    symbols = alphabet_symbols(task.alphabet)
    index = {s: i for i, s in enumerate(symbols)}
    changed: int = 0
    total: int = 0
    for u in corpus.labeled():
        clean = np.repeat([(index[s] - task.shift) % task.alphabet for s in u.reference],
                          task.frames)
        got = np.asarray([index[s] for s in u.inputs])
        changed += int((clean != got).sum())
        total += got.shape[0]
    return changed / total if total > 0 else 0.0


# Files

def format_utterance(u: Utterance) -> str:
    """Render one corpus line."""
    return "\t".join((u.uid, u.split.value, u.domain, " ".join(u.inputs), " ".join(u.reference)))


def parse_utterance(line: str, lineno: int = 0) -> Utterance:
    """Parse one corpus line."""
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 5:
        raise CorpusError(f"Line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
    uid, split, domain, inputs, ref = parts
    try:
        sp = Split(split)
    except ValueError as err:
        raise CorpusError(f"Line {lineno}: unknown split {split}") from err
    if uid == "" or inputs == "" or ref == "":
        raise CorpusError(f"Line {lineno}: empty field")
    return Utterance(uid=uid,
                     inputs=tuple(inputs.split(" ")),
                     reference=tuple(ref.split(" ")),
                     domain=domain,
                     split=sp)


def write_corpus(fpath: Union[str, Path], corpus: DomainCorpus) -> None:
    """Write the corpus, one utterance per line after the header."""
    Path(fpath).parent.mkdir(parents=True, exist_ok=True)
    with open(fpath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(corpus_header + "\n")
        for u in corpus.labeled():
            fh.write(format_utterance(u) + "\n")


def _lines(fpath: Union[str, Path]) -> Iterator[tuple[int, str]]:
    with open(fpath, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            yield lineno, line


def read_corpus(fpath: Union[str, Path]) -> DomainCorpus:
    """Read a corpus file written by write_corpus."""
    utts: list[Utterance] = []
    try:
        for lineno, line in _lines(fpath):
            if lineno == 1:
                if line.rstrip("\n") != corpus_header:
                    raise CorpusError(f"{fpath} is not a corpus file")
                continue
            if line.strip() == "":
                continue
            utts.append(parse_utterance(line, lineno))
    except OSError as err:
        raise CorpusError(f"Cannot read {fpath}: {err}") from err
    if len(utts) == 0:
        raise CorpusError(f"{fpath} holds no utterances")
    if len({(u.split, u.domain) for u in utts}) != 1:
        raise CorpusError(f"{fpath} mixes splits or domains")
    return DomainCorpus(split=utts[0].split, domain=utts[0].domain, _utterances=utts)


# Local Variables: #
# python-indent: 4 #
# End: #
