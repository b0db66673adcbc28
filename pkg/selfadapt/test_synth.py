#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 19:20:13 krylon>
#
# /data/code/python/selfadapt/test_synth.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.test_synth

(c) 2026 Benjamin Walkenhorst
"""


import os
import shutil
import unittest
from datetime import datetime
from typing import Final

import numpy as np

from selfadapt import common
from selfadapt.config import DomainKind, DomainSpec, TaskConfig
from selfadapt.model import Split, alphabet_symbols
from selfadapt.synth import (CorpusError, corrupt, generate_corpus, neighbors,
                             read_corpus, substitution_rate, swap_table,
                             write_corpus)

test_dir: Final[str] = os.path.join(
    "/tmp",
    datetime.now().strftime(f"{common.AppName.lower()}_test_synth_%Y%m%d_%H%M%S"))

task: Final[TaskConfig] = TaskConfig(alphabet=26, shift=3, min_len=5, max_len=20, frames=3)
clean: Final[DomainSpec] = DomainSpec(name="clean", kind=DomainKind.Clean)
noisy: Final[DomainSpec] = DomainSpec(name="noise", kind=DomainKind.Noise, p=0.3)
accent: Final[DomainSpec] = DomainSpec(name="accent", kind=DomainKind.Accent,
                                       swap_pairs=[("a", "e"), ("m", "n")])


class TestSynth(unittest.TestCase):
    """Test the synthetic corpora."""

    @classmethod
    def setUpClass(cls) -> None:
        """Prepare the testing environment."""
        common.set_basedir(test_dir)

    @classmethod
    def tearDownClass(cls) -> None:
        """Clean up afterwards."""
        shutil.rmtree(test_dir, ignore_errors=True)

    def test_01_deterministic(self) -> None:
        """The same seed gives the same corpus."""
        a = generate_corpus(task, noisy, 50, Split.TargetAdapt, 7)
        b = generate_corpus(task, noisy, 50, Split.TargetAdapt, 7)
        c = generate_corpus(task, noisy, 50, Split.TargetAdapt, 8)
        self.assertEqual(a.labeled(), b.labeled())
        self.assertNotEqual(a.labeled(), c.labeled())
        self.assertEqual(len({u.uid for u in a.labeled()}), 50)

    def test_02_clean(self) -> None:
        """Clean inputs are the references shifted back and repeated."""
        corpus = generate_corpus(task, clean, 40, Split.SourceTrain, 1)
        symbols = alphabet_symbols(task.alphabet)
        for u in corpus.labeled():
            self.assertTrue(task.min_len <= len(u.reference) <= task.max_len)
            back = [symbols[(symbols.index(s) - task.shift) % task.alphabet]
                    for s in u.reference]
            self.assertEqual(list(u.inputs), [s for s in back for _ in range(task.frames)])
        self.assertEqual(substitution_rate(corpus, task), 0.0)

    def test_03_noise(self) -> None:
        """Noise corrupts about p of the frames and leaves the references alone."""
        ref = generate_corpus(task, clean, 200, Split.TargetTest, 3)
        got = generate_corpus(task, noisy, 200, Split.TargetTest, 3)
        self.assertEqual([u.reference for u in ref.labeled()],
                         [u.reference for u in got.labeled()])
        rate = substitution_rate(got, task)
        self.assertAlmostEqual(rate, noisy.p, delta=0.03)

    def test_04_accent(self) -> None:
        """An accent swaps symbol pairs deterministically."""
        ref = generate_corpus(task, clean, 30, Split.TargetTest, 4)
        got = generate_corpus(task, accent, 30, Split.TargetTest, 4)
        swap = {"a": "e", "e": "a", "m": "n", "n": "m"}
        for r, g in zip(ref.labeled(), got.labeled()):
            self.assertEqual(g.inputs, tuple(swap.get(s, s) for s in r.inputs))
            self.assertEqual(g.reference, r.reference)
        with self.assertRaises(CorpusError):
            swap_table(DomainSpec(kind=DomainKind.Accent, swap_pairs=[("a", "?")]),
                       alphabet_symbols(4))

    def test_05_neighbors(self) -> None:
        """Neighbor offsets that wrap onto each other count once."""
        spec = DomainSpec(kind=DomainKind.Noise, p=0.5, radius=2)
        self.assertEqual(neighbors(spec, 26), [-1, 1, -2, 2])
        self.assertEqual(neighbors(spec, 3), [-1, 1])
        spec.include_self = True
        self.assertEqual(neighbors(spec, 26)[0], 0)

        frames = np.arange(10)
        always = DomainSpec(kind=DomainKind.Noise, p=1.0, radius=1)
        out = corrupt(frames, always, 26, np.random.default_rng(5))
        self.assertTrue(((out - frames) % 26 != 0).all())
        self.assertTrue(np.isin((out - frames) % 26, [1, 25]).all())

    def test_06_files(self) -> None:
        """Corpus files read back exactly, bad files are rejected."""
        corpus = generate_corpus(task, noisy, 20, Split.TargetAdapt, 6)
        fpath = os.path.join(test_dir, "corpus", "target-adapt.txt")
        write_corpus(fpath, corpus)
        back = read_corpus(fpath)
        self.assertEqual(back.labeled(), corpus.labeled())
        self.assertEqual((back.split, back.domain), (Split.TargetAdapt, "noise"))
        self.assertEqual(len(back.head(5)), 5)
        self.assertEqual(len(back.head(0)), 20)

        bad = os.path.join(test_dir, "bad.txt")
        with open(bad, "w", encoding="utf-8") as fh:
            fh.write("not a corpus\n")
        with self.assertRaises(CorpusError):
            read_corpus(bad)
        with open(bad, "w", encoding="utf-8") as fh:
            fh.write("# selfadapt corpus v1\nu1\tsource-train\tclean\ta b\n")
        with self.assertRaises(CorpusError):
            read_corpus(bad)
        with self.assertRaises(CorpusError):
            read_corpus(os.path.join(test_dir, "missing.txt"))
        with self.assertRaises(CorpusError):
            generate_corpus(task, clean, 0, Split.SourceTrain, 1)

    def test_07_unlabeled(self) -> None:
        """The unlabeled view has no references."""
        corpus = generate_corpus(task, noisy, 5, Split.TargetAdapt, 9)
        for u, v in zip(corpus.labeled(), corpus.unlabeled()):
            self.assertEqual((u.uid, u.inputs), (v.uid, v.inputs))
            self.assertFalse(hasattr(v, "reference"))


# Local Variables: #
# python-indent: 4 #
# End: #
