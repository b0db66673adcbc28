#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 19:41:29 krylon>
#
# /data/code/python/selfadapt/test_config.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.test_config

(c) 2026 Benjamin Walkenhorst
"""


import json
import os
import shutil
import unittest
from datetime import datetime
from typing import Final

from selfadapt import common, config
from selfadapt.config import AdapterConfig, ConfigError, DomainKind, Method

test_dir: Final[str] = os.path.join(
    "/tmp",
    datetime.now().strftime(f"{common.AppName.lower()}_test_config_%Y%m%d_%H%M%S"))

sample: Final[str] = """
seed = 99

[model]
dim = 16
heads = 4

[task]
alphabet = 8
max_len = 6

[train]
method = "min-q"
beam_size = 6
saliency_layer = "mean"

[train.adapter]
rank = 2
targets = ["wq", "wv"]

[[domains]]
name = "clean"
kind = "clean"

[[domains]]
name = "accent"
kind = "accent"
swap_pairs = [["a", "b"], ["c", "d"]]
"""


class TestConfig(unittest.TestCase):
    """Test loading the configuration."""

    @classmethod
    def setUpClass(cls) -> None:
        """Prepare the testing environment."""
        common.set_basedir(test_dir)

    @classmethod
    def tearDownClass(cls) -> None:
        """Clean up afterwards."""
        shutil.rmtree(test_dir, ignore_errors=True)

    def write(self, name: str, content: str) -> str:
        """Write a config file to the test directory."""
        fpath = os.path.join(test_dir, name)
        with open(fpath, "w", encoding="utf-8") as fh:
            fh.write(content)
        return fpath

    def test_01_defaults(self) -> None:
        """Without a file the defaults are valid."""
        cfg = config.load(environ={})
        self.assertEqual(cfg.seed, 1234)
        self.assertEqual(cfg.train.method, Method.SISDA)
        self.assertEqual(cfg.source.kind, DomainKind.Clean)
        self.assertEqual(cfg.target.kind, DomainKind.Noise)
        self.assertEqual(cfg.model.vocab_size, 0)

    def test_02_file(self) -> None:
        """A TOML file fills the sections."""
        cfg = config.load(self.write("sample.toml", sample), environ={})
        self.assertEqual(cfg.seed, 99)
        self.assertEqual((cfg.model.dim, cfg.model.heads), (16, 4))
        self.assertEqual(cfg.task.alphabet, 8)
        self.assertEqual(cfg.train.method, Method.MinQ)
        self.assertEqual(cfg.train.saliency_layer, "mean")
        self.assertEqual(cfg.train.adapter, AdapterConfig(rank=2, targets=("wq", "wv")))
        self.assertEqual(cfg.target.swap_pairs, [("a", "b"), ("c", "d")])
        self.assertEqual(cfg.target.kind, DomainKind.Accent)

    def test_03_precedence(self) -> None:
        """File < environment < overrides."""
        fpath = self.write("sample.toml", sample)
        env = {"SELFADAPT_TRAIN__BEAM_SIZE": "4",
               "SELFADAPT_SEED": "7",
               "SELFADAPT_TRAIN__METHOD": "dpo",
               "SELFADAPT_SLOW": "1",
               "UNRELATED": "x"}
        cfg = config.load(fpath, environ=env)
        self.assertEqual(cfg.train.beam_size, 4)
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.train.method, Method.DPO)
        self.assertEqual(cfg.model.dim, 16)

        cfg = config.load(fpath, environ=env,
                          overrides={"seed": 3, "train": {"method": "sft"}})
        self.assertEqual(cfg.seed, 3)
        self.assertEqual(cfg.train.method, Method.SFT)
        self.assertEqual(cfg.train.beam_size, 4)

    def test_04_errors(self) -> None:
        """Invalid configurations raise ConfigError."""
        cases = {
            "unknown.toml": "[model]\nwidth = 3\n",
            "method.toml": "[train]\nmethod = \"magic\"\n",
            "syntax.toml": "[model\n",
            "heads.toml": "[model]\ndim = 10\nheads = 3\n",
            "tau.toml": "[train]\ntau = 1.5\n",
            "epochs.toml": "[train]\nepochs = 0\n",
            "fit.toml": "[model]\nmaxlen = 16\n",
            "source.toml": "[[domains]]\nname = \"n\"\nkind = \"noise\"\np = 0.1\n"
                           "[[domains]]\nname = \"c\"\nkind = \"clean\"\n",
            "count.toml": "[[domains]]\nname = \"c\"\nkind = \"clean\"\n",
            "layer.toml": "[train]\nsaliency_layer = \"top\"\n",
            "splits.toml": "[splits]\ntarget_adapt = 0\n",
        }
        for name, content in cases.items():
            with self.subTest(file=name):
                with self.assertRaises(ConfigError):
                    config.load(self.write(name, content), environ={})
        with self.assertRaises(ConfigError):
            config.load(os.path.join(test_dir, "missing.toml"), environ={})

        cfg = config.load(self.write("zero.toml", "[base]\nepochs = 0\n"), environ={})
        self.assertEqual(cfg.base.epochs, 0)

    def test_05_to_table(self) -> None:
        """The plain table serializes as JSON."""
        cfg = config.load(self.write("sample.toml", sample), environ={})
        table = config.to_table(cfg)
        self.assertEqual(table["train"]["method"], "min-q")
        self.assertEqual(table["domains"][1]["kind"], "accent")
        self.assertEqual(json.loads(json.dumps(table))["model"]["dim"], 16)

    def test_06_context_fit(self) -> None:
        """maxlen must hold the whole context, not just its longest span."""
        cfg = config.load(environ={})
        self.assertEqual(cfg.task.context_len(), 85)
        self.assertLessEqual(cfg.task.context_len(cfg.train.max_len), cfg.model.maxlen)

        cases = {
            # 2 + 60 + 1 + 22 = 85
            "tight.toml": ("[model]\nmaxlen = 85\n", False),
            "short.toml": ("[model]\nmaxlen = 84\n", True),
            # each span is shorter than 64, the context is not
            "spans.toml": ("[model]\nmaxlen = 64\n", True),
            "budget.toml": ("[train]\nmax_len = 40\n", True),
            "tags.toml": ("[model]\nmaxlen = 85\n[task]\ntags = [\"<a>\", \"<b>\"]\n", True),
        }
        for name, (content, fails) in cases.items():
            with self.subTest(file=name):
                fpath = self.write(name, content)
                if fails:
                    with self.assertRaises(ConfigError):
                        config.load(fpath, environ={})
                else:
                    self.assertEqual(config.load(fpath, environ={}).model.maxlen, 85)


# Local Variables: #
# python-indent: 4 #
# End: #
