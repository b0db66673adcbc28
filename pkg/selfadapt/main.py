#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 15:02:11 krylon>
#
# /data/code/python/selfadapt/main.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.main

(c) 2026 Benjamin Walkenhorst
"""


import argparse
import pathlib
import sys
from typing import Any, Optional, Sequence

from selfadapt import common, config
from selfadapt.config import Method
from selfadapt.experiment import Experiment, cmd_report

commands: tuple[str, ...] = ("generate", "train-base", "adapt", "analyze", "report")


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser of the selfadapt command."""
    argp: argparse.ArgumentParser = argparse.ArgumentParser(
        prog="selfadapt",
        description="Unsupervised self-improving domain adaptation of a toy transformer")
    argp.add_argument("command",
                      choices=commands,
                      help="The pipeline step to run")
    argp.add_argument("-c", "--config",
                      type=pathlib.Path,
                      help="TOML file with the experiment configuration")
    argp.add_argument("-m", "--method",
                      choices=[m.value for m in Method],
                      help="The adaptation method (adapt)")
    argp.add_argument("-s", "--seed",
                      type=int,
                      help="The global seed")
    argp.add_argument("-o", "--out",
                      type=pathlib.Path,
                      help="Directory for corpora, checkpoints and metrics")
    argp.add_argument("-k", "--checkpoint",
                      type=pathlib.Path,
                      help="Checkpoint to start from (train-base resumes it)")
    argp.add_argument("-w", "--workers",
                      type=int,
                      help="The number of worker threads for decoding")
    argp.add_argument("-b", "--basedir",
                      type=pathlib.Path,
                      default=common.path.base(),
                      help="Directory to store the log file in")
    return argp


def overrides_from(args: argparse.Namespace) -> dict[str, Any]:
    """Turn the command line flags into a config override table."""
    over: dict[str, Any] = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if args.out is not None:
        over["paths"] = {"out": str(args.out)}
    if args.method is not None:
        over["train"] = {"method": args.method}
    return over


def run(args: argparse.Namespace) -> None:
    """Execute one subcommand."""
    if args.command == "report":
        out = args.out
        if out is None:
            out = config.load(args.config).paths.out
        txt, csv_path = cmd_report(out)
        print(txt.read_text(encoding="utf-8"), end="")
        print(f"Wrote {txt} and {csv_path}")
        return

    cfg = config.load(args.config, overrides=overrides_from(args))
    exp = Experiment(cfg=cfg)
    match args.command:
        case "generate":
            for split, n in exp.cmd_generate().items():
                print(f"{split:<14} {n:>6}")
        case "train-base":
            rep = exp.cmd_train_base(resume=args.checkpoint)
            print(f"source-test error {rep.source_error:.4f}, "
                  f"target-test error {rep.target_error:.4f}, "
                  f"checkpoint {rep.checkpoint}")
        case "adapt":
            for rec in exp.cmd_adapt(cfg.train.method, args.checkpoint):
                print(rec.to_json())
        case "analyze":
            res = exp.cmd_analyze(args.checkpoint)
            print(f"{len(res.rows)} utterances, mean R correct {res.mean_correct}, "
                  f"mean R error {res.mean_error}, rho {res.rho:.4f} (p = {res.pvalue:.3g}), "
                  f"written to {res.csv_path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the selfadapt application, return the exit status."""
    args = build_parser().parse_args(argv)
    try:
        common.set_basedir(args.basedir)
        run(args)
    except (common.SelfAdaptError, OSError) as err:
        msg = " ".join(str(err).split())
        print(f"error: {err.__class__.__name__}: {msg}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("Interrupted.", file=sys.stderr)
        return 130
    return 0


if __name__ == '__main__':
    sys.exit(main())

# Local Variables: #
# python-indent: 4 #
# End: #
