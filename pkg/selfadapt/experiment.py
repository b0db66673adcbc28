#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-20 13:27:40 krylon>
#
# /data/code/python/selfadapt/experiment.py
# created on 20. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.experiment

(c) 2026 Benjamin Walkenhorst

The experiment pipeline: generate corpora, train the base model on the
source domain, adapt it to the target domain with one of the methods,
analyze prompt reliance, and tabulate the results.
"""

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Final, Optional, Sequence, Union

import numpy as np

from selfadapt import common
from selfadapt.adaptation import (AdaptResult, Learner, TraceFn, adapt_si_sda,
                                  baseline_dpo, baseline_pseudo, baseline_sft,
                                  train_supervised)
from selfadapt.config import ExperimentConfig, Method, TrainConfig, to_table
from selfadapt.decoding import DecodeContext, beam_search, write_nbest
from selfadapt.metrics import corpus_error_rate, error_rate_reduction, rank_correlation, \
    token_error_rate
from selfadapt.model import BeamSet, Split, Utterance, Vocab, alphabet_symbols
from selfadapt.optim import Adam, AdamState
from selfadapt.pool import WorkerPool
from selfadapt.saliency import (PromptRelianceProfile, QualityScore, classify_tokens,
                                dump_record, hypothesis_profile, reliance_summary,
                                write_dump)
from selfadapt.synth import DomainCorpus, generate_corpus, read_corpus, write_corpus
from selfadapt.transformer import (AdapterParams, Checkpoint, ModelParams, apply_adapter,
                                   init_params, load_checkpoint, save_checkpoint)

report_columns: Final[tuple[str, ...]] = ("method", "split", "error_rate", "err_reduction",
                                          "mean_q", "seed")
analysis_columns: Final[tuple[str, ...]] = ("uid", "length", "n_correct", "n_error",
                                            "mean_correct", "mean_error",
                                            "norm_correct", "norm_error", "q", "ter")


class ExperimentError(common.SelfAdaptError):
    """An experiment step cannot run."""


@dataclass(kw_only=True, slots=True)
class MetricsRecord:
    """MetricsRecord is one line of metrics.jsonl."""

    method: str
    split: str
    error_rate: float
    err_reduction: Optional[float] = None
    mean_q: Optional[float] = None
    seed: int = 0

    def to_json(self) -> str:
        """Serialize as one line of JSON."""
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> 'MetricsRecord':
        """Parse a line written by to_json."""
        try:
            return cls(**json.loads(line))
        except (TypeError, ValueError) as err:
            raise ExperimentError(f"Invalid metrics record {line!r}: {err}") from err


@dataclass(kw_only=True, slots=True)
class Evaluation:
    """Evaluation holds the top-1 decoding of a labeled split."""

    split: Split
    error_rate: float
    beams: list[BeamSet] = field(default_factory=list)
    per_utterance: list[float] = field(default_factory=list)


@dataclass(kw_only=True, slots=True)
class BaseReport:
    """BaseReport summarizes base training."""

    checkpoint: Path
    source_error: float
    target_error: float
    final_loss: Optional[float] = None


@dataclass(kw_only=True, slots=True)
class AnalysisRow:
    """AnalysisRow holds the reliance statistics of one utterance."""

    uid: str
    length: int
    n_correct: int
    n_error: int
    mean_correct: Optional[float]
    mean_error: Optional[float]
    norm_correct: Optional[float]
    norm_error: Optional[float]
    q: float
    ter: float
    profile: Optional[PromptRelianceProfile] = field(default=None, compare=False, repr=False)


@dataclass(kw_only=True, slots=True)
class AnalysisReport:
    """AnalysisReport aggregates the rows of one analysis run."""

    rows: list[AnalysisRow]
    mean_correct: Optional[float]
    mean_error: Optional[float]
    error_share: Optional[float]
    rho: float
    pvalue: float
    csv_path: Path


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def read_analysis_csv(fpath: Union[str, Path]) -> list[AnalysisRow]:
    """Parse a CSV file written by cmd_analyze."""
    rows: list[AnalysisRow] = []
    with open(fpath, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(AnalysisRow(uid=rec["uid"],
                                    length=int(rec["length"]),
                                    n_correct=int(rec["n_correct"]),
                                    n_error=int(rec["n_error"]),
                                    mean_correct=_opt_float(rec["mean_correct"]),
                                    mean_error=_opt_float(rec["mean_error"]),
                                    norm_correct=_opt_float(rec["norm_correct"]),
                                    norm_error=_opt_float(rec["norm_error"]),
                                    q=float(rec["q"]),
                                    ter=float(rec["ter"])))
    return rows


def read_metrics(fpath: Union[str, Path]) -> list[MetricsRecord]:
    """Read all records of a metrics.jsonl file."""
    out: list[MetricsRecord] = []
    with open(fpath, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip() != "":
                out.append(MetricsRecord.from_json(line))
    return out


def split_domain(cfg: ExperimentConfig, split: Split) -> str:
    """Return the name of the domain a split is drawn from."""
    match split:
        case Split.SourceTrain | Split.SourceTest:
            return cfg.source.name
    return cfg.target.name


@dataclass(kw_only=True, slots=True)
class Experiment:
    """Experiment runs the pipeline steps for one configuration."""

    cfg: ExperimentConfig
    log: logging.Logger = field(default_factory=lambda: common.get_logger("experiment"))
    vocab: Vocab = field(init=False)
    ctx: DecodeContext = field(init=False)

    def __post_init__(self) -> None:
        task = self.cfg.task
        self.vocab = Vocab.build(alphabet_symbols(task.alphabet), task.tags)
        if self.cfg.model.vocab_size == 0:
            self.cfg.model.vocab_size = len(self.vocab)
        elif self.cfg.model.vocab_size != len(self.vocab):
            raise ExperimentError(f"model.vocab_size is {self.cfg.model.vocab_size}, "
                                  f"the task needs {len(self.vocab)}")
        self.ctx = DecodeContext(vocab=self.vocab,
                                 prompt=self.vocab.prompt(task.tags),
                                 frames=task.frames,
                                 max_len=self.cfg.train.max_len)

    # Paths

    @property
    def out(self) -> Path:
        """The output directory."""
        return Path(self.cfg.paths.out)

    def corpus_path(self, split: Split) -> Path:
        """Return the file of a corpus split."""
        return self.cfg.paths.corpus / f"{split.value}.txt"

    def checkpoint_path(self, name: str) -> Path:
        """Return the file of a named checkpoint."""
        return self.cfg.paths.checkpoints / f"{name}.npz"

    def load_corpus(self, split: Split) -> DomainCorpus:
        """Read a corpus split generated earlier."""
        return read_corpus(self.corpus_path(split))

    def train_config(self, method: Method) -> TrainConfig:
        """Return the adaptation settings for method, seeded from the global seed."""
        return dataclasses.replace(self.cfg.train,
                                   method=method,
                                   seed=common.derive_seed(self.cfg.seed,
                                                           f"adapt/{self.cfg.train.seed}"))

    # generate

    def cmd_generate(self) -> dict[str, int]:
        """Write all four corpus splits, return the number of utterances per split."""
        counts: dict[str, int] = {}
        for split in Split:
            domain = self.cfg.source if split in (Split.SourceTrain, Split.SourceTest) \
                else self.cfg.target
            n = self.cfg.splits.count(split.value)
            corpus = generate_corpus(self.cfg.task, domain, n, split, self.cfg.seed)
            write_corpus(self.corpus_path(split), corpus)
            counts[split.value] = n
            self.log.info("Wrote %d utterances of %s/%s to %s",
                          n, split.value, domain.name, self.corpus_path(split))
        return counts

    # evaluation

    def evaluate(self,
                 params: ModelParams,
                 adapters: Optional[AdapterParams],
                 utts: Sequence[Utterance],
                 split: Split) -> Evaluation:
        """Decode every utterance and score the top hypothesis against its reference."""
        beam: Final[int] = self.cfg.eval.beam_size
        ctx: Final[DecodeContext] = self.ctx

        def work(u: Utterance) -> BeamSet:
            x = ctx.encode(u.inputs)
            return beam_search(params, x, ctx.prompt, beam, ctx.budget(x), adapters, u.uid)

        pool: WorkerPool[Utterance, BeamSet] = WorkerPool(fn=work,
                                                          wcnt=self.cfg.workers,
                                                          name="evaluate")
        beams = pool.map(utts)
        pairs: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        per_utt: list[float] = []
        kept: list[BeamSet] = []
        for u, b in zip(utts, beams):
            ref = self.vocab.encode(u.reference)
            hyp: tuple[int, ...] = () if b is None or len(b) == 0 else b.best.tokens
            pairs.append((hyp, ref))
            per_utt.append(token_error_rate(hyp, ref))
            if b is not None:
                kept.append(b)
        err = corpus_error_rate(pairs)
        self.log.info("Error rate on %s: %.4f over %d utterances", split.value, err, len(utts))
        return Evaluation(split=split, error_rate=err, beams=kept, per_utterance=per_utt)

    # train-base

    def cmd_train_base(self, resume: Optional[Union[str, Path]] = None) -> BaseReport:
        """Train the base model on the source domain, optionally resuming a checkpoint."""
        base: Final = self.cfg.base
        ckpt_path = self.checkpoint_path("base")
        start: int = 1
        if resume is not None:
            ck = load_checkpoint(resume)
            params = ck.params
            state = AdamState.from_arrays(ck.state)
            start = int(ck.meta.get("epoch", 0)) + 1
            self.log.info("Resuming base training after epoch %d", start - 1)
        else:
            params = init_params(self.cfg.model, self.cfg.seed)
            state = AdamState()
        learner = Learner(params=params,
                          optimizer=Adam(learning_rate=base.learning_rate, state=state))

        def save(epoch: int, lrn: Learner) -> None:
            save_checkpoint(ckpt_path, Checkpoint(params=lrn.params,
                                                  state=lrn.optimizer.state.to_arrays(),
                                                  meta={"epoch": epoch, "method": "base",
                                                        "seed": self.cfg.seed}))

        if start == 1:
            save(0, learner)
        corpus = self.load_corpus(Split.SourceTrain).labeled()
        stats = train_supervised(learner, corpus, self.ctx,
                                 epochs=max(0, base.epochs - start + 1),
                                 batch_size=base.batch_size,
                                 seed=self.cfg.seed,
                                 tag="base",
                                 start_epoch=start,
                                 trace=self._trace_writer(),
                                 on_epoch=save)

        src = self.evaluate(learner.params, None,
                            self.load_corpus(Split.SourceTest).labeled(), Split.SourceTest)
        tgt = self.evaluate(learner.params, None,
                            self.load_corpus(Split.TargetTest).labeled(), Split.TargetTest)
        if src.error_rate > base.max_source_error:
            self.log.warning("Source error %.4f is above the target of %.4f",
                             src.error_rate, base.max_source_error)
        if tgt.error_rate < base.min_gap * src.error_rate:
            self.log.warning("Target error %.4f is less than %.1f x the source error %.4f",
                             tgt.error_rate, base.min_gap, src.error_rate)
        return BaseReport(checkpoint=ckpt_path,
                          source_error=src.error_rate,
                          target_error=tgt.error_rate,
                          final_loss=stats[-1].mean_loss if stats else None)

    # adapt

    def _trace_writer(self) -> TraceFn:
        tpath = self.out / "trace.jsonl"
        tpath.parent.mkdir(parents=True, exist_ok=True)

        def write(rec: dict[str, object]) -> None:
            with open(tpath, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")

        return write

    def run_method(self,
                   method: Method,
                   params: ModelParams,
                   corpus: DomainCorpus) -> AdaptResult:
        """Dispatch to one adaptation method. Only sft sees the references."""
        tcfg = self.train_config(method)
        trace = self._trace_writer()

        def save(epoch: int, lrn: Learner) -> None:
            save_checkpoint(self.checkpoint_path(f"{method.value}-epoch{epoch}"),
                            Checkpoint(params=lrn.params, adapters=lrn.adapters,
                                       meta={"epoch": epoch, "method": method.value}))

        match method:
            case Method.ZeroShot:
                return AdaptResult(method=method, params=params)
            case Method.SISDA:
                return adapt_si_sda(params, corpus.unlabeled(), self.ctx, tcfg, trace, save)
            case Method.DPO:
                return baseline_dpo(params, corpus.unlabeled(), self.ctx, tcfg,
                                    self.cfg.workers, trace, save)
            case Method.SFT:
                return baseline_sft(params, corpus.labeled(), self.ctx, tcfg, trace, save)
        return baseline_pseudo(params, corpus.unlabeled(), self.ctx, tcfg,
                               self.cfg.workers, trace, save)

    def _anchor(self, split: str) -> Optional[float]:
        mpath = self.cfg.paths.metrics
        if not mpath.exists():
            return None
        anchors = [r.error_rate for r in read_metrics(mpath)
                   if r.method == Method.ZeroShot.value and r.split == split
                   and r.seed == self.cfg.seed]
        return anchors[-1] if anchors else None

    def load_model(self, checkpoint: Optional[Union[str, Path]] = None) -> ModelParams:
        """Load a checkpoint, the base model by default, with its adapters merged."""
        ck = load_checkpoint(checkpoint if checkpoint is not None
                             else self.checkpoint_path("base"))
        if ck.adapters is None:
            return ck.params
        self.log.debug("Merging %d adapter tensors into the model",
                       len(ck.adapters.tensors))
        return apply_adapter(ck.params, ck.adapters)

    def cmd_adapt(self,
                  method: Method,
                  checkpoint: Optional[Union[str, Path]] = None) -> list[MetricsRecord]:
        """Adapt the base model with method, evaluate it and append its metrics."""
        t0 = time.time()
        params = self.load_model(checkpoint)
        corpus = self.load_corpus(Split.TargetAdapt).head(self.cfg.train.adapt_limit)
        self.log.info("Adapting with %s on %d utterances", method.value, len(corpus))
        result = self.run_method(method, params, corpus)
        self.log.info("%s adapted in %.1f seconds", method.value, time.time() - t0)
        if method != Method.ZeroShot:
            save_checkpoint(self.checkpoint_path(method.value),
                            Checkpoint(params=result.params, adapters=result.adapters,
                                       meta={"method": method.value, "seed": self.cfg.seed}))

        records: list[MetricsRecord] = []
        for split in (Split.TargetTest, Split.SourceTest):
            ev = self.evaluate(result.params, result.adapters,
                               self.load_corpus(split).labeled(), split)
            if split == Split.TargetTest:
                write_nbest(self.out / f"nbest-{method.value}.jsonl", ev.beams, self.vocab)
            anchor = None if method == Method.ZeroShot else self._anchor(split.value)
            err = None
            if anchor is not None and anchor > 0:
                err = error_rate_reduction(anchor, ev.error_rate)
            records.append(MetricsRecord(method=method.value,
                                         split=split.value,
                                         error_rate=ev.error_rate,
                                         err_reduction=err,
                                         mean_q=result.mean_q,
                                         seed=self.cfg.seed))

        self.cfg.paths.metrics.parent.mkdir(parents=True, exist_ok=True)
        with open(self.cfg.paths.metrics, "a", encoding="utf-8") as fh:
            for r in records:
                fh.write(r.to_json() + "\n")
        return records

    # analyze

    def _analyze_one(self, params: ModelParams, u: Utterance) -> Optional[AnalysisRow]:
        x = self.ctx.encode(u.inputs)
        beams = beam_search(params, x, self.ctx.prompt, self.cfg.eval.beam_size,
                            self.ctx.budget(x), uid=u.uid)
        hyp = beams.best
        if hyp.length == 0:
            return None
        ref = self.vocab.encode(u.reference)
        profile = hypothesis_profile(params, x, hyp, self.ctx.prompt, self.cfg.train.saliency_layer)
        summary = reliance_summary(profile, classify_tokens(hyp.tokens, ref))
        norm = summary.normalized()
        q = float(np.mean(profile.reliance[:hyp.length]))
        return AnalysisRow(uid=u.uid,
                           length=hyp.length,
                           n_correct=summary.n_correct,
                           n_error=summary.n_error,
                           mean_correct=summary.mean_correct,
                           mean_error=summary.mean_error,
                           norm_correct=None if norm is None else norm[0],
                           norm_error=None if norm is None else norm[1],
                           q=q,
                           ter=token_error_rate(hyp.tokens, ref),
                           profile=profile)

    def cmd_analyze(self, checkpoint: Optional[Union[str, Path]] = None) -> AnalysisReport:
        """Compute the reliance of correct and erroneous tokens on a labeled split."""
        params = self.load_model(checkpoint)
        split = Split(self.cfg.eval.analyze_split)
        corpus = self.load_corpus(split).head(self.cfg.eval.analyze_limit)

        pool: WorkerPool[Utterance, Optional[AnalysisRow]] = WorkerPool(
            fn=lambda u: self._analyze_one(params, u),
            wcnt=self.cfg.workers,
            name="analyze")
        rows = [r for r in pool.map(corpus.labeled()) if r is not None]

        both = [r for r in rows if r.mean_correct is not None and r.mean_error is not None]
        mc = float(np.mean([r.mean_correct for r in both])) if both else None
        me = float(np.mean([r.mean_error for r in both])) if both else None
        share = me / (mc + me) if mc is not None and me is not None and mc + me > 0 else None
        rho, pvalue = rank_correlation([r.q for r in rows], [r.ter for r in rows])

        csv_path = self.out / f"analysis-{split.value}.csv"
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(analysis_columns)
            for r in rows:
                wr.writerow([_fmt(getattr(r, c)) for c in analysis_columns])

        write_dump(self.out / "saliency.jsonl",
                   (dump_record(r.uid, self.cfg.train.saliency_layer,
                                QualityScore(q=r.q, length=r.length, profile=r.profile))
                    for r in rows))
        summary = {
            "split": split.value,
            "utterances": len(rows),
            "with_both_sets": len(both),
            "mean_correct": mc,
            "mean_error": me,
            "error_share": share,
            "spearman_rho": None if math.isnan(rho) else rho,
            "spearman_p": None if math.isnan(pvalue) else pvalue,
        }
        with open(self.out / "analysis-summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        self.log.info("Analysis of %s: mean R correct %s, mean R error %s, rho %.3f (p = %.3g)",
                      split.value, mc, me, rho, pvalue)
        return AnalysisReport(rows=rows, mean_correct=mc, mean_error=me, error_share=share,
                              rho=rho, pvalue=pvalue, csv_path=csv_path)

    def config_table(self) -> dict[str, Any]:
        """Return the configuration as a plain table."""
        return to_table(self.cfg)


def cmd_report(out_dir: Union[str, Path]) -> tuple[Path, Path]:
    """Tabulate metrics.jsonl of out_dir into report.txt and report.csv."""
    out = Path(out_dir)
    if not out.is_dir():
        raise ExperimentError(f"Output directory {out} does not exist")
    mpath = out / "metrics.jsonl"
    if not mpath.exists():
        raise ExperimentError(f"{mpath} does not exist")

    latest: dict[tuple[str, str], MetricsRecord] = {}
    for r in read_metrics(mpath):
        latest[(r.method, r.split)] = r
    order = {m.value: i for i, m in enumerate(Method)}
    rows = sorted(latest.values(), key=lambda r: (r.split, order.get(r.method, len(order))))

    for r in rows:
        anchor = latest.get((Method.ZeroShot.value, r.split))
        if r.method != Method.ZeroShot.value and anchor is not None and anchor.error_rate > 0:
            r.err_reduction = error_rate_reduction(anchor.error_rate, r.error_rate)
        elif r.method == Method.ZeroShot.value or anchor is None:
            r.err_reduction = None

    csv_path = out / "report.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(report_columns)
        for r in rows:
            wr.writerow([_fmt(getattr(r, c)) for c in report_columns])

    txt_path = out / "report.txt"
    head = f"{'method':<12} {'split':<12} {'error':>8} {'WERR':>8} {'mean Q':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        werr = "" if r.err_reduction is None else f"{100 * r.err_reduction:.1f}%"
        mq = "" if r.mean_q is None else f"{r.mean_q:.4f}"
        lines.append(f"{r.method:<12} {r.split:<12} {100 * r.error_rate:>7.2f}% "
                     f"{werr:>8} {mq:>8}")
    txt_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return txt_path, csv_path


# Local Variables: #
# python-indent: 4 #
# End: #
