#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 15:02:17 krylon>
#
# /data/code/python/selfadapt/transformer.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.transformer

(c) 2026 Benjamin Walkenhorst

A small decoder-only transformer on top of the grad Tape. The prompt, the
input frames and the output tokens share one causal context, so a single
attention matrix per head covers all three spans.

The output embedding is tied to the input embedding. Position ids restart
in every span and a learned segment embedding tells the spans apart.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Final, Mapping, Optional, Sequence, Union

import numpy as np

from selfadapt import common
from selfadapt.config import AdapterConfig, ModelConfig, to_table
from selfadapt.grad import Node, Tape
from selfadapt.model import (AttentionRecord, ModelError, SequenceLayout,
                             VocabError)

checkpoint_version: Final[int] = 1
projections: Final[tuple[str, ...]] = ("wq", "wk", "wv", "wo")


class LengthError(ModelError):
    """The context is longer than the model's maxlen."""


class EmptySpanError(ModelError):
    """A span that must hold tokens is empty."""


class CheckpointError(ModelError):
    """A checkpoint file cannot be written or read."""


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Return the names and shapes of all parameter tensors, in a fixed order."""
    d: Final[int] = cfg.dim
    f: Final[int] = cfg.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embed": (cfg.vocab_size, d),
        "pos": (cfg.maxlen, d),
        "seg": (3, d),
    }
    for layer in range(cfg.layers):
        p = f"l{layer}"
        shapes[f"{p}.ln1.g"] = (d, )
        shapes[f"{p}.ln1.b"] = (d, )
        for w in projections:
            shapes[f"{p}.{w}"] = (d, d)
        shapes[f"{p}.ln2.g"] = (d, )
        shapes[f"{p}.ln2.b"] = (d, )
        shapes[f"{p}.w1"] = (d, f)
        shapes[f"{p}.b1"] = (f, )
        shapes[f"{p}.w2"] = (f, d)
        shapes[f"{p}.b2"] = (d, )
    shapes["lnf.g"] = (d, )
    shapes["lnf.b"] = (d, )
    return shapes


@dataclass(kw_only=True, slots=True)
class ModelParams:
    """ModelParams holds the named weight tensors of a model."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        expect = param_shapes(self.config)
        if set(expect) != set(self.tensors):
            missing = sorted(set(expect) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expect))
            raise ModelError(f"Parameter names do not match the config: "
                             f"missing {missing}, unexpected {extra}")
        for name, shape in expect.items():
            if self.tensors[name].shape != shape:
                raise ModelError(f"Parameter {name} has shape {self.tensors[name].shape}, "
                                 f"expected {shape}")

    def count(self) -> int:
        """Return the total number of scalar parameters."""
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> 'ModelParams':
        """Return a deep copy."""
        return ModelParams(config=self.config,
                           tensors={k: v.copy() for k, v in self.tensors.items()})

    def is_finite(self) -> bool:
        """Return True if every tensor is finite."""
        return all(np.isfinite(t).all() for t in self.tensors.values())


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Draw fresh parameters, uniform in [-1/sqrt(D), 1/sqrt(D)].

    Layer norm gains start at 1, every bias at 0.
    """
    cfg.validate()
    rng = np.random.default_rng(common.derive_seed(seed, "init"))
    scale: Final[float] = 1.0 / math.sqrt(cfg.dim)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            tensors[name] = np.ones(shape)
        elif name.endswith(".b") or name.endswith(".b1") or name.endswith(".b2"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.uniform(-scale, scale, size=shape)
    return ModelParams(config=cfg, tensors=tensors)


@dataclass(kw_only=True, slots=True)
class AdapterParams:
    """AdapterParams holds low-rank factors for some of the attention projections.

    The factors of parameter W are stored as "<W>.u" (D x r) and "<W>.v" (r x D).
    """

    config: AdapterConfig
    tensors: dict[str, np.ndarray]

    @property
    def targets(self) -> list[str]:
        """The names of the adapted parameters."""
        return sorted({k[:-2] for k in self.tensors})

    def copy(self) -> 'AdapterParams':
        """Return a deep copy."""
        return AdapterParams(config=self.config,
                             tensors={k: v.copy() for k, v in self.tensors.items()})


def init_adapters(cfg: ModelConfig, acfg: AdapterConfig, seed: int) -> AdapterParams:
    """Create adapters for the configured projections of every layer.

    V starts at zero, so the adapted model equals the base model.
    """
    if not 1 <= acfg.rank <= cfg.dim:
        raise ModelError(f"Adapter rank {acfg.rank} must be within [1, {cfg.dim}]")
    unknown = set(acfg.targets) - set(projections)
    if unknown:
        raise ModelError(f"Cannot adapt {sorted(unknown)}, only {projections}")
    rng = np.random.default_rng(common.derive_seed(seed, "adapter"))
    scale: Final[float] = 1.0 / math.sqrt(cfg.dim)
    tensors: dict[str, np.ndarray] = {}
    for layer in range(cfg.layers):
        for w in acfg.targets:
            tensors[f"l{layer}.{w}.u"] = rng.uniform(-scale, scale, size=(cfg.dim, acfg.rank))
            tensors[f"l{layer}.{w}.v"] = np.zeros((acfg.rank, cfg.dim))
    return AdapterParams(config=acfg, tensors=tensors)


def apply_adapter(params: ModelParams, adapters: AdapterParams) -> ModelParams:
    """Return new params where each adapted W is W + scaling * U @ V."""
    out = params.copy()
    s: Final[float] = adapters.config.scaling
    for name in adapters.targets:
        if name not in params.tensors:
            raise ModelError(f"Adapter targets unknown parameter {name}")
        u = adapters.tensors[f"{name}.u"]
        v = adapters.tensors[f"{name}.v"]
        w = params.tensors[name]
        if u.shape[0] != w.shape[0] or v.shape[1] != w.shape[1] or u.shape[1] != v.shape[0]:
            raise ModelError(f"Adapter for {name} has shapes {u.shape} x {v.shape}, "
                             f"weight is {w.shape}")
        out.tensors[name] = w + s * (u @ v)
    return out


@dataclass(kw_only=True, slots=True)
class Bound:
    """Bound is a set of parameters recorded as leaves on one Tape.

    weights maps every parameter name to the node the forward pass uses. With
    adapters, the base weights are constant leaves and the adapted projections
    are computed nodes; only the adapter factors receive gradients then.
    """

    tape: Tape
    config: ModelConfig
    weights: dict[str, Node]
    trainable: list[str] = field(default_factory=list)


def bind_params(tape: Tape,
                params: ModelParams,
                adapters: Optional[AdapterParams] = None,
                trainable: bool = True) -> Bound:
    """Record params (and adapters) as named leaves on the tape.

    A leaf whose name is bound on the tape takes the bound value, which is how
    finite difference checks perturb single tensors.
    """
    base_grad: Final[bool] = trainable and adapters is None
    weights: dict[str, Node] = {}
    for name, value in params.tensors.items():
        v = None if name in tape.bindings else value
        weights[name] = tape.leaf(name, v, requires_grad=base_grad)
    names: list[str] = list(params.tensors) if base_grad else []

    if adapters is not None:
        s: Final[float] = adapters.config.scaling
        for target in adapters.targets:
            leaves: list[Node] = []
            for part in ("u", "v"):
                lname = f"lora.{target}.{part}"
                v = None if lname in tape.bindings else adapters.tensors[f"{target}.{part}"]
                leaves.append(tape.leaf(lname, v, requires_grad=trainable))
                names.append(lname)
            delta = tape.scale(tape.matmul(leaves[0], leaves[1]), s)
            weights[target] = tape.add(weights[target], delta)

    return Bound(tape=tape, config=params.config, weights=weights, trainable=names)


@dataclass(kw_only=True, slots=True)
class Probes:
    """Probes adds named zero-valued leaves to attention matrices.

    The gradient of a probe equals the loss gradient wrt the matrix it is
    added to, and its binding can be perturbed for finite differences.
    """

    attention: dict[tuple[int, int], str] = field(default_factory=dict)


@dataclass(kw_only=True, slots=True)
class ForwardResult:
    """ForwardResult is the outcome of one forward pass."""

    logits: Node
    records: list[AttentionRecord]


def check_input(cfg: ModelConfig, tokens: Sequence[int], layout: SequenceLayout) -> None:
    """Raise unless tokens and layout fit the model."""
    if len(tokens) != layout.total:
        raise ModelError(f"Layout covers {layout.total} positions, got {len(tokens)} tokens")
    if len(tokens) == 0:
        raise EmptySpanError("The context is empty")
    bad = [t for t in tokens if not 0 <= t < cfg.vocab_size]
    if bad:
        raise VocabError(f"Token ids {bad} are outside the vocabulary of {cfg.vocab_size}")
    if len(tokens) > cfg.maxlen:
        raise LengthError(f"A context of {len(tokens)} tokens exceeds maxlen {cfg.maxlen}")


def forward_bound(bound: Bound,
                  tokens: Sequence[int],
                  layout: SequenceLayout,
                  capture: bool = False,
                  probes: Optional[Probes] = None) -> ForwardResult:
    """Run the model on one context, recording on the Bound's tape."""
    cfg: Final[ModelConfig] = bound.config
    check_input(cfg, tokens, layout)
    t: Final[Tape] = bound.tape
    w: Final[dict[str, Node]] = bound.weights
    dh: Final[int] = cfg.dim // cfg.heads
    inv_sqrt: Final[float] = 1.0 / math.sqrt(dh)
    records: list[AttentionRecord] = []

    h = t.add(t.add(t.gather_rows(w["embed"], tokens),
                    t.gather_rows(w["pos"], layout.position_ids())),
              t.gather_rows(w["seg"], layout.segments()))

    for layer in range(cfg.layers):
        p = f"l{layer}"
        a = t.layer_norm(h, w[f"{p}.ln1.g"], w[f"{p}.ln1.b"])
        q = t.matmul(a, w[f"{p}.wq"])
        k = t.matmul(a, w[f"{p}.wk"])
        v = t.matmul(a, w[f"{p}.wv"])
        heads: list[Node] = []
        for head in range(cfg.heads):
            lo, hi = head * dh, (head + 1) * dh
            scores = t.scale(t.matmul(t.slice_cols(q, lo, hi),
                                      t.transpose(t.slice_cols(k, lo, hi))),
                             inv_sqrt)
            att = t.softmax_rows(scores, causal=True, name=f"{p}.h{head}")
            if capture:
                att.retain_grad = True
                records.append(AttentionRecord(layer=layer, head=head, node=att))
            used = att
            if probes is not None and (layer, head) in probes.attention:
                pname = probes.attention[(layer, head)]
                pv = None if pname in t.bindings else np.zeros(att.shape)
                used = t.add(att, t.leaf(pname, pv))
            heads.append(t.matmul(used, t.slice_cols(v, lo, hi)))
        mixed = heads[0] if len(heads) == 1 else t.concat_cols(heads)
        h = t.add(h, t.matmul(mixed, w[f"{p}.wo"]))

        b = t.layer_norm(h, w[f"{p}.ln2.g"], w[f"{p}.ln2.b"])
        inner = t.add_row(t.matmul(b, w[f"{p}.w1"]), w[f"{p}.b1"])
        inner = t.gelu(inner) if cfg.activation == "gelu" else t.relu(inner)
        h = t.add(h, t.add_row(t.matmul(inner, w[f"{p}.w2"]), w[f"{p}.b2"]))

    h = t.layer_norm(h, w["lnf.g"], w["lnf.b"])
    logits = t.matmul(h, t.transpose(w["embed"]))
    return ForwardResult(logits=logits, records=records)


def forward_logits(params: ModelParams,
                   tokens: Sequence[int],
                   layout: SequenceLayout,
                   capture: bool = False) -> tuple[np.ndarray, list[AttentionRecord]]:
    """Compute the logits of every position, and the attention records if capture is set."""
    tape = Tape(grad_enabled=capture)
    res = forward_bound(bind_params(tape, params, trainable=capture), tokens, layout, capture)
    return res.logits.value, res.records


def next_token_logprobs(params: ModelParams,
                        tokens: Sequence[int],
                        layout: SequenceLayout) -> np.ndarray:
    """Return the log-distribution over the token following the context."""
    logits, _ = forward_logits(params, tokens, layout)
    row = logits[-1]
    m = row.max()
    return row - m - math.log(np.exp(row - m).sum())


def output_targets(tokens: Sequence[int], layout: SequenceLayout) -> tuple[list[int], list[int]]:
    """Return the (predicting row, target token) pairs of the output span.

    The token at context position i is predicted by row i - 1.
    """
    if len(layout.output) == 0:
        raise EmptySpanError("The output span is empty")
    rows = [i - 1 for i in layout.output]
    cols = [tokens[i] for i in layout.output]
    return rows, cols


def token_logprobs(bound: Bound,
                   tokens: Sequence[int],
                   layout: SequenceLayout,
                   capture: bool = False,
                   probes: Optional[Probes] = None) -> tuple[Node, list[AttentionRecord]]:
    """Return a vector node of the log-probabilities of the output tokens."""
    rows, cols = output_targets(tokens, layout)
    res = forward_bound(bound, tokens, layout, capture, probes)
    lsm = bound.tape.log_softmax_rows(res.logits)
    return bound.tape.gather_elements(lsm, rows, cols), res.records


def sequence_logprob(params: ModelParams,
                     tokens: Sequence[int],
                     layout: SequenceLayout) -> tuple[float, list[float]]:
    """Score the output span under teacher forcing: (total, per-token)."""
    tape = Tape(grad_enabled=False)
    lp, _ = token_logprobs(bind_params(tape, params, trainable=False), tokens, layout)
    per_token = [float(x) for x in lp.value]
    return float(sum(per_token)), per_token


def nll_loss(bound: Bound,
             tokens: Sequence[int],
             layout: SequenceLayout,
             capture: bool = False,
             weights: Optional[Sequence[float]] = None,
             loss_scale: float = 1.0,
             probes: Optional[Probes] = None) -> tuple[Node, list[AttentionRecord]]:
    """Mean negative log-likelihood of the output span, as a scalar node.

    weights multiplies the per-token terms. loss_scale multiplies the result.
    """
    lp, records = token_logprobs(bound, tokens, layout, capture, probes)
    n: Final[int] = lp.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n, ):
        raise ModelError(f"Got {w.shape[0]} token weights for {n} output tokens")
    return bound.tape.weighted_sum(lp, -loss_scale * w / n), records


# Checkpoints

@dataclass(kw_only=True, slots=True)
class Checkpoint:
    """Checkpoint is the content of one checkpoint file."""

    params: ModelParams
    adapters: Optional[AdapterParams] = None
    state: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(fpath: Union[str, Path], ckpt: Checkpoint) -> None:
    """Write a Checkpoint as a numpy .npz archive."""
    header = {
        "version": checkpoint_version,
        "model": to_table(ckpt.params.config),
        "adapter": to_table(ckpt.adapters.config) if ckpt.adapters is not None else None,
        "meta": ckpt.meta,
    }
    arrays: dict[str, np.ndarray] = {"header": np.array(json.dumps(header, sort_keys=True))}
    for k, v in ckpt.params.tensors.items():
        arrays[f"param/{k}"] = v
    if ckpt.adapters is not None:
        for k, v in ckpt.adapters.tensors.items():
            arrays[f"adapter/{k}"] = v
    for k, v in ckpt.state.items():
        arrays[f"state/{k}"] = v
    try:
        Path(fpath).parent.mkdir(parents=True, exist_ok=True)
        with open(fpath, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as err:
        msg = f"Cannot write checkpoint {fpath}: {err}"
        common.get_logger("transformer").error(msg)
        raise CheckpointError(msg) from err


def load_checkpoint(fpath: Union[str, Path]) -> Checkpoint:
    """Read a Checkpoint written by save_checkpoint."""
    log = common.get_logger("transformer")
    try:
        with np.load(fpath, allow_pickle=False) as data:
            header: dict[str, Any] = json.loads(str(data["header"]))
            arrays: dict[str, np.ndarray] = {k: data[k] for k in data.files if k != "header"}
    except (OSError, KeyError, ValueError) as err:
        msg = f"Cannot read checkpoint {fpath}: {err}"
        log.error(msg)
        raise CheckpointError(msg) from err

    if header.get("version") != checkpoint_version:
        raise CheckpointError(f"Checkpoint {fpath} has version {header.get('version')}, "
                              f"expected {checkpoint_version}")

    def section(prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    mcfg = header["model"]
    params = ModelParams(config=ModelConfig(**mcfg), tensors=section("param/"))
    adapters: Optional[AdapterParams] = None
    if header.get("adapter") is not None:
        acfg = dict(header["adapter"])
        acfg["targets"] = tuple(acfg["targets"])
        adapters = AdapterParams(config=AdapterConfig(**acfg), tensors=section("adapter/"))
    return Checkpoint(params=params,
                      adapters=adapters,
                      state=section("state/"),
                      meta=_as_mapping(header.get("meta")))


def _as_mapping(value: Any) -> dict[str, Any]:
    return dict(value) if isinstance(value, Mapping) else {}


# Local Variables: #
# python-indent: 4 #
# End: #
