#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Time-stamp: <2026-10-19 13:41:55 krylon>
#
# /data/code/python/selfadapt/config.py
# created on 19. 10. 2026
# (c) 2026 Benjamin Walkenhorst
#
# This file is part of the SelfAdapt domain adaptation toolkit. It is distributed under the
# terms of the GNU General Public License 3. See the file LICENSE for details
# or find a copy online at https://www.gnu.org/licenses/gpl-3.0

"""
selfadapt.config

(c) 2026 Benjamin Walkenhorst

Experiment configuration. A TOML file fills the sections below, environment
variables named SELFADAPT_<SECTION>__<KEY> override single values, and the
command line overrides those.
"""

import dataclasses
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Final, Mapping, Optional, Union

from selfadapt.common import SelfAdaptError

env_prefix: Final[str] = "SELFADAPT_"


class ConfigError(SelfAdaptError):
    """The configuration is invalid."""


class DomainKind(Enum):
    """DomainKind is the type of corruption a domain applies to its inputs."""

    Clean = "clean"
    Noise = "noise"
    Accent = "accent"


class Method(Enum):
    """Method names an adaptation procedure."""

    ZeroShot = "zero-shot"
    SelfTrain = "self-train"
    Filtering = "filtering"
    Conf = "conf"
    ReAtten = "re-atten"
    MinQ = "min-q"
    DPO = "dpo"
    SISDA = "si-sda"
    SFT = "sft"


@dataclass(kw_only=True, slots=True)
class ModelConfig:
    """ModelConfig describes the toy transformer."""

    dim: int = 32
    heads: int = 2
    layers: int = 2
    maxlen: int = 96
    ff_mult: int = 4
    activation: str = "gelu"
    vocab_size: int = 0

    def validate(self, require_vocab: bool = True) -> None:
        """Raise ConfigError unless the configuration is usable.

        The vocabulary size follows from the task, so it may still be 0 while
        the configuration is loaded.
        """
        if self.dim < 1 or self.heads < 1 or self.layers < 1 or self.maxlen < 1:
            raise ConfigError(f"Model sizes must be positive: {self}")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.activation not in ("gelu", "relu"):
            raise ConfigError(f"Unknown activation {self.activation}")
        if require_vocab and self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")

    @property
    def ff_dim(self) -> int:
        """Width of the feed-forward hidden layer."""
        return self.dim * self.ff_mult


@dataclass(kw_only=True, slots=True)
class TaskConfig:
    """TaskConfig describes the synthetic transduction task."""

    alphabet: int = 26
    shift: int = 3
    min_len: int = 5
    max_len: int = 20
    frames: int = 3
    tags: tuple[str, ...] = ("<transcribe>", )

    def validate(self) -> None:
        """Raise ConfigError unless the task is usable."""
        if self.alphabet < 2:
            raise ConfigError("The alphabet needs at least two symbols")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError(f"Invalid length range [{self.min_len}, {self.max_len}]")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")

    def context_len(self, budget: int = 0) -> int:
        """Return the longest context a task input can produce.

        That is <bos>, the tags, the frames of the longest input, <sep> and a
        decoding budget of budget steps (max_len + 2 when budget is 0).
        """
        steps: Final[int] = budget if budget > 0 else self.max_len + 2
        return 1 + len(self.tags) + self.max_len * self.frames + 1 + steps


@dataclass(kw_only=True, slots=True)
class DomainSpec:
    """DomainSpec describes how a domain corrupts clean inputs."""

    name: str = "clean"
    kind: DomainKind = DomainKind.Clean
    p: float = 0.0
    swap_pairs: list[tuple[str, str]] = field(default_factory=list)
    radius: int = 2
    include_self: bool = False
    seed: int = 0

    def validate(self) -> None:
        """Raise ConfigError unless the spec is consistent."""
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"Domain {self.name}: p must be within [0, 1]")
        if (self.p == 0.0) != (self.kind == DomainKind.Clean) and self.kind != DomainKind.Accent:
            raise ConfigError(f"Domain {self.name}: p = 0 iff the domain is clean")
        if self.kind == DomainKind.Accent and self.p != 0.0:
            raise ConfigError(f"Domain {self.name}: accent domains do not use p")
        if (len(self.swap_pairs) > 0) != (self.kind == DomainKind.Accent):
            raise ConfigError(f"Domain {self.name}: swap pairs iff the domain is accent")
        if self.radius < 0 or (self.radius == 0 and not self.include_self):
            raise ConfigError(f"Domain {self.name}: empty neighbor set")


@dataclass(kw_only=True, slots=True)
class AdapterConfig:
    """AdapterConfig enables low-rank adapters on the attention projections."""

    rank: int = 4
    alpha: float = 8.0
    targets: tuple[str, ...] = ("wq", "wk", "wv", "wo")

    @property
    def scaling(self) -> float:
        """The factor applied to the low-rank delta."""
        return self.alpha / self.rank


@dataclass(kw_only=True, slots=True)
class TrainConfig:
    """TrainConfig controls adaptation."""

    learning_rate: float = 1e-3
    epochs: int = 2
    beam_size: int = 10
    keep: int = 5
    dedupe: bool = True
    max_len: int = 0
    saliency_layer: Union[int, str] = -1
    tau: float = 1.0
    adapter: Optional[AdapterConfig] = None
    seed: int = 0
    method: Method = Method.SISDA
    dpo_beta: float = 0.1
    filter_ratio: float = 0.2
    adapt_limit: int = 0
    batch_size: int = 1

    def validate(self) -> None:
        """Raise ConfigError unless the settings are usable."""
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.beam_size < 1 or self.keep < 1:
            raise ConfigError("beam_size and keep must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must be within [0, 1]")
        if isinstance(self.saliency_layer, str) and self.saliency_layer != "mean":
            raise ConfigError(f"saliency_layer must be an integer or 'mean', "
                              f"not {self.saliency_layer}")
        if not 0.0 <= self.filter_ratio < 1.0:
            raise ConfigError("filter_ratio must be within [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.adapter is not None and self.adapter.rank < 1:
            raise ConfigError("Adapter rank must be >= 1")


@dataclass(kw_only=True, slots=True)
class BaseConfig:
    """BaseConfig controls supervised training on the source domain."""

    epochs: int = 30
    learning_rate: float = 3e-3
    batch_size: int = 8
    max_source_error: float = 0.02
    min_gap: float = 3.0

    def validate(self) -> None:
        """Raise ConfigError unless the settings are usable."""
        if self.epochs < 0:
            raise ConfigError("Base epochs must be >= 0")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("Base learning_rate and batch_size must be positive")


@dataclass(kw_only=True, slots=True)
class EvalConfig:
    """EvalConfig controls decoding for evaluation and analysis."""

    beam_size: int = 10
    analyze_split: str = "target-test"
    analyze_limit: int = 0


@dataclass(kw_only=True, slots=True)
class SplitConfig:
    """SplitConfig holds the number of utterances per split."""

    source_train: int = 2000
    target_adapt: int = 500
    target_test: int = 300
    source_test: int = 300

    def validate(self) -> None:
        """Raise ConfigError unless every count is positive."""
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"Split count {f.name} must be >= 1")

    def count(self, split: str) -> int:
        """Return the count for a split name like "source-train"."""
        return getattr(self, split.replace("-", "_"))


@dataclass(kw_only=True, slots=True)
class PathConfig:
    """PathConfig holds the locations of experiment artifacts."""

    out: str = "runs/default"

    @property
    def corpus(self) -> Path:
        """Directory of the corpus files."""
        return Path(self.out) / "corpus"

    @property
    def checkpoints(self) -> Path:
        """Directory of the model checkpoints."""
        return Path(self.out) / "checkpoints"

    @property
    def metrics(self) -> Path:
        """The metrics file, one JSON record per line."""
        return Path(self.out) / "metrics.jsonl"


def default_domains() -> list[DomainSpec]:
    """Return the default source and target domains."""
    return [DomainSpec(name="clean", kind=DomainKind.Clean),
            DomainSpec(name="noise", kind=DomainKind.Noise, p=0.15)]


@dataclass(kw_only=True, slots=True)
class ExperimentConfig:
    """ExperimentConfig bundles every section of the configuration."""

    seed: int = 1234
    workers: int = 1
    paths: PathConfig = field(default_factory=PathConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    domains: list[DomainSpec] = field(default_factory=default_domains)
    splits: SplitConfig = field(default_factory=SplitConfig)
    base: BaseConfig = field(default_factory=BaseConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        """Validate every section."""
        self.model.validate(require_vocab=False)
        self.task.validate()
        longest = self.task.context_len(self.train.max_len)
        if longest > self.model.maxlen:
            raise ConfigError(f"Contexts of up to {longest} tokens do not fit "
                              f"maxlen {self.model.maxlen}")
        self.splits.validate()
        self.base.validate()
        self.train.validate()
        if len(self.domains) != 2:
            raise ConfigError("Exactly two domains are expected: source first, target second")
        for d in self.domains:
            d.validate()
        if self.domains[0].kind != DomainKind.Clean:
            raise ConfigError("The source domain must be clean")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def source(self) -> DomainSpec:
        """The source domain."""
        return self.domains[0]

    @property
    def target(self) -> DomainSpec:
        """The target domain."""
        return self.domains[1]


def _coerce(ftype: Any, value: Any, where: str) -> Any:
    """Convert a TOML value to the declared field type."""
    match ftype:
        case type() if issubclass(ftype, Enum):
            try:
                return ftype(value)
            except ValueError as err:
                raise ConfigError(f"{where}: {err}") from err
        case type() if dataclasses.is_dataclass(ftype):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}: expected a table")
            return _build(ftype, value, where)
    return value


def _build(cls: Any, table: Mapping[str, Any], where: str) -> Any:
    """Create a config section from a TOML table."""
    known: Final[dict[str, dataclasses.Field]] = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key}")
        kwargs[key] = _convert(cls, key, value, f"{where}.{key}")
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigError(f"{where}: {err}") from err


def _convert(cls: Any, key: str, value: Any, where: str) -> Any:
    match (cls.__name__, key):
        case ("ExperimentConfig", "domains"):
            return [_build(DomainSpec, d, f"{where}[{i}]") for i, d in enumerate(value)]
        case ("DomainSpec", "kind"):
            return _coerce(DomainKind, value, where)
        case ("DomainSpec", "swap_pairs"):
            return [tuple(p) for p in value]
        case ("TrainConfig", "method"):
            return _coerce(Method, value, where)
        case ("TrainConfig", "adapter"):
            return None if value in (False, None) else _build(AdapterConfig, value, where)
        case (_, "tags" | "targets"):
            return tuple(value)
        case ("ExperimentConfig", section) if section in _sections:
            return _build(_sections[section], value, where)
    return value


_sections: Final[dict[str, Any]] = {
    "paths": PathConfig,
    "model": ModelConfig,
    "task": TaskConfig,
    "splits": SplitConfig,
    "base": BaseConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


def _parse_env_value(raw: str) -> Any:
    """Interpret an environment value as a TOML value, falling back to a string."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict[str, Any]:
    """Collect SELFADAPT_<SECTION>__<KEY> variables into a nested table."""
    env = os.environ if environ is None else environ
    table: dict[str, Any] = {}
    for name, raw in env.items():
        if not name.startswith(env_prefix) or name == f"{env_prefix}SLOW":
            continue
        parts = name[len(env_prefix):].lower().split("__")
        node = table
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_env_value(raw)
    return table


def _merge(base: dict[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = _merge(dict(out[key]), value)
        else:
            out[key] = value
    return out


def load(path: Optional[Union[str, Path]] = None,
         environ: Optional[Mapping[str, str]] = None,
         overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Load and validate the configuration.

    Defaults < TOML file < environment < overrides (from the command line).
    """
    table: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                table = tomllib.load(fh)
        except OSError as err:
            raise ConfigError(f"Cannot read config file {path}: {err}") from err
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"Cannot parse config file {path}: {err}") from err
    table = _merge(table, env_overrides(environ))
    if overrides is not None:
        table = _merge(table, overrides)
    cfg: ExperimentConfig = _build(ExperimentConfig, table, "config")
    cfg.validate()
    return cfg


def to_table(obj: Any) -> Any:
    """Return a plain representation of a config object, suitable for JSON."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_table(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_table(x) for x in obj]
    return obj


# Local Variables: #
# python-indent: 4 #
# End: #
