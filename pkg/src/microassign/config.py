"""Run configuration: one YAML (or JSON) document, validated, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core import ObjectiveWeights
from .feasibility import SimilarityPolicy, WindowPolicy
from .gradient import GradientConfig
from .greedy import GreedyConfig
from .hybrid import RegimePolicy
from .psychometrics import CatConfig
from .synth import CohortSpec, ContentPoolSpec

SEED_ENV = "MICROASSIGN_SEED"


class ConfigError(ValueError):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


@dataclass(frozen=True)
class BudgetConfig:
    time_budget_minutes: float = 45.0
    slate_cap: int | None = None  # None: the repository size

    def __post_init__(self):
        if not self.time_budget_minutes > 0:
            raise ValueError("time_budget_minutes must be positive")
        if self.slate_cap is not None and self.slate_cap < 1:
            raise ValueError("slate_cap must be >= 1")


@dataclass(frozen=True)
class GreedySection:
    fallback_enabled: bool = True
    max_tier: int = 2
    max_iterations: int | None = None


@dataclass(frozen=True)
class GradientSection:
    tau_cov: float = 3.0
    lambda_time: float = 10.0
    lambda_card: float = 10.0
    lambda_diff: float = 1.0
    lambda_pre: float = 10.0
    lambda_div: float = 1.0
    eta_step: float = 0.01
    grad_tol: float = 1e-5
    max_iters: int = 5000
    round_threshold: float = 0.5
    coverage_form: str = "smooth"
    fallback_levels: int = 2
    dedupe: bool = True


@dataclass(frozen=True)
class EvaluationConfig:
    w1: float = 1.0
    w2: float = 1.0
    pools: tuple[int, ...] = (5, 10, 15, 20)


@dataclass(frozen=True)
class PathsConfig:
    content: str | None = None
    learners: str | None = None
    responses: str | None = None
    qmatrix: str | None = None
    item_params: str | None = None
    prereqs: str | None = None
    output_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    solver: str = "greedy"
    regime: RegimePolicy = field(default_factory=RegimePolicy)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    greedy: GreedySection = field(default_factory=GreedySection)
    gradient: GradientSection = field(default_factory=GradientSection)
    similarity: SimilarityPolicy = field(default_factory=SimilarityPolicy)
    cat: CatConfig = field(default_factory=CatConfig)
    window: WindowPolicy = field(default_factory=WindowPolicy)
    budgets: BudgetConfig = field(default_factory=BudgetConfig)
    cohort: CohortSpec = field(default_factory=CohortSpec)
    content: ContentPoolSpec = field(default_factory=ContentPoolSpec)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.solver not in ("greedy", "gd", "hybrid", "auto"):
            raise ValueError("solver must be greedy, gd, hybrid or auto")
        # generators always draw from the run seed
        object.__setattr__(self, "cohort", dataclasses.replace(self.cohort, seed=self.seed))
        object.__setattr__(self, "content", dataclasses.replace(self.content, seed=self.seed))

    def greedy_config(self) -> GreedyConfig:
        return GreedyConfig(weights=self.weights, **dataclasses.asdict(self.greedy))

    def gradient_config(self) -> GradientConfig:
        return GradientConfig(weights=self.weights, similarity=self.similarity,
                              **dataclasses.asdict(self.gradient))

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        """Stable digest of the resolved configuration (paths excluded)."""
        d = self.to_dict()
        d.pop("paths")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.hash(), "seed": self.seed}


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, where) for v in value)
        if len(value) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} values")
        return tuple(_coerce(a, v, where) for a, v in zip(args, value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, str) and value.lower() in ("inf", "infinity"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def _build(cls, data, where: str = ""):
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}" if where else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from None


def config_from_dict(data: dict | None) -> RunConfig:
    data = dict(data or {})
    data.setdefault("seed", default_seed())
    return _build(RunConfig, data)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return config_from_dict({})
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data or {})


def schema(cls=RunConfig) -> dict:
    """Key, type and default for every setting, nested by section."""
    hints = typing.get_type_hints(cls)
    out = {}
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            out[f.name] = schema(tp)
        else:
            default = f.default if f.default is not dataclasses.MISSING else None
            name = tp.__name__ if isinstance(tp, type) else str(tp).replace("typing.", "")
            out[f.name] = {"type": name, "default": _plain(default)}
    return out
