"""Experiment configuration documents (YAML) and their dataclass form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ContractError


@dataclass
class GainsConfig:
    Lambda: list = field(default_factory=lambda: [20, 20, 20, 20, 10, 10, 10])
    K_D: list = field(default_factory=lambda: [5, 5, 5, 5, 2, 2, 2])
    R: list = field(default_factory=lambda: [1, 1, 1, 1, 1, 1, 1])
    lambda0: float = 1.5
    k0: float = 0.1
    filter_pole: float = 20.0
    p0: float = 1.0
    adapt_friction: bool = True


@dataclass
class GMMConfig:
    novelty: float = 0.01
    sp_min: float = 0.1
    age_min: int = 200
    warmup_scale: float = 0.1
    reg_frac: float = 1e-3
    warmup_seconds: float = 6.0
    decimation: int = 3


@dataclass
class SensorConfig:
    sigma_q: float = 1e-4
    jerk_var: float = 1e4
    pll_omega: float = 150.0
    bypass: bool = False


@dataclass
class UnmodeledConfig:
    alpha: list | float = 0.0
    beta: list | float = 0.0
    gamma: list | float = 0.0
    kappa: list | float = 0.0


@dataclass
class TrajectoryConfig:
    count: int = 5
    period: float = 6.0
    harmonics: int = 5
    amplitude: list | float = 0.5
    offset: list | float = 0.0
    velocity_cap: float | None = 2.0
    seed: int = 1


@dataclass
class Phase:
    start: float
    end: float
    np_learn: bool
    np_output: bool
    p_learn: bool
    transform: bool


@dataclass
class RatesConfig:
    dt: float = 1e-3
    learn_every: int = 10
    log_every: int = 20
    params_log_every: int = 1000


@dataclass
class RRLSConfig:
    n_features: int = 400
    length_scale: float = 3.0
    reg: float = 1e-3


@dataclass
class SineConfig:
    n_samples: int = 200
    passes: int = 3
    x_min: float = -1.0
    x_max: float = 7.0
    param_change: float = 0.8
    grid_points: int = 1000


@dataclass
class ExperimentConfig:
    chain: str = "lwr7.yaml"
    seed: int = 0
    init_scale: float = 0.5
    delta_max: float | None = None
    torque_limit: list | float | None = None
    gains: GainsConfig = field(default_factory=GainsConfig)
    gmm: GMMConfig = field(default_factory=GMMConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    unmodeled: UnmodeledConfig = field(default_factory=UnmodeledConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    rates: RatesConfig = field(default_factory=RatesConfig)
    rrls: RRLSConfig = field(default_factory=RRLSConfig)
    sine: SineConfig = field(default_factory=SineConfig)
    phases: list = field(default_factory=list)
    base_dir: str = "."

    def chain_path(self) -> Path:
        p = Path(self.chain)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_phases(transform: bool) -> list[Phase]:
    """Four-phase online schedule; without the transform phase 3 equals phase 4."""
    return [
        Phase(0.0, 90.0, np_learn=True, np_output=False, p_learn=False, transform=False),
        Phase(90.0, 180.0, np_learn=True, np_output=True, p_learn=False, transform=False),
        Phase(180.0, 360.0, np_learn=not transform, np_output=True, p_learn=True, transform=transform),
        Phase(360.0, 600.0, np_learn=True, np_output=True, p_learn=True, transform=transform),
    ]


def validate_phases(phases: list[Phase]):
    if not phases:
        raise ContractError("phase schedule is empty")
    if phases[0].start != 0.0:
        raise ContractError("phase schedule must start at 0")
    for a, b in zip(phases, phases[1:]):
        if b.start != a.end:
            raise ContractError("phases must be contiguous and non-overlapping")
    for p in phases:
        if p.end <= p.start:
            raise ContractError("phase end must follow its start")


def _number(v):
    # YAML 1.1 reads exponents without a sign (1.0e4) as strings
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError as exc:
            raise ContractError(f"expected a number, got {v!r}") from exc
    return v


def _coerce(value, annotation: str):
    if value is None:
        return None
    if isinstance(value, list) and "list" in annotation:
        return [_number(v) for v in value]
    if "float" in annotation and not isinstance(value, list):
        return _number(value)
    return value


def _build(cls, data):
    if data is None:
        return cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ContractError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: _coerce(v, str(fields[k].type)) for k, v in data.items()})


def config_from_dict(doc: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    doc = dict(doc or {})
    sections = {
        "gains": GainsConfig, "gmm": GMMConfig, "sensors": SensorConfig,
        "unmodeled": UnmodeledConfig, "trajectory": TrajectoryConfig, "rates": RatesConfig,
        "rrls": RRLSConfig, "sine": SineConfig,
    }
    kwargs = {k: _build(cls, doc.pop(k, None)) for k, cls in sections.items()}
    phases = [Phase(**p) for p in doc.pop("phases", [])]
    if phases:
        validate_phases(phases)
    cfg = _build(ExperimentConfig, {**doc, **kwargs, "phases": phases})
    cfg.base_dir = str(doc.get("base_dir", base_dir))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return config_from_dict(yaml.safe_load(path.read_text()), base_dir=path.parent)


def as_vector(value, n: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size < n:
        raise ContractError(f"expected {n} values, got {arr.size}")
    return arr[:n].copy()
