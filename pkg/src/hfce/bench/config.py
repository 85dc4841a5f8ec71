"""Experiment configuration and its flat ``key = value`` file format.

Blank lines and ``#`` comments are ignored. List values are comma
separated. Unknown keys are rejected so that a result file can always be
traced back to exactly the settings that produced it.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from ..geometry import ArrayConfig

ESTIMATORS = ("pd_omp", "hf_npd_omp", "hf_omp", "p_omp", "a_omp", "mmse")
DEFAULT_ALPHAS = (0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_elements: int = 200
    wavelength_m: float = 0.01
    spacing_m: float = 0.005
    k_paths: int = 5
    angle_min_deg: float = -60.0
    angle_max_deg: float = 60.0
    dist_min_m: float = 40.0
    dist_max_m: float = 400.0
    boundary_m: float = 200.0
    n_rf: int = 10
    q_slots: tuple[int, ...] = (10,)
    snr_db: tuple[float, ...] = (10.0,)
    snr_reference: str = "per_antenna"
    s_rings: int = 4
    beta_control: float = 1.6
    r_min_m: float = 40.0
    estimators: tuple[str, ...] = ESTIMATORS
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    alpha_mode: str = "best"
    max_support: int = 0  # 0: number of measurements
    hf_far_first: bool = True
    mmse_cov_samples: int = 2000
    trials: int = 200
    master_seed: int = 1
    workers: int = 1

    def __post_init__(self):
        try:
            self.array()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.k_paths < 1:
            raise ConfigError("k_paths must be >= 1")
        if self.n_rf < 1 or not self.q_slots or min(self.q_slots) < 1:
            raise ConfigError("n_rf and every q_slots entry must be >= 1")
        if not self.snr_db:
            raise ConfigError("snr_db must list at least one value")
        if not self.estimators:
            raise ConfigError("estimators must list at least one estimator")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators {sorted(bad)}; choose from {ESTIMATORS}")
        if "pd_omp" in self.estimators and not self.alphas:
            raise ConfigError("alphas must be non-empty when pd_omp is enabled")
        if any(not 0 < a <= 1 for a in self.alphas):
            raise ConfigError("every alpha must lie in (0, 1]")
        if self.alpha_mode not in ("best", "each"):
            raise ConfigError("alpha_mode must be 'best' or 'each'")
        if self.snr_reference not in ("per_antenna", "total"):
            raise ConfigError("snr_reference must be 'per_antenna' or 'total'")
        if not -90 < self.angle_min_deg < self.angle_max_deg < 90:
            raise ConfigError("need -90 < angle_min_deg < angle_max_deg < 90")
        if not 0 < self.dist_min_m < self.dist_max_m:
            raise ConfigError("need 0 < dist_min_m < dist_max_m")
        if self.s_rings < 0 or self.beta_control <= 0 or self.r_min_m <= 0:
            raise ConfigError("invalid dictionary settings")
        if self.max_support < 0 or self.mmse_cov_samples < 1 or self.workers < 1:
            raise ConfigError("max_support >= 0, mmse_cov_samples >= 1, workers >= 1 required")

    def array(self) -> ArrayConfig:
        return ArrayConfig(self.n_elements, self.spacing_m, self.wavelength_m)

    @property
    def angle_range(self):
        return math.radians(self.angle_min_deg), math.radians(self.angle_max_deg)

    @property
    def dist_range(self):
        return self.dist_min_m, self.dist_max_m

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(f):
    default = f.default
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, tuple):
        inner = {"q_slots": int, "snr_db": float, "alphas": float, "estimators": str}[f.name]
        return lambda s: tuple(inner(x.strip()) for x in s.split(",") if x.strip())
    return type(default)


def parse_config(text: str) -> ExperimentConfig:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _converter(fields[key])(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
