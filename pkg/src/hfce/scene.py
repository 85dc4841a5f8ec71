"""Random hybrid-field scenes, channel synthesis and pilot observations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayConfig, steering

DEFAULT_BOUNDARY_M = 200.0


@dataclass(frozen=True)
class PathComponent:
    angle_rad: float
    distance_m: float  # math.inf marks a plane-wave path
    gain: complex

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"path distance must be positive or inf, got {self.distance_m}")

    @property
    def is_far_field(self) -> bool:
        return math.isinf(self.distance_m)


@dataclass(frozen=True)
class Scene:
    paths: tuple[PathComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def k_far(self) -> int:
        return sum(p.is_far_field for p in self.paths)

    @property
    def k_near(self) -> int:
        return len(self.paths) - self.k_far

    def __len__(self):
        return len(self.paths)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["angle_deg", "distance_m", "gain_re", "gain_im"])
            for p in self.paths:
                dist = "inf" if p.is_far_field else repr(float(p.distance_m))
                w.writerow([repr(math.degrees(p.angle_rad)), dist,
                            repr(float(p.gain.real)), repr(float(p.gain.imag))])

    @classmethod
    def from_csv(cls, path) -> "Scene":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls(tuple(
            PathComponent(math.radians(float(r["angle_deg"])), float(r["distance_m"]),
                          complex(float(r["gain_re"]), float(r["gain_im"])))
            for r in rows))


@dataclass(frozen=True)
class PilotObservation:
    y: np.ndarray = field(repr=False)
    combiner: np.ndarray = field(repr=False)
    noise_var: float
    pilot_symbol: complex = 1.0
    q_slots: int = 1
    n_rf: int = 1

    def __post_init__(self):
        if self.y.shape != (self.q_slots * self.n_rf,):
            raise ValueError(f"y has shape {self.y.shape}, expected ({self.q_slots * self.n_rf},)")
        if self.combiner.shape[0] != self.y.shape[0]:
            raise ValueError("combiner rows must match len(y)")


def _gains(rng, k_paths):
    # CN(0, 1/K): real and imaginary parts each N(0, 1/(2K))
    scale = math.sqrt(1 / (2 * k_paths))
    return scale * (rng.standard_normal(k_paths) + 1j * rng.standard_normal(k_paths))


def sample_scene(rng: np.random.Generator, k_paths: int,
                 angle_range=(-math.pi / 3, math.pi / 3), dist_range=(40.0, 400.0),
                 boundary_m: float = DEFAULT_BOUNDARY_M) -> Scene:
    """Draw ``k_paths`` scatterers uniformly in angle and distance.

    Paths beyond ``boundary_m`` are tagged far-field (distance ``inf``).
    Gains are ``CN(0, 1/k_paths)`` so that ``E||h||^2`` is close to 1.
    """
    if k_paths < 1:
        raise ValueError(f"k_paths must be >= 1, got {k_paths}")
    a_lo, a_hi = angle_range
    r_lo, r_hi = dist_range
    if not a_lo < a_hi or not 0 < r_lo < r_hi:
        raise ValueError(f"empty or invalid range: angles {angle_range}, distances {dist_range}")
    angles = rng.uniform(a_lo, a_hi, k_paths)
    dists = rng.uniform(r_lo, r_hi, k_paths)
    gains = _gains(rng, k_paths)
    paths = tuple(
        PathComponent(float(a), math.inf if r > boundary_m else float(r), complex(g))
        for a, r, g in zip(angles, dists, gains))
    return Scene(paths)


def sample_on_grid_scene(rng: np.random.Generator, dictionary, k_paths: int,
                         k_far: int | None = None) -> tuple[Scene, np.ndarray]:
    """Scene whose paths sit exactly on distinct dictionary atoms.

    Returns the scene and the generating column indices. With ``k_far`` given,
    that many paths are drawn from the far-field block and the rest from the
    polar rings. Atoms repeated by ring flooring are drawn at most once, from
    their first occurrence.
    """
    seen = {}
    for i, p in enumerate(dictionary.params):
        seen.setdefault(p, i)
    distinct = np.array(sorted(seen.values()))
    far_idx = distinct[dictionary.far_mask[distinct]]
    near_idx = distinct[~dictionary.far_mask[distinct]]
    if k_far is None:
        cols = rng.choice(distinct, size=k_paths, replace=False)
    else:
        cols = np.concatenate([rng.choice(far_idx, size=k_far, replace=False),
                               rng.choice(near_idx, size=k_paths - k_far, replace=False)])
    gains = _gains(rng, k_paths)
    paths = tuple(PathComponent(dictionary.params[c].angle_rad, dictionary.params[c].distance_m,
                                complex(g)) for c, g in zip(cols, gains))
    return Scene(paths), cols


def synthesize_channel(cfg: ArrayConfig, scene: Scene) -> np.ndarray:
    h = np.zeros(cfg.n_elements, dtype=complex)
    for p in scene.paths:
        h += p.gain * steering(cfg, p.angle_rad, p.distance_m).entries
    return h


def generate_combiner(rng: np.random.Generator, cfg: ArrayConfig, q_slots: int, n_rf: int) -> np.ndarray:
    """Stacked one-bit combiner ``W`` of shape ``(Q*N_RF, N)`` with entries ``+-1/sqrt(N)``."""
    if q_slots < 1 or n_rf < 1:
        raise ValueError(f"q_slots and n_rf must be >= 1, got {q_slots}, {n_rf}")
    signs = rng.integers(0, 2, size=(q_slots * n_rf, cfg.n_elements)) * 2 - 1
    return signs / math.sqrt(cfg.n_elements) + 0j


def observe_pilots(rng: np.random.Generator, h: np.ndarray, combiner: np.ndarray, noise_var: float,
                   pilot_symbol: complex = 1.0, n_rf: int | None = None) -> PilotObservation:
    """``y = W h x + W n`` with ``n ~ CN(0, noise_var I)`` drawn per pilot slot.

    Noise is drawn as one standard ``CN(0, I)`` block per slot and then scaled,
    so for a fixed ``rng`` state the realisation is the same across SNRs.
    """
    rows, n = combiner.shape
    if h.shape != (n,):
        raise ValueError(f"channel has shape {h.shape}, combiner expects ({n},)")
    if noise_var < 0:
        raise ValueError(f"noise_var must be non-negative, got {noise_var}")
    n_rf = rows if n_rf is None else n_rf
    if rows % n_rf:
        raise ValueError(f"combiner rows {rows} not a multiple of n_rf={n_rf}")
    q = rows // n_rf
    y = combiner @ h * pilot_symbol
    # one noise vector per slot, stacked: each slot's W_q sees its own n_q
    noise = (rng.standard_normal((q, n)) + 1j * rng.standard_normal((q, n))) * math.sqrt(noise_var / 2)
    W = combiner.reshape(q, n_rf, n)
    y = y + np.einsum("qrn,qn->qr", W, noise).reshape(rows)
    return PilotObservation(y, combiner, float(noise_var), pilot_symbol, q, n_rf)


def snr_to_noise_var(snr_db: float, signal_power: float = 1.0) -> float:
    """Noise variance giving ``signal_power / sigma^2`` equal to ``snr_db``.

    With the default ``signal_power=1`` this is the SNR against the total
    channel energy ``E||h||^2 = 1``. Pass ``1/N`` for a per-antenna SNR.
    """
    return signal_power * 10.0 ** (-snr_db / 10.0)
