"""Angular, polar and joint angular-polar transform dictionaries.

Column layout of the joint dictionary is ``[F_f | F_n,1 | ... | F_n,S]``:
the first ``N`` columns are plane-wave atoms on the angular grid, followed by
``S`` rings of ``N`` near-field atoms that reuse the same angles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import ArrayConfig, far_field_steering, near_field_steering, steering

DEFAULT_BETA_CONTROL = 1.6
DEFAULT_R_MIN_M = 40.0


class AtomParams(NamedTuple):
    angle_rad: float
    distance_m: float  # math.inf for a far-field atom

    @property
    def is_far_field(self) -> bool:
        return math.isinf(self.distance_m)


@dataclass(frozen=True)
class JointDictionary:
    columns: np.ndarray = field(repr=False)
    params: tuple[AtomParams, ...] = field(repr=False)
    n_angles: int
    n_rings: int
    has_far_block: bool = True

    def __post_init__(self):
        self.columns.setflags(write=False)
        if self.columns.shape[1] != len(self.params):
            raise ValueError("columns and params disagree in length")

    @property
    def n_atoms(self) -> int:
        return self.columns.shape[1]

    @property
    def angles(self) -> np.ndarray:
        return np.array([p.angle_rad for p in self.params])

    @property
    def distances(self) -> np.ndarray:
        return np.array([p.distance_m for p in self.params])

    @property
    def far_mask(self) -> np.ndarray:
        return np.isinf(self.distances)

    def far_block(self) -> slice:
        """Column range of ``F_f`` (empty when the dictionary has none)."""
        return slice(0, self.n_angles if self.has_far_block else 0)

    def near_block(self) -> slice:
        start = self.n_angles if self.has_far_block else 0
        return slice(start, self.n_atoms)

    def encode(self, ring: int, angle_index: int) -> int:
        """Column index of ``(ring, angle)``; ring 0 is ``F_f``, rings 1..S are polar."""
        if not 0 <= angle_index < self.n_angles:
            raise IndexError(f"angle index {angle_index} out of range")
        first_ring = 0 if self.has_far_block else 1
        if not first_ring <= ring <= self.n_rings:
            raise IndexError(f"ring {ring} out of range")
        return (ring - first_ring) * self.n_angles + angle_index

    def decode(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.n_atoms:
            raise IndexError(f"column {index} out of range")
        ring, angle_index = divmod(int(index), self.n_angles)
        return ring + (0 if self.has_far_block else 1), angle_index

    def atom(self, cfg: ArrayConfig, index: int) -> np.ndarray:
        """Rebuild column ``index`` from its parameters."""
        p = self.params[index]
        return steering(cfg, p.angle_rad, p.distance_m).entries

    def far_part(self) -> "JointDictionary":
        if not self.has_far_block:
            raise ValueError("dictionary has no far-field block")
        b = self.far_block()
        return JointDictionary(self.columns[:, b].copy(), self.params[b], self.n_angles, 0, True)

    def near_part(self) -> "JointDictionary":
        if self.n_rings == 0:
            raise ValueError("dictionary has no polar rings")
        b = self.near_block()
        return JointDictionary(self.columns[:, b].copy(), self.params[b], self.n_angles,
                               self.n_rings, False)

    def to_csv(self, path) -> None:
        """Dump ``index,angle_deg,distance_m`` rows (``inf`` for far-field atoms)."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "angle_deg", "distance_m"])
            for i, p in enumerate(self.params):
                dist = "inf" if p.is_far_field else repr(float(p.distance_m))
                w.writerow([i, repr(math.degrees(p.angle_rad)), dist])


def read_params_csv(path) -> list[AtomParams]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [AtomParams(math.radians(float(r["angle_deg"])), float(r["distance_m"])) for r in rows]


def angular_grid(cfg: ArrayConfig) -> np.ndarray:
    """Angles ``arcsin((2n - 1 - N) / N)`` for ``n = 1..N``, uniform in sine."""
    N = cfg.n_elements
    n = np.arange(1, N + 1)
    return np.arcsin((2 * n - 1 - N) / N)


def ring_distances(cfg: ArrayConfig, s_rings: int, r_min_m: float = DEFAULT_R_MIN_M,
                   beta_control: float = DEFAULT_BETA_CONTROL) -> np.ndarray:
    """Distance grid ``r[s-1, n]`` for rings ``s = 1..S`` over the angular grid.

    ``r_{s,n} = N^2 d^2 cos^2(theta_n) / (2 lambda beta^2 s)``, floored at ``r_min_m``.
    Sampling is uniform in ``1/r`` so the phase curvature step between
    neighbouring rings is constant across angles.
    """
    if int(s_rings) != s_rings or s_rings < 1:
        raise ValueError(f"s_rings must be a positive integer, got {s_rings}")
    if not r_min_m > 0:
        raise ValueError(f"r_min_m must be positive, got {r_min_m}")
    if not beta_control > 0:
        raise ValueError(f"beta_control must be positive, got {beta_control}")
    N, d, lam = cfg.n_elements, cfg.spacing_m, cfg.wavelength_m
    cos2 = np.cos(angular_grid(cfg)) ** 2
    s = np.arange(1, s_rings + 1)[:, None]
    r = (N * d) ** 2 * cos2[None, :] / (2 * lam * beta_control**2 * s)
    return np.maximum(r, r_min_m)


def build_angular(cfg: ArrayConfig) -> JointDictionary:
    thetas = angular_grid(cfg)
    cols = np.column_stack([far_field_steering(cfg, t).entries for t in thetas])
    params = tuple(AtomParams(float(t), math.inf) for t in thetas)
    return JointDictionary(cols, params, cfg.n_elements, 0, True)


def build_polar_rings(cfg: ArrayConfig, s_rings: int, r_min_m: float = DEFAULT_R_MIN_M,
                      beta_control: float = DEFAULT_BETA_CONTROL) -> JointDictionary:
    thetas = angular_grid(cfg)
    dist = ring_distances(cfg, s_rings, r_min_m, beta_control)
    cols, params = [], []
    for s in range(s_rings):
        for t, r in zip(thetas, dist[s]):
            cols.append(near_field_steering(cfg, t, r).entries)
            params.append(AtomParams(float(t), float(r)))
    return JointDictionary(np.column_stack(cols), tuple(params), cfg.n_elements, s_rings, False)


def build_joint(cfg: ArrayConfig, s_rings: int = 4, r_min_m: float = DEFAULT_R_MIN_M,
                beta_control: float = DEFAULT_BETA_CONTROL) -> JointDictionary:
    """Concatenate ``F_f`` with ``s_rings`` polar rings. ``s_rings=0`` gives ``F_f`` alone."""
    if int(s_rings) != s_rings or s_rings < 0:
        raise ValueError(f"s_rings must be a non-negative integer, got {s_rings}")
    far = build_angular(cfg)
    if s_rings == 0:
        return far
    near = build_polar_rings(cfg, s_rings, r_min_m, beta_control)
    cols = np.concatenate([far.columns, near.columns], axis=1)
    return JointDictionary(cols, far.params + near.params, cfg.n_elements, s_rings, True)
