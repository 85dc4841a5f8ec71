"""Uniform linear array geometry and far/near-field steering vectors.

The array lies on the y-axis, centred at the origin. Element ``n`` (zero-based)
sits at ``(0, t_n * d)`` with ``t_n = (2n - N + 1) / 2``. Angles are measured
from the x-axis (broadside) and are always in radians here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ArrayConfig:
    """Physical description of a linear array.

    Args:
        n_elements: Number of antenna elements ``N``.
        spacing_m: Element spacing ``d`` in meters.
        wavelength_m: Carrier wavelength in meters.
    """

    n_elements: int
    spacing_m: float
    wavelength_m: float

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise ValueError(f"n_elements must be an integer >= 2, got {self.n_elements}")
        if not self.spacing_m > 0:
            raise ValueError(f"spacing_m must be positive, got {self.spacing_m}")
        if not self.wavelength_m > 0:
            raise ValueError(f"wavelength_m must be positive, got {self.wavelength_m}")

    @classmethod
    def half_wavelength(cls, n_elements: int, wavelength_m: float) -> "ArrayConfig":
        return cls(n_elements, wavelength_m / 2, wavelength_m)

    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength_m

    @property
    def aperture_m(self) -> float:
        return self.n_elements * self.spacing_m

    def rayleigh_distance(self) -> float:
        """Near/far boundary ``2 D^2 / lambda`` with ``D = N d``."""
        return 2 * self.aperture_m**2 / self.wavelength_m


@dataclass(frozen=True)
class SteeringVector:
    """Unit-norm array response towards ``(angle, distance)``.

    ``source_distance_m`` is ``inf`` for a plane-wave (far-field) response.
    """

    entries: np.ndarray = field(repr=False)
    source_angle_rad: float
    source_distance_m: float = math.inf

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def is_far_field(self) -> bool:
        return math.isinf(self.source_distance_m)

    def __len__(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _check_angle(theta_rad):
    if not -math.pi / 2 < theta_rad < math.pi / 2:
        raise ValueError(f"angle must lie strictly inside (-pi/2, pi/2), got {theta_rad}")


def _check_distance(r_m):
    if not r_m > 0:
        raise ValueError(f"distance must be positive, got {r_m}")


def element_indices(cfg: ArrayConfig) -> np.ndarray:
    """Symmetric element indices ``t_n`` for ``n = 0..N-1``."""
    n = np.arange(cfg.n_elements)
    return (2 * n - cfg.n_elements + 1) / 2


def element_offsets(cfg: ArrayConfig) -> np.ndarray:
    """Element positions along the array axis in meters, symmetric about 0."""
    return element_indices(cfg) * cfg.spacing_m


def element_scatterer_distance(cfg: ArrayConfig, n, theta_rad: float, r_m: float):
    """Exact distance from element(s) ``n`` to a point at ``(theta, r)``.

    ``n`` may be an int or an integer array.
    """
    _check_distance(r_m)
    t_d = element_offsets(cfg)[n]
    x = r_m * math.cos(theta_rad)
    return np.hypot(x, t_d - r_m * math.sin(theta_rad))


def far_field_steering(cfg: ArrayConfig, theta_rad: float) -> SteeringVector:
    _check_angle(theta_rad)
    phase = cfg.wavenumber() * element_offsets(cfg) * math.sin(theta_rad)
    entries = np.exp(1j * phase) / math.sqrt(cfg.n_elements)
    return SteeringVector(entries, float(theta_rad), math.inf)


def near_field_steering(cfg: ArrayConfig, theta_rad: float, r_m: float) -> SteeringVector:
    _check_angle(theta_rad)
    _check_distance(r_m)
    r_n = element_scatterer_distance(cfg, slice(None), theta_rad, r_m)
    # r_n - r cancels catastrophically for r >> aperture; use the rationalised form.
    t_d = element_offsets(cfg)
    delta = (t_d**2 - 2 * r_m * t_d * math.sin(theta_rad)) / (r_n + r_m)
    entries = np.exp(-1j * cfg.wavenumber() * delta) / math.sqrt(cfg.n_elements)
    return SteeringVector(entries, float(theta_rad), float(r_m))


def steering(cfg: ArrayConfig, theta_rad: float, r_m: float = math.inf) -> SteeringVector:
    """Dispatch on distance: ``inf`` gives the plane-wave vector."""
    if math.isinf(r_m):
        return far_field_steering(cfg, theta_rad)
    return near_field_steering(cfg, theta_rad, r_m)


def taylor_distance(cfg: ArrayConfig, theta_rad: float, r_m: float) -> np.ndarray:
    """Second-order (Fresnel) approximation of ``element_scatterer_distance``."""
    t_d = element_offsets(cfg)
    s = math.sin(theta_rad)
    return r_m - t_d * s + (1 - s * s) * t_d**2 / (2 * r_m)
