"""Steering-vector coherence and its chirp-integral approximation.

The coherence of two atoms ``(theta_p, r_p)`` and ``(theta_q, r_q)`` is
approximated by

    F(beta, rho) = | int_{lo}^{hi} exp(-j k d^2 rho (N x)^2) dx |

with ``beta = sin(theta_p) - sin(theta_q)``, ``rho`` the difference of the
curvature terms ``cos^2(theta) / (2 r)`` and limits
``+-(N-1)/(2N) - beta / (2 N rho d)``. Shifting ``x = u - s`` with
``s = beta / (2 N rho d)`` and dropping the constant phase gives the
well-conditioned integrand ``exp(-j (c u^2 - b u))`` on ``u in [-h, h]``
where ``c = k d^2 rho N^2`` and ``b = k d N beta``. Both evaluators below
work in that form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .dictionary import AtomParams
from .geometry import ArrayConfig, SteeringVector

RHO_EPSILON = 1e-9
QUAD_TOL = 1e-6
MAX_PANEL_PHASE = math.pi / 8

# 8-point Gauss-Legendre with the embedded 4-point rule as error estimate.
_GL8 = np.polynomial.legendre.leggauss(8)
_GL4 = np.polynomial.legendre.leggauss(4)


class DegenerateDiffusion(ValueError):
    """Raised when ``F(beta, rho)`` is requested for ``rho`` ~ 0."""


@dataclass(frozen=True)
class DiffusionParams:
    beta: float
    rho: float
    wavenumber: float
    n_elements: int
    spacing_m: float

    def __post_init__(self):
        if abs(self.rho) < RHO_EPSILON:
            raise DegenerateDiffusion(f"|rho| = {abs(self.rho):.3g} below {RHO_EPSILON}")

    @property
    def half_width(self) -> float:
        return (self.n_elements - 1) / (2 * self.n_elements)

    @property
    def shift(self) -> float:
        """Offset ``beta / (2 N rho d)`` subtracted from both integration limits."""
        return self.beta / (2 * self.n_elements * self.rho * self.spacing_m)

    @property
    def limits(self) -> tuple[float, float]:
        return -self.half_width - self.shift, self.half_width - self.shift

    @property
    def chirp_rate(self) -> float:
        """``c = k d^2 rho N^2``: the integrand is ``exp(-j c x^2)``."""
        return self.wavenumber * self.spacing_m**2 * self.rho * self.n_elements**2

    @property
    def linear_rate(self) -> float:
        """``b = k d N beta``, the linear phase slope after centring the limits."""
        return self.wavenumber * self.spacing_m * self.n_elements * self.beta


def exact_coherence(u, v) -> float:
    """``|u^H v|`` for two steering vectors (or plain arrays)."""
    u = np.asarray(u.entries if isinstance(u, SteeringVector) else u)
    v = np.asarray(v.entries if isinstance(v, SteeringVector) else v)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(abs(np.vdot(u, v)))


def curvature(p: AtomParams) -> float:
    """``cos^2(theta) / (2 r)``; zero for a far-field atom."""
    if p.is_far_field:
        return 0.0
    return (1 - math.sin(p.angle_rad) ** 2) / (2 * p.distance_m)


def diffusion_params(cfg: ArrayConfig, p: AtomParams, q: AtomParams) -> DiffusionParams | None:
    """``(beta, rho)`` for the pair, or ``None`` when ``rho`` is degenerate.

    ``None`` covers both far-field atoms (``rho`` undefined) and
    ``|rho| < RHO_EPSILON``.
    """
    if p.is_far_field and q.is_far_field:
        return None
    rho = curvature(p) - curvature(q)
    if abs(rho) < RHO_EPSILON:
        return None
    beta = math.sin(p.angle_rad) - math.sin(q.angle_rad)
    return DiffusionParams(beta, rho, cfg.wavenumber(), cfg.n_elements, cfg.spacing_m)


def _panel_quad(c, b, lo, hi):
    """Integrate ``exp(-j (c u^2 - b u))`` over ``[lo, hi]`` on phase-bounded panels.

    Returns ``(value, error_estimate)``.
    """
    # local phase rate |2 c u - b| is maximal at an endpoint
    rate = max(abs(2 * c * lo - b), abs(2 * c * hi - b))
    n_panels = max(1, math.ceil(rate * (hi - lo) / MAX_PANEL_PHASE))
    while True:
        edges = np.linspace(lo, hi, n_panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]

        def rule(nodes_weights):
            x, w = nodes_weights
            u = mid + half * x[None, :]
            return np.sum(half * w[None, :] * np.exp(-1j * (c * u * u - b * u)))

        fine, coarse = rule(_GL8), rule(_GL4)
        err = abs(fine - coarse)
        if err < QUAD_TOL or n_panels > 1 << 22:
            return fine, err
        n_panels *= 2


def diffusion_integral(params: DiffusionParams, method: str = "quad") -> float:
    """Evaluate ``F(beta, rho)``, clamped to ``[0, 1]``.

    ``method="quad"`` uses composite Gauss-Legendre panels sized so that the
    phase changes by at most pi/8 per panel; the embedded lower-order rule
    must agree to ``QUAD_TOL``. ``method="fresnel"`` uses the closed form via
    Fresnel integrals.
    """
    if params is None:
        raise DegenerateDiffusion("no diffusion parameters for a degenerate pair")
    if method == "quad":
        h = params.half_width
        val, err = _panel_quad(params.chirp_rate, params.linear_rate, -h, h)
        if err >= QUAD_TOL:
            raise ArithmeticError(f"quadrature error estimate {err:.2e} above {QUAD_TOL}")
        return min(1.0, float(abs(val)))
    if method == "fresnel":
        return float(diffusion_integral_batch(
            np.array([params.beta]), np.array([params.rho]), params.wavenumber,
            params.n_elements, params.spacing_m)[0])
    raise ValueError(f"unknown method {method!r}")


def fresnel_reduce(params: DiffusionParams) -> tuple[tuple[float, float], float]:
    """Map the integral onto ``int exp(-j pi/2 w^2) dw``.

    Substituting ``w = x N sqrt(2 k d^2 |rho| / pi)`` turns
    ``exp(-j k d^2 rho (N x)^2)`` into ``exp(-j sign(rho) pi/2 w^2)``; the sign
    only conjugates the integral, so ``|F|`` is the same for ``+-rho``.

    Returns:
        ``((w_lo, w_hi), scale)`` with ``F = scale * |int_{w_lo}^{w_hi} exp(-j pi/2 w^2) dw|``.
    """
    if params is None:
        raise DegenerateDiffusion("no diffusion parameters for a degenerate pair")
    g = params.n_elements * math.sqrt(2 * params.wavenumber * params.spacing_m**2 * abs(params.rho) / math.pi)
    lo, hi = params.limits
    return (lo * g, hi * g), 1.0 / g


def fresnel_segment(w_lo, w_hi):
    """``int_{w_lo}^{w_hi} exp(-j pi/2 w^2) dw`` via scipy's Fresnel integrals (vectorised)."""
    s_hi, c_hi = special.fresnel(w_hi)
    s_lo, c_lo = special.fresnel(w_lo)
    return (c_hi - c_lo) - 1j * (s_hi - s_lo)


def diffusion_integral_batch(beta, rho, wavenumber, n_elements, spacing_m) -> np.ndarray:
    """Vectorised ``F(beta, rho)`` through the Fresnel reduction.

    Entries with ``|rho| < RHO_EPSILON`` come back as ``nan``.
    """
    beta = np.asarray(beta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    out = np.full(np.broadcast(beta, rho).shape, np.nan)
    ok = np.abs(rho) >= RHO_EPSILON
    beta_ok, rho_ok = np.broadcast_to(beta, out.shape)[ok], np.broadcast_to(rho, out.shape)[ok]
    N, d = n_elements, spacing_m
    h = (N - 1) / (2 * N)
    shift = beta_ok / (2 * N * rho_ok * d)
    g = N * np.sqrt(2 * wavenumber * d * d * np.abs(rho_ok) / np.pi)
    val = np.abs(fresnel_segment((-h - shift) * g, (h - shift) * g)) / g
    out[ok] = np.minimum(val, 1.0)
    return out


def discrete_coherence(params: DiffusionParams) -> float:
    """Second-order (Fresnel-zone) coherence before the sum-to-integral step."""
    t = np.arange(params.n_elements) - (params.n_elements - 1) / 2
    k, d = params.wavenumber, params.spacing_m
    phase = k * t * d * params.beta - k * t**2 * d**2 * params.rho
    return float(abs(np.exp(1j * phase).sum()) / params.n_elements)
