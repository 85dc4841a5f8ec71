"""PD-OMP and the baseline channel estimators.

All OMP variants share :func:`least_squares_on_support` and
:func:`detect_strongest`. They differ only in which dictionary block they
search and how many columns each detection adds to the support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .coherence import curvature, diffusion_integral_batch
from .dictionary import DEFAULT_BETA_CONTROL, DEFAULT_R_MIN_M, JointDictionary, build_angular, build_polar_rings
from .geometry import ArrayConfig
from .scene import PilotObservation, sample_scene, synthesize_channel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasurementMatrix:
    psi: np.ndarray = field(repr=False)
    dictionary: JointDictionary = field(repr=False)

    @classmethod
    def build(cls, combiner: np.ndarray, dictionary: JointDictionary) -> "MeasurementMatrix":
        return cls(combiner @ dictionary.columns, dictionary)

    @property
    def column_params(self):
        return self.dictionary.params


@dataclass
class SupportSet:
    indices: list[int] = field(default_factory=list)
    per_iteration: list[tuple[int, list[int]]] = field(default_factory=list)

    def add(self, l_star: int, group) -> list[int]:
        """Append the new members of ``group`` and record the iteration."""
        have = set(self.indices)
        new = [int(i) for i in group if int(i) not in have]
        self.indices.extend(new)
        self.per_iteration.append((int(l_star), [int(i) for i in group]))
        return new


@dataclass
class Estimate:
    h_hat: np.ndarray
    support: SupportSet | None = None
    residual_norms: list[float] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class PdOmpConfig:
    """Settings shared by the OMP family.

    Args:
        alpha: Power-diffusion threshold in ``(0, 1]``.
        k_iterations: Number of detections ``K``.
        max_support: Cap on ``|support|``; ``None`` means the number of measurements.
    """

    alpha: float = 0.2
    k_iterations: int = 5
    max_support: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.k_iterations < 1:
            raise ValueError(f"k_iterations must be >= 1, got {self.k_iterations}")
        if self.max_support is not None and self.max_support < 1:
            raise ValueError(f"max_support must be >= 1, got {self.max_support}")


def least_squares_on_support(y, psi, support):
    """Minimum-norm least squares of ``y`` on ``psi[:, support]``.

    Returns:
        ``(coefficients, residual, rank_deficient)``.
    """
    support = list(support)
    if not support:
        raise ValueError("support must be non-empty")
    A = psi[:, support]
    # rank tolerance max(m, n) * eps, as in numpy.linalg.matrix_rank; a bare eps
    # cutoff sits inside the round-off cluster of duplicated columns
    cond = max(A.shape) * np.finfo(float).eps
    coef, _, rank, _ = linalg.lstsq(A, y, cond=cond, lapack_driver="gelsd")
    residual = y - A @ coef
    return coef, residual, rank < len(support)


def detect_strongest(residual, psi, exclude=None, normalize=True) -> int:
    """Column index maximising ``|psi[:, l]^H R|^2``; lowest index wins ties.

    With ``normalize`` each correlation is divided by ``||psi[:, l]||^2`` so
    that columns with a larger projected norm do not win by size alone.
    """
    corr = np.abs(psi.conj().T @ residual) ** 2
    if normalize:
        norms = np.einsum("ij,ij->j", psi.conj(), psi).real
        corr = np.divide(corr, norms, out=np.zeros_like(corr), where=norms > 0)
    if exclude is not None and len(exclude):
        corr[np.asarray(list(exclude), dtype=int)] = -1.0
    return int(np.argmax(corr))


class DiffusionTable:
    """Cached rows of ``F(beta_l, rho_l)`` between one atom and every atom.

    Rows depend only on the dictionary, so one table can serve every trial
    and every threshold.
    """

    def __init__(self, dictionary: JointDictionary, cfg: ArrayConfig):
        self.dictionary = dictionary
        self.cfg = cfg
        self._sines = np.sin(dictionary.angles)
        self._curv = np.array([curvature(p) for p in dictionary.params])
        self._far = dictionary.far_mask
        self._rows: dict[int, np.ndarray] = {}

    def row(self, l_star: int) -> np.ndarray:
        """``F`` against ``l_star``; ``nan`` where ``rho`` is degenerate."""
        if l_star not in self._rows:
            beta = self._sines - self._sines[l_star]
            rho = self._curv - self._curv[l_star]
            F = diffusion_integral_batch(beta, rho, self.cfg.wavenumber(),
                                         self.cfg.n_elements, self.cfg.spacing_m)
            # degenerate pairs involving a near-field atom: exact coherence stands in
            degenerate = np.isnan(F) & ~(self._far & self._far[l_star])
            if degenerate.any():
                cols = self.dictionary.columns
                F[degenerate] = np.abs(cols[:, degenerate].conj().T @ cols[:, l_star])
            F.setflags(write=False)
            self._rows[l_star] = F
        return self._rows[l_star]


def diffusion_support(l_star: int, dictionary: JointDictionary, cfg: ArrayConfig, alpha: float,
                      table: DiffusionTable | None = None) -> list[int]:
    """Columns whose predicted coherence with ``l_star`` is at least ``alpha``.

    Ordered by decreasing ``F`` with ``l_star`` first. Far/far pairs have no
    ``rho``; for a far-field ``l_star`` its angular neighbours are added
    unconditionally instead.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    table = table or DiffusionTable(dictionary, cfg)
    F = table.row(l_star).copy()
    F[l_star] = np.inf
    far = dictionary.far_mask
    if far[l_star]:
        n = dictionary.n_angles
        for nb in (l_star - 1, l_star + 1):
            if 0 <= nb < n:
                F[nb] = 2.0  # ranks right after l_star
    chosen = np.flatnonzero(np.nan_to_num(F, nan=-1.0) >= alpha)
    order = np.lexsort((chosen, -F[chosen]))
    return [int(i) for i in chosen[order]]


def _omp(y, psi, n_iter, expand, max_support, h_basis):
    """Generic OMP loop; ``expand(l_star)`` returns the ordered group to admit."""
    support = SupportSet()
    residual = y.copy()
    norms = [float(np.linalg.norm(residual))]
    diag = []
    coef = np.zeros(0, dtype=complex)
    if not np.any(y):
        return Estimate(np.zeros(h_basis.shape[0], dtype=complex), support, norms, ["zero observation"])
    for it in range(n_iter):
        if len(support.indices) >= max_support:
            diag.append(f"iteration {it}: support cap {max_support} reached")
            break
        l_star = detect_strongest(residual, psi, exclude=support.indices)
        group = expand(l_star)
        room = max_support - len(support.indices)
        have = set(support.indices)
        fresh = [i for i in group if i not in have]
        if len(fresh) > room:
            # group is ordered by decreasing F, so this keeps the strongest
            diag.append(f"iteration {it}: diffusion set of {len(fresh)} truncated to {room}")
            keep = set(fresh[:room])
            group = [i for i in group if i in keep or i in have]
        support.add(l_star, group)
        coef, residual, deficient = least_squares_on_support(y, psi, support.indices)
        if deficient:
            diag.append(f"iteration {it}: rank-deficient support of size {len(support.indices)}")
        norms.append(float(np.linalg.norm(residual)))
    h_hat = h_basis[:, support.indices] @ coef if support.indices else np.zeros(h_basis.shape[0], complex)
    for d in diag:
        log.debug(d)
    return Estimate(h_hat, support, norms, diag)


def _pilot_free(obs: PilotObservation) -> np.ndarray:
    return obs.y / obs.pilot_symbol


def _measurement(obs, dictionary, measurement):
    if measurement is not None:
        return measurement.psi
    return obs.combiner @ dictionary.columns


def _cap(pcfg, obs):
    return pcfg.max_support if pcfg.max_support is not None else obs.y.shape[0]


def pd_omp(obs: PilotObservation, dictionary: JointDictionary, cfg: ArrayConfig, pcfg: PdOmpConfig,
           measurement: MeasurementMatrix | None = None, table: DiffusionTable | None = None) -> Estimate:
    """Power-diffusion OMP over the joint dictionary.

    Each iteration detects the strongest atom, admits every atom whose
    predicted coherence with it reaches ``pcfg.alpha``, and refits by least
    squares. The estimate is ``F_j`` applied to the support coefficients.
    """
    psi = _measurement(obs, dictionary, measurement)
    table = table or DiffusionTable(dictionary, cfg)

    def expand(l_star):
        return diffusion_support(l_star, dictionary, cfg, pcfg.alpha, table)

    return _omp(_pilot_free(obs), psi, pcfg.k_iterations, expand, _cap(pcfg, obs), dictionary.columns)


def hf_npd_omp(obs, dictionary, cfg, pcfg, measurement=None) -> Estimate:
    """Plain OMP on the joint dictionary, one atom per iteration."""
    psi = _measurement(obs, dictionary, measurement)
    return _omp(_pilot_free(obs), psi, pcfg.k_iterations, lambda l: [l], _cap(pcfg, obs), dictionary.columns)


def a_omp(obs, cfg, pcfg, dictionary=None, measurement=None) -> Estimate:
    """Plain OMP on the angular block only.

    ``dictionary`` and ``measurement`` may be the joint ones; only their
    far-field block is used.
    """
    dictionary = dictionary if dictionary is not None else build_angular(cfg)
    block = dictionary.far_block()
    psi = _measurement(obs, dictionary, measurement)[:, block]
    return _omp(_pilot_free(obs), psi, pcfg.k_iterations, lambda l: [l], _cap(pcfg, obs),
                dictionary.columns[:, block])


def p_omp(obs, cfg, pcfg, dictionary=None, measurement=None, s_rings=4,
          r_min_m=DEFAULT_R_MIN_M, beta_control=DEFAULT_BETA_CONTROL) -> Estimate:
    """Plain OMP on the polar rings only (support indices are local to that block)."""
    if dictionary is None:
        dictionary = build_polar_rings(cfg, s_rings, r_min_m, beta_control)
    block = dictionary.near_block()
    psi = _measurement(obs, dictionary, measurement)[:, block]
    return _omp(_pilot_free(obs), psi, pcfg.k_iterations, lambda l: [l], _cap(pcfg, obs),
                dictionary.columns[:, block])


def hf_omp(obs, cfg, pcfg, k_far: int, k_near: int, dictionary=None, measurement=None,
           far_first: bool = True, s_rings=4, r_min_m=DEFAULT_R_MIN_M,
           beta_control=DEFAULT_BETA_CONTROL) -> Estimate:
    """Two-stage OMP using known far/near path counts.

    Runs ``k_far`` detections on the angular block, then ``k_near`` on the
    polar block against the stage-one residual, then one joint least-squares
    fit on the union support. Support indices refer to the joint dictionary.
    """
    if k_far < 0 or k_near < 0:
        raise ValueError("path counts must be non-negative")
    if dictionary is None:
        from .dictionary import build_joint
        dictionary = build_joint(cfg, s_rings, r_min_m, beta_control)
    y = _pilot_free(obs)
    psi = _measurement(obs, dictionary, measurement)
    far_idx = np.arange(dictionary.n_atoms)[dictionary.far_block()]
    near_idx = np.arange(dictionary.n_atoms)[dictionary.near_block()]
    stages = [(far_idx, k_far), (near_idx, k_near)]
    if not far_first:
        stages.reverse()
    cap = _cap(pcfg, obs)
    support = SupportSet()
    norms = [float(np.linalg.norm(y))]
    diag = []
    if not np.any(y):
        return Estimate(np.zeros(cfg.n_elements, complex), support, norms, ["zero observation"])
    residual = y.copy()
    for cols, n_iter in stages:
        if n_iter == 0:
            continue
        sub = _omp(residual, psi[:, cols], n_iter, lambda l: [l], cap - len(support.indices),
                   dictionary.columns[:, cols])
        for l_star, group in sub.support.per_iteration:
            support.add(int(cols[l_star]), [int(cols[i]) for i in group])
        diag.extend(sub.diagnostics)
        # residual trajectory measured against y on the accumulated support
        _, residual, _ = least_squares_on_support(y, psi, support.indices)
        norms.append(float(np.linalg.norm(residual)))
    if not support.indices:
        return Estimate(np.zeros(cfg.n_elements, complex), support, norms, diag)
    coef, residual, deficient = least_squares_on_support(y, psi, support.indices)
    if deficient:
        diag.append("rank-deficient joint support")
    return Estimate(dictionary.columns[:, support.indices] @ coef, support, norms, diag)


def combined_noise_covariance(obs: PilotObservation) -> np.ndarray:
    """Covariance of the stacked noise ``[W_1 n_1; ...; W_Q n_Q]`` divided by ``sigma^2``.

    Slots draw independent noise, so the cross-slot blocks of ``W W^H`` vanish.
    """
    W = obs.combiner.reshape(obs.q_slots, obs.n_rf, -1)
    blocks = [Wq @ Wq.conj().T for Wq in W]
    return linalg.block_diag(*blocks)


def mmse_estimate(obs: PilotObservation, cov_h: np.ndarray, cfg: ArrayConfig) -> Estimate:
    """Linear MMSE estimate under ``y_q = W_q h x + W_q n_q``.

    ``h_hat = C W^H (W C W^H + sigma^2 B)^{-1} y / x`` with ``B`` the
    block-diagonal ``diag(W_q W_q^H)``; a ridge of ``1e-10 * trace / M``
    keeps the inner matrix invertible when ``sigma^2 = 0``.
    """
    W = obs.combiner
    if cov_h.shape != (cfg.n_elements, cfg.n_elements):
        raise ValueError(f"covariance has shape {cov_h.shape}")
    CWh = cov_h @ W.conj().T
    inner = W @ CWh + obs.noise_var * combined_noise_covariance(obs)
    inner = 0.5 * (inner + inner.conj().T)
    ridge = 1e-10 * np.real(np.trace(inner)) / inner.shape[0]
    diag = []
    try:
        z = linalg.solve(inner + ridge * np.eye(inner.shape[0]), _pilot_free(obs), assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        diag.append("inner matrix not positive definite; least-squares fallback")
        z = linalg.lstsq(inner, _pilot_free(obs))[0]
    return Estimate(CWh @ z, None, [], diag)


def estimate_covariance(rng: np.random.Generator, cfg: ArrayConfig, n_samples: int,
                        k_paths: int = 5, angle_range=(-math.pi / 3, math.pi / 3),
                        dist_range=(40.0, 400.0), boundary_m: float = 200.0) -> np.ndarray:
    """Sample covariance ``(1/n) sum h h^H`` over independent random scenes."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    H = np.empty((cfg.n_elements, n_samples), dtype=complex)
    for i in range(n_samples):
        scene = sample_scene(rng, k_paths, angle_range, dist_range, boundary_m)
        H[:, i] = synthesize_channel(cfg, scene)
    C = H @ H.conj().T / n_samples
    return 0.5 * (C + C.conj().T)
