"""Monte-Carlo trials and parameter sweeps."""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..dictionary import build_joint
from ..estimators import (DiffusionTable, MeasurementMatrix, PdOmpConfig, a_omp, estimate_covariance,
                          hf_npd_omp, hf_omp, mmse_estimate, p_omp, pd_omp)
from ..scene import generate_combiner, observe_pilots, sample_scene, snr_to_noise_var, synthesize_channel
from .config import ExperimentConfig

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


class SweepPoint(NamedTuple):
    snr_db: float
    q_slots: int


@dataclass(frozen=True)
class ResultRow:
    estimator: str
    snr_db: float
    pilot_len: int
    alpha: float | None
    trials: int
    nmse_mean: float
    nmse_median: float
    ci95_lo: float
    ci95_hi: float


def nmse(h_hat, h) -> float:
    """``||h_hat - h||^2 / ||h||^2`` for one realisation."""
    h = np.asarray(h)
    denom = float(np.vdot(h, h).real)
    if denom == 0:
        raise ValueError("reference channel is zero")
    diff = np.asarray(h_hat) - h
    return float(np.vdot(diff, diff).real) / denom


def summarize(values) -> tuple[int, float, float, float, float]:
    """``(n, mean, median, ci_lo, ci_hi)`` with a normal-approximation 95% CI of the mean.

    Non-finite entries (failed trials) are dropped.
    """
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0, math.nan, math.nan, math.nan, math.nan
    mean = float(v.mean())
    half = Z95 * float(v.std(ddof=1)) / math.sqrt(v.size) if v.size > 1 else 0.0
    return int(v.size), mean, float(np.median(v)), mean - half, mean + half


class ExperimentContext:
    """Per-run state shared by every trial: dictionary, diffusion table, MMSE prior."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.array = cfg.array()
        self.dictionary = build_joint(self.array, cfg.s_rings, cfg.r_min_m, cfg.beta_control)
        self.table = DiffusionTable(self.dictionary, self.array)
        self._cov = None

    @property
    def covariance(self) -> np.ndarray:
        if self._cov is None:
            rng = np.random.default_rng([self.cfg.master_seed, 1])
            c = self.cfg
            self._cov = estimate_covariance(rng, self.array, c.mmse_cov_samples, c.k_paths,
                                            c.angle_range, c.dist_range, c.boundary_m)
        return self._cov


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, 0, trial_index])


def draw_trial(cfg: ExperimentConfig, array, trial_index: int, point: SweepPoint):
    """One paired realisation: scene, channel and observation."""
    rng = trial_rng(cfg.master_seed, trial_index)
    scene = sample_scene(rng, cfg.k_paths, cfg.angle_range, cfg.dist_range, cfg.boundary_m)
    h = synthesize_channel(array, scene)
    W = generate_combiner(rng, array, point.q_slots, cfg.n_rf)
    signal = 1.0 / array.n_elements if cfg.snr_reference == "per_antenna" else 1.0
    obs = observe_pilots(rng, h, W, snr_to_noise_var(point.snr_db, signal), n_rf=cfg.n_rf)
    return scene, h, obs


def run_estimators(ctx: ExperimentContext, scene, obs):
    """Run every configured estimator on one observation.

    Returns ``{(name, alpha_or_None): Estimate or exception}``.
    """
    cfg, array, D = ctx.cfg, ctx.array, ctx.dictionary
    M = MeasurementMatrix.build(obs.combiner, D)
    cap = cfg.max_support or None
    base = PdOmpConfig(alpha=1.0, k_iterations=cfg.k_paths, max_support=cap)
    jobs = {}
    for name in cfg.estimators:
        if name == "pd_omp":
            for a in cfg.alphas:
                pc = PdOmpConfig(alpha=a, k_iterations=cfg.k_paths, max_support=cap)
                jobs[(name, a)] = lambda pc=pc: pd_omp(obs, D, array, pc, M, ctx.table)
        elif name == "hf_npd_omp":
            jobs[(name, None)] = lambda: hf_npd_omp(obs, D, array, base, M)
        elif name == "a_omp":
            jobs[(name, None)] = lambda: a_omp(obs, array, base, D, M)
        elif name == "p_omp":
            jobs[(name, None)] = lambda: p_omp(obs, array, base, D, M)
        elif name == "hf_omp":
            jobs[(name, None)] = lambda: hf_omp(obs, array, base, scene.k_far, scene.k_near, D, M,
                                                far_first=cfg.hf_far_first)
        elif name == "mmse":
            jobs[(name, None)] = lambda: mmse_estimate(obs, ctx.covariance, array)
    out = {}
    for key, job in jobs.items():
        try:
            out[key] = job()
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("estimator %s failed: %s", key, exc)
            out[key] = exc
    return out


def run_trial(trial_index: int, cfg: ExperimentConfig, point: SweepPoint,
              ctx: ExperimentContext | None = None) -> dict:
    """NMSE of every configured estimator on one paired realisation.

    All estimators see the same scene, combiner and noise. Failed estimators
    map to ``nan``.
    """
    ctx = ctx or ExperimentContext(cfg)
    scene, h, obs = draw_trial(cfg, ctx.array, trial_index, point)
    log.debug("trial %d y-hash %s", trial_index, hashlib.sha1(obs.y.tobytes()).hexdigest()[:12])
    result = {}
    for key, est in run_estimators(ctx, scene, obs).items():
        result[key] = math.nan if isinstance(est, Exception) else nmse(est.h_hat, h)
    return result


def sweep_points(cfg: ExperimentConfig) -> list[SweepPoint]:
    return [SweepPoint(s, q) for q in cfg.q_slots for s in cfg.snr_db]


_worker_ctx = None


def _init_worker(cfg):
    global _worker_ctx
    _worker_ctx = ExperimentContext(cfg)


def _worker_trials(args):
    indices, point = args
    return [run_trial(i, _worker_ctx.cfg, point, _worker_ctx) for i in indices]


def collect_trials(cfg: ExperimentConfig, ctx: ExperimentContext | None = None) -> dict:
    """``{point: [per-trial NMSE dict, ...]}`` in trial order."""
    points = sweep_points(cfg)
    if cfg.workers > 1:
        chunks = np.array_split(np.arange(cfg.trials), cfg.workers * 4)
        out = {}
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cfg,)) as ex:
            for p in points:
                parts = ex.map(_worker_trials, [(c.tolist(), p) for c in chunks if len(c)])
                out[p] = [r for part in parts for r in part]
        return out
    ctx = ctx or ExperimentContext(cfg)
    return {p: [run_trial(i, cfg, p, ctx) for i in range(cfg.trials)] for p in points}


def aggregate(cfg: ExperimentConfig, trials: dict) -> list[ResultRow]:
    rows = []
    for point, per_trial in trials.items():
        keys = list(per_trial[0])
        stats = {k: summarize([t[k] for t in per_trial]) for k in keys}
        pd_keys = [k for k in keys if k[0] == "pd_omp"]
        if cfg.alpha_mode == "best" and pd_keys:
            best = min(pd_keys, key=lambda k: (np.nan_to_num(stats[k][1], nan=np.inf), k[1]))
            keys = [k for k in keys if k[0] != "pd_omp"] + [best]
        for k in keys:
            n, mean, med, lo, hi = stats[k]
            rows.append(ResultRow(k[0], float(point.snr_db), int(point.q_slots), k[1], n, mean, med, lo, hi))
    rows.sort(key=lambda r: (r.estimator, r.snr_db, r.pilot_len, -1.0 if r.alpha is None else r.alpha))
    return rows


def run_sweep(cfg: ExperimentConfig, ctx: ExperimentContext | None = None) -> list[ResultRow]:
    """Aggregate ``cfg.trials`` paired trials at every ``(snr, Q)`` point.

    With ``alpha_mode="best"`` PD-OMP contributes one row per point, for the
    alpha with the lowest mean NMSE; with ``"each"`` one row per alpha.
    """
    return aggregate(cfg, collect_trials(cfg, ctx))
