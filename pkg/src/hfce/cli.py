"""Command-line entry point: ``hfce <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Log verbosity comes from ``HFCE_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from .bench.config import ConfigError, ExperimentConfig, load_config
from .bench.results import emit_results
from .bench.runner import ExperimentContext, SweepPoint, draw_trial, nmse, run_estimators, run_sweep
from .coherence import diffusion_integral, diffusion_params, exact_coherence
from .dictionary import AtomParams
from .geometry import ArrayConfig, steering

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(master_seed=args.seed)
    return cfg


def _emit(rows, args):
    text = emit_results(rows, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)


def cmd_sweep_snr(args):
    cfg = _load(args)
    cfg = cfg.replace(q_slots=cfg.q_slots[:1])
    _emit(run_sweep(cfg), args)


def cmd_sweep_pilot(args):
    cfg = _load(args)
    cfg = cfg.replace(snr_db=cfg.snr_db[:1])
    _emit(run_sweep(cfg), args)


def cmd_sweep_alpha(args):
    cfg = _load(args)
    cfg = cfg.replace(q_slots=cfg.q_slots[:1], estimators=("pd_omp",), alpha_mode="each")
    _emit(run_sweep(cfg), args)


def _atom(theta_deg, r_text):
    r = float(r_text)
    return AtomParams(math.radians(float(theta_deg)), r)


def cmd_coherence_table(args):
    try:
        array = ArrayConfig(args.n, args.d, args.wavelength)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        with open(args.pairs, newline="") as f:
            pairs = list(csv.DictReader(f))
    except OSError as exc:
        raise ConfigError(f"cannot read pairs file: {exc}") from None
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["theta_p_deg", "r_p_m", "theta_q_deg", "r_q_m", "exact", "approx", "abs_err"])
        for row in pairs:
            try:
                p = _atom(row["theta_p_deg"], row["r_p_m"])
                q = _atom(row["theta_q_deg"], row["r_q_m"])
                ex = exact_coherence(steering(array, *p), steering(array, *q))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad pair row {row}: {exc}") from None
            params = diffusion_params(array, p, q)
            if params is None:
                approx, err = "", ""
            else:
                F = diffusion_integral(params)
                approx, err = f"{F:.17e}", f"{abs(F - ex):.17e}"
            w.writerow([row["theta_p_deg"], row["r_p_m"], row["theta_q_deg"], row["r_q_m"],
                        f"{ex:.17e}", approx, err])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_single_run(args):
    cfg = _load(args)
    ctx = ExperimentContext(cfg)
    point = SweepPoint(cfg.snr_db[0], cfg.q_slots[0])
    scene, h, obs = draw_trial(cfg, ctx.array, args.trial, point)
    print(f"trial {args.trial}: snr_db={point.snr_db} Q={point.q_slots} K={len(scene)} "
          f"K_F={scene.k_far} K_N={scene.k_near} noise_var={obs.noise_var:.6g}")
    for (name, alpha), est in run_estimators(ctx, scene, obs).items():
        label = name if alpha is None else f"{name}[alpha={alpha}]"
        if isinstance(est, Exception):
            print(f"{label}: FAILED {est}")
            continue
        print(f"{label}: nmse={nmse(est.h_hat, h):.6e}")
        if args.verbose and est.support is not None:
            norms = est.residual_norms
            for i, (l_star, group) in enumerate(est.support.per_iteration):
                ring, angle = ctx.dictionary.decode(l_star) if name != "p_omp" else (None, None)
                r_next = norms[i + 1] if i + 1 < len(norms) else float("nan")
                print(f"  iter {i}: l*={l_star} ring={ring} angle_idx={angle} |Gamma_l*|={len(group)} "
                      f"residual={r_next:.6e}")
            for d in est.diagnostics:
                print(f"  note: {d}")


def build_parser():
    ap = argparse.ArgumentParser(prog="hfce", description="Hybrid near/far-field channel estimation benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, help_ in [("sweep-snr", cmd_sweep_snr, "NMSE versus SNR"),
                            ("sweep-pilot", cmd_sweep_pilot, "NMSE versus pilot length Q"),
                            ("sweep-alpha", cmd_sweep_alpha, "PD-OMP NMSE per alpha versus SNR")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int)
        p.set_defaults(func=fn)

    p = sub.add_parser("coherence-table", help="exact coherence against the chirp-integral approximation")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lambda", dest="wavelength", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--pairs", required=True, help="CSV with theta_p_deg,r_p_m,theta_q_deg,r_q_m")
    p.add_argument("--out")
    p.set_defaults(func=cmd_coherence_table)

    p = sub.add_parser("single-run", help="one trial with per-iteration diagnostics")
    p.add_argument("--config", required=True)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_single_run)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HFCE_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
