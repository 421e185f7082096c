"""Command-line front end: ``mrkf design|verify|simulate|sweep --config FILE``.

Numbers on standard output carry 6 significant digits. Failures exit with
the code attached to the corresponding exception class (see
:data:`mrkf.errors.EXIT_CODES`); argparse usage errors exit with 2.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import GainFile, RunConfig, load_config
from .cyclic import (
    build_cyclic,
    cyclic_rank_report,
    observability_matrix,
    spectral_radius,
    closed_loop,
    spectral_radius_identity_check,
)
from .design import design, l2_optimal, verify_l2_norm
from .errors import DimensionMismatch, Infeasible, MrkfError, SolverFailure, Unstable, VerificationFailed
from .oracle import cross_validate, dare_fixed_point
from .sim import monte_carlo, rmse, write_csv

POLE_GRID = tuple(round(0.975 - 0.025 * i, 3) for i in range(10))
L2_RATIO_GRID = (10.0, 5.0, 3.0, 2.0, 1.5, 1.3, 1.2, 1.1, 1.05, 1.01)
ORACLE_TOL = 1e-4
IDENTITY_TOL = 1e-10
ZERO_TOL = 1e-8


def _tol(t) -> str:
    return f"{t:.0e}".replace("e-0", "e-")


def g6(v) -> str:
    return f"{float(v):.6g}"


def emit(label, value=None, out=None):
    out = out or sys.stdout
    if value is None:
        print(label, file=out)
    elif isinstance(value, (list, tuple, np.ndarray)):
        print(f"{label} = " + " ".join(g6(v) for v in value), file=out)
    elif isinstance(value, (int, np.integer)) or isinstance(value, str):
        print(f"{label} = {value}", file=out)
    else:
        print(f"{label} = {g6(value)}", file=out)


def resolve_spec(cfg: RunConfig):
    """Design spec with ``l2_ratio`` turned into an absolute bound; returns (spec, gamma_opt)."""
    spec, gopt = cfg.spec, None
    if cfg.l2_ratio is not None:
        gopt, _ = l2_optimal(cfg.model, spec.Cz, spec.alpha, spec.margin, opts=cfg.solver)
        spec = dataclasses.replace(spec, l2_bound=cfg.l2_ratio * gopt)
    return spec, gopt


def _all_active(m) -> bool:
    return bool(np.all(m.schedule.masks == 1))


def dare_gap(m, gains) -> float:
    """``||L_cyc - A_cyc K_ric||_F`` against the cyclic DARE (all sensors active)."""
    cs = build_cyclic(m)
    _, _, L = dare_fixed_point(cs.Acyc, cs.Ccyc, cs.Q_cyc, cs.R_cyc)
    return float(np.linalg.norm(gains.Lcyc - L))


def structural_zero_norm(m, gains) -> float:
    worst = 0.0
    for k, L in enumerate(gains.periodic):
        off = m.schedule.mask(k) == 0
        if off.any():
            worst = max(worst, float(np.abs(L[:, off]).max()))
    return worst


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    m = cfg.model
    spec, gopt = resolve_spec(cfg)
    cs = build_cyclic(m)
    rr, obs = cyclic_rank_report(cs), observability_matrix(cs)
    emit("rank(R)", f"{rr.rank_R} of {rr.Nq}")
    emit("rank(O)", f"{obs.rank} of {cs.Nn}")
    emit("cond(O)", obs.cond)
    if gopt is not None:
        emit("gamma_opt", gopt)
        emit("l2 bound", spec.l2_bound)
    d = design(m, spec, cfg.solver, verify_l2=spec.l2_bound is not None)
    v = d.verification
    emit("status", d.status.value)
    emit("trace(W)", d.trace_W)
    emit("spectral radius", d.spectral_radius)
    for name, e in v.lmi_min_eig.items():
        emit(f"min eig [{name}]", e)
    emit("gain recovery residual", v.recovery_residual)
    emit("structural zeros max", structural_zero_norm(m, d.gains))
    if v.pole_ok is not None:
        emit(f"pole radius <= {g6(spec.pole_radius)}", "PASS" if v.pole_ok else "FAIL")
    if v.l2_achieved is not None:
        emit("gamma_achieved", v.l2_achieved)
    if spec.pole_radius is None and spec.l2_bound is None:
        emit("oracle gap", cross_validate(m, d).max_gap)
        if _all_active(m):
            emit("DARE gap", dare_gap(m, d.gains))
    emit("solve time [s]", d.seconds)
    meta = {"pole_radius": spec.pole_radius, "l2_bound": spec.l2_bound, "gamma_opt": gopt,
            "status": d.status.value, "trace_W": d.trace_W}
    path = cfg.output_path("gains", args.out)
    if path is not None:
        GainFile.from_gains(d.gains, d.objective, d.spectral_radius, meta).write(path)
        emit(f"gains written to {path}")
    return 0


def _read_gains(cfg, args):
    path = cfg.output_path("gains", args.gains)
    if path is None:
        raise VerificationFailed("no gain file given (--gains or output.gains)")
    gf = GainFile.read(path)
    m = cfg.model
    if (gf.n, gf.q, gf.N) != (m.n, m.q, m.N):
        raise DimensionMismatch(f"gain file is {gf.n}x{gf.q} over N={gf.N}; model needs {m.n}x{m.q} over N={m.N}")
    return gf


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    m = cfg.model
    gf = _read_gains(cfg, args)
    gains = gf.gains
    cs = build_cyclic(m)
    spec = cfg.spec
    ok = True

    def check(label, passed):
        nonlocal ok
        ok &= bool(passed)
        emit(f"{label}: {'PASS' if passed else 'FAIL'}")

    rho = spectral_radius(closed_loop(cs, gains))
    emit("spectral radius", rho)
    check("stable (spectral radius < 1)", rho < 1.0)
    res = spectral_radius_identity_check(cs, gains, m)
    check(f"spectral-radius identity residual = {g6(res)} < {_tol(IDENTITY_TOL)}", res < IDENTITY_TOL)
    z = structural_zero_norm(m, gains)
    check(f"structural zeros max = {g6(z)} < {_tol(ZERO_TOL)}", z < ZERO_TOL)
    if spec.pole_radius is not None:
        check(f"spectral radius <= {g6(spec.pole_radius)}", rho <= spec.pole_radius + 1e-6)
    bound = spec.l2_bound
    if cfg.l2_ratio is not None:
        bound = gf.metadata.get("l2_bound") or resolve_spec(cfg)[0].l2_bound
    if bound is not None:
        try:
            ga = verify_l2_norm(m, gains, spec.Cz, spec.alpha, spec.margin, cfg.solver)
            check(f"gamma_achieved = {g6(ga)} <= {g6(bound)}", ga <= bound * (1 + 1e-6))
        except (Unstable, Infeasible, SolverFailure) as exc:
            check(f"gamma_achieved ({exc})", False)
    rep = cross_validate(m, gains)
    if spec.pole_radius is None and bound is None:
        check(f"oracle gap = {g6(rep.max_gap)} < {_tol(ORACLE_TOL)}", rep.max_gap < ORACLE_TOL)
    else:
        emit("oracle gap (constrained design, informational)", rep.max_gap)
    if not ok:
        raise VerificationFailed("one or more checks failed")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    m = cfg.model
    gains = _read_gains(cfg, args).gains
    sc = cfg.scenario
    if args.seed is not None:
        sc = dataclasses.replace(sc, seed=args.seed)
    if args.noise_off:
        sc = dataclasses.replace(sc, process_noise=False, measurement_noise=False)
    runs = args.runs or cfg.runs
    batch = monte_carlo(m, gains, sc, runs)
    R = np.array([rmse(r, cfg.warmup) for r in batch])
    emit("runs", runs)
    emit("seed", sc.seed)
    emit("mean RMSE (predicted)", R.mean(axis=0))
    if batch[0].e_filt is not None:
        Rf = np.array([rmse(r, cfg.warmup, filtered=True) for r in batch])
        emit("mean RMSE (updated)", Rf.mean(axis=0))
    path = cfg.output_path("timeseries", args.out)
    if path is not None:
        write_csv(batch[0], path)
        emit(f"time series written to {path}")
    return 0


def _sweep_point(m, spec, solver, verify):
    try:
        d = design(m, spec, solver, verify_l2=verify)
        ga = d.verification.l2_achieved
        return d.trace_W, d.spectral_radius, d.status.value, ga, ""
    except MrkfError as exc:
        return float("nan"), float("nan"), type(exc).__name__, None, str(exc)


def sweep(cfg: RunConfig, param: str, grid, jobs: int = 1):
    """Rows ``(index, param, value, bound, trace_W, max_abs_eig, status, gamma_achieved, message)``.

    For ``l2_bound`` the grid holds ratios to the minimum certifiable norm.
    """
    m = cfg.model
    base = dataclasses.replace(cfg.spec, pole_radius=None, l2_bound=None) if param == "pole_radius" else \
        dataclasses.replace(cfg.spec, l2_bound=None)
    gopt = None
    if param == "l2_bound":
        gopt, _ = l2_optimal(m, base.Cz, base.alpha, base.margin, opts=cfg.solver)
    tasks = []
    for v in grid:
        if param == "pole_radius":
            tasks.append((float(v), dataclasses.replace(base, pole_radius=float(v)), False))
        else:
            tasks.append((float(v) * gopt, dataclasses.replace(base, l2_bound=float(v) * gopt), True))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            futs = [ex.submit(_sweep_point, m, s, cfg.solver, ver) for _, s, ver in tasks]
            results = [f.result() for f in futs]
    else:
        results = [_sweep_point(m, s, cfg.solver, ver) for _, s, ver in tasks]
    rows = []
    for i, (v, (bound, _, _), r) in enumerate(zip(grid, tasks, results)):
        rows.append((i, param, float(v), bound) + r)
    return rows, gopt


SWEEP_HEADER = ("index", "param", "value", "bound", "trace_W", "max_abs_eig", "status", "gamma_achieved", "message")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.grid:
        try:
            grid = [float(s) for s in args.grid.split(",") if s.strip()]
        except ValueError:
            raise SystemExit(f"mrkf sweep: --grid must be comma-separated numbers, got {args.grid!r}")
    else:
        grid = list(POLE_GRID if args.param == "pole_radius" else L2_RATIO_GRID)
    rows, gopt = sweep(cfg, args.param, grid, args.jobs)
    if gopt is not None:
        emit("gamma_opt", gopt)
    for r in rows:
        ga = "" if r[7] is None else g6(r[7])
        emit(f"{r[1]} {g6(r[2])}: bound {g6(r[3])} trace(W) {g6(r[4])} max|eig| {g6(r[5])} {r[6]} {ga}".rstrip())
    path = cfg.output_path("sweep", args.out)
    if path is not None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(SWEEP_HEADER)
            for r in rows:
                wr.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4]), repr(r[5]), r[6],
                             "" if r[7] is None else repr(r[7]), r[8]])
        emit(f"sweep written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrkf", description="Multirate steady-state Kalman filter design.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON config file or bundled config name")
        sp.add_argument("--out", help="output path (overrides the config)")
        return sp

    common(sub.add_parser("design", help="solve the LMI design and write a gain file"))
    sp = common(sub.add_parser("verify", help="check a gain file against the config"))
    sp.add_argument("--gains", help="gain file (default: output.gains)")
    sp = common(sub.add_parser("simulate", help="Monte-Carlo simulation with a gain file"))
    sp.add_argument("--gains", help="gain file (default: output.gains)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--noise-off", action="store_true", help="disable process and measurement noise")
    sp = common(sub.add_parser("sweep", help="trade-off sweep over a constraint parameter"))
    sp.add_argument("--param", choices=("pole_radius", "l2_bound"), required=True)
    sp.add_argument("--grid", help="comma-separated values (l2_bound: ratios to the optimum)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    return p


COMMANDS = {"design": cmd_design, "verify": cmd_verify, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except MrkfError as exc:
        kind = "infeasible" if isinstance(exc, Infeasible) else type(exc).__name__
        print(f"error ({kind}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
