"""Command-line front end.

Exit codes: 0 success, 1 input/output failure, 2 configuration error,
3 numerical divergence, 4 failed invariant.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_besov, parse_config
from .io import SnapshotError, emit_csv, read_snapshot, write_snapshot

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INVARIANT = 0, 1, 2, 3, 4


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    extra = "\n".join(args.set or [])
    return parse_config(text + "\n" + extra)


def _outdir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _state(cfg: RunConfig):
    try:
        return cfg.initial_state()
    except SnapshotError:
        raise
    except (OSError, ValueError) as exc:
        raise _Exit(EXIT_CONFIG, f"cannot build initial state: {exc}") from None


def _on_grid(times: np.ndarray, t0: float, T: float, count: int) -> np.ndarray:
    """Indices of ``times`` on the uniform output grid (segment boundaries excluded)."""
    grid = t0 + np.linspace(0.0, T, max(count, 2))
    tol = 1e-12 * max(1.0, abs(t0) + T)
    pos = np.searchsorted(times, grid - tol)
    pos = pos[pos < len(times)]
    return pos[np.abs(times[pos] - grid[: len(pos)]) <= tol]


def cmd_simulate(cfg: RunConfig, args) -> int:
    from .diagnostics import critical_dashboard, energy_monitor
    from .evolution import continue_solution
    from .io import table, write_csv

    state = _state(cfg)
    traj = continue_solution(state, cfg.T, cfg.eps, q1=cfg.q1, C1=cfg.C1, C2=cfg.C2,
                             snapshots=cfg.snapshots, dt=cfg.dt)
    keep = _on_grid(traj.times, state.t, cfg.T, cfg.snapshots)
    out = _outdir(cfg, args)
    for i, idx in enumerate(keep[:: cfg.stride]):
        write_snapshot(out / f"snap_{i * cfg.stride:05d}.nlcf", traj[int(idx)], args.overwrite)
    records = energy_monitor(traj)
    emit_csv([records[i] for i in keep], out / "energy.csv", kind="energy", overwrite=args.overwrite)
    if len(traj) >= 2:
        header, rows = table(critical_dashboard(traj, cfg.specs()))
        write_csv(out / "dashboard.csv", header, [rows[i] for i in keep], args.overwrite)
    worst = max((abs(r.budget_residual) for r in records), default=0.0)
    print(f"simulate: t_end={traj.times[-1]:.6g} samples={len(keep)} segments={len(traj.segments)} "
          f"max_budget_residual={worst:.3e}")
    if traj.failed:
        raise _Exit(EXIT_DIVERGED, f"integrator diverged at t={traj.failed_at:.6g}")
    if any(r.flagged for r in records):
        raise _Exit(EXIT_INVARIANT, "energy budget violated")
    return EXIT_OK


def cmd_picard(cfg: RunConfig, args) -> int:
    from .evolution import PicardConfig, picard_iterate

    state = _state(cfg)
    res = picard_iterate(state, PicardConfig(T=cfg.T, K=cfg.K, max_iter=cfg.max_iter, tol=cfg.tol))
    ratios = ",".join(f"{r:.3g}" for r in res.ratios)
    status = "converged" if res.converged else ("non-contraction" if res.non_contraction else "max-iter")
    print(f"picard: {status} iterations={res.iterations} C0={res.C0:.6g} ratios=[{ratios}]")
    return EXIT_OK


def cmd_split_time(cfg: RunConfig, args) -> int:
    from .evolution import split_initial_data

    state = _state(cfg)
    high, low, rep = split_initial_data(state, cfg.eps, q1=cfg.q1, C1=cfg.C1, C2=cfg.C2)
    out = _outdir(cfg, args)
    write_snapshot(out / "high.nlcf", high, args.overwrite)
    write_snapshot(out / "low.nlcf", low, args.overwrite)
    print(f"split-time: N={rep.N} T_local={rep.T_local:.6g} high_norm={rep.high_norm:.6g} "
          f"low_norm={rep.low_norm:.6g} saturated={rep.saturated}")
    return EXIT_OK


def cmd_scaling(cfg: RunConfig, args) -> int:
    from .diagnostics import scaling_check

    rep = scaling_check(_state(cfg), cfg.delta, cfg.T, dt=cfg.dt)
    print(f"scaling-check: delta={rep.delta} discrepancy={rep.discrepancy:.3e} richardson={rep.richardson:.3e}")
    if rep.discrepancy > max(1e-5, 10 * rep.richardson):
        raise _Exit(EXIT_INVARIANT, "scaling discrepancy above tolerance")
    return EXIT_OK


def cmd_stability(cfg: RunConfig, args) -> int:
    from .evolution import integrate
    from .fields import StateUF
    from .random_fields import random_band_state
    from .stability import gronwall_verify

    a = _state(cfg)
    norm = math.sqrt(float(np.sum(np.abs(a.packed()) ** 2)))
    bump = random_band_state(cfg.grid, cfg.seed + 1, 1, min(4, cfg.m // 2 - 1), cfg.perturbation * max(norm, 1e-300))
    b = StateUF(cfg.grid, a.u + bump.u, a.F + bump.F, a.t)
    times = np.linspace(0.0, cfg.T, cfg.snapshots)
    ta = integrate(a, cfg.T, times=times, dt=cfg.dt)
    tb = integrate(b, cfg.T, times=times, dt=cfg.dt)
    if ta.failed or tb.failed:
        raise _Exit(EXIT_DIVERGED, "integrator diverged")
    spec = cfg.besov[0] if cfg.besov else None
    rep = gronwall_verify(ta, tb, spec)
    out = _outdir(cfg, args)
    emit_csv(rep, out / "gronwall.csv", overwrite=args.overwrite)
    print(f"stability: C_used={rep.C_used:.6g} polarization_defect={rep.polarization_defect:.2e}")
    if not math.isfinite(rep.C_used) or rep.polarization_defect > 1e-12:
        raise _Exit(EXIT_INVARIANT, "Gronwall envelope check failed")
    return EXIT_OK


def cmd_blowup(cfg: RunConfig, args) -> int:
    from .diagnostics import blowup_monitor
    from .evolution import integrate

    traj = integrate(_state(cfg), cfg.T, snapshots=cfg.snapshots, dt=cfg.dt)
    spec = cfg.besov[0] if cfg.besov else None
    try:
        acc = blowup_monitor(traj, spec)
    except ValueError as exc:
        raise _Exit(EXIT_CONFIG, str(exc)) from None
    out = _outdir(cfg, args)
    emit_csv(acc, out / "blowup.csv", overwrite=args.overwrite)
    print(f"blowup: integral={acc.running_integral:.6g} growth={acc.growth} saturated={acc.saturated} "
          f"failed_at={acc.failed_at}")
    if traj.failed:
        raise _Exit(EXIT_DIVERGED, f"integrator diverged at t={traj.failed_at:.6g}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verify import run_suite

    results = run_suite()
    for r in results:
        print(f"  [{'ok' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    passed = sum(r.passed for r in results)
    print(f"verify: {passed}/{len(results)} invariant groups passed")
    if passed != len(results):
        raise _Exit(EXIT_INVARIANT, "invariant suite failed")
    return EXIT_OK


def cmd_norms(cfg: RunConfig, args) -> int:
    from .littlewood_paley import besov_norm

    state = read_snapshot(args.snapshot)
    specs = [parse_besov(s, state.grid.n) for s in args.besov] if args.besov else list(cfg.specs())
    for spec in specs:
        val = besov_norm(state, spec, strict=False)
        print(f"B_{spec.label} = {val!r}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "picard": cmd_picard,
    "split-time": cmd_split_time,
    "scaling-check": cmd_scaling,
    "stability": cmd_stability,
    "blowup": cmd_blowup,
    "verify": cmd_verify,
    "norms": cmd_norms,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a configuration entry")
        p.add_argument("-o", "--out", help="output directory (overrides 'output')")
        p.add_argument("--overwrite", action="store_true", help="replace existing output files")
        if name == "norms":
            p.add_argument("snapshot", help="snapshot file")
            p.add_argument("--besov", action="append", metavar="'s p r q' | 'p r q'")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _Exit as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (SnapshotError, OSError) as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
