"""Monitors over finished trajectories: energy budget, blow-up accumulator,
scaling equivariance, and the critical-norm dashboard."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .evolution import default_dt, integrate
from .fields import Grid, StateUF, Trajectory
from .littlewood_paley import BesovSpec, DyadicSystem, PreconditionError, _lr_combine

INF = math.inf


# ---------------------------------------------------------------------------
# energy

@dataclass(frozen=True)
class EnergyRecord:
    t: float
    kinetic: float
    elastic: float
    dissipation_integral: float
    budget_residual: float
    flagged: bool = False


def _snapshot_energies(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = traj.grid
    a2 = np.abs(traj.data) ** 2
    axes = tuple(range(2, a2.ndim))
    kin = np.sum(a2[:, : g.n], axis=(1,) + axes)
    ela = np.sum(a2[:, g.n:], axis=(1,) + axes)
    diss = 2.0 * np.sum(g.k2 * a2, axis=(1,) + axes)
    return kin, ela, diss


def energy_monitor(traj: Trajectory, tolerance: float = 1e-6) -> list[EnergyRecord]:
    """Energy records at every snapshot.

    When the trajectory carries a per-step log the dissipation integral is
    the integrator's own exponential dense-output quadrature; otherwise the
    trapezoid rule over snapshots. A record is flagged when its residual
    exceeds ``tolerance`` times the initial total energy.
    """
    if len(traj) == 0:
        return []
    kin, ela, diss = _snapshot_energies(traj)
    log = traj.log
    if log is not None and len(log.t) >= 2:
        cum = log.dissipation_integral
        idx = np.searchsorted(log.t, traj.times - 1e-12 * np.maximum(1.0, np.abs(traj.times)))
        idx = np.clip(idx, 0, len(log.t) - 1)
        dint = cum[idx]
    elif len(traj) >= 2:
        dint = cumulative_trapezoid(diss, traj.times, initial=0.0)
    else:
        dint = np.zeros(1)
    total0 = kin[0] + ela[0]
    resid = kin + ela + dint - total0
    limit = tolerance * (total0 if total0 > 0 else 1.0)
    return [EnergyRecord(float(t), float(k), float(e), float(d), float(r), bool(r > limit))
            for t, k, e, d, r in zip(traj.times, kin, ela, dint, resid)]


# ---------------------------------------------------------------------------
# blow-up accumulator

def default_blowup_spec(n: int) -> BesovSpec:
    return BesovSpec.critical(n, 2.0, 3.0, 3.0)


def check_blowup_spec(n: int, spec: BesovSpec) -> None:
    p, q = spec.p, spec.q
    if q is None or not 2 < q < INF:
        raise PreconditionError(f"need 2 < q < inf, got q={q}")
    if not 2 <= p < 2 * n:
        raise PreconditionError(f"need 2 <= p < 2n, got p={p}")
    if not n / p + 2 / q > 1.5:
        raise PreconditionError(f"need n/p + 2/q > 3/2, got {n / p + 2 / q}")
    if spec.r != q:
        raise PreconditionError(f"summation index must equal q, got r={spec.r}")
    if not spec.on_critical_line(n):
        raise PreconditionError(f"s={spec.s} is off the critical line s = -1 + n/p + 2/q")


@dataclass(frozen=True)
class BlowupAccumulator:
    spec: BesovSpec
    times: np.ndarray
    norms: np.ndarray
    accumulator: np.ndarray
    failed_at: Optional[float]
    growth: bool
    saturated: bool

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.accumulator)

    @property
    def running_integral(self) -> float:
        return float(self.accumulator[-1]) if len(self.accumulator) else 0.0


def blowup_monitor(traj: Trajectory, spec: Optional[BesovSpec] = None,
                   saturation_tol: float = 1e-8) -> BlowupAccumulator:
    """Running ``int_0^t ||(u, F)||^q dtau`` in the critical space ``B^s_{p,q}``.

    ``growth`` is set when the integrator failed or the increment rate keeps
    rising to more than twice its initial value; ``saturated`` when the last
    increment is below ``saturation_tol`` with no growth signal.
    """
    g = traj.grid
    spec = spec or default_blowup_spec(g.n)
    check_blowup_spec(g.n, spec)
    lp = DyadicSystem.for_grid(g)
    with np.errstate(all="ignore"):
        blocks = lp.block_norms(traj.data, spec.p)
        norms = np.sum(lp.besov_from_blocks(blocks, spec), axis=1)
    q = spec.q
    if len(traj) >= 2:
        acc = cumulative_trapezoid(norms**q, traj.times, initial=0.0)
    else:
        acc = np.zeros(len(traj))
    growth = traj.failed
    if not growth and len(acc) >= 4:
        rates = np.diff(acc) / np.diff(traj.times)
        tail = rates[-3:]
        growth = bool(rates[0] > 0 and rates[-1] > 2 * rates[0] and np.all(np.diff(tail) > 0))
    saturated = bool(not growth and len(acc) >= 2 and acc[-1] - acc[-2] < saturation_tol)
    return BlowupAccumulator(spec, traj.times.copy(), norms, acc, traj.failed_at, bool(growth), saturated)


# ---------------------------------------------------------------------------
# scaling equivariance

def dilate(state: StateUF, delta: int, grid: Optional[Grid] = None) -> StateUF:
    """``delta * state(delta x)``: the coefficient at ``delta k`` is ``delta c(k)``."""
    if int(delta) != delta or delta < 1:
        raise ValueError(f"dilation factor must be a positive integer, got {delta}")
    delta = int(delta)
    src = state.grid
    grid = grid or Grid(src.n, src.m * delta, src.length)
    if grid.m < src.m * delta:
        raise ValueError("rescaled grid must have at least delta times the base resolution")
    z = state.packed()
    out = np.zeros((src.ncomp,) + grid.shape, dtype=complex)
    idx = tuple((delta * i) % grid.m for i in src.index)
    out[(slice(None),) + idx] = delta * z
    out[:, grid.nyquist] = 0.0
    return StateUF.from_packed(grid, out, state.t)


@dataclass(frozen=True)
class ScalingReport:
    delta: int
    times: np.ndarray
    discrepancy: float
    discrepancy_u: float
    discrepancy_F: float
    richardson: float


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    den = math.sqrt(float(np.sum(np.abs(b) ** 2)))
    num = math.sqrt(float(np.sum(np.abs(a - b) ** 2)))
    return num / den if den > 0 else num


def scaling_check(state0: StateUF, delta: int, T: float, *, dt: Optional[float] = None,
                  samples: int = 9, richardson: bool = True) -> ScalingReport:
    """Compare the rescaled run against the rescaled base run.

    The base run uses ``dt`` on ``[0, T]``; the dilated data runs on a grid
    ``delta`` times finer with ``dt / delta^2`` on ``[0, T / delta^2]``.
    Because the heat factors agree mode by mode, the two runs are exact
    images of each other up to rounding. ``richardson`` is the estimated
    integrator error of the base run (from a half-step rerun).
    """
    if isinstance(delta, bool) or int(delta) != delta or delta < 1:
        raise ValueError(f"dilation factor must be a positive integer, got {delta}")
    delta = int(delta)
    g = state0.grid
    dt = default_dt(g, state0.packed()) if dt is None else dt
    times = np.linspace(0.0, T, samples)
    base = integrate(state0, T, times=state0.t + times, dt=dt, raise_on_divergence=True)
    scaled0 = dilate(state0, delta)
    scaled = integrate(scaled0, T / delta**2, times=state0.t + times / delta**2, dt=dt / delta**2,
                       raise_on_divergence=True)
    worst_u = worst_F = 0.0
    for i in range(len(times)):
        expect = dilate(base[i], delta, scaled.grid).packed()
        got = scaled.data[i]
        worst_u = max(worst_u, _rel(got[: g.n], expect[: g.n]))
        worst_F = max(worst_F, _rel(got[g.n:], expect[g.n:]))
    est = 0.0
    if richardson:
        half = integrate(state0, T, times=state0.t + times, dt=dt / 2, raise_on_divergence=True)
        est = max(_rel(base.data[i], half.data[i]) for i in range(len(times))) / 15.0
    return ScalingReport(delta, times, max(worst_u, worst_F), worst_u, worst_F, est)


# ---------------------------------------------------------------------------
# dashboard

@dataclass
class Dashboard:
    times: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    lq_columns: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def header(self) -> list[str]:
        return ["t"] + list(self.columns)

    def rows(self) -> list[list[float]]:
        cols = [self.times] + list(self.columns.values())
        return [[float(c[i]) for c in cols] for i in range(len(self.times))]


def critical_dashboard(traj: Trajectory, specs: Sequence[BesovSpec]) -> Dashboard:
    """Instantaneous critical norms and running Chemin-Lerner norms over ``[0, t]``.

    ``lq_columns`` holds the running plain ``L^q(0, t; B)`` norms for
    comparison with the Chemin-Lerner columns.
    """
    g = traj.grid
    lp = DyadicSystem.for_grid(g)
    dash = Dashboard(traj.times.copy())
    for spec in specs:
        if spec.q is None:
            raise PreconditionError("dashboard specs need a time exponent q")
        if not spec.on_critical_line(g.n):
            raise PreconditionError(f"spec {spec} is off the critical line")
        blocks = lp.block_norms(traj.data, spec.p)                     # (K, C, J)
        inst_c = lp.besov_from_blocks(blocks, spec)                    # (K, C)
        inst = np.sum(inst_c, axis=1)
        q = spec.q
        if q == INF:
            cl_t = np.maximum.accumulate(blocks, axis=0)
            lq_t = np.maximum.accumulate(inst_c, axis=0)
        elif len(traj) >= 2:
            cl_t = cumulative_trapezoid(blocks**q, traj.times, axis=0, initial=0.0) ** (1.0 / q)
            lq_t = cumulative_trapezoid(inst_c**q, traj.times, axis=0, initial=0.0) ** (1.0 / q)
        else:
            cl_t = np.zeros_like(blocks)
            lq_t = np.zeros_like(inst_c)
        cl = np.sum(_lr_combine(cl_t * lp.weights(spec.s), spec.r), axis=1)
        name_b = f"B_{spec.label}_inst"
        name_l = f"L_{q:g}_cum"
        if name_b in dash.columns or name_l in dash.columns:
            name_b, name_l = f"{name_b}_{len(dash.columns) // 2}", f"{name_l}_{len(dash.columns) // 2}"
        dash.columns[name_b] = inst
        dash.columns[name_l] = cl
        dash.lq_columns[name_l] = np.sum(lq_t, axis=1)
    return dash
