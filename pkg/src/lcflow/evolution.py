"""Heat semigroup, integrating-factor RK4 stepping, Picard iteration of the
Duhamel map, and the frequency-split local-existence constructor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .fields import Grid, StateUF, StepLog, Trajectory, symmetrize, to_physical
from .littlewood_paley import BesovSpec, DyadicSystem
from .spectral import project, rhs


class DivergenceError(FloatingPointError):
    """Non-finite coefficients appeared; ``t`` is the time of the failed step."""

    def __init__(self, t: float, message: str = ""):
        super().__init__(message or f"integrator diverged at t={t:.6g}")
        self.t = t


# ---------------------------------------------------------------------------
# heat semigroup

def heat_factor(grid: Grid, t: float) -> np.ndarray:
    return np.exp(-grid.k2 * t)


class HeatPropagator:
    """``e^{t lap}`` as a mode-wise multiplier."""

    def __init__(self, grid: Grid):
        self.grid = grid

    def __call__(self, z: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"heat flow needs t >= 0, got {t}")
        return z * heat_factor(self.grid, t)


def heat_flow(state0: StateUF, t: float) -> StateUF:
    """Solve the linear part exactly: every mode decays by ``exp(-|k|^2 t)``."""
    if t < 0:
        raise ValueError(f"heat flow needs t >= 0, got {t}")
    g = state0.grid
    z = state0.packed() * heat_factor(g, t)
    return StateUF.from_packed(g, z, state0.t + t)


# ---------------------------------------------------------------------------
# time stepping

def default_dt(grid: Grid, z: Optional[np.ndarray] = None) -> float:
    """``min(0.4 / kmax^2, 0.5 dx / max|u|)`` with ``kmax`` the dealiased cutoff."""
    dt = 0.4 / grid.kmax_dealiased**2
    if z is not None:
        umax = float(np.max(np.abs(to_physical(grid, z[: grid.n])))) if np.any(z[: grid.n]) else 0.0
        if umax > 0:
            dt = min(dt, 0.5 * grid.dx / umax)
    return dt


def _finish(grid: Grid, z: np.ndarray) -> np.ndarray:
    z[: grid.n] = project(grid, z[: grid.n])
    return symmetrize(grid, z)


def _if_rk4(grid: Grid, z: np.ndarray, dt: float, E: np.ndarray, E2: np.ndarray,
            a: Optional[np.ndarray] = None) -> np.ndarray:
    """One Lawson (integrating-factor) RK4 step of ``z' = lap z + N(z)``.

    ``a`` is ``N(z)`` when the caller already has it.
    """
    if a is None:
        a = rhs(grid, z)
    b = rhs(grid, E2 * (z + 0.5 * dt * a))
    c = rhs(grid, E2 * z + 0.5 * dt * b)
    d = rhs(grid, E * z + dt * E2 * c)
    new = E * z + (dt / 6.0) * (E * a + 2.0 * E2 * (b + c) + d)
    return _finish(grid, new)


@lru_cache(maxsize=64)
def _factors(grid: Grid, dt: float) -> tuple[np.ndarray, np.ndarray]:
    return heat_factor(grid, dt), heat_factor(grid, dt / 2)


def step(state: StateUF, dt: float) -> StateUF:
    """Advance one integrating-factor RK4 step; raises :class:`DivergenceError`."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = state.grid
    E, E2 = _factors(g, float(dt))
    with np.errstate(all="ignore"):
        z = _if_rk4(g, state.packed(), dt, E, E2)
    if not np.all(np.isfinite(z)):
        raise DivergenceError(state.t + dt)
    return StateUF.from_packed(g, z, state.t + dt)


def _energies(grid: Grid, z: np.ndarray) -> tuple[float, float, float]:
    n = grid.n
    with np.errstate(over="ignore"):
        a2 = np.abs(z) ** 2
    kin = float(np.sum(a2[:n]))
    ela = float(np.sum(a2[n:]))
    diss = 2.0 * float(np.sum(grid.k2 * a2))
    return kin, ela, diss


def integrate(
    state0: StateUF,
    T: float,
    *,
    snapshots: int = 65,
    times: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
    raise_on_divergence: bool = False,
) -> Trajectory:
    """Run the step integrator and sample the state at the requested times.

    Substeps between consecutive sample times are equal, so samples land on
    step boundaries exactly. Energy, elastic energy and dissipation rate are
    logged after every step. On divergence the returned trajectory stops at
    the last good sample and ``failed_at`` holds the failing step time.
    """
    g = state0.grid
    t0 = state0.t
    if times is None:
        if T < 0:
            raise ValueError(f"horizon must be nonnegative, got {T}")
        times = t0 + np.linspace(0.0, T, max(int(snapshots), 2)) if T > 0 else np.array([t0])
    times = np.asarray(times, dtype=float)
    if abs(times[0] - t0) > 1e-12 * max(1.0, abs(t0)):
        raise ValueError("first sample time must equal the initial state's time")
    z = state0.packed().copy()
    dt_max = default_dt(g, z) if dt is None else float(dt)

    data = [z.copy()]
    kin, ela, diss = _energies(g, z)
    log_t, log_k, log_e, log_d = [t0], [kin], [ela], [diss]
    quad = _DissipationQuadrature(g)
    failed_at = None
    t = t0
    for target in times[1:]:
        gap = target - t
        nsub = max(1, math.ceil(gap / dt_max - 1e-9))
        h = gap / nsub
        E, E2 = _factors(g, h)
        for i in range(nsub):
            with np.errstate(all="ignore"):
                a = rhs(g, z)
                quad.push(log_t[-1], z, a)
                z = _if_rk4(g, z, h, E, E2, a)
            t_step = t + (i + 1) * h if i + 1 < nsub else target
            if not np.all(np.isfinite(z)):
                failed_at = t_step
                break
            kin, ela, diss = _energies(g, z)
            log_t.append(t_step); log_k.append(kin); log_e.append(ela); log_d.append(diss)
        if failed_at is not None:
            break
        t = target
        data.append(z.copy())
    if failed_at is None:
        with np.errstate(all="ignore"):
            quad.push(log_t[-1], z, rhs(g, z))
    if failed_at is not None and raise_on_divergence:
        raise DivergenceError(failed_at)
    log = StepLog(np.array(log_t), np.array(log_k), np.array(log_e), np.array(log_d),
                  quad.finish(len(log_t)))
    return Trajectory(g, times[: len(data)], np.stack(data), failed_at=failed_at, log=log)


_GAUSS = np.polynomial.legendre.leggauss(4)


@lru_cache(maxsize=64)
def _dense_weights(grid: Grid, h: float, offsets: tuple[float, ...]) -> tuple:
    """Free-decay integral ``1 - e^{-2 k^2 h}`` and, per Gauss point of
    ``[0, h]``, the heat factor and Duhamel weights.

    ``offsets`` are node times relative to the step start, in units of ``h``.
    """
    points = []
    for x, w in zip(*_GAUSS):
        s = 0.5 * h * (x + 1.0)
        ws = exponential_weights(grid.k2 * s, [o * h / s for o in offsets], s)
        points.append((0.5 * h * w, heat_factor(grid, s), ws))
    return -np.expm1(-2.0 * grid.k2 * h), tuple(points)


class _DissipationQuadrature:
    """Running ``2 int ||grad z||^2`` from the step states and their ``N(z)``.

    Inside each step the state is rebuilt by variation of constants,
    ``z(s) = e^{s lap} z_k + I(s)`` with ``I`` the Duhamel integral of the
    cubic through ``N`` at four neighbouring steps. The free-decay part of
    the rate integrates in closed form; Gauss-Legendre handles the terms
    with ``I``, so modes that decay within a step stay resolved.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.window: list[tuple[float, np.ndarray, np.ndarray]] = []
        self.first = 0          # step index of window[0]
        self.done: list[float] = []   # integral over step k, in order

    def push(self, t: float, z: np.ndarray, N: np.ndarray) -> None:
        self.window.append((t, z.copy(), N.copy()))
        if len(self.window) > 4:
            self.window.pop(0)
            self.first += 1
        if len(self.window) == 4:
            if not self.done:
                self.done.append(self._step(0))
            self.done.append(self._step(1))

    def _step(self, k: int) -> float:
        """Integral over window step ``k -> k + 1`` using every window node."""
        g = self.grid
        t0, z0, _ = self.window[k]
        h = self.window[k + 1][0] - t0
        offs = tuple(round((t - t0) / h, 9) for t, _, _ in self.window)
        free, points = _dense_weights(g, float(h), offs)
        total = float(np.sum(free * (z0.real**2 + z0.imag**2)))
        for w, decay, ws in points:
            zh = decay * z0
            I = sum(wl * Nl for wl, (_, _, Nl) in zip(ws, self.window))
            cross = 2.0 * (zh.real * I.real + zh.imag * I.imag) + I.real**2 + I.imag**2
            total += w * 2.0 * float(np.sum(g.k2 * cross))
        return total

    def finish(self, points: int) -> np.ndarray:
        """Cumulative integrals at the ``points`` pushed times."""
        for k in range(len(self.done), points - 1):
            self.done.append(self._step(k - self.first))
        return np.concatenate([[0.0], np.cumsum(self.done)])


# ---------------------------------------------------------------------------
# Duhamel quadrature

def _phi_functions(x: np.ndarray, count: int) -> list[np.ndarray]:
    """``phi_1 .. phi_count`` of ``x`` (``phi_k(x) = sum_j x^j / (j+k)!``)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1.0
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    out = []
    prev = np.exp(xl)
    for k in range(1, count + 1):
        big = (prev - 1.0 / math.factorial(k - 1)) / xl
        series = np.zeros_like(x)
        term = np.full_like(x, 1.0 / math.factorial(k))
        for j in range(30):
            series = series + term
            term = term * xs / (j + k + 1)
        out.append(np.where(small, series, big))
        prev = big
    return out


def exponential_weights(lam_h: np.ndarray, offsets: Sequence[int], h: float) -> list[np.ndarray]:
    """Weights ``w_l`` with ``int_0^h e^{-lam (h - s)} p(s) ds = sum_l w_l p(o_l h)``.

    ``p`` is the cubic through the nodes ``o_l h``; the exponential is
    integrated exactly, so stiff modes carry no step-size restriction.
    """
    nodes = np.asarray(offsets, dtype=float)
    phis = _phi_functions(-lam_h, len(nodes))
    # mu_p = int_0^1 e^{-z(1-theta)} theta^p dtheta = p! phi_{p+1}(-z)
    mus = [math.factorial(p) * phis[p] for p in range(len(nodes))]
    weights = []
    for l in range(len(nodes)):
        others = np.delete(nodes, l)
        poly = np.poly(others) / np.prod(nodes[l] - others)  # highest degree first
        coeffs = poly[::-1]
        weights.append(h * sum(c * mu for c, mu in zip(coeffs, mus)))
    return weights


class Duhamel:
    """``I(t_i) = int_0^{t_i} e^{(t_i - s) lap} N(s) ds`` on uniform samples."""

    def __init__(self, grid: Grid, times: np.ndarray, quadrature: str = "exponential"):
        times = np.asarray(times, dtype=float)
        if len(times) < 4:
            raise ValueError("Duhamel quadrature needs at least four samples")
        h = float(times[1] - times[0])
        if not np.allclose(np.diff(times), h, rtol=1e-10, atol=0):
            raise ValueError("Duhamel quadrature needs uniform samples")
        if quadrature not in ("exponential", "trapezoid"):
            raise ValueError(f"unknown quadrature {quadrature!r}")
        self.grid, self.times, self.h, self.quadrature = grid, times, h, quadrature
        lam_h = grid.k2 * h
        self.decay = np.exp(-lam_h)
        self.rules = {
            "first": exponential_weights(lam_h, (0, 1, 2, 3), h),
            "inner": exponential_weights(lam_h, (-1, 0, 1, 2), h),
            "last": exponential_weights(lam_h, (-2, -1, 0, 1), h),
        }

    def __call__(self, N: np.ndarray) -> np.ndarray:
        K = len(self.times)
        out = np.zeros_like(N)
        for i in range(1, K):
            if self.quadrature == "trapezoid":
                inc = 0.5 * self.h * (self.decay * N[i - 1] + N[i])
            else:
                if i == 1:
                    w, s = self.rules["first"], 0
                elif i == K - 1:
                    w, s = self.rules["last"], K - 4
                else:
                    w, s = self.rules["inner"], i - 2
                inc = sum(wl * N[s + l] for l, wl in enumerate(w))
            out[i] = self.decay * out[i - 1] + inc
        return out


# ---------------------------------------------------------------------------
# Picard iteration

@dataclass(frozen=True)
class PicardConfig:
    T: float = 0.25
    K: int = 64
    max_iter: int = 30
    tol: float = 1e-10
    spec: Optional[BesovSpec] = None
    quadrature: str = "exponential"

    def __post_init__(self):
        if self.K < 8:
            raise ValueError(f"K must be at least 8, got {self.K}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    def metric(self, n: int) -> BesovSpec:
        return self.spec if self.spec is not None else BesovSpec.critical(n, 2.0, 2.0, 4.0)


@dataclass
class PicardResult:
    trajectory: Trajectory
    ratios: list[float]
    distances: list[float]
    C0: float
    converged: bool
    non_contraction: bool
    iterations: int
    heat_norm: float

    @property
    def contracted(self) -> bool:
        return self.converged and not self.non_contraction


def picard_iterate(state0: StateUF, cfg: PicardConfig = PicardConfig()) -> PicardResult:
    """Iterate ``z <- e^{t lap} z0 + Duhamel(N(z))`` on ``K`` uniform samples.

    The stopping test is relative: ``dist < tol * ||heat part||`` in the
    Chemin-Lerner metric. ``C0`` is the largest observed
    ``||Duhamel(N(z))|| / ||z||^2``.
    """
    g = state0.grid
    spec = cfg.metric(g.n)
    lp = DyadicSystem.for_grid(g)
    times = state0.t + np.linspace(0.0, cfg.T, cfg.K)
    z0 = state0.packed()
    y = np.stack([z0 * heat_factor(g, t - state0.t) for t in times])
    duhamel = Duhamel(g, times, cfg.quadrature)

    def norm(x):
        return lp.chemin_lerner(times, x, spec)

    heat_norm = norm(y)
    z = y.copy()
    ratios: list[float] = []
    dists: list[float] = []
    C0 = 0.0
    converged = non_contraction = False
    above = 0
    it = 0
    with np.errstate(all="ignore"):
        for it in range(1, cfg.max_iter + 1):
            N = np.stack([rhs(g, zi) for zi in z])
            B = duhamel(N)
            new = y + B
            nz = norm(z)
            if nz > 0 and np.isfinite(nz):
                C0 = max(C0, norm(B) / nz**2)
            d = norm(new - z)
            z = new
            if not np.isfinite(d) or not np.all(np.isfinite(z)):
                dists.append(math.inf)
                non_contraction = True
                break
            dists.append(d)
            if len(dists) >= 2:
                ratio = d / dists[-2] if dists[-2] > 0 else 0.0
                ratios.append(ratio)
                above = above + 1 if ratio > 1 else 0
                if above >= 3:
                    non_contraction = True
                    break
            if d <= cfg.tol * heat_norm:
                converged = True
                break
    traj = Trajectory(g, times, z if np.all(np.isfinite(z)) else y)
    return PicardResult(traj, ratios, dists, float(C0), converged, non_contraction, it, heat_norm)


# ---------------------------------------------------------------------------
# frequency splitting and continuation

@dataclass(frozen=True)
class SplitReport:
    N: int
    T_local: float
    eps: float
    C1: float
    C2: float
    high_norm: float
    low_norm: float
    total_norm: float
    q1: float
    saturated: bool = False


def data_spec(n: int, p: float = 2.0, r: float = 2.0) -> BesovSpec:
    """Critical data space ``B^{-1+n/p}_{p,r}``."""
    return BesovSpec.critical(n, p, r)


def local_time(eps: float, N: int, norm: float, C2: float = 1.0, q1: float = 4.0) -> float:
    """``(eps / (C2 2^{1 + 2N/q1} ||z0||))^{q1}``; infinite for zero data."""
    if norm == 0:
        return math.inf
    return (eps / (C2 * 2.0 ** (1.0 + 2.0 * N / q1) * norm)) ** q1


def sharp_split(grid: Grid, z: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Split at ``|xi| > 2^N`` with indicator multipliers; ``high + low == z``."""
    mask = grid.kmag > 2.0**N
    high = np.where(mask, z, 0)
    low = np.where(mask, 0, z)
    return high, low


def split_initial_data(
    state0: StateUF,
    eps: float,
    spec: Optional[BesovSpec] = None,
    q1: float = 4.0,
    C1: float = 1.0,
    C2: float = 1.0,
) -> tuple[StateUF, StateUF, SplitReport]:
    """Smallest level ``N`` whose high part satisfies ``||high|| <= eps / (2 C1)``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    g = state0.grid
    spec = spec or data_spec(g.n)
    lp = DyadicSystem.for_grid(g)
    z = state0.packed()
    total = lp.besov(z, spec, strict=False)
    target = eps / (2.0 * C1)
    chosen, saturated = None, True
    for N in range(lp.jmin, lp.jmax + 1):
        high, low = sharp_split(g, z, N)
        if lp.besov(high, spec, strict=False) <= target:
            chosen, saturated = N, False
            break
    if chosen is None:
        chosen = lp.jmax
        high, low = sharp_split(g, z, chosen)
    high_norm = lp.besov(high, spec, strict=False)
    low_norm = lp.besov(low, spec, strict=False)
    report = SplitReport(chosen, local_time(eps, chosen, total, C2, q1), eps, C1, C2,
                         high_norm, low_norm, total, q1, saturated)
    t = state0.t
    return StateUF.from_packed(g, high, t), StateUF.from_packed(g, low, t), report


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    N: int
    T_local: float


def continue_solution(
    state0: StateUF,
    T_target: float,
    eps: float,
    *,
    spec: Optional[BesovSpec] = None,
    q1: float = 4.0,
    C1: float = 1.0,
    C2: float = 1.0,
    snapshots: int = 65,
    dt: Optional[float] = None,
    max_segments: int = 10_000,
) -> Trajectory:
    """Advance segment by segment, each of length ``min(T_local, remaining)``.

    ``T_local`` is re-evaluated from the state at the start of each segment.
    Samples are taken on a uniform grid of ``snapshots`` times plus every
    segment boundary.
    """
    g = state0.grid
    t0 = state0.t
    t_end = t0 + T_target
    grid_times = t0 + np.linspace(0.0, T_target, max(int(snapshots), 2))
    segments: list[Segment] = []
    datas = [state0.packed()[None]]
    times = [np.array([t0])]
    logs = []
    state = state0
    failed_at = None
    while state.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        if len(segments) >= max_segments:
            failed_at = state.t
            break
        _, _, rep = split_initial_data(state, eps, spec, q1, C1, C2)
        seg_end = min(state.t + rep.T_local, t_end)
        if t_end - seg_end < 1e-12 * max(1.0, abs(t_end)):
            seg_end = t_end
        inner = grid_times[(grid_times > state.t) & (grid_times < seg_end)]
        seg_times = np.concatenate([[state.t], inner, [seg_end]])
        traj = integrate(state, seg_end - state.t, times=seg_times, dt=dt)
        segments.append(Segment(state.t, seg_end, rep.N, rep.T_local))
        datas.append(traj.data[1:])
        times.append(traj.times[1:])
        logs.append(traj.log)
        if traj.failed:
            failed_at = traj.failed_at
            break
        state = traj[len(traj) - 1]
        state.t = seg_end
    if logs:
        log = StepLog(
            np.concatenate([logs[0].t] + [lg.t[1:] for lg in logs[1:]]),
            np.concatenate([logs[0].kinetic] + [lg.kinetic[1:] for lg in logs[1:]]),
            np.concatenate([logs[0].elastic] + [lg.elastic[1:] for lg in logs[1:]]),
            np.concatenate([logs[0].dissipation_rate] + [lg.dissipation_rate[1:] for lg in logs[1:]]),
            np.concatenate([logs[0].dissipation_integral]
                           + [lg.dissipation_integral[1:] + sum(p.dissipation_integral[-1] for p in logs[:i + 1])
                              for i, lg in enumerate(logs[1:])]),
        )
    else:
        kin, ela, diss = _energies(g, state0.packed())
        log = StepLog(np.array([t0]), np.array([kin]), np.array([ela]), np.array([diss]), np.zeros(1))
    return Trajectory(g, np.concatenate(times), np.concatenate(datas), failed_at=failed_at,
                      log=log, segments=segments)


# ---------------------------------------------------------------------------
# calibration of the heat-flow constants

@dataclass(frozen=True)
class HeatConstants:
    C1: float
    C2: float


def measure_heat_constants(
    grid: Grid, p: float = 2.0, r: float = 2.0, q1: float = 4.0, trials: int = 10,
    seed: int = 0, K: int = 257,
) -> HeatConstants:
    """Empirical constants of the two heat-flow bounds used by the split.

    ``C1``: ``||e^{t lap} z0||_{LL^{q1}(0,inf; B^{s+2/q1})} / ||z0||_{B^s}``.
    ``C2``: ``||e^{t lap} z_low||_{LL^{q1}(0,T; B^{s+2/q1})} / (2^{2N/q1} T^{1/q1} ||z0||_{B^s})``,
    with ``z_low`` the part of ``z0`` at ``|xi| <= 2^N``.
    """
    from .random_fields import random_coefficients

    lp = DyadicSystem.for_grid(grid)
    s_data = data_spec(grid.n, p, r)
    s_time = BesovSpec.critical(grid.n, p, r, q1)
    kmax = grid.m // 2 - 1
    long_T = 20.0 / grid.k0**2
    # geometric sampling resolves fast decay of high blocks
    t_long = np.concatenate([[0.0], np.geomspace(1e-6 / grid.k0**2, long_T, K - 1)])
    c1 = c2 = 0.0
    for trial in range(trials):
        z0 = random_coefficients(grid, (seed << 32) + trial, kmin=1, kmax=kmax, slope=1.0)[0][None]
        base = lp.besov(z0, s_data)
        traj = np.stack([z0 * heat_factor(grid, t) for t in t_long])
        c1 = max(c1, lp.chemin_lerner(t_long, traj, s_time) / base)
        for N in range(max(lp.jmin, 0), lp.jmax):
            low = np.where(grid.kmag <= 2.0**N, z0, 0)
            for T in (0.01, 0.1, 1.0):
                ts = np.linspace(0.0, T, 65)
                tr = np.stack([low * heat_factor(grid, t) for t in ts])
                val = lp.chemin_lerner(ts, tr, s_time)
                c2 = max(c2, val / (2.0 ** (2.0 * N / q1) * T ** (1.0 / q1) * base))
    return HeatConstants(float(c1), float(c2))
