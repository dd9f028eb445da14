"""Two-solution experiments: the (w, E) difference system, the Gronwall
envelope for ``||(w, E)||^2``, and Galerkin-truncation comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.integrate import cumulative_trapezoid

from .evolution import default_dt, integrate
from .fields import Grid, StateUF, Trajectory, real_to_spectral, resample, to_physical
from .littlewood_paley import BesovSpec, DyadicSystem, PreconditionError
from .spectral import project

INF = math.inf
_ROUNDING = 1e-13


class AlignmentError(ValueError):
    """Trajectories do not share a grid and sample times."""


@dataclass(frozen=True)
class DifferencePair:
    """``w = u - u~`` and ``E = F - F~`` at time ``t``."""

    w: np.ndarray
    E: np.ndarray
    t: float

    def divergence_defect(self, grid: Grid) -> float:
        scale = float(np.max(np.abs(self.w)))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(np.einsum("i...,i...->...", grid.k, self.w)))) / scale


def _check_aligned(a: Trajectory, b: Trajectory) -> None:
    if a.grid != b.grid:
        raise AlignmentError(f"grids differ: {a.grid} vs {b.grid}")
    if len(a) != len(b) or not np.allclose(a.times, b.times, rtol=1e-12, atol=1e-14):
        raise AlignmentError("snapshot times differ")


def difference_fields(traj_a: Trajectory, traj_b: Trajectory) -> list[DifferencePair]:
    _check_aligned(traj_a, traj_b)
    n = traj_a.grid.n
    diff = traj_a.data - traj_b.data
    shape = (n, n) + traj_a.grid.shape
    return [DifferencePair(d[:n], d[n:].reshape(shape), float(t)) for d, t in zip(diff, traj_a.times)]


@dataclass(frozen=True)
class ResidualTrace:
    times: np.ndarray
    residual_w: np.ndarray
    residual_E: np.ndarray

    @property
    def max_residual(self) -> float:
        if len(self.times) == 0:
            return 0.0
        return float(max(np.max(self.residual_w), np.max(self.residual_E)))


def _difference_terms(grid: Grid, za: np.ndarray, zb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nonlinear part of the difference system, written in ``(w, E)``.

    Returns ``P[w.grad u + u~.grad w + div(E^T F) + div(F~^T E)]`` and
    ``w.grad F + u~.grad E + E grad u + F~ grad w``, dealiased like the
    solver (inputs and outputs truncated, zero mode dropped).
    """
    n = grid.n
    mask = grid.dealias
    za, zb = za * mask, zb * mask
    d = za - zb
    ik = 1j * grid.k

    def phys_vec(c):
        return to_physical(grid, c)

    def grads_u(c):  # c: (n, ...) -> [i, j] = d_j c_i
        return to_physical(grid, ik[None, :] * c[:, None])

    def grads_F(c):  # c: (n, n, ...) -> [i, k, j] = d_j c_ik
        return to_physical(grid, ik[None, None, :] * c[:, :, None])

    shp = (n, n) + grid.shape
    u, ut, w = phys_vec(za[:n]), phys_vec(zb[:n]), phys_vec(d[:n])
    F, Ft, E = (to_physical(grid, x[n:].reshape(shp)) for x in (za, zb, d))
    du, dw = grads_u(za[:n]), grads_u(d[:n])
    dF, dE = grads_F(za[n:].reshape(shp)), grads_F(d[n:].reshape(shp))

    adv = np.einsum("j...,ij...->i...", w, du) + np.einsum("j...,ij...->i...", ut, dw)
    stress = np.einsum("ij...,ik...->jk...", E, F) + np.einsum("ij...,ik...->jk...", Ft, E)
    adv_hat = real_to_spectral(grid, adv)
    stress_hat = real_to_spectral(grid, stress)
    div_stress = np.einsum("k...,jk...->j...", ik, stress_hat)
    Nw = project(grid, adv_hat + div_stress) * mask

    tE = (np.einsum("j...,ikj...->ik...", w, dF) + np.einsum("j...,ikj...->ik...", ut, dE)
          + np.einsum("ij...,jk...->ik...", E, du) + np.einsum("ij...,jk...->ik...", Ft, dw))
    NE = real_to_spectral(grid, tE.reshape((n * n,) + grid.shape)) * mask
    zero = (slice(None),) + (0,) * n
    Nw[zero] = 0.0
    NE[zero] = 0.0
    return Nw, NE


def difference_residual(pairs: Sequence[DifferencePair], traj_a: Trajectory, traj_b: Trajectory) -> ResidualTrace:
    """L2 residual of both difference equations at interior samples.

    Time derivatives are centered differences of the pairs, so the residual
    of a smooth run is second order in the sample spacing.
    """
    _check_aligned(traj_a, traj_b)
    if len(pairs) != len(traj_a):
        raise AlignmentError("pair sequence and trajectories differ in length")
    if len(pairs) < 3:
        raise ValueError("centered differences need at least three samples")
    g = traj_a.grid
    n = g.n
    times = traj_a.times
    res_w, res_E = [], []
    for i in range(1, len(pairs) - 1):
        span = times[i + 1] - times[i - 1]
        dw = (pairs[i + 1].w - pairs[i - 1].w) / span
        dE = (pairs[i + 1].E - pairs[i - 1].E) / span
        Nw, NE = _difference_terms(g, traj_a.data[i], traj_b.data[i])
        rw = dw + g.k2 * pairs[i].w + Nw
        rE = dE.reshape((n * n,) + g.shape) + g.k2 * pairs[i].E.reshape((n * n,) + g.shape) + NE
        res_w.append(math.sqrt(float(np.sum(np.abs(rw) ** 2))))
        res_E.append(math.sqrt(float(np.sum(np.abs(rE) ** 2))))
    return ResidualTrace(times[1:-1].copy(), np.array(res_w), np.array(res_E))


# ---------------------------------------------------------------------------
# Gronwall envelope

@dataclass(frozen=True)
class GronwallReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    C_used: float
    exponent: np.ndarray          # int_0^t ||(u, F)||^q
    lhs_polarized: np.ndarray
    polarization_defect: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1 + _ROUNDING)))


def check_gronwall_spec(n: int, spec: BesovSpec) -> None:
    p, q = spec.p, spec.q
    if q is None or not 2 < q < INF:
        raise PreconditionError(f"need 2 < q < inf, got q={q}")
    if not 2 <= p < INF:
        raise PreconditionError(f"need 2 <= p < inf, got p={p}")
    if not n / p + 2 / q > 1:
        raise PreconditionError(f"need n/p + 2/q > 1, got {n / p + 2 / q}")


def _sq(a: np.ndarray, weight=None) -> np.ndarray:
    """Per-snapshot sum of squares over all component and grid axes."""
    x = np.abs(a) ** 2
    if weight is not None:
        x = x * weight
    return np.sum(x, axis=tuple(range(1, x.ndim)))


def _inner(a: np.ndarray, b: np.ndarray, weight=None) -> np.ndarray:
    x = np.real(a * np.conj(b))
    if weight is not None:
        x = x * weight
    return np.sum(x, axis=tuple(range(1, x.ndim)))


def decay_cumulative(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Running integral of a sum of nonnegative mode-wise rates.

    ``values`` has time on axis 0. Between samples each entry is taken to
    be exponential in time, so the interval integral is ``h`` times the
    logarithmic mean of its endpoint values; this is exact for heat decay.
    Entries that vanish or change sign fall back to the trapezoid rule.
    """
    a0, a1 = values[:-1], values[1:]
    h = np.diff(t).reshape((-1,) + (1,) * (values.ndim - 1))
    trap = 0.5 * (a0 + a1)
    positive = (a0 > 0) & (a1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(np.where(positive, a1, 1.0) / np.where(positive, a0, 1.0))
        lmean = np.where(np.abs(r) < 1e-6, trap, (a1 - a0) / r)
    inc = np.sum(h * np.where(positive, lmean, trap), axis=tuple(range(1, values.ndim)))
    return np.concatenate([[0.0], np.cumsum(inc)])


def gronwall_verify(traj_a: Trajectory, traj_b: Trajectory, spec: Optional[BesovSpec] = None,
                    quadrature: str = "exponential", dissipation_weight: float = 2.0) -> GronwallReport:
    """Smallest ``C >= 0`` with ``lhs(t) <= lhs(0) exp(C int_0^t ||(u, F)||^q)``.

    ``lhs = ||(w, E)||^2 + kappa int_0^t ||grad (w, E)||^2`` with
    ``kappa = dissipation_weight``. At ``kappa = 2`` the time derivative of
    ``lhs`` is the full trilinear term, which is first order in the data
    while the envelope grows at order ``q``; the needed ``C`` then scales
    like ``amplitude^{1-q}`` on small data. Any ``kappa < 2`` leaves
    dissipation to absorb that term and ``C`` stays bounded. The dissipation
    integral uses :func:`decay_cumulative` (``quadrature="exponential"``) or
    the trapezoid rule on the snapshots; the trapezoid rule overestimates
    heat-dominated decay, and on small data that error alone sets ``C``.
    The exponent integral is always trapezoidal. The constant is the exact
    minimizer ``max_t log(lhs / lhs0) / A(t)``; it is ``inf`` when the data
    coincide but the solutions separate.
    """
    _check_aligned(traj_a, traj_b)
    if quadrature not in ("exponential", "trapezoid"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    if not 0 <= dissipation_weight <= 2:
        raise ValueError(f"dissipation weight must lie in [0, 2], got {dissipation_weight}")
    g = traj_a.grid
    spec = spec or BesovSpec.critical(g.n, 2.0, 2.0, 4.0)
    check_gronwall_spec(g.n, spec)
    t = traj_a.times
    A, B = traj_a.data, traj_b.data
    W = A - B
    k2 = g.k2

    def lhs_from(energy, rate):
        if quadrature == "trapezoid":
            integral = cumulative_trapezoid(np.sum(rate, axis=tuple(range(1, rate.ndim))), t, initial=0.0)
        else:
            integral = decay_cumulative(rate, t)
        return energy + dissipation_weight * integral

    lhs = lhs_from(_sq(W), k2 * np.abs(W) ** 2)
    pol = np.abs(A) ** 2 + np.abs(B) ** 2 - 2.0 * np.real(A * np.conj(B))
    lhs_pol = lhs_from(np.sum(pol, axis=tuple(range(1, pol.ndim))), k2 * pol)
    scale = float(np.max(lhs_from(_sq(A) + _sq(B), k2 * (np.abs(A) ** 2 + np.abs(B) ** 2))))
    defect = float(np.max(np.abs(lhs - lhs_pol)) / scale) if scale > 0 else 0.0

    lp = DyadicSystem.for_grid(g)
    blocks = lp.block_norms(A, spec.p)
    norms = np.sum(lp.besov_from_blocks(blocks, spec), axis=1)
    expo = cumulative_trapezoid(norms**spec.q, t, initial=0.0)

    lhs0 = lhs[0]
    if lhs0 == 0.0:
        C = 0.0 if np.all(lhs == 0.0) else INF
    else:
        # growth within rounding of lhs0 needs no constant
        grown = lhs > lhs0 * (1 + _ROUNDING)
        live = grown & (expo > 0)
        need = np.log(lhs[live] / lhs0) / expo[live]
        C = float(np.max(need)) if need.size else 0.0
        # lhs above lhs0 while the exponent is still zero cannot be covered
        if np.any(grown & (expo == 0)):
            C = INF
    rhs = lhs0 * np.exp(C * expo) if np.isfinite(C) else np.full_like(lhs, INF)
    return GronwallReport(t.copy(), lhs, rhs, C, expo, lhs_pol, defect)


# ---------------------------------------------------------------------------
# Galerkin truncations

@dataclass(frozen=True)
class WeakStrongReport:
    m_coarse: tuple[int, ...]
    m_fine: int
    distances: tuple[float, ...]
    dt: float

    @property
    def monotone(self) -> bool:
        d = self.distances
        return all(b < a for a, b in zip(d, d[1:])) if len(d) > 1 else True


def weak_strong_compare(
    state0: StateUF,
    m_coarse: Sequence[int],
    m_fine: int,
    T: float,
    *,
    samples: int = 9,
    dt: Optional[float] = None,
) -> WeakStrongReport:
    """Sup-in-time L2 distance between Galerkin truncations and a fine run.

    ``state0`` may live on any grid; it is resampled to each resolution.
    Every run shares the fine run's ``dt`` so only the truncation differs.
    """
    levels = tuple(sorted(int(m) for m in m_coarse))
    if any(m >= m_fine for m in levels):
        raise ValueError("coarse resolutions must be below the fine one")
    src = state0.grid
    fine = Grid(src.n, m_fine, src.length)
    z_f = resample(src, fine, state0.packed())
    z_f[: src.n] = project(fine, z_f[: src.n])
    fine0 = StateUF.from_packed(fine, z_f, state0.t)
    dt = default_dt(fine, z_f) if dt is None else dt
    times = state0.t + np.linspace(0.0, T, samples)
    ref = integrate(fine0, T, times=times, dt=dt, raise_on_divergence=True)
    dists = []
    for m in levels:
        g = Grid(src.n, m, src.length)
        c0 = StateUF.from_packed(g, resample(fine, g, z_f), state0.t)
        run = integrate(c0, T, times=times, dt=dt, raise_on_divergence=True)
        emb = resample(g, fine, run.data.reshape((-1,) + g.shape)).reshape(ref.data.shape)
        dists.append(float(np.sqrt(np.max(_sq(emb - ref.data)))))
    return WeakStrongReport(levels, int(m_fine), tuple(dists), float(dt))
