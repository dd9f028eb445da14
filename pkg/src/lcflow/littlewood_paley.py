"""Dyadic blocks, homogeneous Besov and Chemin-Lerner norms, and empirical
constants for the harmonic-analysis inequalities the estimates rest on.

Blocks act as Fourier multipliers ``phi(2^-j |xi|)``. The radial profile is
a smooth plateau (equal to 1 on ``[4/3, 3/2]``, vanishing outside
``(3/4, 8/3)``) divided by its dyadic sum, which makes the partition of
unity exact up to rounding. All ``L^p`` norms use the averaged measure on
the torus, so ``||1||_p == 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .fields import Grid, SpectralField, StateUF, Trajectory, real_to_spectral, to_physical
from .random_fields import random_coefficients

INF = math.inf


class PreconditionError(ValueError):
    """Parameters outside the range an inequality is stated for."""


class NotHomogeneousError(ValueError):
    """Field has a nonzero mean, so it has no homogeneous Besov norm."""


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def plateau(r: np.ndarray) -> np.ndarray:
    """Unnormalized radial profile: 1 on [4/3, 3/2], 0 outside (3/4, 8/3)."""
    r = np.asarray(r, dtype=float)
    rise = _smooth_step((r - 0.75) / (4.0 / 3.0 - 0.75))
    fall = _smooth_step((8.0 / 3.0 - r) / (8.0 / 3.0 - 1.5))
    return np.where(r < 1.5, rise, fall)


def phi(r: np.ndarray) -> np.ndarray:
    """Annulus cutoff with ``sum_j phi(2^-j r) == 1`` for every ``r > 0``."""
    r = np.asarray(r, dtype=float)
    num = plateau(r)
    den = plateau(r / 2) + num + plateau(2 * r)
    return np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)


def psi(r: np.ndarray) -> np.ndarray:
    """Low-frequency companion: ``psi(r) + sum_{j>=0} phi(2^-j r) == 1``."""
    r = np.asarray(r, dtype=float)
    # phi(2^-j r) vanishes for j <= -1 unless r < 4/3, and only j = -1 reaches r > 2/3
    low = sum(phi(r * 2.0**j) for j in range(1, 64))
    return np.where(r == 0, 1.0, low)


@dataclass(frozen=True)
class BesovSpec:
    """Index set ``(s, p, r)`` with an optional time exponent ``q``."""

    s: float
    p: float = 2.0
    r: float = 2.0
    q: Optional[float] = None

    def __post_init__(self):
        if not 1 <= self.p <= INF:
            raise ValueError(f"p must lie in [1, inf], got {self.p}")
        if not 1 <= self.r <= INF:
            raise ValueError(f"r must lie in [1, inf], got {self.r}")
        if self.q is not None and not 1 < self.q <= INF:
            raise ValueError(f"q must lie in (1, inf], got {self.q}")

    @classmethod
    def critical(cls, n: int, p: float = 2.0, r: float = 2.0, q: Optional[float] = None) -> "BesovSpec":
        """Scale-invariant regularity ``s = -1 + n/p + 2/q``."""
        two_over_q = 0.0 if q is None or q == INF else 2.0 / q
        return cls(-1.0 + n / p + two_over_q, p, r, q)

    def on_critical_line(self, n: int, tol: float = 1e-9) -> bool:
        two_over_q = 0.0 if self.q is None or self.q == INF else 2.0 / self.q
        return abs(self.s - (-1.0 + n / self.p + two_over_q)) <= tol

    def with_q(self, q: Optional[float]) -> "BesovSpec":
        return BesovSpec(self.s, self.p, self.r, q)

    @property
    def label(self) -> str:
        return f"{self.s:g}_{self.p:g}_{self.r:g}"


def lp_norm(values: np.ndarray, p: float, axes: tuple[int, ...]) -> np.ndarray:
    """Averaged-measure ``L^p`` norm over ``axes``; ``p = inf`` is the grid max."""
    a = np.abs(values)
    if p == INF:
        return np.max(a, axis=axes)
    if p == 2:
        return np.sqrt(np.mean(a * a, axis=axes))
    return np.mean(a**p, axis=axes) ** (1.0 / p)


def _lr_combine(weighted: np.ndarray, r: float) -> np.ndarray:
    if r == INF:
        return np.max(weighted, axis=-1)
    return np.sum(weighted**r, axis=-1) ** (1.0 / r)


class DyadicSystem:
    """Littlewood-Paley multipliers on one grid (immutable once built)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.jmin = math.floor(math.log2(grid.k0)) - 1
        self.jmax = math.ceil(math.log2(math.pi * grid.m / grid.length)) + 1
        self.js = np.arange(self.jmin, self.jmax + 1)
        kmag = grid.kmag
        mult = np.stack([phi(kmag * 2.0 ** (-int(j))) for j in self.js])
        mult[:, grid.nyquist] = 0.0
        mult.setflags(write=False)
        self.multipliers = mult

    @classmethod
    @lru_cache(maxsize=16)
    def for_grid(cls, grid: Grid) -> "DyadicSystem":
        return cls(grid)

    def multiplier(self, j: int) -> np.ndarray:
        if self.jmin <= j <= self.jmax:
            return self.multipliers[j - self.jmin]
        return np.zeros(self.grid.shape)

    def low_multiplier(self, j: int) -> np.ndarray:
        """Multiplier of ``S_j = sum_{l <= j-1} Delta_l`` plus the mean mode."""
        # built by sequential addition so that S_{j+1} == S_j + Delta_j bit for bit
        out = np.zeros(self.grid.shape)
        for l in range(self.jmin, min(j, self.jmax + 1)):
            out = out + self.multipliers[l - self.jmin]
        out[(0,) * self.grid.n] = 1.0
        return out

    def partition_defect(self) -> float:
        total = np.sum(self.multipliers, axis=0)
        live = (self.grid.k2 > 0) & ~self.grid.nyquist
        return float(np.max(np.abs(total[live] - 1.0)))

    def block_norms(self, coeffs: np.ndarray, p: float) -> np.ndarray:
        """``||Delta_j f||_{L^p}`` for every block; shape ``coeffs.shape[:-n] + (J,)``."""
        g = self.grid
        lead = coeffs.shape[: coeffs.ndim - g.n]
        out = np.empty(lead + (len(self.js),))
        for idx, mult in enumerate(self.multipliers):
            piece = coeffs * mult
            if p == 2:
                out[..., idx] = np.sqrt(np.sum(np.abs(piece) ** 2, axis=g.axes))
            else:
                out[..., idx] = lp_norm(to_physical(g, piece), p, g.axes)
        return out

    def weights(self, s: float) -> np.ndarray:
        return 2.0 ** (self.js * float(s))

    def besov_from_blocks(self, blocks: np.ndarray, spec: BesovSpec) -> np.ndarray:
        return _lr_combine(blocks * self.weights(spec.s), spec.r)

    def besov(self, coeffs: np.ndarray, spec: BesovSpec, *, strict: bool = True) -> float:
        """Besov norm of stacked components under the summed product norm."""
        g = self.grid
        coeffs = np.asarray(coeffs)
        if coeffs.ndim == g.n:
            coeffs = coeffs[None]
        if strict:
            mean = np.abs(coeffs[(slice(None),) + (0,) * g.n])
            scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
            if scale > 0 and np.any(mean > 1e-12 * scale):
                raise NotHomogeneousError("field has a nonzero mean; homogeneous norms need mean zero")
        blocks = self.block_norms(coeffs, spec.p)
        return float(np.sum(self.besov_from_blocks(blocks, spec)))

    def chemin_lerner(self, times: np.ndarray, coeffs: np.ndarray, spec: BesovSpec) -> float:
        """Time norm inside the block sum. ``coeffs`` is ``(K, C, *grid)``."""
        blocks = self.block_norms(coeffs, spec.p)          # (K, C, J)
        q = spec.q if spec.q is not None else INF
        tn = _time_norm(times, blocks, q)                  # (C, J)
        return float(np.sum(self.besov_from_blocks(tn, spec)))

    def lq_besov(self, times: np.ndarray, coeffs: np.ndarray, spec: BesovSpec) -> float:
        """Time norm outside the block sum (the ordinary ``L^q(0,T; B)``)."""
        blocks = self.block_norms(coeffs, spec.p)
        inst = self.besov_from_blocks(blocks, spec)        # (K, C)
        q = spec.q if spec.q is not None else INF
        return float(np.sum(_time_norm(times, inst, q)))


def _time_norm(times: np.ndarray, values: np.ndarray, q: float) -> np.ndarray:
    """Trapezoid ``L^q`` norm along axis 0; ``q = inf`` is the max over samples."""
    if q == INF:
        return np.max(values, axis=0)
    return np.trapezoid(values**q, times, axis=0) ** (1.0 / q)


def _grid_and_coeffs(x) -> tuple[Grid, np.ndarray]:
    if isinstance(x, SpectralField):
        return x.grid, x.coeffs[None]
    if isinstance(x, StateUF):
        return x.grid, x.packed()
    if isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], Grid):
        return x[0], np.asarray(x[1])
    items = list(x)
    if items and isinstance(items[0], SpectralField):
        return items[0].grid, np.stack([f.coeffs for f in items])
    raise TypeError(f"cannot take a Besov norm of {type(x).__name__}")


def block(j: int, f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * DyadicSystem.for_grid(f.grid).multiplier(j))


def low_pass(j: int, f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * DyadicSystem.for_grid(f.grid).low_multiplier(j))


def besov_norm(x, spec: BesovSpec, *, strict: bool = True) -> float:
    """Homogeneous Besov norm of a field, a list of fields, or a state.

    Several components combine as ``||(f, g)|| = ||f|| + ||g||``. With
    ``strict`` a field whose mean is not zero is rejected; otherwise the
    mean is simply invisible to every block.
    """
    grid, coeffs = _grid_and_coeffs(x)
    return DyadicSystem.for_grid(grid).besov(coeffs, spec, strict=strict)


def _traj_coeffs(traj: Trajectory, component: str) -> np.ndarray:
    n = traj.grid.n
    if component == "all":
        return traj.data
    if component == "u":
        return traj.data[:, :n]
    if component == "F":
        return traj.data[:, n:]
    raise ValueError(f"component must be 'all', 'u' or 'F', got {component!r}")


def chemin_lerner_norm(traj: Trajectory, spec: BesovSpec, component: str = "all") -> float:
    """``(sum_j 2^{jsr} ||Delta_j f||_{L^q_t L^p_x}^r)^{1/r}`` over the snapshots."""
    if len(traj) < 2:
        raise ValueError("a time norm needs at least two snapshots")
    return DyadicSystem.for_grid(traj.grid).chemin_lerner(traj.times, _traj_coeffs(traj, component), spec)


def lq_besov_norm(traj: Trajectory, spec: BesovSpec, component: str = "all") -> float:
    """``(int_0^T ||f(t)||_B^q dt)^{1/q}`` over the snapshots."""
    if len(traj) < 2:
        raise ValueError("a time norm needs at least two snapshots")
    return DyadicSystem.for_grid(traj.grid).lq_besov(traj.times, _traj_coeffs(traj, component), spec)


# ---------------------------------------------------------------------------
# empirical constants

@dataclass(frozen=True)
class MeasuredConstant:
    constant: float
    ratios: np.ndarray
    trials: int

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.constant))


def _trial_seed(seed: int, trial: int) -> int:
    return (int(seed) << 32) + int(trial)


def _multi_indices(n: int, k: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations_with_replacement(range(n), k))


def verify_bernstein(
    grid: Grid,
    trials: int = 100,
    js: Iterable[int] = (1, 2, 3),
    pairs: Sequence[tuple[float, float]] = ((2, 2), (2, INF), (1, 4)),
    k: int = 1,
    seed: int = 0,
) -> MeasuredConstant:
    """Largest observed ``||d^a f||_q / (2^{jk + jn(1/p - 1/q)} ||f||_p)``.

    Fields are random with spectrum inside the ball ``|xi| <= 2^j``.
    """
    if trials < 1:
        raise PreconditionError("need at least one trial")
    n = grid.n
    alphas = _multi_indices(n, k)
    ratios = []
    for trial in range(trials):
        for j in js:
            radius = 2.0**j
            kmax = int(math.floor(radius / grid.k0))
            if kmax < 1 or kmax >= grid.m // 2:
                raise PreconditionError(f"ball of radius 2^{j} does not fit the grid")
            f = random_coefficients(grid, _trial_seed(seed, trial), kmin=1, kmax=kmax, ball=radius)[0]
            f_phys = to_physical(grid, f)
            for p, q in pairs:
                if p > q:
                    raise PreconditionError(f"need p <= q, got ({p}, {q})")
                base = float(lp_norm(f_phys, p, grid.axes))
                if base == 0.0:
                    continue
                scale = 2.0 ** (j * k + j * n * ((1 / p) - (0 if q == INF else 1 / q)))
                best = 0.0
                for alpha in alphas:
                    mult = np.prod([1j * grid.k[a] for a in alpha], axis=0)
                    d = float(lp_norm(to_physical(grid, mult * f), q, grid.axes))
                    best = max(best, d)
                ratios.append(best / (scale * base))
    ratios = np.asarray(ratios)
    return MeasuredConstant(float(np.max(ratios)) if ratios.size else 0.0, ratios, trials)


def _product(grid: Grid, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    return real_to_spectral(grid, to_physical(grid, f) * to_physical(grid, g))


def verify_product_law(
    grid: Grid,
    trials: int = 100,
    s1: float = 0.5,
    s2: float = 0.5,
    p: float = 2.0,
    r: float = 2.0,
    kmax: int = 7,
    seed: int = 0,
) -> MeasuredConstant:
    """Largest observed ``||fg||_{B^{s1+s2-n/p}} / (||f||_{B^s1} ||g||_{B^s2})``."""
    n = grid.n
    if not (s1 < n / p and s2 < n / p and s1 + s2 > 0):
        raise PreconditionError(f"need s1, s2 < n/p and s1 + s2 > 0, got s1={s1}, s2={s2}")
    if 2 * kmax >= grid.m // 2:
        raise PreconditionError(f"kmax={kmax} too large for an alias-free product at m={grid.m}")
    lp = DyadicSystem.for_grid(grid)
    spec_f, spec_g = BesovSpec(s1, p, r), BesovSpec(s2, p, r)
    spec_fg = BesovSpec(s1 + s2 - n / p, p, r)
    slopes = np.random.Generator(np.random.Philox(key=_trial_seed(seed, 2**31))).uniform(0.0, 2.0, (trials, 2))
    ratios = []
    for trial in range(trials):
        f = random_coefficients(grid, _trial_seed(seed, 2 * trial), kmin=1, kmax=kmax, slope=slopes[trial, 0])[0]
        g = random_coefficients(grid, _trial_seed(seed, 2 * trial + 1), kmin=1, kmax=kmax, slope=slopes[trial, 1])[0]
        den = lp.besov(f, spec_f) * lp.besov(g, spec_g)
        if den == 0.0:
            continue
        ratios.append(lp.besov(_product(grid, f, g), spec_fg, strict=False) / den)
    ratios = np.asarray(ratios)
    return MeasuredConstant(float(np.max(ratios)) if ratios.size else 0.0, ratios, trials)


def verify_product_law_time(
    grid: Grid,
    trials: int = 20,
    s1: float = 0.5,
    s2: float = 0.5,
    p: float = 2.0,
    r: float = 2.0,
    q1: float = 4.0,
    q2: float = 4.0,
    T: float = 0.5,
    K: int = 16,
    kmax: int = 7,
    seed: int = 0,
) -> MeasuredConstant:
    """Chemin-Lerner form of the product law on heat-flow trajectories."""
    n = grid.n
    if not (s1 < n / p and s2 < n / p and s1 + s2 > 0):
        raise PreconditionError(f"need s1, s2 < n/p and s1 + s2 > 0, got s1={s1}, s2={s2}")
    q = 1.0 / (1.0 / q1 + 1.0 / q2)
    lp = DyadicSystem.for_grid(grid)
    times = np.linspace(0.0, T, K)
    decay = np.exp(-np.multiply.outer(times, grid.k2))
    ratios = []
    for trial in range(trials):
        f0 = random_coefficients(grid, _trial_seed(seed, 2 * trial), kmin=1, kmax=kmax)[0]
        g0 = random_coefficients(grid, _trial_seed(seed, 2 * trial + 1), kmin=1, kmax=kmax)[0]
        f, g = decay * f0, decay * g0
        fg = np.stack([_product(grid, a, b) for a, b in zip(f, g)])
        num = lp.chemin_lerner(times, fg[:, None], BesovSpec(s1 + s2 - n / p, p, r, q))
        den = (lp.chemin_lerner(times, f[:, None], BesovSpec(s1, p, r, q1))
               * lp.chemin_lerner(times, g[:, None], BesovSpec(s2, p, r, q2)))
        if den > 0:
            ratios.append(num / den)
    ratios = np.asarray(ratios)
    return MeasuredConstant(float(np.max(ratios)) if ratios.size else 0.0, ratios, trials)


def trilinear_sides(
    grid: Grid, times: np.ndarray, u: np.ndarray, v: np.ndarray, w: np.ndarray, p: float, q: float
) -> tuple[float, float]:
    """``|int int u.grad v.w|`` and the three-term bound, for vector trajectories.

    Arrays have shape ``(K, n, *grid)``. Space integrals use the averaged
    measure; time integrals use the trapezoid rule.
    """
    n = grid.n
    ik = 1j * grid.k
    integrand = np.empty(len(times))
    for i in range(len(times)):
        up = to_physical(grid, u[i])
        dv = to_physical(grid, ik[None, :] * v[i][:, None])  # dv[a, j] = d_j v_a
        wp = to_physical(grid, w[i])
        integrand[i] = np.mean(np.einsum("j...,aj...,a...->...", up, dv, wp))
    lhs = abs(float(np.trapezoid(integrand, times)))

    def linf_l2(x):
        return float(np.sqrt(np.max(np.sum(np.abs(x) ** 2, axis=tuple(range(1, x.ndim))))))

    def grad_l2l2(x):
        rate = np.sum(grid.k2 * np.abs(x) ** 2, axis=tuple(range(1, x.ndim)))
        return float(np.sqrt(np.trapezoid(rate, times)))

    spec = BesovSpec.critical(n, p, q, q)
    wn = DyadicSystem.for_grid(grid).lq_besov(times, w, spec)
    au, gu, av, gv = linf_l2(u), grad_l2l2(u), linf_l2(v), grad_l2l2(v)
    rhs = (au ** (2 / q) * gu ** (1 - 2 / q) * gv
           + gu * av ** (2 / q) * gv ** (1 - 2 / q)
           + au ** (1 / q) * gu ** (1 - 1 / q) * av ** (1 / q) * gv ** (1 - 1 / q)) * wn
    return lhs, rhs


def verify_trilinear(
    grid: Grid,
    trials: int = 50,
    p: float = 2.0,
    q: float = 4.0,
    T: float = 0.5,
    K: int = 16,
    kmax: int = 5,
    seed: int = 0,
) -> MeasuredConstant:
    """Largest observed ratio of the trilinear integral to its three-term bound.

    Each trial draws three random vector fields and evolves them by the
    heat semigroup over ``[0, T]`` to get time-dependent arguments.
    """
    n = grid.n
    if not (2 <= p < INF and 2 < q < INF and n / p + 2 / q > 1):
        raise PreconditionError(f"need 2 <= p < inf, 2 < q < inf, n/p + 2/q > 1; got p={p}, q={q}")
    if 3 * kmax >= grid.m:
        raise PreconditionError(f"kmax={kmax} too large for exact cubic quadrature at m={grid.m}")
    times = np.linspace(0.0, T, K)
    decay = np.exp(-np.multiply.outer(times, grid.k2))[:, None]
    ratios = []
    for trial in range(trials):
        fields = random_coefficients(grid, _trial_seed(seed, trial), ncomp=3 * n, kmin=1, kmax=kmax)
        u, v, w = (decay * fields[a * n:(a + 1) * n][None] for a in range(3))
        lhs, rhs = trilinear_sides(grid, times, u, v, w, p, q)
        if rhs > 0:
            ratios.append(lhs / rhs)
    ratios = np.asarray(ratios)
    return MeasuredConstant(float(np.max(ratios)) if ratios.size else 0.0, ratios, trials)


def verify_derivative_equivalence(
    grid: Grid, trials: int = 100, s: float = 0.0, p: float = 2.0, r: float = 2.0,
    kmax: int = 7, seed: int = 0,
) -> MeasuredConstant:
    """Two-sided constant between ``||grad f||_{B^s}`` and ``||f||_{B^{s+1}}``.

    ``ratios`` holds ``||grad f|| / ||f||``; the constant is
    ``max(max ratio, 1 / min ratio)``.
    """
    lp = DyadicSystem.for_grid(grid)
    ratios = []
    for trial in range(trials):
        f = random_coefficients(grid, _trial_seed(seed, trial), kmin=1, kmax=kmax)[0]
        grad = 1j * grid.k * f
        ratios.append(lp.besov(grad, BesovSpec(s, p, r)) / lp.besov(f, BesovSpec(s + 1, p, r)))
    ratios = np.asarray(ratios)
    return MeasuredConstant(float(max(np.max(ratios), 1.0 / np.min(ratios))), ratios, trials)
