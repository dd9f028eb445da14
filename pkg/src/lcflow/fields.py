"""Periodic grids and the spectral containers built on them.

Coefficients are stored in the full (not half) DFT layout, normalized so
that a constant field has its value as the zero-mode coefficient::

    f(x) = sum_k c_k exp(i k.x),    c_k = mean_x f(x) exp(-i k.x)

With this normalization Parseval reads ``mean(f**2) == sum(|c_k|**2)``, which
matches the averaged measure on the torus used by every norm in the package.

State vectors are kept *packed*: an array of shape ``(n + n*n, m, ..., m)``
holding ``u_1..u_n`` followed by ``F`` in row-major order. This is also the
component order of the snapshot file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus ``[0, length)^n``."""

    n: int = 2
    m: int = 64
    length: float = 2 * np.pi

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if self.m < 8 or self.m & (self.m - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.m}")
        if not self.length > 0:
            raise ValueError(f"period must be positive, got {self.length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.n, 0))

    @property
    def ncomp(self) -> int:
        """Number of packed scalar components of a (u, F) state."""
        return self.n + self.n * self.n

    @property
    def dx(self) -> float:
        return self.length / self.m

    @property
    def k0(self) -> float:
        """Fundamental wavenumber 2*pi/L."""
        return 2 * np.pi / self.length

    @cached_property
    def index(self) -> np.ndarray:
        """Integer wavenumbers, shape ``(n, m, ..., m)``."""
        freq = np.fft.fftfreq(self.m, 1.0 / self.m).astype(int)
        return np.stack(np.meshgrid(*([freq] * self.n), indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        """Physical wavevectors with the Nyquist component zeroed."""
        k = self.k0 * self.index.astype(float)
        k[self.index == -self.m // 2] = 0.0
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.index.astype(float) ** 2, axis=0) * self.k0**2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def nyquist(self) -> np.ndarray:
        """True on modes that carry a Nyquist index on any axis."""
        return np.any(self.index == -self.m // 2, axis=0)

    @cached_property
    def dealias(self) -> np.ndarray:
        """Two-thirds rule mask: keep ``|k_i| <= m // 3`` on every axis."""
        return np.all(np.abs(self.index) <= self.m // 3, axis=0)

    @cached_property
    def kmax_dealiased(self) -> float:
        return self.k0 * (self.m // 3)

    def coords(self) -> np.ndarray:
        x = np.arange(self.m) * self.dx
        return np.stack(np.meshgrid(*([x] * self.n), indexing="ij"))


def to_spectral(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Forward transform over the trailing ``n`` axes, Nyquist zeroed."""
    values = np.asarray(values)
    if values.shape[-grid.n:] != grid.shape:
        raise ValueError(f"array shape {values.shape} does not end with grid shape {grid.shape}")
    coeffs = sfft.fftn(values, axes=grid.axes, norm="forward")
    coeffs[..., grid.nyquist] = 0.0
    return coeffs


def to_physical(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Inverse transform of Hermitian coefficients; returns real values."""
    m = grid.m
    half = coeffs[..., : m // 2 + 1]
    return sfft.irfftn(half, s=grid.shape, axes=grid.axes, norm="forward")


def real_to_spectral(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Forward transform of real data through the half-spectrum FFT."""
    return expand_half(grid, sfft.rfftn(values, axes=grid.axes, norm="forward"))


def expand_half(grid: Grid, half: np.ndarray) -> np.ndarray:
    """Full Hermitian layout from the nonnegative last-axis half spectrum."""
    m = grid.m
    full = np.empty(half.shape[:-1] + (m,), dtype=complex)
    full[..., : m // 2 + 1] = half
    # negative last-axis frequencies are conjugates of the reflected positive ones
    tail = half[..., 1 : m // 2][..., ::-1]
    for ax in grid.axes[:-1]:
        tail = np.roll(np.flip(tail, axis=ax), 1, axis=ax)
    full[..., m // 2 + 1 :] = np.conj(tail)
    full[..., grid.nyquist] = 0.0
    return full


def reflect(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Return ``c(-k)`` laid out at index ``k``."""
    out = coeffs
    for ax in grid.axes:
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def hermitian_defect(grid: Grid, coeffs: np.ndarray) -> float:
    """Relative violation of ``c(-k) == conj(c(k))``."""
    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(reflect(grid, coeffs) - np.conj(coeffs))) / scale)


def symmetrize(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(reflect(grid, coeffs)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """One real scalar field held as Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    def to_physical(self) -> np.ndarray:
        return to_physical(self.grid, self.coeffs)

    @property
    def mean(self) -> complex:
        return self.coeffs[(0,) * self.grid.n]


def transform(grid: Grid, values: np.ndarray) -> SpectralField:
    """Physical values on ``grid`` to a :class:`SpectralField`."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"expected values of shape {grid.shape}, got {values.shape}")
    return SpectralField(grid, real_to_spectral(grid, values))


def inverse(field: SpectralField) -> np.ndarray:
    return field.to_physical()


@dataclass(eq=False)
class StateUF:
    """Velocity ``u`` and deformation ``F`` at one instant.

    ``F[i, k]`` holds ``d_i`` differentiated in ``x_k`` when the state comes
    from an orientation field.
    """

    grid: Grid
    u: np.ndarray
    F: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        g = self.grid
        self.u = np.asarray(self.u, dtype=complex)
        self.F = np.asarray(self.F, dtype=complex)
        if self.u.shape != (g.n,) + g.shape:
            raise ValueError(f"u has shape {self.u.shape}, expected {(g.n,) + g.shape}")
        if self.F.shape != (g.n, g.n) + g.shape:
            raise ValueError(f"F has shape {self.F.shape}, expected {(g.n, g.n) + g.shape}")

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "StateUF":
        return cls(grid, np.zeros((grid.n,) + grid.shape, complex),
                   np.zeros((grid.n, grid.n) + grid.shape, complex), t)

    @classmethod
    def from_packed(cls, grid: Grid, z: np.ndarray, t: float = 0.0) -> "StateUF":
        n = grid.n
        return cls(grid, z[:n].copy(), z[n:].reshape((n, n) + grid.shape).copy(), t)

    @classmethod
    def from_physical(cls, grid: Grid, u: np.ndarray, F: np.ndarray, t: float = 0.0) -> "StateUF":
        return cls(grid, real_to_spectral(grid, np.asarray(u, float)),
                   real_to_spectral(grid, np.asarray(F, float)), t)

    def packed(self) -> np.ndarray:
        n = self.grid.n
        return np.concatenate([self.u, self.F.reshape((n * n,) + self.grid.shape)])

    def fields(self) -> list[SpectralField]:
        return [SpectralField(self.grid, c) for c in self.packed()]

    def physical(self) -> tuple[np.ndarray, np.ndarray]:
        return to_physical(self.grid, self.u), to_physical(self.grid, self.F)

    def copy(self) -> "StateUF":
        return StateUF(self.grid, self.u.copy(), self.F.copy(), self.t)

    def divergence_defect(self) -> float:
        """``max |k.u(k)| / max |u(k)|`` (0 for a zero field)."""
        scale = np.max(np.abs(self.u))
        if scale == 0:
            return 0.0
        div = np.einsum("i...,i...->...", self.grid.k, self.u)
        return float(np.max(np.abs(div)) / scale)


@dataclass(frozen=True)
class StepLog:
    """Per-step energy samples recorded by the time integrator.

    ``dissipation_integral`` is ``2 int_{t_0}^{t} ||grad (u, F)||^2`` up to
    each logged time.
    """

    t: np.ndarray
    kinetic: np.ndarray
    elastic: np.ndarray
    dissipation_rate: np.ndarray
    dissipation_integral: np.ndarray


@dataclass(eq=False)
class Trajectory:
    """Snapshots of packed states at increasing times.

    ``data`` has shape ``(K, n + n*n, m, ..., m)``. A trajectory cut short by
    integrator divergence carries the failure time in ``failed_at``.
    """

    grid: Grid
    times: np.ndarray
    data: np.ndarray
    failed_at: Optional[float] = None
    log: Optional[StepLog] = None
    segments: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.data.shape[1:] != (self.grid.ncomp,) + self.grid.shape:
            raise ValueError(f"snapshot data has shape {self.data.shape[1:]}")
        if len(self.times) != len(self.data):
            raise ValueError("times and snapshots differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase strictly")

    @classmethod
    def from_states(cls, states: Sequence[StateUF]) -> "Trajectory":
        if not states:
            raise ValueError("need at least one state")
        grid = states[0].grid
        return cls(grid, np.array([s.t for s in states]), np.stack([s.packed() for s in states]))

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> StateUF:
        return StateUF.from_packed(self.grid, self.data[i], float(self.times[i]))

    def __iter__(self) -> Iterator[StateUF]:
        for i in range(len(self)):
            yield self[i]

    @property
    def u(self) -> np.ndarray:
        return self.data[:, : self.grid.n]

    @property
    def F(self) -> np.ndarray:
        n = self.grid.n
        return self.data[:, n:].reshape((len(self), n, n) + self.grid.shape)

    @property
    def failed(self) -> bool:
        return self.failed_at is not None


def resample(source: Grid, target: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Copy coefficients onto another resolution of the same torus.

    Modes present on both grids (``|k_i| < min(m) / 2``) are copied and all
    others are zero, so coarsening is the Galerkin truncation and refining
    is exact zero padding.
    """
    if source.n != target.n or source.length != target.length:
        raise ValueError("grids describe different tori")
    lead = coeffs.shape[: coeffs.ndim - source.n]
    out = np.zeros(lead + target.shape, dtype=complex)
    half = min(source.m, target.m) // 2
    keep = np.all(np.abs(target.index) < half, axis=0)
    src_idx = tuple(i[keep] % source.m for i in target.index)
    out[..., keep] = coeffs[(Ellipsis,) + src_idx]
    return out
