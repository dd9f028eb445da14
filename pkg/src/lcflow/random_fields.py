"""Reproducible random band-limited fields.

Generator contract
------------------
Draws come from numpy's ``Philox`` counter-based bit generator keyed by the
seed, consumed through ``Generator.standard_normal``. Integer modes with
``|k|_inf <= kmax`` are enumerated shell by shell (``|k|_inf = 0, 1, ...``)
and lexicographically within a shell; each mode consumes ``2 * ncomp``
normals (real and imaginary parts per component). Because shells are a
prefix-closed ordering, the coefficient drawn for a given mode depends only
on ``(seed, ncomp, mode)`` and not on the grid size or on ``kmax``: refining
the grid reproduces the same continuum field.

Hermitian symmetry is imposed afterwards by averaging ``c(k)`` with
``conj(c(-k))``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from .fields import Grid, StateUF, symmetrize
from .spectral import project


@lru_cache(maxsize=32)
def mode_stream(n: int, kmax: int) -> np.ndarray:
    """Integer modes of the cube ``|k|_inf <= kmax`` in stream order."""
    rng = np.arange(-kmax, kmax + 1)
    modes = np.stack(np.meshgrid(*([rng] * n), indexing="ij"), axis=-1).reshape(-1, n)
    shell = np.max(np.abs(modes), axis=1)
    order = np.lexsort(tuple(modes[:, i] for i in reversed(range(n))) + (shell,))
    return modes[order]


def random_coefficients(
    grid: Grid,
    seed: int,
    *,
    ncomp: int = 1,
    kmin: float = 1,
    kmax: int = 4,
    slope: float = 0.0,
    ball: Optional[float] = None,
) -> np.ndarray:
    """Random Hermitian coefficients of shape ``(ncomp, m, ..., m)``.

    Modes with ``kmin <= |k|_inf <= kmax`` are populated with amplitude
    ``|k|^-slope`` (Euclidean ``|k|`` in integer units). ``ball`` further
    restricts support to ``|k| <= ball`` in physical wavenumber units.
    """
    if kmax >= grid.m // 2:
        raise ValueError(f"kmax={kmax} does not fit on a grid with m={grid.m}")
    modes = mode_stream(grid.n, int(kmax))
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    draws = gen.standard_normal((len(modes), ncomp, 2))
    vals = draws[..., 0] + 1j * draws[..., 1]

    sup = np.max(np.abs(modes), axis=1)
    mag = np.sqrt(np.sum(modes.astype(float) ** 2, axis=1))
    keep = sup >= kmin
    if ball is not None:
        keep &= mag * grid.k0 <= ball + 1e-12
    weight = np.where(keep & (mag > 0), np.power(np.where(mag > 0, mag, 1.0), -slope), 0.0)
    vals = vals * weight[:, None]

    out = np.zeros((ncomp,) + grid.shape, dtype=complex)
    idx = tuple((modes % grid.m).T)
    for c in range(ncomp):
        out[c][idx] = vals[:, c]
    return symmetrize(grid, out)


def random_band_state(
    grid: Grid,
    seed: int,
    kmin: float = 1,
    kmax: int = 4,
    amplitude: float = 0.1,
    slope: float = 0.0,
) -> StateUF:
    """Divergence-free ``u`` and gradient-structured ``F = grad d``.

    The state is scaled so that the L2 norm of ``(u, F)`` over all
    components (averaged measure) equals ``amplitude``.
    """
    n = grid.n
    raw = random_coefficients(grid, seed, ncomp=2 * n, kmin=kmin, kmax=kmax, slope=slope)
    u = project(grid, raw[:n])
    kmag = np.where(grid.k2 > 0, grid.kmag, 1.0)
    d = raw[n:] / kmag
    F = 1j * grid.k[None, :] * d[:, None]
    state = StateUF(grid, u, F)
    norm = np.sqrt(np.sum(np.abs(state.packed()) ** 2))
    if norm > 0:
        state.u *= amplitude / norm
        state.F *= amplitude / norm
    return state


def smooth_random_state(grid: Grid, seed: int, amplitude: float = 0.1, decay: float = 0.5,
                        kmax: Optional[int] = None) -> StateUF:
    """Like :func:`random_band_state` with ``exp(-decay |k|)`` spectral falloff."""
    n = grid.n
    kmax = grid.m // 2 - 1 if kmax is None else kmax
    raw = random_coefficients(grid, seed, ncomp=2 * n, kmin=1, kmax=kmax)
    envelope = np.exp(-decay * grid.kmag / grid.k0)
    raw = raw * envelope
    u = project(grid, raw[:n])
    kmag = np.where(grid.k2 > 0, grid.kmag, 1.0)
    F = 1j * grid.k[None, :] * (raw[n:] / kmag)[:, None]
    state = StateUF(grid, u, F)
    norm = np.sqrt(np.sum(np.abs(state.packed()) ** 2))
    if norm > 0:
        state.u *= amplitude / norm
        state.F *= amplitude / norm
    return state


def shear_state(grid: Grid, a: float) -> StateUF:
    """``u = (a sin(k0 x_2), 0, ...)``, ``F = 0``."""
    state = StateUF.zeros(grid)
    idx = [0] * grid.n
    idx[1] = 1
    state.u[0][tuple(idx)] = a / 2j
    idx[1] = grid.m - 1
    state.u[0][tuple(idx)] = -a / 2j
    return state


def identity_state(grid: Grid, c: float) -> StateUF:
    """``u = 0`` and constant ``F = c I``."""
    state = StateUF.zeros(grid)
    for i in range(grid.n):
        state.F[i, i][(0,) * grid.n] = c
    return state
