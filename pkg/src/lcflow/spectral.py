"""Fourier-multiplier operators and the nonlinear terms of the (u, F) system.

    du/dt - lap u = -P[(u.grad) u] - P div(F^T F)
    dF/dt - lap F = -(u.grad) F - F grad(u),   (F grad u)_{ik} = sum_j F_ij d_k u_j

Quadratic products are formed in physical space from inputs truncated by
the two-thirds rule, and the result is truncated again, so the nonlinear
terms equal the exact Galerkin projection of the continuous products.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

import scipy.fft as sfft

from .fields import Grid, SpectralField, StateUF, expand_half, real_to_spectral, to_physical


def _coeffs(fields) -> tuple[Grid, np.ndarray]:
    if isinstance(fields, SpectralField):
        return fields.grid, fields.coeffs[None]
    fields = list(fields)
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("fields live on different grids")
    return grid, np.stack([f.coeffs for f in fields])


def gradient(f: SpectralField) -> list[SpectralField]:
    g = f.grid
    return [SpectralField(g, 1j * g.k[i] * f.coeffs) for i in range(g.n)]


def divergence(v: Sequence[SpectralField]) -> SpectralField:
    grid, c = _coeffs(v)
    if len(c) != grid.n:
        raise ValueError(f"divergence needs {grid.n} components, got {len(c)}")
    return SpectralField(grid, np.sum(1j * grid.k * c, axis=0))


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.coeffs)


def project(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Leray projection of stacked vector coefficients ``v[i, ...]``.

    The symbol is ``I - k k^T / |k|^2``; the mean mode passes unchanged.
    """
    k = grid.k
    k2 = np.where(grid.k2 > 0, grid.k2, 1.0)
    kdotv = np.einsum("i...,i...->...", k, v)
    return v - k * (kdotv / k2)


def leray_project(v: Sequence[SpectralField]) -> list[SpectralField]:
    grid, c = _coeffs(v)
    if len(c) != grid.n:
        raise ValueError(f"projection needs {grid.n} components, got {len(c)}")
    return [SpectralField(grid, p) for p in project(grid, c)]


def rhs(grid: Grid, z: np.ndarray) -> np.ndarray:
    """Packed nonlinear right-hand side ``(N_u, N_F)`` of a packed state.

    The zero mode of both outputs is set to zero: every term is a
    derivative for gradient-structured ``F``, and the mean of ``u`` and
    ``F`` is held fixed by construction. Work is done on the half spectrum.
    """
    n = grid.n
    hm = grid.m // 2 + 1
    sl = (Ellipsis, slice(0, hm))
    dmask = grid.dealias[sl]
    zt = z[sl] * dmask
    u_hat = zt[:n]
    F_hat = zt[n:].reshape((n, n) + u_hat.shape[1:])

    ik = 1j * grid.k[sl]
    du_hat = ik[None, :] * u_hat[:, None]            # du[i, j] = d_j u_i
    dF_hat = ik[None, None, :] * F_hat[:, :, None]   # dF[i, k, j] = d_j F_ik
    rest = u_hat.shape[1:]
    stack = np.concatenate([
        u_hat,
        du_hat.reshape((n * n,) + rest),
        F_hat.reshape((n * n,) + rest),
        dF_hat.reshape((n**3,) + rest),
    ])
    phys = sfft.irfftn(stack, s=grid.shape, axes=grid.axes, norm="forward")
    o = 0
    u = phys[o:o + n]; o += n
    du = phys[o:o + n * n].reshape((n, n) + grid.shape); o += n * n
    F = phys[o:o + n * n].reshape((n, n) + grid.shape); o += n * n
    dF = phys[o:].reshape((n, n, n) + grid.shape)

    adv_u = np.einsum("j...,ij...->i...", u, du)
    FtF = np.einsum("ij...,ik...->jk...", F, F)
    adv_F = np.einsum("j...,ikj...->ik...", u, dF) + np.einsum("ij...,jk...->ik...", F, du)

    prods = sfft.rfftn(np.concatenate([
        adv_u, FtF.reshape((n * n,) + grid.shape), adv_F.reshape((n * n,) + grid.shape)]),
        axes=grid.axes, norm="forward")
    adv_u_hat = prods[:n]
    FtF_hat = prods[n:n + n * n].reshape((n, n) + rest)
    adv_F_hat = prods[n + n * n:]

    div_FtF = np.einsum("k...,jk...->j...", ik, FtF_hat)
    half = np.empty((grid.ncomp,) + rest, dtype=complex)
    half[:n] = -_project_half(grid, adv_u_hat + div_FtF)
    half[n:] = -adv_F_hat
    half *= dmask
    half[(slice(None),) + (0,) * n] = 0.0
    return expand_half(grid, half)


def _project_half(grid: Grid, v: np.ndarray) -> np.ndarray:
    sl = (Ellipsis, slice(0, grid.m // 2 + 1))
    k = grid.k[sl]
    k2 = grid.k2[sl]
    k2 = np.where(k2 > 0, k2, 1.0)
    kdotv = np.einsum("i...,i...->...", k, v)
    return v - k * (kdotv / k2)


def nonlinear_u(state: StateUF) -> list[SpectralField]:
    """``-P[(u.grad)u] - P div(F^T F)`` for one state."""
    out = rhs(state.grid, state.packed())
    return [SpectralField(state.grid, c) for c in out[: state.grid.n]]


def nonlinear_F(state: StateUF) -> list[list[SpectralField]]:
    """``-(u.grad)F - F grad u`` as an n-by-n nested list."""
    g = state.grid
    out = rhs(g, state.packed())[g.n:].reshape((g.n, g.n) + g.shape)
    return [[SpectralField(g, out[i, j]) for j in range(g.n)] for i in range(g.n)]


def dealiased_product(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-thirds-rule product of two coefficient arrays."""
    pa = to_physical(grid, a * grid.dealias)
    pb = to_physical(grid, b * grid.dealias)
    return real_to_spectral(grid, pa * pb) * grid.dealias


def matrix_contract(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> tuple[float, float, float]:
    """Return ``(AB:C, A:CB^T, B:A^T C)`` with ``X:Y = sum_ij X_ij Y_ij``."""
    A, B, C = (np.asarray(x, dtype=float) for x in (A, B, C))
    return (float(np.sum((A @ B) * C)), float(np.sum(A * (C @ B.T))), float(np.sum(B * (A.T @ C))))


def l2_norm_sq(grid: Grid, coeffs: np.ndarray) -> float:
    """Squared L2 norm (averaged measure) summed over leading components."""
    return float(np.sum(np.abs(coeffs) ** 2))


def grad_l2_norm_sq(grid: Grid, coeffs: np.ndarray) -> float:
    return float(np.sum(grid.k2 * np.abs(coeffs) ** 2))


def curl_defect(grid: Grid, F_hat: np.ndarray) -> float:
    """``max |d_j F_ik - d_k F_ij|`` in physical space."""
    n = grid.n
    ik = 1j * grid.k
    worst = 0.0
    for j in range(n):
        for k in range(j + 1, n):
            diff = ik[j] * F_hat[:, k] - ik[k] * F_hat[:, j]
            worst = max(worst, float(np.max(np.abs(to_physical(grid, diff)))))
    return worst
