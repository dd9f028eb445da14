"""Bundled invariant suite behind the ``verify`` command."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diagnostics import scaling_check
from .evolution import integrate
from .fields import Grid, real_to_spectral, resample, to_physical, to_spectral
from .littlewood_paley import DyadicSystem, psi, phi, verify_bernstein, verify_product_law, verify_trilinear
from .random_fields import random_band_state, random_coefficients, shear_state
from .spectral import dealiased_product, matrix_contract, project


@dataclass(frozen=True)
class GroupResult:
    name: str
    passed: bool
    detail: str


def _partition(grid: Grid) -> tuple[bool, str]:
    lp = DyadicSystem.for_grid(grid)
    dev = lp.partition_defect()
    r = grid.kmag
    full = psi(r) + sum(phi(r * 2.0**-j) for j in range(0, 40))
    dev2 = float(np.max(np.abs(full - 1.0)))
    return dev <= 1e-12 and dev2 <= 1e-12, f"homogeneous {dev:.2e}, with low part {dev2:.2e}"


def _projector(grid: Grid) -> tuple[bool, str]:
    worst_idem = worst_div = worst_grad = 0.0
    for seed in range(20):
        v = random_coefficients(grid, seed, ncomp=grid.n, kmax=grid.m // 2 - 1)
        pv = project(grid, v)
        scale = float(np.max(np.abs(v)))
        worst_idem = max(worst_idem, float(np.max(np.abs(project(grid, pv) - pv))) / scale)
        worst_div = max(worst_div, float(np.max(np.abs(np.einsum("i...,i...->...", grid.k, pv)))) / scale)
        g = random_coefficients(grid, seed + 1000, kmax=grid.m // 2 - 1)[0]
        grad = 1j * grid.k * g
        worst_grad = max(worst_grad, float(np.max(np.abs(project(grid, grad)))) / float(np.max(np.abs(grad))))
    ok = worst_idem <= 1e-12 and worst_div <= 1e-10 and worst_grad <= 1e-12
    return ok, f"idempotence {worst_idem:.1e}, divergence {worst_div:.1e}, gradients {worst_grad:.1e}"


def _constants(grid: Grid) -> tuple[bool, str]:
    b = verify_bernstein(grid, trials=10).constant
    p = verify_product_law(grid, trials=10).constant
    t = verify_trilinear(grid, trials=5).constant
    ok = all(math.isfinite(c) and c > 0 for c in (b, p, t))
    return ok, f"Bernstein {b:.3g}, product {p:.3g}, trilinear {t:.3g}"


def _parseval(grid: Grid) -> tuple[bool, str]:
    rng = np.random.Generator(np.random.Philox(key=7))
    f = rng.standard_normal((8,) + grid.shape)
    c = to_spectral(grid, f)
    # Nyquist is dropped, so compare against the filtered field
    f_nyq = to_physical(grid, c)
    lhs = np.mean(f_nyq**2, axis=grid.axes)
    rhs = np.sum(np.abs(c) ** 2, axis=grid.axes)
    dev = float(np.max(np.abs(lhs - rhs) / rhs))
    rt = float(np.max(np.abs(to_physical(grid, real_to_spectral(grid, f_nyq)) - f_nyq)) / np.max(np.abs(f_nyq)))
    return dev <= 1e-12 and rt <= 1e-12, f"Parseval {dev:.1e}, round trip {rt:.1e}"


def _dealias(grid: Grid) -> tuple[bool, str]:
    big = Grid(grid.n, 2 * grid.m, grid.length)
    worst = 0.0
    for seed in range(5):
        a, b = random_coefficients(grid, seed, ncomp=2, kmax=grid.m // 3)
        got = dealiased_product(grid, a, b)
        A, B = resample(grid, big, a), resample(grid, big, b)
        exact = resample(big, grid, real_to_spectral(big, to_physical(big, A) * to_physical(big, B))) * grid.dealias
        worst = max(worst, float(np.max(np.abs(got - exact))) / float(np.max(np.abs(exact))))
    return worst <= 1e-12, f"aliasing error {worst:.1e}"


def _matrix(_: Grid) -> tuple[bool, str]:
    rng = np.random.Generator(np.random.Philox(key=11))
    worst = 0.0
    for _ in range(1000):
        A, B, C = rng.standard_normal((3, 3, 3))
        vals = np.array(matrix_contract(A, B, C))
        scale = float(np.sum((np.abs(A) @ np.abs(B)) * np.abs(C)))
        worst = max(worst, float(np.ptp(vals)) / scale)
    return worst <= 1e-13, f"spread {worst:.1e}"


def _shear(grid: Grid) -> tuple[bool, str]:
    a = 0.2
    g = Grid(2, grid.m, grid.length)
    traj = integrate(shear_state(g, a), 0.25, snapshots=5)
    kin = np.sum(np.abs(traj.u) ** 2, axis=(1, 2, 3))
    exact = 0.5 * a * a * np.exp(-2 * g.k0**2 * traj.times)
    dev = float(np.max(np.abs(kin - exact) / exact))
    return dev <= 1e-6, f"kinetic energy deviation {dev:.1e}"


def _scaling(grid: Grid) -> tuple[bool, str]:
    g = Grid(2, grid.m, grid.length)
    rep = scaling_check(random_band_state(g, 3, 1, 3, 0.1), 2, 0.02, samples=3, richardson=False)
    return rep.discrepancy <= 1e-5, f"discrepancy {rep.discrepancy:.1e}"


GROUPS: list[tuple[str, Callable[[Grid], tuple[bool, str]]]] = [
    ("partition of unity", _partition),
    ("projector", _projector),
    ("measured constants", _constants),
    ("Parseval", _parseval),
    ("dealiasing", _dealias),
    ("matrix identity", _matrix),
    ("shear closed form", _shear),
    ("scaling equivariance", _scaling),
]


def run_suite(grid: Grid = Grid(2, 32)) -> list[GroupResult]:
    out = []
    for name, fn in GROUPS:
        try:
            ok, detail = fn(grid)
        except Exception as exc:  # a crash is a failed group, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(GroupResult(name, bool(ok), detail))
    return out
