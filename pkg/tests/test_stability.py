import math

import numpy as np
import pytest

from lcflow.evolution import integrate
from lcflow.fields import Grid, StateUF, Trajectory
from lcflow.littlewood_paley import BesovSpec, PreconditionError, verify_trilinear
from lcflow.random_fields import random_band_state, shear_state, smooth_random_state
from lcflow.stability import (AlignmentError, decay_cumulative, difference_fields, difference_residual,
                              gronwall_verify, weak_strong_compare)

G32 = Grid(2, 32)
TIMES = np.linspace(0.0, 0.5, 17)


def perturbed_pair(grid, amp, rel=0.01, seeds=(5, 6), kmax=3, times=TIMES):
    a = random_band_state(grid, seeds[0], 1, kmax, amp)
    bump = random_band_state(grid, seeds[1], 1, kmax, rel * amp)
    b = StateUF(grid, a.u + bump.u, a.F + bump.F)
    T = times[-1]
    return integrate(a, T, times=times), integrate(b, T, times=times)


def test_alignment_errors():
    ta = integrate(shear_state(G32, 1), 0.1, snapshots=3)
    tb = integrate(shear_state(G32, 1), 0.1, snapshots=4)
    with pytest.raises(AlignmentError):
        difference_fields(ta, tb)
    tc = integrate(shear_state(Grid(2, 16), 1), 0.1, snapshots=3)
    with pytest.raises(AlignmentError):
        gronwall_verify(ta, tc)
    short = integrate(shear_state(G32, 1), 0.1, snapshots=2)
    with pytest.raises(ValueError):
        difference_residual(difference_fields(short, short), short, short)


def test_difference_fields_shear_pair():
    ta = integrate(shear_state(G32, 0.8), 0.5, snapshots=5)
    tb = integrate(shear_state(G32, 0.3), 0.5, snapshots=5)
    for pair in difference_fields(ta, tb):
        expect = shear_state(G32, 0.5 * math.exp(-pair.t))
        assert np.max(np.abs(pair.w - expect.u)) <= 1e-14
        assert np.all(pair.E == 0)


def test_difference_fields_additive_and_solenoidal():
    ta, tb = perturbed_pair(G32, 0.5)
    tc = integrate(random_band_state(G32, 9, 1, 3, 0.5), 0.5, times=TIMES)
    ab, bc, ac = difference_fields(ta, tb), difference_fields(tb, tc), difference_fields(ta, tc)
    for x, y, z in zip(ab, bc, ac):
        assert np.max(np.abs(x.w + y.w - z.w)) <= 1e-15
        assert np.max(np.abs(x.E + y.E - z.E)) <= 1e-15
        assert x.divergence_defect(G32) <= 1e-12


def test_residual_identical_is_zero():
    ta = integrate(random_band_state(G32, 1, 1, 4, 0.5), 0.2, snapshots=5)
    res = difference_residual(difference_fields(ta, ta), ta, ta)
    assert res.max_residual == 0.0


def test_residual_shear_pair_second_order():
    # w = c sin(x2) e^{-t}: the only error is the centered difference of e^{-t}
    c = 0.5
    at_quarter = []
    for K in (9, 17):
        ta = integrate(shear_state(G32, 0.8), 0.5, snapshots=K)
        tb = integrate(shear_state(G32, 0.3), 0.5, snapshots=K)
        res = difference_residual(difference_fields(ta, tb), ta, tb)
        h = 0.5 / (K - 1)
        expect = c * math.sqrt(0.5) * (math.sinh(h) / h - 1) * np.exp(-res.times)
        assert np.allclose(res.residual_w, expect, rtol=1e-6, atol=1e-14)
        assert np.all(res.residual_E == 0)
        at_quarter.append(res.residual_w[np.argmin(np.abs(res.times - 0.25))])
    assert at_quarter[0] / at_quarter[1] == pytest.approx(4, rel=0.01)


def test_residual_order_generic():
    common = np.linspace(0, 0.5, 9)[1:-1]
    vals = []
    for K in (9, 17, 33):
        ta, tb = perturbed_pair(G32, 0.5, rel=0.2, times=np.linspace(0, 0.5, K))
        res = difference_residual(difference_fields(ta, tb), ta, tb)
        keep = np.isin(np.round(res.times, 12), np.round(common, 12))
        vals.append(max(res.residual_w[keep].max(), res.residual_E[keep].max()))
    orders = np.log2(np.array(vals[:-1]) / np.array(vals[1:]))
    assert np.all((1.6 <= orders) & (orders <= 2.4))


# ----------------------------------------------------------------- Gronwall

def test_decay_cumulative_exact_for_exponentials():
    t = np.linspace(0, 1, 5)
    lam = np.array([0.0, 1.0, 30.0])
    vals = np.exp(-np.outer(t, lam))
    got = decay_cumulative(vals, t)
    exact = sum((1 - np.exp(-l * t)) / l if l else t for l in lam)
    assert np.allclose(got, exact, rtol=1e-14, atol=0)
    # a mode switching on from zero falls back to the trapezoid rule
    assert decay_cumulative(np.array([[0.0], [2.0]]), np.array([0.0, 1.0]))[-1] == 1.0


def test_gronwall_identical_data():
    ta = integrate(random_band_state(G32, 2, 1, 4, 0.5), 0.5, times=TIMES)
    rep = gronwall_verify(ta, ta)
    assert np.all(rep.lhs == 0) and rep.C_used == 0 and rep.holds


def test_gronwall_shear_pair_needs_no_constant():
    ta = integrate(shear_state(G32, 0.8), 1.0, snapshots=9)
    tb = integrate(shear_state(G32, 0.3), 1.0, snapshots=9)
    rep = gronwall_verify(ta, tb)
    # lhs(t) = |c|^2 / 2 for all t: the heat energy identity
    assert np.allclose(rep.lhs, 0.125, rtol=1e-13, atol=0)
    assert rep.C_used == 0 and rep.holds
    trap = gronwall_verify(ta, tb, quadrature="trapezoid")
    assert trap.lhs[-1] > rep.lhs[-1]


def test_gronwall_perturbed_pair():
    ta, tb = perturbed_pair(G32, 3.0)
    rep = gronwall_verify(ta, tb)
    assert 0 < rep.C_used < math.inf and rep.holds
    assert rep.polarization_defect <= 1e-12
    assert np.all(np.diff(rep.exponent) >= 0)


@pytest.mark.parametrize("spec", [BesovSpec.critical(2, 2, 2, 2), BesovSpec(0.0, math.inf, 2, 4),
                                  BesovSpec.critical(2, 8, 2, 8), BesovSpec(0.0, 2, 2)])
def test_gronwall_preconditions(spec):
    ta = integrate(shear_state(G32, 1), 0.1, snapshots=3)
    with pytest.raises(PreconditionError):
        gronwall_verify(ta, ta, spec)


def test_gronwall_quadrature_name():
    ta = integrate(shear_state(G32, 1), 0.1, snapshots=3)
    with pytest.raises(ValueError):
        gronwall_verify(ta, ta, quadrature="simpson")


SMALL_TRIALS = [(seeds, amp) for seeds in ((5, 6), (7, 8), (1, 2)) for amp in (0.1, 0.3, 1.0)]


def test_full_dissipation_constant_grows_on_small_data():
    # with lhs = |W|^2 + 2 int |grad W|^2, d lhs/dt is the whole trilinear
    # term (first order in the data) while the exponent is of order q = 4,
    # so C_used * amp^{q-1} settles to a constant as amp -> 0
    c = [gronwall_verify(*perturbed_pair(G32, amp, seeds=(1, 2))).C_used for amp in (0.1, 0.05)]
    assert c[0] > 0
    assert c[1] / c[0] == pytest.approx(2.0**3, rel=0.1)


def test_constant_within_trilinear_bound_with_absorbed_dissipation():
    tri = verify_trilinear(G32, trials=5).constant
    for seeds, amp in SMALL_TRIALS:
        rep = gronwall_verify(*perturbed_pair(G32, amp, seeds=seeds), dissipation_weight=1.0)
        assert rep.holds and rep.C_used <= 10 * tri


def test_dissipation_weight_range():
    ta = integrate(shear_state(G32, 1), 0.1, snapshots=3)
    with pytest.raises(ValueError):
        gronwall_verify(ta, ta, dissipation_weight=2.5)


def test_trapezoid_constant_is_a_quadrature_artefact():
    # trapezoid over-integrates heat decay by a data-independent fraction,
    # so its C_used grows like amp^{-q} as the exponent integral shrinks
    c = [gronwall_verify(*perturbed_pair(G32, amp), quadrature="trapezoid").C_used for amp in (0.3, 0.15)]
    assert c[1] / c[0] == pytest.approx(2.0**4, rel=0.05)


# ----------------------------------------------------------------- weak-strong

def test_weak_strong_zero_data():
    rep = weak_strong_compare(StateUF.zeros(G32), [8, 16], 32, 0.1, samples=3)
    assert rep.distances == (0.0, 0.0)


def test_weak_strong_trend():
    s = smooth_random_state(Grid(2, 64), 7, 0.5, 0.5)
    rep = weak_strong_compare(s, [16, 32], 64, 0.02, samples=3)
    assert rep.monotone and rep.distances[1] < 0.1 * rep.distances[0]


def test_weak_strong_rejects_bad_levels():
    with pytest.raises(ValueError):
        weak_strong_compare(StateUF.zeros(G32), [32], 32, 0.1)
