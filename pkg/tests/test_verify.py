import math

import numpy as np
import pytest
import scipy.integrate

from hypercone import coefficients as co
from hypercone import mollify as mo
from hypercone import solver as so
from hypercone import symmetrizer as sy
from hypercone import verify as ve
from hypercone.errors import ConditionUndetermined, DynamicRangeExceeded, EmptyRegion

from conftest import SKEWED, WAVE
from helpers import bump_problem, grid, hole_problem

TRANSPORT = co.constant([[[1.0]]])
K = mo.KERNEL


def linear_ms(c=TRANSPORT):
    """``S(t) = (1 + t/2) Id`` on ``[0, 1]``: ``lam = 1``, ``Lam = 1.5``."""
    m = c.m
    return mo.MollifiedSymmetrizer(sy.sampled(c, [0.0, 1.0], [np.eye(m), 1.5 * np.eye(m)]))


# ---------------------------------------------------------------- phi

def test_phi_vanishes_for_constant_symmetrizer_and_real_zeta():
    ms = mo.MollifiedSymmetrizer(sy.identity(co.constant(WAVE)))
    vals = ve.phi_values(ms, co.constant(WAVE), np.linspace(0, 1, 11), [3.0], 0.1)
    assert np.all(vals <= 1e-14)


def test_phi_interior_closed_form():
    # away from the ends the mollified linear S equals S and has slope 1/2
    ms = linear_ms()
    for zeta in ([4.0 + 0j], [4.0 + 2j], [-1.0 - 0.5j]):
        eta = abs(zeta[0].imag)
        expected = 2 * 0.5 + 2 * math.sqrt(1.5) * eta
        assert ve.phi_eps(ms, TRANSPORT, 0.5, zeta, 0.1) == pytest.approx(expected, rel=1e-9)


def test_phi_without_real_part_keeps_only_growth_term():
    ms = linear_ms()
    assert ve.phi_eps(ms, TRANSPORT, 0.3, [2j], 0.1) == pytest.approx(2 * math.sqrt(1.5) * 2)


@pytest.mark.parametrize("za,T,eps", [(10.0, 1.0, 0.1), (0.5, 1.0, 0.5), (0.5, 4.0, 1.0), (1.0, 0.5, 0.25)])
def test_choose_eps(za, T, eps):
    assert ve.choose_eps(za, T) == eps


# ---------------------------------------------------------------- energy

def test_identity_energy_is_amplitude_squared():
    c = co.smooth(SKEWED, spin=0.5)
    ms = mo.MollifiedSymmetrizer(sy.identity(c))
    p = so.ModeProblem(c, [2.0], [1.0, 0.5j], Nt=128)
    tr = ve.energy_trace(so.solve_mode_rk4(p), p.times, ms, c, [2.0])
    assert np.allclose(tr.E, tr.amplitude ** 2, rtol=1e-14)
    assert tr.equivalence <= 1e-15


def test_unitary_mode_has_nonnegative_margin():
    c = co.constant(WAVE)
    ms = mo.MollifiedSymmetrizer(sy.identity(c))
    p = so.ModeProblem(c, [5.0], [1.0, 0.0], Nt=256)
    tr = ve.energy_trace(so.solve_mode_rk4(p), p.times, ms, c, [5.0])
    assert tr.passed and tr.margin_ratio >= -1e-12


def test_energy_sweep_on_small_lattice():
    c = co.smooth(SKEWED, spin=0.5, T=0.5)
    ms = mo.MollifiedSymmetrizer(sy.build_strict(c))
    lp = bump_problem(N=64, L=12.0, r0=1.0, m=2, components=[1.0, 0.3])
    run = so.solve_lattice(lp, c, 128, Lam=ms.Lam, trajectory=True)
    sweep = ve.energy_sweep(run, ms, c, min_abs=1.0)
    assert sweep.passed
    assert sweep.worst_margin_ratio >= 0
    assert len(sweep.traces) == sum(1 for k in range(-31, 32) if abs(2 * math.pi * k / 12) >= 1)


def test_energy_sweep_needs_trajectory():
    lp = bump_problem(N=64)
    run = so.solve_lattice(lp, TRANSPORT, 64)
    with pytest.raises(ValueError):
        ve.energy_sweep(run, mo.MollifiedSymmetrizer(sy.identity(TRANSPORT)), TRANSPORT)


# ---------------------------------------------------------------- I1, I2

def test_bound_report_constant_symmetrizer_is_zero():
    c = co.constant(WAVE)
    rec = ve.bound_report_I(mo.MollifiedSymmetrizer(sy.identity(c)), c, [8.0])
    assert rec.I1 == 0 and rec.I2 <= 1e-14 and rec.omega == 0
    assert rec.passed


def test_bound_report_linear_closed_form():
    ms = linear_ms()
    rec = ve.bound_report_I(ms, TRANSPORT, [10.0])
    eps = 0.1
    assert rec.eps == eps
    m1 = scipy.integrate.quad(lambda u: abs(u) * K.rho(u), -1, 1, epsabs=1e-14)[0]
    J = eps ** 2 * scipy.integrate.dblquad(lambda b, a: K.rho(a + b) * b, 0, 1,
                                           0, lambda a: 1 - a, epsabs=1e-14)[0]
    assert rec.I1 == pytest.approx(1 - eps * m1, rel=1e-7)
    assert rec.I2 == pytest.approx(20 * J, rel=1e-6)
    assert rec.omega == pytest.approx(0.1 * 0.9 / 2, rel=1e-9)
    assert rec.C_I1 == pytest.approx(K.mollifier_constant() * 2 * math.sqrt(1.5))
    assert rec.bounded and rec.C0 == pytest.approx(1.0)


def test_bound_report_rejects_unknown_regularity():
    c = co.singular(SKEWED[0])
    ms = mo.MollifiedSymmetrizer(sy.build_strict(c))
    with pytest.raises(ConditionUndetermined):
        ve.bound_report_I(ms, c, [4.0])


def test_bound_report_needs_large_zeta():
    with pytest.raises(ValueError):
        ve.bound_report_I(linear_ms(), TRANSPORT, [0.5])


# ---------------------------------------------------------------- support

def test_support_radius_examples():
    coords = grid(1, 8, 8.0)
    u = np.zeros((8, 1))
    assert ve.support_radius(u, coords, [0.0], 8.0) == 0.0
    u[5, 0] = 1.0
    assert ve.support_radius(u, coords, [0.0], 8.0) == 1.0
    u[1, 0] = -1e-9
    assert ve.support_radius(u, coords, [0.0], 8.0) == 1.0
    u[1, 0] = -1e-7
    assert ve.support_radius(u, coords, [0.0], 8.0) == 3.0
    # periodic distance: x = -4 is as far as it gets
    u[0, 0] = 1.0
    assert ve.support_radius(u, coords, [0.0], 8.0) == 4.0
    with pytest.raises(ValueError):
        ve.support_radius(u, coords, [0.0], 8.0, theta=1.0)


def transport_run(T=1.0, N=512, L=8.0, r0=0.5, power=8):
    c = co.constant([[[1.0]]], T=T)
    lp = bump_problem(N=N, L=L, r0=r0, power=power)
    times = [T / 4, T / 2, T]
    return c, so.solve_lattice(lp, c, 1000, times)


def test_cone_check_transport():
    c, run = transport_run()
    rep = ve.cone_check(run, co.cone_radii(c, 0.5, 1.0))
    assert rep.passed
    assert rep.measured[-1] == pytest.approx(1.5, abs=2 * run.problem.h)
    assert rep.bound[-1] == 2.5


def test_cone_check_zero_coefficients_keep_support():
    c = co.constant([[[0.0]]])
    lp = bump_problem(N=256, r0=0.5)
    run = so.solve_lattice(lp, c, 64, [0.5, 1.0])
    rep = ve.cone_check(run, co.cone_radii(c, 0.5, 1.0))
    assert rep.passed
    assert all(abs(m - 0.5) <= 2 * lp.h for m in rep.measured)


def test_cone_check_with_halved_radii_fails():
    c, run = transport_run()
    assert not ve.cone_check(run, co.cone_radii(c, 0.5, 1.0).scaled(0.5)).passed


def hole_run(times=(0.1, 0.25, 0.4, 0.5)):
    c = co.constant([[[1.0]]], T=0.5)
    lp = hole_problem()
    return c, so.solve_lattice(lp, c, 500, list(times))


def test_dod_check_passes():
    c, run = hole_run()
    rep = ve.dod_check(run, co.cone_radii(c, 1.0, 1.0), times=[0.1, 0.25, 0.4])
    assert rep.passed and rep.checked == [True] * 3
    assert max(rep.max_abs) <= 1e-8


def test_dod_check_zero_data():
    c = co.constant([[[1.0]]], T=0.5)
    lp = so.LatticeProblem(1, 8.0, 128, np.zeros((128, 1)), 1.0, [0.0])
    run = so.solve_lattice(lp, c, 64, [0.25])
    rep = ve.dod_check(run, co.cone_radii(c, 1.0, 1.0))
    assert rep.passed and rep.max_abs == [0.0]


def test_dod_check_empty_region():
    c, run = hole_run()
    with pytest.raises(EmptyRegion):
        ve.dod_check(run, co.cone_radii(c, 1.0, 1.0), times=[0.5])


def test_dod_check_rejects_data_inside_ball():
    c, run = hole_run()
    with pytest.raises(ValueError):
        ve.dod_check(run, co.cone_radii(c, 2.0, 1.0), times=[0.1])


# ---------------------------------------------------------------- Paley-Wiener

# the fitted slope approaches r0 from below; the gap grows with the edge power
def test_pw_slope_of_bump_matches_radius():
    lp = bump_problem(N=1024, L=8.0, r0=0.5, power=5)
    rep = ve.pw_probe(lp.u0, lp.coords(), lp.h, lp.L, 0.0, 0.5,
                      directions=[[1.0], [-1.0]])
    assert rep.passed
    assert all(abs(s - 0.5) <= 0.05 * 0.5 for s in rep.slopes)


def test_fourier_laplace_matches_quadrature():
    lp = bump_problem(N=512, L=8.0, r0=0.5)
    zetas = [np.array([0.5 + 5j]), np.array([-2.0 - 20j])]
    got = ve.fourier_laplace(lp.u0, lp.coords(), lp.h, lp.L, np.zeros(1), zetas)[:, 0]
    x = np.linspace(-0.5, 0.5, 100001)
    g = (1 - (x / 0.5) ** 2) ** 8
    for z, val in zip(zetas, got):
        ref = scipy.integrate.simpson(g * np.exp(-1j * z[0] * x), x=x)
        assert abs(val - ref) <= 1e-7 * abs(ref)


def test_pw_degenerate_field():
    coords = grid(1, 64, 8.0)
    rep = ve.pw_probe(np.zeros((64, 1)), coords, 8.0 / 64, 8.0, 0.0, 1.0)
    assert rep.degenerate and rep.passed and rep.max_slope == 0.0


def test_pw_dynamic_range():
    lp = bump_problem(N=128)
    with pytest.raises(DynamicRangeExceeded):
        ve.pw_probe(lp.u0, lp.coords(), lp.h, lp.L, 0.0, 0.5, magnitudes=[10.0, 2000.0])


def test_pw_after_transport():
    c, run = transport_run(T=0.5, power=5)
    lp = run.problem
    r = co.cone_radii(c, 0.5, 1.0).r(0.5)
    # the magnitudes must suit the bump width, not the distance it travelled
    rep = ve.pw_probe(run.fields[-1], lp.coords(), lp.h, lp.L, 0.5, r,
                      magnitudes=ve.default_magnitudes(0.5))
    assert rep.passed
    assert rep.max_slope == pytest.approx(1.0, rel=0.05)
