import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import assume, given, settings, strategies as st

from hypercone import coefficients as co
from hypercone import matcore
from hypercone import mollify as mo
from hypercone import symmetrizer as sy
from hypercone.errors import BadEpsilon

from conftest import WAVE

K = mo.KERNEL
SCALAR = co.constant([[[1.0]]])
PAIR = co.constant(WAVE)


def linear(c=PAIR, slope=1.0):
    """``S(t) = (1 + slope t) Id``."""
    m = c.m
    return sy.sampled(c, [0.0, c.T], [np.eye(m), (1 + slope * c.T) * np.eye(m)])


def jump(c=PAIR, at=0.5, lo=1.0, hi=2.0):
    m = c.m
    times = [0.0, at, at + 1e-12, c.T]
    return sy.sampled(c, times, [lo * np.eye(m), lo * np.eye(m), hi * np.eye(m), hi * np.eye(m)])


# ---------------------------------------------------------------- kernel

def test_kernel_shape():
    s = np.linspace(-1.2, 1.2, 2001)
    r = K.rho(s)
    assert np.array_equal(r, K.rho(-s))
    assert np.all(r[np.abs(s) >= 1] == 0)
    assert np.all((0 <= r) & (r <= 1))


def test_kernel_mass_and_norms():
    mass, _ = scipy.integrate.quad(K.rho, -1, 1, epsabs=1e-14, epsrel=1e-13, points=[0])
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert K.l1 == pytest.approx(1.0, abs=1e-10)
    dl1, _ = scipy.integrate.quad(lambda x: abs(K.drho(x)), -1, 1, points=[0], epsrel=1e-12)
    assert K.dl1 == pytest.approx(dl1, rel=1e-9)
    assert K.mollifier_constant() == pytest.approx(2 * max(1.0, dl1), rel=1e-9)


def test_kernel_derivative_matches_finite_difference():
    s = np.linspace(-0.95, 0.95, 41)
    h = 1e-6
    fd = (K.rho(s + h) - K.rho(s - h)) / (2 * h)
    assert np.allclose(K.drho(s), fd, atol=1e-7)


# ---------------------------------------------------------------- extension

def test_extend_is_constant_outside(presets):
    s = sy.build_strict(presets["smooth"])
    ev = mo.extend(s)
    xi = np.array([1.0])
    assert np.array_equal(ev(np.array([-1.0]), xi), s.at([0.0], xi))
    assert np.array_equal(ev(np.array([0.4]), xi), s.at([0.4], xi))
    lo, hi = matcore.hermitian_extremes(ev(np.array([s.T + 5]), xi))
    assert s.lam <= lo[0] and hi[0] <= s.Lam


# ---------------------------------------------------------------- S_eps

@pytest.mark.parametrize("eps", [0.0, -0.1, 1.5, float("nan")])
def test_bad_epsilon(eps):
    ms = mo.mollify(sy.identity(PAIR))
    with pytest.raises(BadEpsilon):
        ms.value(eps, [0.5], [1.0])
    with pytest.raises(BadEpsilon):
        mo.mollify(sy.identity(PAIR), eps=eps)


def test_constant_symmetrizer_is_unchanged():
    S0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    ms = mo.mollify(sy.constant_matrix(PAIR, S0))
    t = np.linspace(0, 1, 11)
    assert np.allclose(ms.value(0.3, t, [1.0]), S0, atol=1e-10)
    assert np.allclose(ms.derivative(0.3, t, [1.0]), 0, atol=1e-10)


@given(st.floats(0.01, 0.5), st.floats(0.0, 1.0))
def test_linear_symmetrizer_is_reproduced_inside(eps, u):
    ms = mo.mollify(linear())
    t = eps + u * (1 - 2 * eps)
    assert np.allclose(ms.value(eps, [t], [1.0])[0], (1 + t) * np.eye(2), atol=1e-10)
    assert np.allclose(ms.derivative(eps, [t], [1.0])[0], np.eye(2), atol=1e-9)


@pytest.mark.parametrize("name", ["smooth", "holder", "piecewise"])
def test_derivative_matches_finite_differences(presets, name):
    ms = mo.mollify(sy.build_strict(presets[name]))
    eps, h = 0.1, 1e-5
    t = np.linspace(0.05, 0.95, 13)
    xi = [1.3]
    d = ms.derivative(eps, t, xi)
    fd = (ms.value(eps, t + h, xi) - ms.value(eps, t - h, xi)) / (2 * h)
    err = matcore.op_norm(d - fd)
    assert np.all(err <= np.maximum(1e-6, 1e-4 * matcore.op_norm(d)))


def test_both_matches_separate_calls(presets):
    ms = mo.mollify(sy.build_strict(presets["holder"]))
    t = np.linspace(0, 1, 7)
    v, d = ms.both(0.2, t, [2.0])
    assert np.allclose(v, ms.value(0.2, t, [2.0]))
    assert np.allclose(d, ms.derivative(0.2, t, [2.0]))


def test_value_with_hull_agrees_with_value(presets):
    ms = mo.mollify(sy.build_strict(presets["smooth"]))
    t = np.array([0.1, 0.5, 0.9])
    v, lo, hi = ms.value_with_hull([0.05, 0.2, 0.7], t, [[1.0], [-2.0], [0.3]])
    for k, (e, x) in enumerate(zip([0.05, 0.2, 0.7], [1.0, -2.0, 0.3])):
        assert np.allclose(v[k], ms.value(e, [t[k]], [x])[0])
    assert np.all(lo <= hi)


@pytest.mark.parametrize("name", ["constant", "smooth", "piecewise", "holder"])
def test_matrix_inequality_at_random_samples(presets, name):
    ms = mo.mollify(sy.build_strict(presets[name]))
    rep = mo.bound_check(ms, mo.random_bound_samples(ms, 1000, seed=5))
    assert rep.passed, rep.to_dict()
    v = ms.value(0.1, np.linspace(0, 1, 9), [1.0])
    assert np.allclose(v, matcore.adjoint(v), atol=1e-12)


@pytest.mark.parametrize("name", ["constant", "piecewise"])
def test_skewed_symmetrizer_is_caught(presets, name):
    ms = mo.mollify(sy.build_strict(presets[name]))
    rep = mo.bound_check(ms, mo.random_bound_samples(ms, 200, seed=1), mutate=lambda S: 1.01 * S)
    assert not rep.passed


@pytest.mark.parametrize("name", ["smooth", "holder"])
def test_mollification_error_shrinks_with_eps(presets, name):
    ms = mo.mollify(sy.build_strict(presets[name]))
    lhs = [mo.lemma33_report(ms, [1.0], e).lhs1 for e in (0.2, 0.1, 0.05, 0.025)]
    assert all(b <= 1.05 * a for a, b in zip(lhs, lhs[1:]))


# ---------------------------------------------------------------- omega_S

def brute_omega(s, xi, sigma, points=1001):
    taus = np.linspace(0, sigma, points)
    return float(np.max(mo.omega_profile(s, xi, sigma, taus)))


def test_omega_constant_is_zero():
    assert mo.omega_S(sy.identity(PAIR), [1.0], 0.3) == 0.0


@pytest.mark.parametrize("sigma", [0.05, 0.25, 0.5])
def test_omega_linear_closed_form(sigma):
    assert mo.omega_S(linear(), [1.0], sigma) == pytest.approx(sigma * (1 - sigma), rel=1e-10)


def test_omega_monotone_attained_at_sigma():
    c = PAIR
    s = sy.sampled(c, [0.0, 0.3, 1.0], [np.eye(2), np.diag([1.5, 1.1]), np.diag([2.0, 3.0])])
    sigma = 0.2
    at_sigma = mo.omega_profile(s, [1.0], sigma, [sigma])[0]
    assert mo.omega_S(s, [1.0], sigma) == pytest.approx(at_sigma, rel=1e-12)
    assert mo.omega_S(s, [1.0], sigma) == pytest.approx(brute_omega(s, [1.0], sigma), rel=1e-12)


@pytest.mark.parametrize("name", ["smooth", "holder"])
def test_omega_matches_dense_tau_grid(presets, name):
    s = sy.build_strict(presets[name])
    om = mo.omega_S(s, [1.0], 0.3)
    brute = brute_omega(s, [1.0], 0.3)
    assert om >= brute * (1 - 1e-6)
    assert om <= brute * (1 + 1e-3)


def test_omega_rejects_sigma():
    with pytest.raises(ValueError):
        mo.omega_S(linear(), [1.0], 1.0)


# ---------------------------------------------------------------- mollification bounds

def test_lemma33_constant_symmetrizer():
    r = mo.lemma33_report(mo.mollify(sy.identity(PAIR)), [1.0], 0.1)
    assert r.lhs1 <= 1e-14 and r.lhs2 <= 1e-14
    assert r.ratio1 <= 1e-13 and r.ratio2 <= 1e-13


def test_lemma33_linear():
    r = mo.lemma33_report(mo.mollify(linear()), [1.0], 0.1)
    assert r.ratio1 <= 1 and r.ratio2 <= 1
    # int |dS_eps/dt| equals the mass of rho_eps seen from inside [0, 1]
    m1, _ = scipy.integrate.quad(lambda u: abs(u) * K.rho(u), -1, 1, points=[0])
    assert r.lhs2 == pytest.approx(1 - 0.1 * m1, rel=1e-7)


def test_lemma33_jump_is_finite_as_eps_shrinks():
    ms = mo.mollify(jump())
    recs = [mo.lemma33_report(ms, [1.0], e) for e in (0.2, 0.1, 0.05)]
    assert all(r.passed for r in recs)
    # the derivative integral is the total variation of the jump, whatever eps is
    for r in recs:
        assert r.lhs2 == pytest.approx(1.0, rel=1e-4)
    assert recs[2].lhs1 < recs[1].lhs1 < recs[0].lhs1


@pytest.mark.parametrize("name", ["constant", "smooth", "piecewise", "holder"])
def test_lemma33_ratios_on_presets(presets, name):
    ms = mo.mollify(sy.build_strict(presets[name]))
    for eps in (0.2, 0.1, 0.05, 0.02):
        r = mo.lemma33_report(ms, [1.0], eps)
        assert r.ratio1 <= 1 and r.ratio2 <= 1, r.to_dict()


@st.composite
def sampled_symmetrizer(draw):
    k = draw(st.integers(2, 6))
    inner = sorted(draw(st.lists(st.floats(0.02, 0.98), min_size=k - 2, max_size=k - 2,
                                 unique=True)))
    times = np.array([0.0] + inner + [1.0])
    assume(np.all(np.diff(times) > 1e-3))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    M = np.random.default_rng(seed).standard_normal((k, 2, 2))
    S = np.einsum("kab,kcb->kac", M, M) + 0.2 * np.eye(2)
    return sy.sampled(PAIR, times, S)


@settings(max_examples=100)
@given(sampled_symmetrizer(), st.sampled_from([0.2, 0.1, 0.05, 0.02]))
def test_lemma33_ratios_on_random_sampled_symmetrizers(s, eps):
    r = mo.lemma33_report(mo.mollify(s), [1.0], eps)
    assert r.ratio1 <= 1 and r.ratio2 <= 1, r.to_dict()


def test_lemma33_record_serializes():
    r = mo.lemma33_report(mo.mollify(linear()), [1.0], 0.1)
    d = r.to_dict()
    assert {"ratio1", "ratio2", "omega_S", "C", "coarse_bound", "mu_S"} <= set(d)
    assert len(r.csv_row()) == len(mo.MollificationRecord.CSV_FIELDS)
    assert math.isfinite(d["rhs1"])
