import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from hypercone import coefficients as co
from hypercone import matcore
from hypercone import symmetrizer as sy
from hypercone.errors import (IllConditionedEigenbasis, NotSelfAdjoint, NotStrictlyHyperbolic,
                              SingularSymmetrizer)

from conftest import SKEWED, WAVE


def oracle_2x2(t_matrix):
    """``(R^-1)^* R^-1`` from the hand eigendecomposition of ``[[a, b], [0, d]]``."""
    a, b, d = t_matrix[0, 0], t_matrix[0, 1], t_matrix[1, 1]
    r1 = np.array([1.0, 0.0])
    r2 = np.array([b, d - a]) / np.hypot(b, d - a)
    Rinv = np.linalg.inv(np.column_stack([r1, r2]))
    return Rinv.T @ Rinv


def test_symmetric_coefficients_give_identity():
    s = sy.build_strict(co.smooth(WAVE))
    S = s.pairs(np.linspace(0, 1, 9), np.full((9, 1), 2.5))
    assert np.allclose(S, np.eye(2), atol=1e-10)


def test_skewed_example_matches_hand_oracle():
    c = co.constant(SKEWED)
    s = sy.build_strict(c)
    for xi in (0.3, 1.0, -4.0):
        S = s(0.5, [xi])
        assert np.allclose(S, oracle_2x2(np.array(SKEWED[0])), atol=1e-12)
        SA = S @ (xi * np.array(SKEWED[0]))
        assert np.linalg.norm(SA - SA.T) <= 1e-10 * np.linalg.norm(SA)
    assert s.lam > 0


def test_scalar_family_gives_one():
    s = sy.build_strict(co.smooth([[[2.0]]]))
    assert np.allclose(s.pairs([0.1, 0.9], [[1.0], [-3.0]]), 1.0)


def test_build_strict_rejects_non_strict():
    with pytest.raises(NotStrictlyHyperbolic):
        sy.build_strict(co.constant([np.diag([1.0, 1.0, -1.0])]))


def test_build_strict_rejects_ill_conditioned_basis():
    # relative gap just above 1e-6, eigenvector condition just above 1e6
    with pytest.raises(IllConditionedEigenbasis):
        sy.build_strict(co.constant([[[0.0, 10.0], [0.0, 1.65e-5]]]))


@st.composite
def diagonalizable(draw):
    gaps = draw(st.lists(st.floats(0.2, 2.0), min_size=2, max_size=2))
    d = np.cumsum([draw(st.floats(-2, 0))] + gaps)
    P = draw(arrays(float, (3, 3), elements=st.floats(-0.5, 0.5)))
    V = np.eye(3) + P
    assume(np.linalg.cond(V) < 50)
    return V, d


@given(diagonalizable(), st.permutations([0, 1, 2]), st.lists(st.sampled_from([-1.0, 1.0]),
                                                             min_size=3, max_size=3))
def test_symmetrizer_independent_of_eigenvector_order_and_sign(vd, perm, signs):
    V, d = vd
    A = V @ np.diag(d) @ np.linalg.inv(V)
    s = sy.build_strict(co.constant([A]))
    R = V / np.linalg.norm(V, axis=0)
    R = R[:, perm] * np.array(signs)
    Rinv = np.linalg.inv(R)
    oracle = Rinv.T @ Rinv
    assert np.allclose(s(0.3, [1.0]), oracle, rtol=1e-8, atol=1e-8)
    assert np.allclose(s(0.3, [-2.0]), oracle, rtol=1e-8, atol=1e-8)


def test_validate_identity_with_symmetric_coefficients():
    c = co.smooth(WAVE)
    rep = sy.validate(sy.identity(c), c)
    assert rep.passed and rep.lambda_min == rep.lambda_max == 1.0


def test_validate_identity_with_skewed_coefficients_fails_sa():
    c = co.constant(SKEWED)
    rep = sy.validate(sy.identity(c), c)
    assert not rep.properties["sa_self_adjoint"].passed
    assert rep.properties["self_adjoint"].passed and rep.properties["bounds"].passed
    assert rep.sa_max > 0


def test_validate_diagonal_example_fails():
    c = co.constant([[[0.0, 1.0], [4.0, 0.0]]])
    rep = sy.validate(sy.constant_matrix(c, np.diag([1.0, 4.0])), c)
    assert not rep.passed


@pytest.mark.parametrize("name", ["constant", "smooth", "piecewise", "holder"])
def test_build_strict_validates_on_presets(presets, name):
    c = presets[name]
    s = sy.build_strict(c)
    samples = sy.validation_samples(c, 512, seed=7)
    rep = sy.validate(s, c, samples)
    assert rep.passed, rep.to_dict()
    assert all(p.worst <= 1e-9 for p in rep.properties.values())
    adj = sy.adjoint_check(s, c, samples)
    assert adj.passed, adj.to_dict()
    # |S^-1| <= 1 / lam at every sample
    Sinv = np.linalg.inv(s.pairs(*samples))
    assert np.all(matcore.op_norm(Sinv) <= 1 / s.lam * (1 + 1e-12))


def test_validation_report_serializes(presets):
    c = presets["smooth"]
    d = sy.validate(sy.build_strict(c), c).to_dict()
    json.dumps(d)
    assert set(d["properties"]) == {"self_adjoint", "bounds", "homogeneity", "sa_self_adjoint"}
    assert "worst_sample" in d["properties"]["bounds"]


def test_validate_detects_understated_bounds(presets):
    c = presets["smooth"]
    s = sy.build_strict(c)
    rep = sy.validate(s.with_bounds(s.lam * 1.2, s.Lam / 1.2), c)
    assert not rep.properties["bounds"].passed


def test_zero_frequency_rejected(presets):
    c = presets["constant"]
    with pytest.raises(ValueError):
        sy.validate(sy.build_strict(c), c, ([0.2], [[0.0]]))


def test_constant_matrix_requires_positive_definite():
    c = co.constant(WAVE)
    with pytest.raises(SingularSymmetrizer):
        sy.constant_matrix(c, np.diag([1.0, -1.0]))


def test_load_matrix_file(tmp_path):
    c = co.constant(WAVE)
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"matrix": [[2.0, 0.0], [0.0, 3.0]]}))
    s = sy.load_matrix_file(c, p)
    assert (s.lam, s.Lam) == (2.0, 3.0)
    p.write_text("[1, 2]")
    with pytest.raises(ValueError):
        sy.load_matrix_file(c, p)


def test_sampled_symmetrizer():
    c = co.constant(WAVE)
    S = np.array([np.eye(2), 3 * np.eye(2)])
    s = sy.sampled(c, [0.0, 1.0], S)
    assert np.allclose(s(0.25, [1.0]), 1.5 * np.eye(2))
    assert (s.lam, s.Lam) == (1.0, 3.0)
    with pytest.raises(NotSelfAdjoint):
        sy.sampled(c, [0.0, 1.0], [[[1, 1], [0, 1]], np.eye(2)])
