"""Microlocal symmetrizers ``S(t, xi)`` and their validation.

A symmetrizer is self-adjoint, bounded as ``lam Id <= S <= Lam Id``, homogeneous
of degree 0 in ``xi``, and makes ``S A`` self-adjoint. The eigen-built variant
takes ``S = (R^-1)^* R^-1`` where ``A(t, nu) = R diag(mu) R^-1`` with unit
columns, evaluated at ``nu = xi / |xi|``. Reordering columns or changing their
phase leaves that sum untouched, so no eigenvector bookkeeping is needed.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import (IllConditionedEigenbasis, NotSelfAdjoint, NotStrictlyHyperbolic,
                     SingularSymmetrizer)
from .symbol import STRICT, classify, default_samples, sphere_directions, symbol_pairs

COND_CAP = 1e6
BOUND_MARGIN = 0.1
SELFADJOINT_TOL = 1e-10
BOUND_SLACK = 1e-9
HOMOGENEITY_TOL = 1e-12
SA_TOL = 1e-9
ADJOINT_TOL = 1e-9


class Symmetrizer:
    """Evaluator for ``S(t, xi)`` with declared bounds ``lam``, ``Lam``.

    ``evaluator(t, xi)`` takes paired arrays of shapes ``(P,)`` and ``(P, n)``
    and returns ``(P, m, m)``. ``breakpoints`` are times where ``S`` may jump or
    lose smoothness; ``even`` records ``S(t, -xi) = S(t, xi)``.
    """

    def __init__(self, evaluator, n, m, T, lam, Lam, provenance, breakpoints=(), even=False):
        if not 0 < lam <= Lam:
            raise ValueError(f"need 0 < lam <= Lam, got {lam}, {Lam}")
        self._evaluator = evaluator
        self.n, self.m, self.T = int(n), int(m), float(T)
        self.lam, self.Lam = float(lam), float(Lam)
        self.provenance = provenance
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.even = bool(even)

    def pairs(self, t, xi):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[1] != self.n:
            raise ValueError(f"frequency must have {self.n} components")
        if len(xi) == 1 and len(t) > 1:
            xi = np.broadcast_to(xi, (len(t), self.n))
        return self._evaluator(t, xi)

    def at(self, t, xi):
        """``S`` at a single frequency for an array of times: shape ``(K, m, m)``."""
        return self.pairs(t, np.asarray(xi, dtype=float)[None])

    def __call__(self, t, xi):
        return self.pairs([t], [xi])[0]

    def with_bounds(self, lam, Lam):
        return Symmetrizer(self._evaluator, self.n, self.m, self.T, lam, Lam,
                           self.provenance, self.breakpoints, self.even)

    def describe(self):
        return {"provenance": self.provenance, "lambda": self.lam, "Lambda": self.Lam,
                "m": self.m, "n": self.n}


def identity(c):
    """``S = Id`` with ``lam = Lam = 1``."""
    m = c.m

    def ev(t, xi):
        return np.broadcast_to(np.eye(m), (len(t), m, m)).copy()

    return Symmetrizer(ev, c.n, m, c.T, 1.0, 1.0, "identity", even=True)


def constant_matrix(c, S0):
    """A user-supplied constant positive definite matrix; bounds are its extreme eigenvalues."""
    S0 = matcore.as_mat(S0)
    if S0.shape[0] != c.m:
        raise ValueError(f"symmetrizer must be {c.m} x {c.m}")
    lo, hi = matcore.psd_bounds(S0)
    if lo <= 0:
        raise SingularSymmetrizer("supplied symmetrizer is not positive definite")
    S0 = (S0 + matcore.adjoint(S0)) / 2

    def ev(t, xi):
        return np.broadcast_to(S0, (len(t),) + S0.shape).copy()

    return Symmetrizer(ev, c.n, c.m, c.T, lo, hi, "user_supplied", even=True)


def from_callable(c, fn, lam, Lam, breakpoints=(), even=False):
    """Wrap ``fn(t, xi) -> (m, m)`` (scalar time, single frequency) as a user symmetrizer."""
    def ev(t, xi):
        return np.stack([np.asarray(fn(float(a), b)) for a, b in zip(t, xi)])

    return Symmetrizer(ev, c.n, c.m, c.T, lam, Lam, "user_supplied", breakpoints, even)


def sampled(c, times, matrices):
    """Piecewise-linear interpolation of positive definite matrices given at ``times``.

    Independent of ``xi``; bounds are the extreme node eigenvalues, which also
    bound every convex combination in between.
    """
    times = np.asarray(times, dtype=float)
    S = np.asarray(matrices, dtype=float)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("need at least two strictly increasing sample times")
    if times[0] != 0 or abs(times[-1] - c.T) > 1e-12 * c.T:
        raise ValueError("sample times must span [0, T]")
    if S.shape != (len(times), c.m, c.m):
        raise ValueError(f"matrices must have shape {(len(times), c.m, c.m)}")
    if not np.allclose(S, np.swapaxes(S, -1, -2), rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise NotSelfAdjoint("sampled symmetrizer matrices must be symmetric")
    S = (S + np.swapaxes(S, -1, -2)) / 2
    lo, hi = matcore.hermitian_extremes(S)
    if lo.min() <= 0:
        raise SingularSymmetrizer("sampled symmetrizer is not positive definite")

    def ev(t, xi):
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
        w = ((t - times[k]) / (times[k + 1] - times[k]))[:, None, None]
        return (1 - w) * S[k] + w * S[k + 1]

    return Symmetrizer(ev, c.n, c.m, c.T, float(lo.min()), float(hi.max()), "user_supplied",
                       breakpoints=times[1:-1], even=True)


def load_matrix_file(c, path):
    """JSON file holding ``{"matrix": [[...], ...]}`` for a constant symmetrizer."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "matrix" not in data:
        raise ValueError(f"{path}: expected an object with key 'matrix'")
    return constant_matrix(c, np.asarray(data["matrix"], dtype=float))


def _real_2x2_vectors(A):
    """Unit eigenvectors of real 2x2 matrices with real distinct eigenvalues.

    Returns ``(R, ok)``; rows where the discriminant is not positive are left
    for the general solver.
    """
    a, b, c, d = A[:, 0, 0], A[:, 0, 1], A[:, 1, 0], A[:, 1, 1]
    half = (a - d) / 2
    disc = half * half + b * c
    ok = disc > 0
    root = np.sqrt(np.where(ok, disc, 0.0))
    mid = (a + d) / 2
    cols = []
    for mu in (mid + root, mid - root):
        # two candidate kernels of A - mu; the longer one avoids cancellation
        v1 = np.stack([b, mu - a], axis=-1)
        v2 = np.stack([mu - d, c], axis=-1)
        n1 = np.linalg.norm(v1, axis=-1)
        n2 = np.linalg.norm(v2, axis=-1)
        v = np.where((n1 >= n2)[:, None], v1, v2)
        nv = np.maximum(n1, n2)
        ok &= nv > 0
        cols.append(v / np.where(nv > 0, nv, 1.0)[:, None])
    return np.stack(cols, axis=-1), ok


def _eigen_parts(A, with_cond=False):
    """Batched ``S`` (and ``cond(R)`` on request) for a stack of diagonalizable matrices.

    Uses ``(R^-1)^* R^-1 = (R R^*)^-1``.
    """
    if A.shape[-1] == 1:
        return np.ones_like(A), np.ones(A.shape[0])
    if A.shape[-1] == 2 and np.isrealobj(A):
        R, ok = _real_2x2_vectors(A)
        if not np.all(ok):
            R = R.astype(complex)
            R[~ok] = _general_vectors(A[~ok])
    else:
        R = _general_vectors(A)
    G = R @ matcore.adjoint(R)
    try:
        S = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedEigenbasis("eigenvector matrix is singular") from exc
    S = (S + matcore.adjoint(S)) / 2
    if np.isrealobj(A):
        S = S.real
    if not with_cond:
        return S, None
    sv = np.linalg.svd(R, compute_uv=False)
    with np.errstate(divide="ignore"):
        cond = sv[..., 0] / sv[..., -1]
    return S, cond


def _general_vectors(A):
    _, R = np.linalg.eig(A)
    return R / np.linalg.norm(R, axis=-2, keepdims=True)


def build_strict(c, samples=None, margin=BOUND_MARGIN):
    """Eigen-built symmetrizer for a strictly hyperbolic family.

    Bounds are the extreme eigenvalues of ``S`` over the sample grid, widened by
    ``margin`` (``lam`` shrunk, ``Lam`` grown).
    """
    samples = default_samples(c) if samples is None else samples
    cls = classify(c, samples)
    if cls.name != STRICT:
        raise NotStrictlyHyperbolic(
            f"family is {cls.name} (witness t={cls.witness_t:.6g}, xi={list(cls.witness_xi)})")

    def ev(t, xi):
        nrm = np.linalg.norm(xi, axis=1, keepdims=True)
        if np.any(nrm == 0):
            raise ValueError("symmetrizer is undefined at xi = 0")
        S, _ = _eigen_parts(symbol_pairs(c, t, xi / nrm))
        return S

    t, xi = samples
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    S, cond = _eigen_parts(symbol_pairs(c, t, xi / np.linalg.norm(xi, axis=1, keepdims=True)),
                           with_cond=True)
    if not np.all(cond <= COND_CAP):
        k = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise IllConditionedEigenbasis(
            f"eigenvector condition {cond[k]:.3g} exceeds {COND_CAP:g} at t={t[k]:.6g}")
    lo, hi = matcore.hermitian_extremes(S)
    return Symmetrizer(ev, c.n, c.m, c.T, (1 - margin) * float(lo.min()),
                       (1 + margin) * float(hi.max()), "eigen_built",
                       breakpoints=c.breakpoints, even=True)


# ---------------------------------------------------------------- validation

def validation_samples(c, count=512, seed=0):
    """``count`` pairs: time quantiles x unit directions x log-uniform magnitudes."""
    rng = np.random.default_rng(seed)
    n_dir = 32
    n_t = max(1, count // n_dir)
    dirs = np.resize(sphere_directions(c.n, n_dir), (n_dir, c.n))
    t = np.repeat(np.linspace(0.0, c.T, n_t), n_dir)
    xi = np.tile(dirs, (n_t, 1))
    mags = 10.0 ** rng.uniform(-2, 2, size=len(t))
    return t, xi * mags[:, None]


@dataclass
class PropertyResult:
    passed: bool
    worst: float
    tolerance: float
    worst_t: float
    worst_xi: tuple

    def to_dict(self):
        return {"passed": self.passed, "worst": self.worst, "tolerance": self.tolerance,
                "worst_sample": {"t": self.worst_t, "xi": list(self.worst_xi)}}


@dataclass
class ValidationReport:
    properties: dict
    lambda_min: float
    lambda_max: float
    sa_max: float
    samples: int
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(p.passed for p in self.properties.values())

    def to_dict(self):
        return {"passed": self.passed, "samples": self.samples,
                "lambda_min": self.lambda_min, "lambda_max": self.lambda_max,
                "sa_max": self.sa_max,
                "properties": {k: v.to_dict() for k, v in self.properties.items()},
                **self.extra}


def _property(values, tol, t, xi):
    values = np.where(np.isfinite(values), values, np.inf)
    k = int(np.argmax(values))
    worst = float(values[k])
    return PropertyResult(bool(worst <= tol), worst, tol, float(t[k]),
                          tuple(float(v) for v in xi[k]))


def _samples(c, samples):
    t, xi = validation_samples(c) if samples is None else samples
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if len(t) == 0 or len(t) != len(xi):
        raise ValueError("need a nonempty list of (t, xi) samples")
    if np.any(np.linalg.norm(xi, axis=1) == 0):
        raise ValueError("sample frequencies must be nonzero")
    return t, xi


def validate(s, c, samples=None):
    """Check self-adjointness, the two-sided bound, degree-0 homogeneity and
    self-adjointness of ``S A`` at every sample."""
    t, xi = _samples(c, samples)
    S = s.pairs(t, xi)
    S2 = s.pairs(t, 2 * xi)
    A = symbol_pairs(c, t, xi)
    nS = matcore.op_norm(S)
    tiny = np.finfo(float).tiny

    sa_self = matcore.op_norm(S - matcore.adjoint(S)) / np.maximum(nS, tiny)
    lo, hi = matcore.hermitian_extremes(S)
    bound = np.maximum(np.maximum(s.lam - lo, hi - s.Lam), 0.0)
    homog = np.max(np.abs(S2 - S), axis=(-2, -1)) / np.maximum(nS, 1.0)
    SA = S @ A
    sa_abs = matcore.op_norm(SA - matcore.adjoint(SA))
    sa_rel = sa_abs / np.maximum(nS * matcore.op_norm(A), tiny)
    sa_rel = np.where(sa_abs == 0, 0.0, sa_rel)

    props = {
        "self_adjoint": _property(sa_self, SELFADJOINT_TOL, t, xi),
        "bounds": _property(bound, BOUND_SLACK * max(1.0, s.Lam), t, xi),
        "homogeneity": _property(homog, HOMOGENEITY_TOL, t, xi),
        "sa_self_adjoint": _property(sa_rel, SA_TOL, t, xi),
    }
    return ValidationReport(props, float(lo.min()), float(hi.max()), float(sa_abs.max()), len(t),
                            extra={"declared": {"lambda": s.lam, "Lambda": s.Lam},
                                   "provenance": s.provenance})


def adjoint_check(s, c, samples=None):
    """``S^-1 A^*`` self-adjoint at every sample, and ``|S^-1| <= 1 / lam``."""
    t, xi = _samples(c, samples)
    S = s.pairs(t, xi)
    A = symbol_pairs(c, t, xi)
    lo, hi = matcore.hermitian_extremes(S)
    if not np.all(lo > 0):
        raise SingularSymmetrizer("symmetrizer is not positive definite at every sample")
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise SingularSymmetrizer(f"cannot invert symmetrizer: {exc}") from exc
    B = Sinv @ matcore.adjoint(A)
    nA = matcore.op_norm(A)
    nSinv = matcore.op_norm(Sinv)
    viol_abs = matcore.op_norm(B - matcore.adjoint(B))
    viol = np.where(viol_abs == 0, 0.0,
                    viol_abs / np.maximum(nA * np.maximum(nSinv, 1.0), np.finfo(float).tiny))
    inv_excess = np.maximum(nSinv - 1.0 / s.lam, 0.0) * s.lam
    props = {
        "adjoint_self_adjoint": _property(viol, ADJOINT_TOL, t, xi),
        "inverse_bound": _property(inv_excess, BOUND_SLACK, t, xi),
    }
    return ValidationReport(props, float(lo.min()), float(hi.max()), float(viol_abs.max()), len(t),
                            extra={"inverse_norm_max": float(nSinv.max())})
