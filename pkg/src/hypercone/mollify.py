"""Time mollification of a symmetrizer.

``S_eps(t) = int rho_eps(t - tau) S(tau) dtau`` with ``rho_eps(s) = rho(s / eps) / eps``
and ``S`` extended by its endpoint values outside ``[0, T]``. Writing
``tau = t - eps s`` turns both ``S_eps`` and ``dS_eps/dt`` into integrals over
``s in [-1, 1]``, which are done with 64-node Gauss-Legendre on every piece
between breakpoints of ``S`` so that jumps never sit inside a quadrature cell.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from . import matcore
from .errors import BadEpsilon

GL_NODES = 64
OMEGA_TAU_POINTS = 33
OMEGA_T_NODES = 512
GOLDEN_ITERS = 24
_CHUNK = 128


def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    q = np.where(inside, 1 - s * s, 1.0)
    return np.where(inside, np.exp(-1 / q), 0.0)


def _bump_prime(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    q = np.where(inside, 1 - s * s, 1.0)
    return np.where(inside, -2 * s / (q * q) * np.exp(-1 / q), 0.0)


class MollifierKernel:
    """``rho(s) = c exp(-1 / (1 - s^2))`` on ``|s| < 1`` with unit mass."""

    def __init__(self, nodes=GL_NODES):
        mass, _ = scipy.integrate.quad(_bump, 0, 1, epsabs=1e-16, epsrel=1e-13)
        self.c = 1.0 / (2 * mass)
        self.nodes, self.weights = np.polynomial.legendre.leggauss(nodes)
        self.n_nodes = nodes
        # both L1 norms by Gauss-Legendre on each half, where rho' has one sign
        x = (self.nodes + 1) / 2
        w = self.weights / 2
        self.l1 = float(np.sum(w * self.rho(x)) + np.sum(w * self.rho(-x)))
        self.dl1 = float(np.sum(w * np.abs(self.drho(x))) + np.sum(w * np.abs(self.drho(-x))))
        self.max = float(self.rho(0.0))

    def rho(self, s):
        return self.c * _bump(s)

    def drho(self, s):
        return self.c * _bump_prime(s)

    def rho_eps(self, eps, x):
        return self.rho(np.asarray(x) / eps) / eps

    def mollifier_constant(self):
        """``C = 2 max(|rho|_1, |rho'|_1)``."""
        return 2.0 * max(self.l1, self.dl1)

    def to_dict(self):
        return {"c": self.c, "l1": self.l1, "dl1": self.dl1, "max": self.max,
                "nodes": self.n_nodes}


KERNEL = MollifierKernel()


def extend(s):
    """Evaluator ``(t, xi) -> S`` on all of R, constant beyond ``[0, T]``."""
    def ev(t, xi):
        return s.at(np.clip(np.asarray(t, dtype=float), 0.0, s.T), xi)
    return ev


def _check_eps(eps):
    if not (np.isfinite(eps) and 0 < eps <= 1):
        raise BadEpsilon(f"epsilon must lie in (0, 1], got {eps}")
    return float(eps)


class MollifiedSymmetrizer:
    """``S_eps`` and ``dS_eps/dt`` for a base symmetrizer, any ``eps in (0, 1]``."""

    extension = "constant"

    def __init__(self, base, kernel=KERNEL):
        self.base = base
        self.kernel = kernel
        self.T = base.T
        self.lam, self.Lam = base.lam, base.Lam
        self._ext = extend(base)
        # S loses smoothness at its own breakpoints and, once extended, at 0 and T
        self._cuts = np.array(sorted({0.0, base.T, *base.breakpoints}))

    def _nodes(self, eps, t):
        """Quadrature in ``s`` for each time: nodes ``(K, Q)``, weights for rho and rho'.

        ``eps`` is a scalar or one value per time.
        """
        k = self.kernel
        eps = np.broadcast_to(np.asarray(eps, dtype=float), t.shape)
        lo, hi = np.min(t - eps), np.max(t + eps)
        cuts = self._cuts[(self._cuts > lo) & (self._cuts < hi)]
        inner = np.clip((t[:, None] - cuts[None, :]) / eps[:, None], -1.0, 1.0)
        edges = np.sort(np.concatenate([np.full((len(t), 1), -1.0), inner,
                                        np.full((len(t), 1), 1.0)], axis=1), axis=1)
        a, b = edges[:, :-1, None], edges[:, 1:, None]
        half = (b - a) / 2
        s = (a + half * (k.nodes + 1)).reshape(len(t), -1)
        W = (half * k.weights).reshape(len(t), -1)
        w0 = W * k.rho(s)
        w0 = w0 / w0.sum(axis=1, keepdims=True)
        w1 = W * k.drho(s) / eps[:, None]
        return s, w0, w1, eps

    def _node_values(self, eps, t, xi):
        """``S`` at the nodes ``tau = t - eps s``; ``xi`` is one vector or one per time."""
        s, w0, w1, eps = self._nodes(eps, t)
        tau = t[:, None] - eps[:, None] * s
        # padded pieces of zero length carry no weight; skip evaluating S there
        live = w0 != 0
        m = self.base.m
        S_tau = np.zeros(tau.shape + (m, m))
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1:
            S_tau[live] = self._ext(tau[live], xi)
        else:
            xi_nodes = np.broadcast_to(xi[:, None, :], tau.shape + (xi.shape[-1],))
            S_tau[live] = self.base.pairs(np.clip(tau[live], 0.0, self.T), xi_nodes[live])
        return S_tau, w0, w1, live

    def _chunk(self, eps, t, xi, want_value, want_deriv):
        S_tau, w0, w1, _ = self._node_values(eps, t, xi)
        out = []
        if want_value:
            out.append(np.einsum("kq,kqab->kab", w0, S_tau))
        if want_deriv:
            S_t = self._ext(t, xi)
            out.append(np.einsum("kq,kqab->kab", w1, S_tau - S_t[:, None]))
        return out

    def value_with_hull(self, eps, t, xi):
        """``S_eps`` at paired ``(eps, t, xi)`` samples, with the spectral hull of its nodes.

        ``S_eps`` is a convex combination of the node values ``S(tau_k)``, so its
        eigenvalues must lie in ``[min_k lambda_min(S(tau_k)), max_k lambda_max(S(tau_k))]``.
        Returns ``(S_eps, lo, hi)``.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        eps = np.broadcast_to(np.asarray(eps, dtype=float), t.shape)
        for e in np.unique(eps):
            _check_eps(e)
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        xi = np.broadcast_to(xi, (len(t), xi.shape[-1]))
        out = ([], [], [])
        for i in range(0, len(t), _CHUNK):
            sl = slice(i, i + _CHUNK)
            S_tau, w0, _, live = self._node_values(eps[sl], t[sl], xi[sl])
            lo, hi = matcore.hermitian_extremes(S_tau)
            out[0].append(np.einsum("kq,kqab->kab", w0, S_tau))
            out[1].append(np.where(live, lo, np.inf).min(axis=1))
            out[2].append(np.where(live, hi, -np.inf).max(axis=1))
        return tuple(np.concatenate(o) for o in out)

    def _eval(self, eps, t, xi, want_value, want_deriv):
        eps = _check_eps(eps)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        xi = np.asarray(xi, dtype=float)
        parts = [self._chunk(eps, t[i:i + _CHUNK], xi, want_value, want_deriv)
                 for i in range(0, len(t), _CHUNK)]
        return [np.concatenate([p[j] for p in parts]) for j in range(len(parts[0]))]

    def value(self, eps, t, xi):
        """``S_eps(t, xi)`` for an array of times: ``(K, m, m)``."""
        return self._eval(eps, t, xi, True, False)[0]

    def derivative(self, eps, t, xi):
        """``d/dt S_eps(t, xi)`` from the differentiated kernel."""
        return self._eval(eps, t, xi, False, True)[0]

    def both(self, eps, t, xi):
        return tuple(self._eval(eps, t, xi, True, True))


def mollify(s, kernel=KERNEL, eps=None):
    """Wrap ``s``; when ``eps`` is given it is only validated (evaluators take ``eps``)."""
    if eps is not None:
        _check_eps(eps)
    return MollifiedSymmetrizer(s, kernel)


# ---------------------------------------------------------------- omega_S

def _trapz(y, h):
    return h * (np.sum(y) - (y[0] + y[-1]) / 2)


class _OmegaProfile:
    """``tau -> int_0^{T - sigma} |S(t + tau) - S(t)| dt`` on 512 trapezoid nodes."""

    def __init__(self, s, xi, sigma):
        self.s, self.xi = s, xi
        self.t = np.linspace(0.0, s.T - sigma, OMEGA_T_NODES)
        self.h = self.t[1] - self.t[0]
        self.S0 = s.at(self.t, xi)

    def __call__(self, taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        tt = np.minimum((self.t[None, :] + taus[:, None]).ravel(), self.s.T)
        m = self.s.m
        diff = self.s.at(tt, self.xi).reshape(len(taus), len(self.t), m, m) - self.S0[None]
        norms = matcore.op_norm(diff)
        return np.array([_trapz(row, self.h) for row in norms])


def omega_profile(s, xi, sigma, taus):
    return _OmegaProfile(s, np.asarray(xi, dtype=float), sigma)(taus)


def omega_S(s, xi, sigma):
    """``sup_{tau in [0, sigma]} int_0^{T - sigma} |S(t + tau, xi) - S(t, xi)|_M dt``.

    33-point grid in ``tau``, then golden-section search on the bracket around
    the grid maximiser.
    """
    if not 0 < sigma < s.T:
        raise ValueError(f"sigma must lie in (0, T), got {sigma}")
    f = _OmegaProfile(s, np.asarray(xi, dtype=float), sigma)
    grid = np.linspace(0.0, sigma, OMEGA_TAU_POINTS)
    vals = f(grid)
    k = int(np.argmax(vals))
    best = float(vals[k])
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f([c, d])
    for _ in range(GOLDEN_ITERS):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f([c])[0]
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f([d])[0]
        best = max(best, fc, fd)
    return float(best)


def mu_S(s, xi):
    """Mean of ``|S(t, xi)|_M`` over ``[0, T]`` (diagnostic only)."""
    t = np.linspace(0.0, s.T, OMEGA_T_NODES)
    return float(_trapz(matcore.op_norm(s.at(t, xi)), t[1] - t[0]) / s.T)


# ---------------------------------------------------------------- mollification bounds

def time_quadrature(T, cuts, eps, order=8, max_len=None):
    """Composite Gauss-Legendre nodes on ``[0, T]``.

    Cells break at ``cuts`` and at ``cut +- eps``, and are no longer than
    ``max_len`` (default ``eps / 2``).
    """
    max_len = eps / 2 if max_len is None else max_len
    pts = {0.0, float(T)}
    for b in cuts:
        for p in (b - eps, b, b + eps):
            if 0 < p < T:
                pts.add(float(p))
    pts = np.array(sorted(pts))
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(math.ceil((b - a) / max_len)))
        e = np.linspace(a, b, k + 1)
        half = np.diff(e)[:, None] / 2
        nodes.append((e[:-1, None] + half * (x + 1)).ravel())
        weights.append((half * w).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class MollificationRecord:
    eps: float
    xi: tuple
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float
    omega: float
    C: float
    coarse: float
    mu_S: float

    @property
    def ratio1(self):
        return self.lhs1 / self.rhs1 if self.rhs1 > 0 else (0.0 if self.lhs1 == 0 else math.inf)

    @property
    def ratio2(self):
        return self.lhs2 / self.rhs2 if self.rhs2 > 0 else (0.0 if self.lhs2 == 0 else math.inf)

    @property
    def passed(self):
        return self.ratio1 <= 1 and self.ratio2 <= 1

    def to_dict(self):
        return {"eps": self.eps, "xi": list(self.xi), "lhs1": self.lhs1, "rhs1": self.rhs1,
                "ratio1": self.ratio1, "lhs2": self.lhs2, "rhs2": self.rhs2,
                "ratio2": self.ratio2, "omega_S": self.omega, "C": self.C,
                "coarse_bound": self.coarse, "mu_S": self.mu_S, "passed": self.passed}

    CSV_FIELDS = ("eps", "xi", "lhs1", "rhs1", "ratio1", "lhs2", "rhs2", "ratio2")

    def csv_row(self):
        return [self.eps, " ".join(repr(float(v)) for v in self.xi), self.lhs1, self.rhs1,
                self.ratio1, self.lhs2, self.rhs2, self.ratio2]


def lemma33_report(ms, xi, eps):
    """Both mollification integrals against ``C (omega + eps sqrt(Lam))`` and its ``1/eps`` twin.

    ``omega`` is taken at ``sigma = min(eps, T/2)``; ``coarse`` is the
    intermediate estimate ``2 (omega + sigma / T int |S|)``.
    """
    eps = _check_eps(eps)
    xi = np.asarray(xi, dtype=float)
    s = ms.base
    t, w = time_quadrature(s.T, ms._cuts, eps)
    S = s.at(t, xi)
    Se, dSe = ms.both(eps, t, xi)
    lhs1 = float(np.sum(w * matcore.op_norm(Se - S)))
    lhs2 = float(np.sum(w * matcore.op_norm(dSe)))
    sigma = min(eps, s.T / 2)
    om = omega_S(s, xi, sigma)
    C = ms.kernel.mollifier_constant()
    root = math.sqrt(s.Lam)
    mu = mu_S(s, xi)
    return MollificationRecord(
        eps=eps, xi=tuple(float(v) for v in xi),
        lhs1=lhs1, rhs1=C * (om + eps * root),
        lhs2=lhs2, rhs2=C / eps * (om + eps * root),
        omega=om, C=C, coarse=2 * (om + sigma * mu), mu_S=mu,
    )


# ---------------------------------------------------------------- matrix inequality

@dataclass
class BoundSampleReport:
    samples: int
    declared_violation: float
    hull_violation: float
    min_eig: float
    max_eig: float
    slack: float
    worst: dict

    @property
    def passed(self):
        return self.declared_violation <= self.slack and self.hull_violation <= self.slack

    def to_dict(self):
        return {"samples": self.samples, "declared_violation": self.declared_violation,
                "hull_violation": self.hull_violation, "min_eigenvalue": self.min_eig,
                "max_eigenvalue": self.max_eig, "slack": self.slack, "worst": self.worst,
                "passed": self.passed}


def random_bound_samples(ms, count=1000, seed=0, eps_range=(0.01, 1.0)):
    """Random ``(t, xi, eps)``: uniform time, unit direction times log-uniform size."""
    rng = np.random.default_rng(seed)
    n = ms.base.n
    t = rng.uniform(0.0, ms.T, count)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    xi = d * 10.0 ** rng.uniform(-2, 2, count)[:, None]
    eps = np.exp(rng.uniform(np.log(eps_range[0]), np.log(eps_range[1]), count))
    return t, xi, eps


def bound_check(ms, samples=None, slack=1e-9, mutate=None):
    """``lam <= S_eps <= Lam`` and the convex-hull bound at every sample.

    ``mutate`` maps the stack of ``S_eps`` values before the test; the harness
    uses it to confirm that a perturbed ``S_eps`` is caught.
    """
    t, xi, eps = random_bound_samples(ms) if samples is None else samples
    Se, lo_h, hi_h = ms.value_with_hull(eps, t, xi)
    if mutate is not None:
        Se = mutate(Se)
    lo, hi = matcore.hermitian_extremes(Se)
    scale = max(1.0, ms.Lam)
    declared = np.maximum(np.maximum(ms.lam - lo, hi - ms.Lam), 0.0) / scale
    hull = np.maximum(np.maximum(lo_h - lo, hi - hi_h), 0.0) / scale
    k = int(np.argmax(np.maximum(declared, hull)))
    worst = {"t": float(t[k]), "xi": [float(v) for v in np.atleast_1d(xi[k])],
             "eps": float(np.atleast_1d(eps)[k] if np.ndim(eps) else eps)}
    return BoundSampleReport(len(t), float(declared.max()), float(hull.max()),
                             float(lo.min()), float(hi.max()), slack, worst)
