"""Symbol assembly ``A(t, xi) = sum_j xi_j A_j(t)`` and hyperbolicity classes."""
from dataclasses import dataclass

import numpy as np

from . import matcore

GAP_TOL = 1e-6
IMAG_TOL = 1e-8

STRICT = "strictly_hyperbolic"
CONSTANT_MULT = "constant_multiplicities"
HYPERBOLIC = "hyperbolic"
NOT_SEMISIMPLE = "not_semisimple"
NOT_HYPERBOLIC = "not_hyperbolic"

# weakest first; the verdict over a sample set is the minimum rank seen
_RANK = {NOT_HYPERBOLIC: 0, NOT_SEMISIMPLE: 1, HYPERBOLIC: 2, CONSTANT_MULT: 3, STRICT: 4}


def _xi(c, xi, dtype=float):
    xi = np.asarray(xi, dtype=dtype)
    if xi.shape[-1:] != (c.n,):
        raise ValueError(f"frequency must have {c.n} components, got shape {xi.shape}")
    return xi


def symbol_at(c, t, xi):
    """``sum_j xi_j A_j(t)`` for a single time and frequency."""
    xi = _xi(c, xi)
    return np.tensordot(xi, c.matrices(float(t)), axes=(0, 0))


def symbol_complex(c, t, zeta):
    """``A(t, xi) + i A(t, eta)`` for ``zeta = xi + i eta``."""
    zeta = _xi(c, zeta, complex)
    mats = c.matrices(float(t))
    return (np.tensordot(zeta.real, mats, axes=(0, 0))
            + 1j * np.tensordot(zeta.imag, mats, axes=(0, 0)))


def symbol_pairs(c, t, xi):
    """Symbols at paired samples: ``t`` of shape ``(P,)``, ``xi`` of shape ``(P, n)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xi = _xi(c, np.atleast_2d(xi))
    mats = c.matrices(t)
    return np.einsum("pj,pjab->pab", xi, mats)


def sphere_directions(n, count=32):
    """Deterministic unit vectors: ``±1`` in 1-d, equal angles in 2-d, Fibonacci sphere above."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        a = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = np.pi * (1 + 5 ** 0.5) * k
    rad = np.sqrt(1 - z * z)
    head = np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)
    if n == 3:
        return head
    out = np.zeros((count, n))
    out[:, :3] = head
    return out


def default_samples(c, n_t=16, n_dir=32):
    """Tensor grid of time quantiles and unit directions, flattened to pairs."""
    ts = np.linspace(0.0, c.T, n_t)
    dirs = sphere_directions(c.n, n_dir)
    tt = np.repeat(ts, len(dirs))
    xx = np.tile(dirs, (len(ts), 1))
    return tt, xx


@dataclass(frozen=True)
class HyperbolicityClass:
    name: str
    witness_t: float
    witness_xi: tuple
    witness_eigenvalues: tuple
    min_gap: float

    def to_dict(self):
        ev = [[float(np.real(v)), float(np.imag(v))] for v in self.witness_eigenvalues]
        return {"class": self.name, "witness": {"t": self.witness_t, "xi": list(self.witness_xi),
                                                 "eigenvalues": ev},
                "min_relative_gap": self.min_gap if np.isfinite(self.min_gap) else None}


def _sample_verdict(A):
    res = matcore.eig(A)
    w = res.eigenvalues
    scale = 1.0 + matcore.op_norm(A)
    if np.max(np.abs(np.imag(w)), initial=0.0) > IMAG_TOL * scale:
        return NOT_HYPERBOLIC, w, 0.0, None
    if not res.diagonalizable:
        return NOT_SEMISIMPLE, w, 0.0, None
    wr = np.sort(np.real(w))
    gaps = np.diff(wr) / scale
    gap = float(gaps.min()) if len(gaps) else np.inf
    # multiset of multiplicities: flipping xi reorders the eigenvalues but not the pattern
    pattern = tuple(sorted(len(g) for g in matcore.cluster(wr, GAP_TOL * scale)))
    return (STRICT if gap > GAP_TOL else HYPERBOLIC), w, gap, pattern


def classify(c, samples=None):
    """Strongest class consistent with every sample.

    ``samples`` is a pair ``(t, xi)`` of arrays with shapes ``(P,)`` and ``(P, n)``;
    the default is a 16 x 32 grid of time quantiles and unit directions.
    """
    t, xi = default_samples(c) if samples is None else samples
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xi = _xi(c, np.atleast_2d(xi))
    if len(t) == 0 or len(t) != len(xi):
        raise ValueError("need a nonempty list of (t, xi) samples")
    if np.any(np.linalg.norm(xi, axis=1) == 0):
        raise ValueError("sample frequencies must be nonzero")
    mats = symbol_pairs(c, t, xi)

    verdicts = [_sample_verdict(A) for A in mats]
    patterns = {v[3] for v in verdicts if v[3] is not None}
    # rank each sample; key on (rank, gap, index) so ties resolve independent of evaluation order
    def rank(i):
        name, _, gap, _ = verdicts[i]
        return (_RANK[name], gap, i)

    worst = min(range(len(verdicts)), key=rank)
    name = verdicts[worst][0]
    if _RANK[name] >= _RANK[HYPERBOLIC]:
        if all(v[0] == STRICT for v in verdicts):
            name = STRICT
        elif len(patterns) == 1:
            name = CONSTANT_MULT
        else:
            name = HYPERBOLIC
    w = verdicts[worst][1]
    return HyperbolicityClass(
        name=name,
        witness_t=float(t[worst]),
        witness_xi=tuple(float(v) for v in xi[worst]),
        witness_eigenvalues=tuple(complex(v) for v in w),
        min_gap=float(min(v[2] for v in verdicts)),
    )
