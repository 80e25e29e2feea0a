"""Time-dependent coefficient families ``t -> (A_1(t), ..., A_n(t))``.

Built-in presets share one shape::

    A_j(t) = g(t) * U(theta(t)) B_j U(theta(t))^T

with a scalar profile ``g`` and an orthogonal rotation ``U`` of the base
matrices ``B_j``. Rotation leaves operator norms alone, so every preset knows
its ``alpha`` integral in closed form, while a nonzero ``theta`` makes the
eigenvectors (and hence an eigen-built symmetrizer) move in time.
"""
import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.integrate

from .errors import OutOfDomain, QuadratureFailure
from .matcore import op_norm

KINDS = ("constant", "smooth", "piecewise", "holder", "singular", "sampled")
DOMAIN_SLACK = 1e-12
SIMPSON_DEPTH_CAP = 50


@dataclass(frozen=True, eq=False)
class CoefficientFamily:
    """Coefficient matrices on ``[0, T]``.

    ``evaluator`` maps a 1-d array of times to an array ``(K, n, m, m)``.
    ``breakpoints`` lists interior times where the family loses regularity
    (jumps, kinks, integrable singularities); quadrature splits there.
    """

    n: int
    m: int
    T: float
    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple = ()
    alpha_exact: Optional[Callable[[float], float]] = None
    params: dict = field(default_factory=dict)
    sample_times: Optional[np.ndarray] = None
    sample_values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")

    def _times(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = -DOMAIN_SLACK * self.T, self.T * (1 + DOMAIN_SLACK)
        if np.any(t < lo) or np.any(t > hi) or np.any(~np.isfinite(t)):
            bad = t[(t < lo) | (t > hi) | ~np.isfinite(t)].ravel()[0]
            raise OutOfDomain(f"time {bad} outside [0, {self.T}]")
        return np.clip(t, 0.0, self.T)

    def matrices(self, t):
        """``A_j(t)``: shape ``(n, m, m)`` for scalar ``t``, ``(K, n, m, m)`` otherwise."""
        tt = self._times(t)
        out = self.evaluator(np.atleast_1d(tt))
        return out[0] if tt.ndim == 0 else out

    def scaled(self, s):
        """Family with every ``A_j`` multiplied by ``s``."""
        ev = self.evaluator
        exact = self.alpha_exact
        return replace(
            self,
            evaluator=lambda t: s * ev(t),
            alpha_exact=None if exact is None else (lambda t: abs(s) * exact(t)),
            params={**self.params, "scale": s * self.params.get("scale", 1.0)},
            sample_values=None if self.sample_values is None else s * self.sample_values,
        )

    def describe(self):
        return {"kind": self.kind, "n": self.n, "m": self.m, "T": self.T,
                "breakpoints": list(self.breakpoints), **_jsonable(self.params)}


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


# ---------------------------------------------------------------- presets

def _base(B):
    B = np.asarray(B, dtype=float)
    if B.ndim == 2:
        B = B[None]
    if B.ndim != 3 or B.shape[1] != B.shape[2]:
        raise ValueError(f"base matrices must have shape (n, m, m), got {B.shape}")
    if not np.all(np.isfinite(B)):
        raise ValueError("base matrices must be finite")
    return B


def _rotation_factory(m):
    """Return ``theta -> U(theta)`` for a fixed skew generator (vectorised)."""
    K = np.zeros((m, m))
    for i in range(m - 1):
        K[i, i + 1] = -1.0
        K[i + 1, i] = 1.0
    w, V = np.linalg.eig(K)
    Vinv = np.linalg.inv(V)

    def U(theta):
        theta = np.asarray(theta, dtype=float)
        ph = np.exp(np.multiply.outer(theta, w))
        return np.real((V * ph[..., None, :]) @ Vinv)

    return U


def _profiled(B, T, kind, g, theta, G, breakpoints=(), params=None):
    B = _base(B)
    n, m = B.shape[0], B.shape[1]
    U = _rotation_factory(m) if theta is not None else None
    norms = float(sum(op_norm(b) for b in B))

    def evaluator(t):
        gt = g(t)
        out = gt[:, None, None, None] * B[None]
        if U is not None:
            R = U(theta(t))[:, None]
            out = R @ out @ np.swapaxes(R, -1, -2)
        return out

    return CoefficientFamily(
        n=n, m=m, T=float(T), kind=kind, evaluator=evaluator,
        breakpoints=tuple(b for b in breakpoints if 0 < b < T),
        alpha_exact=lambda t: norms * G(t),
        params={"base": B, **(params or {})},
    )


def constant(B, T=1.0):
    return _profiled(B, T, "constant", lambda t: np.ones_like(t), None, lambda t: t)


def smooth(B, T=1.0, omega=2 * math.pi, amplitude=0.5, spin=0.0):
    """``A_j(t) = B_j (1 + amplitude sin(omega t))``, optionally rotated by ``spin sin(omega t)``."""
    if not abs(amplitude) < 1:
        raise ValueError("amplitude must lie in (-1, 1) so that the profile stays positive")

    def G(t):
        return t + amplitude * (1 - math.cos(omega * t)) / omega

    theta = (lambda t: spin * np.sin(omega * t)) if spin else None
    return _profiled(B, T, "smooth", lambda t: 1 + amplitude * np.sin(omega * t), theta, G,
                     params={"omega": omega, "amplitude": amplitude, "spin": spin})


def piecewise(B, T=1.0, breaks=(0.5,), levels=(1.0, 2.0), angles=None):
    """Piecewise-constant profile (right-continuous) with ``len(breaks)`` jumps."""
    breaks = np.asarray(sorted(breaks), dtype=float)
    levels = np.asarray(levels, dtype=float)
    if len(levels) != len(breaks) + 1:
        raise ValueError("need one level per piece")
    if np.any(breaks <= 0) or np.any(breaks >= T):
        raise ValueError("breaks must lie strictly inside (0, T)")
    ang = None if angles is None else np.asarray(angles, dtype=float)
    if ang is not None and len(ang) != len(levels):
        raise ValueError("need one angle per piece")
    edges = np.concatenate([[0.0], breaks, [T]])
    cum = np.concatenate([[0.0], np.cumsum(np.abs(levels) * np.diff(edges))])

    def piece(t):
        return np.searchsorted(breaks, t, side="right")

    def G(t):
        k = int(piece(t))
        return float(cum[k] + abs(levels[k]) * (t - edges[k]))

    theta = (lambda t: ang[piece(t)]) if ang is not None else None
    return _profiled(B, T, "piecewise", lambda t: levels[piece(t)], theta, G,
                     breakpoints=tuple(breaks),
                     params={"breaks": breaks, "levels": levels,
                             "angles": None if ang is None else ang})


def _abs_power_integral(t, t0, p):
    # int_0^t |tau - t0|^p dtau for p > -1
    q = p + 1
    if t <= t0:
        return (t0 ** q - (t0 - t) ** q) / q
    return (t0 ** q + (t - t0) ** q) / q


def holder(B, T=1.0, t0=0.5, gamma=0.5, offset=0.0, spin=0.0):
    """``A_j(t) = B_j (offset + |t - t0|^gamma)``; rotation ``spin sign(t-t0)|t-t0|^gamma``."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if offset < 0:
        raise ValueError("offset must be nonnegative")

    def G(t):
        return offset * t + _abs_power_integral(t, t0, gamma)

    theta = (lambda t: spin * np.sign(t - t0) * np.abs(t - t0) ** gamma) if spin else None
    return _profiled(B, T, "holder", lambda t: offset + np.abs(t - t0) ** gamma, theta, G,
                     breakpoints=(t0,),
                     params={"t0": t0, "gamma": gamma, "offset": offset, "spin": spin})


def singular(B=((0.0, 1.0), (1.0, 0.0)), T=1.0, t0=0.5, scale=0.1, power=0.5):
    """Integrable but unbounded: ``A_j(t) = scale |t - t0|^(-power) B_j`` (zero at ``t0``)."""
    if not 0 < power < 1:
        raise ValueError("power must lie in (0, 1) for integrability")

    def g(t):
        d = np.abs(t - t0)
        with np.errstate(divide="ignore"):
            return np.where(d > 0, scale * d ** (-power), 0.0)

    def G(t):
        return scale * _abs_power_integral(t, t0, -power)

    return _profiled(B, T, "singular", g, None, G, breakpoints=(t0,),
                     params={"t0": t0, "scale": scale, "power": power})


def sampled(times, values):
    """Piecewise-linear interpolation of matrices given at strictly increasing times.

    ``values`` has shape ``(K, n, m, m)``; ``times[0]`` must be 0 and ``T = times[-1]``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("need at least two sample times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if times[0] != 0:
        raise ValueError("sample grid must start at t = 0")
    if values.ndim != 4 or values.shape[0] != len(times) or values.shape[2] != values.shape[3]:
        raise ValueError(f"values must have shape (K, n, m, m), got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("sampled matrices must be finite")

    def evaluator(t):
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
        w = ((t - times[k]) / (times[k + 1] - times[k]))[:, None, None, None]
        return (1 - w) * values[k] + w * values[k + 1]

    return CoefficientFamily(
        n=values.shape[1], m=values.shape[2], T=float(times[-1]), kind="sampled",
        evaluator=evaluator, breakpoints=tuple(times[1:-1]),
        sample_times=times, sample_values=values,
    )


def load_csv(path):
    """Read a sampled family from CSV with header ``t,j,row,col,value``.

    Indices are 0-based; entries not listed are zero. Rows must be sorted by time.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "j", "row", "col", "value"]:
            raise ValueError("CSV header must be: t,j,row,col,value")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 5:
                raise ValueError(f"line {lineno}: expected 5 columns")
            rows.append((float(rec[0]), int(rec[1]), int(rec[2]), int(rec[3]), float(rec[4])))
    if not rows:
        raise ValueError("CSV has no data rows")
    ts = [r[0] for r in rows]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("times in CSV must be sorted")
    times = np.array(sorted(set(ts)))
    n = max(r[1] for r in rows) + 1
    m = max(max(r[2], r[3]) for r in rows) + 1
    values = np.zeros((len(times), n, m, m))
    index = {t: i for i, t in enumerate(times)}
    for t, j, r, c, v in rows:
        if min(j, r, c) < 0:
            raise ValueError("indices must be nonnegative")
        values[index[t], j, r, c] = v
    return sampled(times, values)


def write_csv(family, path):
    if family.sample_times is None:
        raise ValueError("only sampled families can be written")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t", "j", "row", "col", "value"])
        for t, mats in zip(family.sample_times, family.sample_values):
            for j, M in enumerate(mats):
                for r in range(M.shape[0]):
                    for c in range(M.shape[1]):
                        w.writerow([repr(float(t)), j, r, c, repr(float(M[r, c]))])


# ---------------------------------------------------------------- alpha

def alpha(c, t):
    """``alpha(t) = sum_j |A_j(t)|_M``; vectorised over arrays of times."""
    mats = c.matrices(t)
    return op_norm(mats).sum(axis=-1)


def _simpson_adaptive(f, a, b, tol):
    """Adaptive Simpson on ``[a, b]``; ``f`` takes an array of points."""
    if b <= a:
        return 0.0
    fa, fm, fb = f(np.array([a, (a + b) / 2, b]))
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a_, b_, fa_, fm_, fb_, whole_, tol_, depth = stack.pop()
        m_ = (a_ + b_) / 2
        fl, fr = f(np.array([(a_ + m_) / 2, (m_ + b_) / 2]))
        left = (m_ - a_) / 6 * (fa_ + 4 * fl + fm_)
        right = (b_ - m_) / 6 * (fm_ + 4 * fr + fb_)
        delta = left + right - whole_
        if abs(delta) <= 15 * tol_ and depth >= 2:
            total += left + right + delta / 15
        elif depth >= SIMPSON_DEPTH_CAP or not np.isfinite(delta):
            raise QuadratureFailure(
                f"adaptive Simpson did not reach tolerance near t = {m_:.6g}")
        else:
            stack.append((m_, b_, fm_, fr, fb_, right, tol_ / 2, depth + 1))
            stack.append((a_, m_, fa_, fl, fm_, left, tol_ / 2, depth + 1))
    return total


def _endpoint_integral(f, a, b, tol):
    # Pieces touching a breakpoint may carry an integrable endpoint singularity.
    # QUADPACK never evaluates the endpoints and extrapolates the graded
    # subdivision, which Simpson with closed cells cannot do in double precision.
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            val, err = scipy.integrate.quad(lambda x: float(f(np.array([x]))[0]), a, b,
                                            epsabs=tol, epsrel=0.0, limit=400)
        except scipy.integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"no convergence on [{a:.6g}, {b:.6g}]: {exc}") from exc
    if not np.isfinite(val) or err > 10 * tol:
        raise QuadratureFailure(f"quadrature error {err:.3g} above tolerance on [{a:.6g}, {b:.6g}]")
    return val


def integrate(f, c, t, tol):
    """Integrate ``f`` over ``[0, t]``, splitting at the family's breakpoints."""
    cuts = [0.0] + [b for b in c.breakpoints if 0 < b < t] + [t]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        share = tol * (b - a) / t
        if a in c.breakpoints or b in c.breakpoints:
            total += _endpoint_integral(f, a, b, share)
        else:
            total += _simpson_adaptive(f, a, b, share)
    return total


def alpha_integral(c, t):
    """``int_0^t alpha``.

    Adaptive Simpson with absolute tolerance ``1e-8 (1 + t)``; sampled families
    use the trapezoid rule on the node values of ``alpha`` instead.
    """
    t = float(c._times(t))
    if t == 0:
        return 0.0
    if c.kind == "sampled":
        ts = c.sample_times
        a_nodes = op_norm(c.sample_values).sum(axis=-1)
        k = int(np.searchsorted(ts, t, side="right"))
        grid = np.concatenate([ts[:k], [t]]) if ts[k - 1] < t else ts[:k]
        vals = np.interp(grid, ts, a_nodes)
        return float(np.sum(np.diff(grid) * (vals[1:] + vals[:-1]) / 2))
    return integrate(lambda s: alpha(c, s), c, t, 1e-8 * (1 + t))


def refinement_change(c, nodes=4096):
    """Relative change of the composite midpoint integral of alpha when the grid doubles."""
    def mid(N):
        x = (np.arange(N) + 0.5) * c.T / N
        return float(np.sum(alpha(c, x)) * c.T / N)

    coarse, fine = mid(nodes), mid(2 * nodes)
    return abs(fine - coarse) / max(abs(fine), np.finfo(float).tiny)


def uniform_bound(c, levels=(1024, 4096), rel_change=0.1):
    """Estimate ``C_0 = sup_t alpha(t)`` on nested grids.

    Returns ``(bounded, C0)``; ``bounded`` is False when refining the grid moves
    the supremum by more than ``rel_change``, which is how an integrable
    singularity shows up.
    """
    sups = []
    for N in levels:
        t = np.linspace(0.0, c.T, N + 1)
        t = np.concatenate([t, [b + d for b in c.breakpoints for d in (-c.T / N / 7, c.T / N / 7)
                                if 0 <= b + d <= c.T]])
        sups.append(float(np.max(alpha(c, t))))
    C0 = sups[-1]
    bounded = bool(np.isfinite(C0) and abs(sups[-1] - sups[0]) <= rel_change * max(sups[0], 1e-300))
    return bounded, C0


# ---------------------------------------------------------------- cone radii

class ConeRadii:
    """Forward radius ``r(t) = r0 + spread(t)`` and backward ``rho(t) = r0 - spread(t)``,
    with ``spread(t) = 2 sqrt(Lambda) int_0^t alpha``."""

    def __init__(self, family, r0, Lam, scale=1.0):
        self.family = family
        self.r0 = float(r0)
        self.Lam = float(Lam)
        self.scale = float(scale)
        self._cache = {}

    def spread(self, t):
        t = float(t)
        if t not in self._cache:
            self._cache[t] = 2.0 * math.sqrt(self.Lam) * alpha_integral(self.family, t)
        return self._cache[t]

    def r(self, t):
        return self.scale * (self.r0 + self.spread(t))

    def rho(self, t):
        return self.scale * (self.r0 - self.spread(t))

    def scaled(self, factor):
        """Radii multiplied by ``factor`` (harness mutation checks use 0.5)."""
        out = ConeRadii(self.family, self.r0, self.Lam, self.scale * factor)
        out._cache = self._cache
        return out

    def to_dict(self, times):
        return {"r0": self.r0, "Lambda": self.Lam, "scale": self.scale,
                "times": [float(t) for t in times],
                "r": [self.r(t) for t in times], "rho": [self.rho(t) for t in times]}


def cone_radii(c, r0, Lam):
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    if not Lam > 0:
        raise ValueError("Lambda must be positive")
    return ConeRadii(c, r0, Lam)
