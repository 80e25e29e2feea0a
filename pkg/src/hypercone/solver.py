"""Fourier-side solvers for ``u_t + sum_j A_j(t) d_j u = f``.

Each frequency ``zeta`` gives the linear ODE ``u' = -i A(t, zeta) u + f(t)``.
RK4 runs all modes of a lattice at once as a batch; a Picard iteration and the
matrix exponential (constant coefficients) serve as independent checks.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import matcore
from ._parallel import chunks, ordered_map
from .coefficients import cone_radii
from .errors import PreconditionError, StepOverflow

MIN_STEPS = 8
OVERFLOW_FACTOR = 1e12
MODE_CHUNK = 256


@dataclass
class ModeProblem:
    """One frequency: ``zeta`` complex n-vector, ``u0`` complex m-vector.

    ``forcing`` is ``None``, a callable ``t -> (m,)`` or an array of node values
    ``(Nt + 1, m)``.
    """

    family: object
    zeta: np.ndarray
    u0: np.ndarray
    forcing: Optional[Union[Callable, np.ndarray]] = None
    Nt: int = 256

    def __post_init__(self):
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=complex))
        self.u0 = np.atleast_1d(np.asarray(self.u0, dtype=complex))
        if self.zeta.shape != (self.family.n,):
            raise ValueError(f"zeta must have {self.family.n} components")
        if self.u0.shape != (self.family.m,):
            raise ValueError(f"u0 must have {self.family.m} components")
        if int(self.Nt) < MIN_STEPS:
            raise ValueError(f"need at least {MIN_STEPS} time steps")
        self.Nt = int(self.Nt)

    @property
    def times(self):
        return np.linspace(0.0, self.family.T, self.Nt + 1)

    def forcing_nodes(self):
        m = self.family.m
        if self.forcing is None:
            return None
        if callable(self.forcing):
            return np.array([np.asarray(self.forcing(t), dtype=complex) for t in self.times])
        f = np.asarray(self.forcing, dtype=complex)
        if f.shape != (self.Nt + 1, m):
            raise ValueError(f"forcing array must have shape {(self.Nt + 1, m)}")
        return f


def symbol_stack(c, times, zetas):
    """``A(t, zeta)`` for every time and frequency: ``(len(times), len(zetas), m, m)``."""
    mats = c.matrices(np.asarray(times, dtype=float))
    zetas = np.asarray(zetas, dtype=complex)
    return np.einsum("zj,tjab->tzab", zetas, mats)


def _matvec(B, y):
    # column-by-column products keep every mode's arithmetic independent of the batch
    out = B[..., :, 0] * y[..., None, 0]
    for k in range(1, y.shape[-1]):
        out = out + B[..., :, k] * y[..., None, k]
    return out


def _one_sided(c, grid):
    """Grid indices sitting on a breakpoint of ``c``, with matrices just before and after it.

    A step that ends on a jump must see the value from its own side, or the
    scheme drops to first order.
    """
    tol = 1e-12 * c.T
    hits = [(i, b) for i in range(1, len(grid) - 1) for b in c.breakpoints
            if abs(grid[i] - b) <= tol]
    if not hits:
        return {}
    bs = np.array([b for _, b in hits])
    left = c.matrices(np.nextafter(bs, -np.inf))
    right = c.matrices(np.nextafter(bs, np.inf))
    return {i: (left[k], right[k]) for k, (i, _) in enumerate(hits)}


def _generator(zetas, A):
    """``-i A(zeta)`` for each frequency from one set of coefficient matrices ``(n, m, m)``."""
    return -1j * np.einsum("zj,jab->zab", np.asarray(zetas, dtype=complex), A)


def _apply_sides(sides, mats_of, B):
    """Put right limits into ``B`` and return the left limits keyed by grid index."""
    ends = {}
    for i, (left, right) in sides.items():
        B[i] = mats_of(right)
        ends[i] = mats_of(left)
    return ends


def _rk4_batch(B, y0, F, dt, keep, offset=0, ends=None):
    """Classical RK4 for ``y' = B(t) y + F(t)`` on a batch of modes.

    ``B`` holds ``-i A`` at half-step times ``(2 Nt + 1, M, m, m)``, ``F`` the
    forcing at the same times or ``None``. ``ends`` maps half-grid indices to
    the left limits used by the final stage of a step ending there. Returns
    the states at node indices ``keep`` with shape ``(len(keep), M, m)``.
    """
    ends = ends or {}
    Nt = (B.shape[0] - 1) // 2
    keep = list(keep)
    out = np.empty((len(keep), y0.shape[0], y0.shape[1]), dtype=complex)
    slot = {k: i for i, k in enumerate(keep)}
    cap = OVERFLOW_FACTOR * (np.linalg.norm(y0, axis=1) + 1.0)
    y = y0.astype(complex)
    if 0 in slot:
        out[slot[0]] = y
    half = dt / 2
    for n in range(Nt):
        b0, b1 = B[2 * n], B[2 * n + 1]
        b2 = ends.get(2 * n + 2, B[2 * n + 2])
        if F is None:
            k1 = _matvec(b0, y)
            k2 = _matvec(b1, y + half * k1)
            k3 = _matvec(b1, y + half * k2)
            k4 = _matvec(b2, y + dt * k3)
        else:
            f0, f1, f2 = F[2 * n], F[2 * n + 1], F[2 * n + 2]
            k1 = _matvec(b0, y) + f0
            k2 = _matvec(b1, y + half * k1) + f1
            k3 = _matvec(b1, y + half * k2) + f1
            k4 = _matvec(b2, y + dt * k3) + f2
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        nrm = np.sqrt(np.sum(y.real ** 2 + y.imag ** 2, axis=1))
        bad = ~(nrm <= cap)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise StepOverflow(f"mode {offset + k} blew up at step {n + 1} (|u| = {nrm[k]:.3g})",
                               mode_index=offset + k)
        if n + 1 in slot:
            out[slot[n + 1]] = y
    return out


def _half_grid(T, Nt):
    return np.linspace(0.0, T, 2 * Nt + 1)


def _half_forcing(fn):
    """Node forcing ``(Nt + 1, ...)`` to half-step values by linear interpolation."""
    mid = (fn[:-1] + fn[1:]) / 2
    out = np.empty((2 * fn.shape[0] - 1,) + fn.shape[1:], dtype=complex)
    out[0::2] = fn
    out[1::2] = mid
    return out


def solve_mode_rk4(p):
    """All ``Nt + 1`` node values of one mode, shape ``(Nt + 1, m)``."""
    c = p.family
    grid = _half_grid(c.T, p.Nt)
    B = -1j * symbol_stack(c, grid, p.zeta[None])
    ends = _apply_sides(_one_sided(c, grid), lambda A: _generator(p.zeta[None], A), B)
    fn = p.forcing_nodes()
    F = None if fn is None else _half_forcing(fn)[:, None]
    traj = _rk4_batch(B, p.u0[None], F, c.T / p.Nt, range(p.Nt + 1), ends=ends)
    return traj[:, 0]


def solve_mode_picard(p, iters):
    """``iters`` Picard iterates ``u <- u0 + int_0^t (f - i A u)`` with trapezoid quadrature."""
    if int(iters) < 1:
        raise ValueError("need at least one Picard iteration")
    c = p.family
    t = p.times
    B = -1j * symbol_stack(c, t, p.zeta[None])[:, 0]
    # each interval's right endpoint takes the limit from inside the interval
    B_end = B.copy()
    for i, A in _apply_sides(_one_sided(c, t), lambda A: _generator(p.zeta[None], A)[0], B).items():
        B_end[i] = A
    fn = p.forcing_nodes()
    u = np.broadcast_to(p.u0, (len(t), c.m)).astype(complex)
    dt = c.T / p.Nt
    for _ in range(int(iters)):
        start, end = _matvec(B, u), _matvec(B_end, u)
        if fn is not None:
            start, end = start + fn, end + fn
        u = np.empty_like(u)
        u[0] = p.u0
        u[1:] = p.u0[None] + np.cumsum((start[:-1] + end[1:]) * (dt / 2), axis=0)
    return u


def solve_mode_expm(c, zeta, u0, t):
    """Constant-coefficient oracle ``exp(-i A(zeta) t) u0`` using ``A_j(0)``."""
    A = np.tensordot(np.asarray(zeta, dtype=complex), c.matrices(0.0), axes=(0, 0))
    return matcore.expm(-1j * A, t) @ np.asarray(u0, dtype=complex)


# ---------------------------------------------------------------- lattice

@dataclass
class LatticeProblem:
    """Periodic box ``[-L/2, L/2)^n`` with ``N`` points per axis.

    ``u0`` has shape ``(N,) * n + (m,)``; ``forcing`` is ``None`` or a callable
    ``t -> field`` of the same shape. ``r0`` and ``x0`` describe a ball holding
    the support of all data.
    """

    n: int
    L: float
    N: int
    u0: np.ndarray
    r0: float
    x0: np.ndarray
    forcing: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.N % 2 or self.N < 4:
            raise ValueError("N must be even and at least 4")
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape[:-1] != (self.N,) * self.n:
            raise ValueError(f"u0 must have shape {(self.N,) * self.n} + (m,)")
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.n,):
            raise ValueError(f"x0 must have {self.n} components")
        if not 0 < self.r0 < self.L / 2:
            raise PreconditionError(f"support radius r0 = {self.r0} must lie in (0, L/2 = {self.L / 2})")

    @property
    def m(self):
        return self.u0.shape[-1]

    @property
    def h(self):
        return self.L / self.N

    def axis(self):
        return -self.L / 2 + self.h * np.arange(self.N)

    def coords(self):
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.n), indexing="ij"), axis=-1)

    def frequencies(self):
        """Lattice frequencies, shape ``(N,) * n + (n,)`` in FFT order."""
        k = 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        return np.stack(np.meshgrid(*([k] * self.n), indexing="ij"), axis=-1)


def _phase(lp):
    xi = lp.frequencies()
    return np.exp(1j * xi.sum(axis=-1) * lp.L / 2) if lp.n > 1 else np.exp(1j * xi[..., 0] * lp.L / 2)


def nyquist_mask(lp):
    idx = np.fft.fftfreq(lp.N, d=1.0 / lp.N).astype(int)
    grids = np.meshgrid(*([idx] * lp.n), indexing="ij")
    mask = np.zeros((lp.N,) * lp.n, dtype=bool)
    for g in grids:
        mask |= g == -lp.N // 2
    return mask


def forward(lp, u):
    """``u_hat(xi_k) = h^n sum_x u(x) exp(-i xi_k . x)``, Nyquist modes set to zero."""
    axes = tuple(range(lp.n))
    uh = np.fft.fftn(u, axes=axes) * (lp.h ** lp.n)
    ph = _phase(lp)
    uh = uh * ph[..., None]
    uh[nyquist_mask(lp)] = 0
    return uh


def inverse(lp, uh):
    """Inverse of ``forward`` (complex output)."""
    axes = tuple(range(lp.n))
    return np.fft.ifftn(uh / _phase(lp)[..., None], axes=axes) / (lp.h ** lp.n)


def hermitian_asymmetry(lp, uh):
    """``max |u_hat(-xi) - conj(u_hat(xi))|`` relative to ``max |u_hat|``."""
    flip = uh
    for a in range(lp.n):
        flip = np.roll(np.flip(flip, axis=a), 1, axis=a)
    top = np.max(np.abs(uh))
    return float(np.max(np.abs(flip - np.conj(uh))) / top) if top > 0 else 0.0


@dataclass
class LatticeRun:
    problem: LatticeProblem
    times: np.ndarray
    output_times: np.ndarray
    fields: np.ndarray
    spectra: np.ndarray
    imag_residue: np.ndarray
    asymmetry: np.ndarray
    trajectory: Optional[np.ndarray] = None

    def manifest(self):
        lp = self.problem
        return {"n": lp.n, "m": lp.m, "N": lp.N, "L": lp.L, "h": lp.h,
                "Nt": len(self.times) - 1, "T": float(self.times[-1]),
                "output_times": [float(t) for t in self.output_times],
                "imag_residue": [float(v) for v in self.imag_residue],
                "hermitian_asymmetry": [float(v) for v in self.asymmetry],
                "r0": lp.r0, "x0": lp.x0.tolist(), **lp.meta}


def output_indices(T, Nt, output_times):
    dt = T / Nt
    idx = []
    for t in output_times:
        k = int(round(t / dt))
        if not 0 <= k <= Nt or abs(k * dt - t) > 1e-9 * max(1.0, T):
            raise ValueError(f"output time {t} is not on the time grid (dt = {dt})")
        idx.append(k)
    return idx


def no_wrap_check(lp, c, Lam):
    """Raise unless the forward cone of the data ball stays inside the box up to ``T``."""
    rT = cone_radii(c, lp.r0, Lam).r(c.T)
    reach = float(np.max(np.abs(lp.x0))) + rT
    if not reach < lp.L / 2:
        raise PreconditionError(
            f"no-wrap condition violated: |x0| + r(T) = {reach:.6g} must be < L/2 = {lp.L / 2:.6g}; "
            f"enlarge L or shorten T")
    return rT


def solve_lattice(lp, c, Nt, output_times=None, Lam=1.0, threads=None, trajectory=False):
    """Solve every lattice mode with RK4 and synthesise physical fields.

    ``Lam`` is the symmetrizer upper bound used for the no-wrap check
    ``|x0| + r(T) < L/2``. With ``trajectory=True`` the full mode history
    ``(Nt + 1, N^n, m)`` is kept as well.
    """
    if c.n != lp.n or c.m != lp.m:
        raise ValueError("coefficient family and lattice disagree on n or m")
    if Nt < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} time steps")
    no_wrap_check(lp, c, Lam)
    T = c.T
    times = np.linspace(0.0, T, Nt + 1)
    output_times = times[[0, -1]] if output_times is None else np.asarray(output_times, dtype=float)
    keep = list(range(Nt + 1)) if trajectory else output_indices(T, Nt, output_times)

    shape = (lp.N,) * lp.n
    M = int(np.prod(shape))
    uh0 = forward(lp, lp.u0).reshape(M, lp.m)
    xi = lp.frequencies().reshape(M, lp.n)
    half = _half_grid(T, Nt)
    mats = c.matrices(half)
    F = None
    if lp.forcing is not None:
        fn = np.stack([forward(lp, np.asarray(lp.forcing(t), dtype=float)).reshape(M, lp.m)
                       for t in times])
        F = _half_forcing(fn)

    sides = _one_sided(c, half)

    def run(span):
        a, b = span
        B = -1j * np.einsum("zj,tjab->tzab", xi[a:b], mats)
        ends = _apply_sides(sides, lambda A: _generator(xi[a:b], A), B)
        Fc = None if F is None else F[:, a:b]
        return _rk4_batch(B, uh0[a:b], Fc, T / Nt, keep, offset=a, ends=ends)

    parts = ordered_map(run, chunks(M, MODE_CHUNK), threads)
    states = np.concatenate(parts, axis=1)
    states[:, nyquist_mask(lp).reshape(M)] = 0

    out_idx = output_indices(T, Nt, output_times)
    pos = [keep.index(k) for k in out_idx]
    spectra = states[pos].reshape((len(pos),) + shape + (lp.m,))
    fields, resid, asym = [], [], []
    for uh in spectra:
        u = inverse(lp, uh)
        top = np.max(np.abs(u.real))
        resid.append(float(np.max(np.abs(u.imag)) / top) if top > 0 else 0.0)
        asym.append(hermitian_asymmetry(lp, uh))
        fields.append(u.real)
    return LatticeRun(problem=lp, times=times, output_times=output_times,
                      fields=np.array(fields), spectra=spectra,
                      imag_residue=np.array(resid), asymmetry=np.array(asym),
                      trajectory=states if trajectory else None)
