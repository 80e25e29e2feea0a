"""Measurements checked against the energy and support bounds.

* energy ``E_eps = S_eps u . u``, the bound function ``phi_eps`` and the
  exponential envelope on ``|u_hat(t, zeta)|``;
* the integrals ``I1``, ``I2`` against ``C (|zeta| omega_S + 1)``;
* support radius of physical fields against ``r(t)``, vanishing on the shrinking
  ball ``B(x0, rho(t))``, and growth of the Fourier-Laplace transform.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from ._parallel import ordered_map
from .coefficients import alpha, uniform_bound
from .data import periodic_distance, periodic_offset
from .errors import ConditionUndetermined, DynamicRangeExceeded, EmptyRegion
from .mollify import omega_S, time_quadrature
from .solver import nyquist_mask
from .symbol import sphere_directions

EQUIV_SLACK = 1e-9
MARGIN_SLACK = 1e-8
SUPPORT_THRESHOLD = 1e-8
ABS_FLOOR = 1e-13
PW_CEILING = 30.0
PW_OVERFLOW = 700.0
PW_FIT_TOL = 0.05
PW_CLEAN_FLOOR = 1e-8


def choose_eps(zeta_abs, T):
    """``1/|zeta|`` for ``|zeta| >= 1``, else 1; never above ``min(1, T/2)``."""
    eps = 1.0 / zeta_abs if zeta_abs >= 1 else 1.0
    return min(eps, 1.0, T / 2)


def _split(zeta):
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    return zeta.real.copy(), zeta.imag.copy()


# ---------------------------------------------------------------- phi and energy

def phi_values(ms, c, times, zeta, eps):
    """``phi_eps`` at an array of times.

    ``(2/sqrt(lam)) |dS_eps| + (2/sqrt(lam)) |S_eps - S| alpha |xi| + 2 sqrt(Lam) alpha |eta|``;
    at ``xi = 0`` the first two terms vanish.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    xi, eta = _split(zeta)
    a = alpha(c, times)
    out = 2 * math.sqrt(ms.Lam) * a * np.linalg.norm(eta)
    nxi = float(np.linalg.norm(xi))
    if nxi > 0:
        Se, dSe = ms.both(eps, times, xi)
        S = ms.base.at(times, xi)
        k = 2 / math.sqrt(ms.lam)
        out = out + k * matcore.op_norm(dSe) + k * matcore.op_norm(Se - S) * a * nxi
    return out


def phi_eps(ms, c, t, zeta, eps):
    return float(phi_values(ms, c, [t], zeta, eps)[0])


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(np.diff(x) * (y[1:] + y[:-1]) / 2)
    return out


@dataclass
class _Frequency:
    """Per-frequency data shared by every mode with the same ``xi`` direction and size."""

    eps: float
    S_eps: np.ndarray
    phi_int: np.ndarray
    refine: int


def _frequency_data(ms, c, times, zeta, eps):
    Nt = len(times) - 1
    dt = times[1] - times[0]
    refine = max(1, int(math.ceil(dt / (eps / 4))))
    fine = np.linspace(times[0], times[-1], Nt * refine + 1)
    phi = phi_values(ms, c, fine, zeta, eps)
    phi_int = _cumtrapz(phi, fine)[::refine]
    xi, _ = _split(zeta)
    if np.linalg.norm(xi) > 0:
        S_eps = ms.value(eps, times, xi)
    else:
        S_eps = np.zeros((len(times), ms.base.m, ms.base.m))
    return _Frequency(eps, S_eps, phi_int, refine)


@dataclass
class EnergyTrace:
    zeta: tuple
    eps: float
    times: np.ndarray
    E: np.ndarray
    e: np.ndarray
    phi_int: np.ndarray
    rhs: np.ndarray
    amplitude: np.ndarray
    equivalence: float
    lam: float
    Lam: float
    refine: int

    @property
    def margin(self):
        return self.rhs - self.amplitude

    @property
    def margin_ratio(self):
        """Smallest ``margin / RHS`` over the nodes."""
        return float(np.min(self.margin / self.rhs))

    @property
    def passed(self):
        return self.equivalence <= EQUIV_SLACK and self.margin_ratio >= -MARGIN_SLACK

    def summary(self):
        return {"zeta": [[z.real, z.imag] for z in self.zeta], "eps": self.eps,
                "equivalence_violation": self.equivalence, "min_margin_ratio": self.margin_ratio,
                "rhs_final": float(self.rhs[-1]), "amplitude_final": float(self.amplitude[-1]),
                "refine": self.refine, "passed": self.passed}

    def csv_rows(self):
        return [[float(t), float(a), float(r), float(r - a)]
                for t, a, r in zip(self.times, self.amplitude, self.rhs)]


def _trace(traj, times, zeta, freq, lam, Lam, forcing=None):
    traj = np.asarray(traj, dtype=complex)
    amp2 = np.sum(traj.real ** 2 + traj.imag ** 2, axis=1)
    amp = np.sqrt(amp2)
    Su = _matvec_real(freq.S_eps, traj)
    E = np.real(np.sum(np.conj(traj) * Su, axis=1))
    scale = np.maximum(Lam * amp2, np.finfo(float).tiny)
    viol = np.maximum(np.maximum(lam * amp2 - E, E - Lam * amp2), 0.0) / scale
    if forcing is None:
        f_int = np.zeros(len(times))
    else:
        fn = np.linalg.norm(np.asarray(forcing), axis=1)
        f_int = _cumtrapz(fn, times)
    q = math.sqrt(Lam) / math.sqrt(lam)
    rhs = q * np.exp(freq.phi_int) * (amp[0] + 2 * q * f_int)
    return EnergyTrace(
        zeta=tuple(complex(z) for z in np.atleast_1d(zeta)), eps=freq.eps, times=times,
        E=E, e=np.sqrt(np.maximum(E, 0.0)), phi_int=freq.phi_int, rhs=rhs, amplitude=amp,
        equivalence=float(viol.max()), lam=lam, Lam=Lam, refine=freq.refine)


def _matvec_real(M, y):
    out = M[..., :, 0] * y[..., None, 0]
    for k in range(1, y.shape[-1]):
        out = out + M[..., :, k] * y[..., None, k]
    return out


def energy_trace(traj, times, ms, c, zeta, forcing=None, eps=None):
    """Energy, envelope and margins along one mode trajectory.

    ``forcing`` holds node values of ``f_hat`` (``(Nt + 1, m)``) or ``None``.
    """
    times = np.asarray(times, dtype=float)
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    eps = choose_eps(float(np.linalg.norm(zeta)), c.T) if eps is None else eps
    freq = _frequency_data(ms, c, times, zeta, eps)
    return _trace(traj, times, zeta, freq, ms.lam, ms.Lam, forcing)


def _canonical(nu, even):
    if not even:
        return nu
    nz = np.flatnonzero(nu)
    return -nu if len(nz) and nu[nz[0]] < 0 else nu


@dataclass
class EnergySweep:
    traces: list
    min_abs: float

    @property
    def worst_equivalence(self):
        return max(t.equivalence for t in self.traces)

    @property
    def worst_margin_ratio(self):
        return min(t.margin_ratio for t in self.traces)

    @property
    def passed(self):
        return all(t.passed for t in self.traces)

    def to_dict(self):
        return {"modes": len(self.traces), "min_abs_zeta": self.min_abs,
                "worst_equivalence_violation": self.worst_equivalence,
                "worst_margin_ratio": self.worst_margin_ratio, "passed": self.passed,
                "equivalence_slack": EQUIV_SLACK, "margin_slack": MARGIN_SLACK,
                "per_mode": [t.summary() for t in self.traces]}


def energy_sweep(run, ms, c, min_abs=1.0, threads=None):
    """Energy traces for every lattice mode with ``|xi| >= min_abs``.

    ``run`` must carry the full trajectory. Modes sharing a direction (up to
    sign for even symmetrizers) and a length share their ``S_eps`` and
    ``phi_eps`` data.
    """
    if run.trajectory is None:
        raise ValueError("energy sweep needs a run solved with trajectory=True")
    lp = run.problem
    M = lp.N ** lp.n
    xi = lp.frequencies().reshape(M, lp.n)
    size = np.linalg.norm(xi, axis=1)
    active = np.flatnonzero((size >= min_abs) & ~nyquist_mask(lp).reshape(M))
    if len(active) == 0:
        raise ValueError(f"no lattice mode with |xi| >= {min_abs}")
    groups = {}
    for k in active:
        nu = _canonical(xi[k] / size[k], ms.base.even)
        key = (tuple(np.round(nu, 12)), round(float(size[k]), 9))
        groups.setdefault(key, []).append(k)
    keys = sorted(groups)
    times = run.times

    def build(key):
        k = groups[key][0]
        zeta = _canonical(xi[k] / size[k], ms.base.even) * size[k]
        return _frequency_data(ms, c, times, zeta.astype(complex),
                               choose_eps(float(size[k]), c.T))

    data = dict(zip(keys, ordered_map(build, keys, threads)))
    traces = []
    for key in keys:
        for k in groups[key]:
            traces.append(_trace(run.trajectory[:, k], times, xi[k].astype(complex),
                                 data[key], ms.lam, ms.Lam))
    traces.sort(key=lambda tr: tuple(z.real for z in tr.zeta))
    return EnergySweep(traces, float(min_abs))


# ---------------------------------------------------------------- I1, I2

def continuity_modulus(s, levels=(64, 128, 256), n_dir=32):
    """Largest jump of ``S`` between neighbouring points of nested ``(t, nu)`` grids."""
    dirs = sphere_directions(s.n, n_dir)
    out = []
    for N in levels:
        t = np.linspace(0.0, s.T, N + 1)
        vals = np.stack([s.at(t, d) for d in dirs])
        jump = float(matcore.op_norm(np.diff(vals, axis=1)).max())
        if s.n >= 2:
            step = np.roll(vals, -1, axis=0) - vals
            jump = max(jump, float(matcore.op_norm(step).max()))
        out.append(jump)
    return out


def detect_conditions(s, c, decay=0.75):
    """``(continuous, bounded, C0, moduli)``: which of the two regularity routes applies.

    Continuity is declared when the sampled modulus shrinks by ``decay`` or more
    from the coarsest to the finest grid (or is already at roundoff); with
    ``n >= 2`` the direction spacing is fixed, so only the time part refines.
    """
    moduli = continuity_modulus(s)
    scale = max(1.0, s.Lam)
    continuous = moduli[-1] <= 1e-12 * scale or moduli[-1] <= decay * moduli[0]
    bounded, C0 = uniform_bound(c)
    return bool(continuous), bool(bounded), float(C0), moduli


@dataclass
class BoundRecord:
    zeta_abs: float
    eps: float
    I1: float
    I2: float
    omega: float
    omega_tilde: float
    C_I1: float
    C_I2: float
    ratio_I1: float
    ratio_I2: float
    continuous: bool
    bounded: bool
    C0: float
    I2_over_xi: float

    @property
    def passed(self):
        ok = self.ratio_I1 <= 1
        if self.bounded:
            ok = ok and self.ratio_I2 <= 1
        return bool(ok)

    def to_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        d["route"] = "bounded_coefficients" if self.bounded else "continuous_symmetrizer"
        return d


def omega_tilde(s, sigma, n_dir=32):
    """``sup_{|nu| = 1} omega_S(nu, sigma)`` over ``n_dir`` directions."""
    dirs = sphere_directions(s.n, n_dir)
    if s.even and s.n == 1:
        dirs = dirs[:1]
    return max(omega_S(s, d, sigma) for d in dirs)


def bound_report_I(ms, c, zeta, conditions=None):
    """``I1``, ``I2`` and their ratios to ``C (|zeta| omega_S(xi, 1/|zeta|) + 1)``.

    ``C`` for ``I1`` is ``C_mol (2/sqrt(lam)) max(1, sqrt(Lam))``; ``I2`` picks
    up an extra ``C0 = sup alpha`` and is only rated when the coefficients are
    bounded. ``conditions`` may carry a precomputed ``detect_conditions`` result.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    za = float(np.linalg.norm(zeta))
    if za < 1:
        raise ValueError("bound report needs |zeta| >= 1")
    s = ms.base
    continuous, bounded, C0, _ = detect_conditions(s, c) if conditions is None else conditions
    if not (continuous or bounded):
        raise ConditionUndetermined(
            "neither continuity of the symmetrizer nor bounded coefficients could be detected")
    eps = choose_eps(za, c.T)
    xi, _ = _split(zeta)
    nxi = float(np.linalg.norm(xi))
    k = 2 / math.sqrt(ms.lam)
    if nxi > 0:
        t, w = time_quadrature(c.T, ms._cuts, eps)
        Se, dSe = ms.both(eps, t, xi)
        S = s.at(t, xi)
        I1 = k * float(np.sum(w * matcore.op_norm(dSe)))
        I2 = k * nxi * float(np.sum(w * matcore.op_norm(Se - S) * alpha(c, t)))
        om = omega_S(s, xi / nxi, eps)
    else:
        I1 = I2 = om = 0.0
    C_mol = ms.kernel.mollifier_constant()
    root = max(1.0, math.sqrt(ms.Lam))
    C1 = C_mol * k * root
    C2 = C1 * C0
    base = za * om + 1
    return BoundRecord(
        zeta_abs=za, eps=eps, I1=I1, I2=I2, omega=om, omega_tilde=omega_tilde(s, eps),
        C_I1=C1, C_I2=C2, ratio_I1=I1 / (C1 * base),
        ratio_I2=I2 / (C2 * base) if bounded and C2 > 0 else (0.0 if I2 == 0 else math.inf),
        continuous=continuous, bounded=bounded, C0=C0,
        I2_over_xi=I2 / nxi if nxi > 0 else 0.0)


# ---------------------------------------------------------------- support

def _magnitude(u):
    u = np.asarray(u, dtype=float)
    return np.sqrt(np.sum(u * u, axis=-1))


def support_radius(u, coords, x0, L, theta=SUPPORT_THRESHOLD):
    """Largest periodic distance from ``x0`` where ``|u| > theta max|u|``.

    ``u`` has a trailing component axis. Returns 0 for fields below ``1e-13``.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    mag = _magnitude(u)
    top = float(mag.max())
    if not np.isfinite(top):
        raise ValueError("field has non-finite values")
    if top < ABS_FLOOR:
        return 0.0
    d = periodic_distance(coords, x0, L)
    return float(d[mag > theta * top].max())


@dataclass
class ConeReport:
    times: list
    measured: list
    bound: list
    h: float
    theta: float
    oracle: list = None

    @property
    def per_time(self):
        return [m <= b + 2 * self.h for m, b in zip(self.measured, self.bound)]

    @property
    def passed(self):
        return all(self.per_time)

    @property
    def oracle_match(self):
        if self.oracle is None:
            return None
        return all(abs(m - o) <= 2 * self.h for m, o in zip(self.measured, self.oracle))

    def to_dict(self):
        d = {"times": self.times, "measured": self.measured, "bound": self.bound,
             "h": self.h, "theta": self.theta, "pass_per_time": self.per_time,
             "passed": self.passed}
        if self.oracle is not None:
            d["oracle"] = self.oracle
            d["oracle_match"] = self.oracle_match
        return d

    def csv_rows(self):
        return [[t, m, b, b + 2 * self.h - m]
                for t, m, b in zip(self.times, self.measured, self.bound)]


def cone_check(run, radii, theta=SUPPORT_THRESHOLD, oracle_fields=None):
    """Measured support radius against ``r(t) + 2h`` at every output time."""
    lp = run.problem
    coords = lp.coords()
    times = [float(t) for t in run.output_times]
    measured = [support_radius(u, coords, lp.x0, lp.L, theta) for u in run.fields]
    oracle = None
    if oracle_fields is not None:
        oracle = [support_radius(u, coords, lp.x0, lp.L, theta) for u in oracle_fields]
    return ConeReport(times, measured, [radii.r(t) for t in times], lp.h, theta, oracle)


@dataclass
class DodReport:
    times: list
    rho: list
    checked: list
    max_abs: list
    tolerance: list
    data_max_in_ball: float

    @property
    def passed(self):
        return all(m <= tol for m, tol, ok in zip(self.max_abs, self.tolerance, self.checked) if ok)

    def to_dict(self):
        return {"times": self.times, "rho": self.rho, "checked": self.checked,
                "max_abs_in_ball": self.max_abs, "tolerance": self.tolerance,
                "data_max_in_ball": self.data_max_in_ball, "passed": self.passed}


def dod_check(run, radii, x0=None, times=None):
    """``max |u(t)|`` over ``B(x0, rho(t) - 2h)`` against ``max(1e-8, 1e-6 max|u|)``.

    ``radii.r0`` is the radius of the ball where the data vanish.
    """
    lp = run.problem
    x0 = lp.x0 if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    coords = lp.coords()
    d = periodic_distance(coords, x0, lp.L)
    data_max = float(_magnitude(lp.u0)[d < radii.r0].max(initial=0.0))
    if data_max > 1e-12:
        raise ValueError(f"data do not vanish on B(x0, {radii.r0}): max {data_max:.3g}")
    out_times = [float(t) for t in run.output_times]
    times = out_times if times is None else [float(t) for t in times]
    rows = ([], [], [], [])
    for t in times:
        k = int(np.argmin([abs(t - s) for s in out_times]))
        if abs(out_times[k] - t) > 1e-9:
            raise ValueError(f"time {t} is not an output time of the run")
        rad = radii.rho(t) - 2 * lp.h
        mag = _magnitude(run.fields[k])
        inside = d < rad
        ok = bool(rad > 0 and inside.any())
        rows[0].append(radii.rho(t))
        rows[1].append(ok)
        rows[2].append(float(mag[inside].max()) if ok else 0.0)
        rows[3].append(max(1e-8, 1e-6 * float(mag.max())))
    if not any(rows[1]):
        raise EmptyRegion("rho(t) - 2h <= 0 at every requested time")
    return DodReport(times, rows[0], rows[1], rows[2], rows[3], data_max)


# ---------------------------------------------------------------- Paley-Wiener

@dataclass
class PWReport:
    t: float
    directions: list
    magnitudes: list
    log_values: list
    slopes: list
    intercepts: list
    r_ref: float
    delta: float
    degenerate: bool
    fit_tol: float = PW_FIT_TOL
    extra: dict = field(default_factory=dict)

    @property
    def max_slope(self):
        return max(self.slopes)

    @property
    def limit(self):
        return (self.r_ref + self.delta) * (1 + self.fit_tol)

    @property
    def passed(self):
        return self.max_slope <= self.limit

    def to_dict(self):
        return {"t": self.t, "directions": self.directions, "magnitudes": self.magnitudes,
                "log_abs_values": self.log_values, "slopes": self.slopes,
                "intercepts": self.intercepts, "max_slope": self.max_slope,
                "r_ref": self.r_ref, "delta": self.delta, "fit_tol": self.fit_tol,
                "limit": self.limit, "degenerate": self.degenerate, "passed": self.passed,
                **self.extra}


def default_magnitudes(r_ref, count=12, ceiling=PW_CEILING):
    """``count`` geometric magnitudes spanning the decade below ``ceiling / r_ref``."""
    top = ceiling / r_ref
    return np.geomspace(top / 10, top, count)


def fourier_laplace(u, coords, h, L, x0, zetas, floor=PW_CLEAN_FLOOR):
    """``h^n sum_x u(x) exp(-i zeta . (x - x0))`` for each complex ``zeta``.

    Values below ``floor * max|u|`` are dropped first: they are spectral
    roundoff, and the exponential weight would otherwise amplify them.
    """
    mag = _magnitude(u)
    keep = mag > floor * mag.max() if mag.max() > 0 else np.zeros(mag.shape, bool)
    y = periodic_offset(coords[keep], x0, L)
    vals = np.asarray(u)[keep]
    n = coords.shape[-1]
    out = []
    for z in zetas:
        w = np.exp(-1j * (y @ z))
        out.append(h ** n * (w[:, None] * vals).sum(axis=0))
    return np.array(out)


def pw_probe(u, coords, h, L, t, r_ref, delta=0.05, directions=None, magnitudes=None,
             xi0=None, x0=None, floor=PW_CLEAN_FLOOR):
    """Growth rate of ``|u_hat(xi0 + i eta e)|`` in ``eta`` along each direction ``e``.

    Fits ``log|u_hat| ~ a + b eta + c log(eta) + d / eta`` and reports ``b``;
    the extra terms absorb the algebraic prefactor of the transform of a
    bump with finite smoothness at the edge of its support.
    """
    n = coords.shape[-1]
    dirs = sphere_directions(n, 8) if directions is None else np.atleast_2d(directions)
    etas = default_magnitudes(r_ref) if magnitudes is None else np.asarray(magnitudes, float)
    xi0 = np.zeros(n) if xi0 is None else np.asarray(xi0, dtype=float)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if (r_ref + delta) * etas.max() > PW_OVERFLOW:
        raise DynamicRangeExceeded(
            f"exp((r + delta) |eta|) overflows at |eta| = {etas.max():.4g}")
    mag = _magnitude(u)
    degenerate = float(mag.max()) < ABS_FLOOR
    if not degenerate:
        reach = float(periodic_distance(coords[mag > floor * mag.max()], x0, L).max())
        if reach + h >= L / 2:
            raise ValueError("field support reaches the box boundary")
    X = np.column_stack([np.ones_like(etas), etas, np.log(etas), 1 / etas])
    slopes, inter, logs = [], [], []
    for d in dirs:
        if degenerate:
            slopes.append(0.0)
            inter.append(0.0)
            logs.append([None] * len(etas))
            continue
        zetas = [xi0 + 1j * e * d for e in etas]
        vals = np.linalg.norm(fourier_laplace(u, coords, h, L, x0, zetas, floor), axis=1)
        y = np.log(np.maximum(vals, np.finfo(float).tiny))
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        slopes.append(float(coef[1]))
        inter.append(float(coef[0]))
        logs.append([float(v) for v in y])
    return PWReport(t=float(t), directions=dirs.tolist(), magnitudes=etas.tolist(),
                    log_values=logs, slopes=slopes, intercepts=inter, r_ref=float(r_ref),
                    delta=float(delta), degenerate=degenerate)
