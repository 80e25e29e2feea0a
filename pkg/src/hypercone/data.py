"""Compactly supported initial data on a periodic lattice.

Profiles are polynomial bumps ``(1 - s^2)^p`` for ``|s| < 1``. Their spectra
decay algebraically, so with ``p`` around 8 the spectral tails outside the
support stay near 1e-11 on desk-scale grids. Smoother C-infinity bumps have
far heavier tails at these resolutions.
"""
import numpy as np

DEFAULT_POWER = 8


def periodic_offset(x, x0, L):
    """Componentwise ``x - x0`` wrapped into ``[-L/2, L/2)``."""
    d = np.asarray(x) - np.asarray(x0)
    return (d + L / 2) % L - L / 2


def periodic_distance(x, x0, L):
    return np.linalg.norm(periodic_offset(x, x0, L), axis=-1)


def profile(s, power=DEFAULT_POWER):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, (1 - np.minimum(s * s, 1.0)) ** power, 0.0)


def _vector(scalar, components, m):
    w = np.zeros(m) if components is None else np.asarray(components, dtype=float)
    if components is None:
        w[0] = 1.0
    if w.shape != (m,):
        raise ValueError(f"components must have {m} entries")
    return scalar[..., None] * w


def bump(coords, L, x0, r0, m=1, components=None, power=DEFAULT_POWER, amplitude=1.0):
    """``amplitude (1 - |x - x0|^2 / r0^2)^p`` times a fixed component vector.

    Returns ``(field, info)``; ``info`` holds the support ball.
    """
    d = periodic_distance(coords, x0, L)
    u = amplitude * profile(d / r0, power)
    return _vector(u, components, m), {"preset": "bump", "r0": float(r0),
                                       "x0": np.atleast_1d(x0).tolist(), "hole_radius": None}


def ring(coords, L, x0, radius, width, m=1, components=None, power=DEFAULT_POWER, amplitude=1.0):
    """Radial profile centred on ``|x - x0| = radius`` with half-width ``width``.

    Supported in ``radius - width <= |x - x0| <= radius + width``; in one
    dimension this is a pair of bumps at ``x0 +- radius``.
    """
    if not 0 < width < radius:
        raise ValueError("need 0 < width < radius")
    d = periodic_distance(coords, x0, L)
    u = amplitude * profile((d - radius) / width, power)
    return _vector(u, components, m), {"preset": "ring", "r0": float(radius + width),
                                       "x0": np.atleast_1d(x0).tolist(),
                                       "hole_radius": float(radius - width)}


def hole(coords, L, x0, hole_radius, width, **kw):
    """Data vanishing on ``B(x0, hole_radius)``: a ring just outside it."""
    u, info = ring(coords, L, x0, hole_radius + width, width, **kw)
    info["preset"] = "hole"
    return u, info


PRESETS = {"bump": bump, "ring": ring, "hole": hole}
