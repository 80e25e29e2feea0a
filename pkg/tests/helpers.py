"""Small builders shared by the solver, verify and acceptance tests."""
import numpy as np

from hypercone import data as da
from hypercone.solver import LatticeProblem


def grid(n, N, L):
    ax = -L / 2 + (L / N) * np.arange(N)
    return np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1)


def bump_problem(n=1, N=512, L=8.0, r0=0.5, m=1, components=None, power=8, x0=None, **kw):
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    u0, info = da.bump(grid(n, N, L), L, x0, r0, m=m, components=components, power=power)
    return LatticeProblem(n, L, N, u0, r0, x0, meta={"data": info}, **kw)


def hole_problem(N=512, L=8.0, hole_radius=1.0, width=0.5, m=1, components=None):
    x0 = np.zeros(1)
    u0, info = da.hole(grid(1, N, L), L, x0, hole_radius, width, m=m, components=components)
    return LatticeProblem(1, L, N, u0, info["r0"], x0, meta={"data": info})


def bump_values(x, r0, power=8):
    return da.profile(np.asarray(x) / r0, power)
