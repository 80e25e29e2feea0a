"""Small dense matrix kernel.

Matrices are plain numpy arrays of shape ``(m, m)``; most helpers also accept
stacks of shape ``(..., m, m)`` so that callers can evaluate whole time grids at
once. Eigen-decompositions and the exponential are delegated to LAPACK (via
numpy/scipy); the tolerances and conventions layered on top live here.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, InvalidMatrix, NotSelfAdjoint, OverflowRisk

MAX_DIM = 64
EXPM_NORM_CAP = 50.0
# relative threshold for the rank test deciding geometric multiplicity
RANK_TOL = 1e-8
# eigenvalues closer than this (relative to |A|) are treated as one cluster
CLUSTER_TOL = 1e-6
FLUSH_TOL = 1e-20


def as_mat(A):
    """Validate ``A`` as a square finite matrix and return it as an array."""
    A = np.asarray(A)
    if A.dtype.kind not in "fciub":
        raise InvalidMatrix(f"matrix entries must be numeric, got dtype {A.dtype}")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {A.shape}")
    if not 1 <= A.shape[0] <= MAX_DIM:
        raise InvalidMatrix(f"matrix size must be in [1, {MAX_DIM}], got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix has non-finite entries")
    if A.dtype.kind in "iub":
        A = A.astype(float)
    return A


def adjoint(A):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(A, -1, -2))


def op_norm(A):
    """Spectral norm ``sup_{|v|=1} |Av|`` (largest singular value).

    Accepts a single matrix or a stack ``(..., m, m)``.
    """
    A = np.asarray(A)
    if A.ndim == 2:
        A = as_mat(A)
        return float(np.linalg.norm(A, 2))
    if A.shape[-1] == 1:
        return np.abs(A[..., 0, 0])
    return np.linalg.norm(A, 2, axis=(-2, -1))


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    diagonalizable: bool
    condition: float


def _phase_convention(R):
    # largest-magnitude component of each column made real and positive
    idx = np.argmax(np.abs(R), axis=-2)
    pivot = np.take_along_axis(R, idx[..., None, :], axis=-2)
    phase = np.where(np.abs(pivot) > 0, pivot / np.where(pivot == 0, 1, np.abs(pivot)), 1.0)
    return R / phase


def cluster(values, tol):
    """Group values into clusters whose members lie within ``tol`` of a neighbour.

    Returns a list of index lists, ordered by the real part of the first member.
    """
    values = np.asarray(values)
    order = np.lexsort((values.imag, values.real))
    groups = []
    for i in order:
        for g in groups:
            if np.min(np.abs(values[g] - values[i])) <= tol:
                g.append(int(i))
                break
        else:
            groups.append([int(i)])
    return groups


def geometric_multiplicity(A, mu, tol):
    s = np.linalg.svd(A - mu * np.eye(A.shape[0]), compute_uv=False)
    return int(np.sum(s <= tol))


def eig(A):
    """Eigenvalues and unit right eigenvectors of ``A``.

    Hermitian input goes through ``eigh``. The returned vectors follow a fixed
    phase convention (largest-magnitude entry real and positive), which makes
    downstream constructions deterministic. ``diagonalizable`` compares the
    algebraic multiplicity of each eigenvalue cluster with the nullity of
    ``A - mu I`` at threshold ``1e-8 * |A|``.
    """
    A = as_mat(A)
    m = A.shape[0]
    norm = op_norm(A)
    # LAPACK balancing can return wrong eigenvectors when entries span hundreds
    # of orders of magnitude; entries this far below |A| cannot move the spectrum
    A = np.where(np.abs(A) < FLUSH_TOL * norm, 0, A)
    hermitian = is_selfadjoint(A, 1e-14)
    try:
        if hermitian:
            w, R = np.linalg.eigh((A + adjoint(A)) / 2)
            w = w.astype(A.dtype if A.dtype.kind == "c" else float)
        else:
            w, R = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigensolver did not converge: {exc}") from exc
    R = R / np.linalg.norm(R, axis=0, keepdims=True)
    R = _phase_convention(R)
    if np.iscomplexobj(R) and not np.iscomplexobj(A) and np.all(np.abs(R.imag) == 0):
        R = R.real

    diag = True
    if norm > 0 and not hermitian:
        for g in cluster(w, CLUSTER_TOL * norm):
            if len(g) > 1:
                mu = np.mean(w[g])
                if geometric_multiplicity(A, mu, RANK_TOL * norm) < len(g):
                    diag = False
                    break
    cond = float(np.linalg.cond(R)) if m > 1 else 1.0
    if not np.isfinite(cond):
        cond = float("inf")
    return EigenResult(eigenvalues=w, vectors=R, diagonalizable=diag, condition=cond)


def expm(A, t=1.0):
    """``exp(t A)`` by scaling and squaring with a Pade approximant."""
    A = as_mat(A)
    tA = t * A
    nrm = op_norm(tA)
    if nrm > EXPM_NORM_CAP:
        raise OverflowRisk(f"|tA| = {nrm:.3g} exceeds {EXPM_NORM_CAP}")
    return scipy.linalg.expm(tA)


def is_selfadjoint(A, tol=1e-10):
    A = np.asarray(A)
    scale = max(1.0, op_norm(A))
    return bool(op_norm(A - adjoint(A)) <= tol * scale)


def psd_bounds(A, tol=1e-10):
    """Extreme eigenvalues ``(lambda_min, lambda_max)`` of a self-adjoint matrix."""
    A = as_mat(A)
    if not is_selfadjoint(A, tol):
        raise NotSelfAdjoint("psd_bounds needs a self-adjoint matrix")
    w = np.linalg.eigvalsh((A + adjoint(A)) / 2)
    return float(w[0]), float(w[-1])


def hermitian_extremes(stack):
    """Vectorised ``psd_bounds`` over ``(..., m, m)`` without the precondition check.

    The Hermitian part is used; callers check self-adjointness separately.
    """
    stack = np.asarray(stack)
    w = np.linalg.eigvalsh((stack + adjoint(stack)) / 2)
    return w[..., 0], w[..., -1]
