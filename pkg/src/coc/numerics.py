"""Dense symmetric linear algebra: eigendecomposition, SPD inverse, PSD square root.

Two eigensolvers are available.  ``method="jacobi"`` is a self-contained cyclic
Jacobi implementation; ``method="lapack"`` (the default) delegates to
``numpy.linalg.eigh``.  Both return eigenvalues in descending order with the
matching orthonormal eigenvectors as columns.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError, SingularMatrixError, ValidationError

SYMMETRY_RTOL = 1e-10
CLAMP_RTOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_symmetric(m, *, name: str = "matrix", rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Validate a square, finite, (numerically) symmetric matrix and symmetrize it."""
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = max(np.abs(a).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(a - a.T).max(initial=0.0) > rtol * scale:
        raise ValidationError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def jacobi_eigh(m, *, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps over all (p, q) pairs, annihilating each off-diagonal entry with a
    plane rotation, until the off-diagonal Frobenius norm falls below
    ``tol * ||m||_F``.
    """
    a = as_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 1 or norm == 0.0:
        return _sorted_desc(np.diag(a).copy(), v)
    threshold = tol * norm
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= threshold:
            return _sorted_desc(np.diag(a).copy(), v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if abs(apq) < 1e-18 * abs(h):
                    # rotation angle below rounding: t ~ apq / h
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def _sorted_desc(w: np.ndarray, v: np.ndarray):
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def sym_eigen(m, *, method: str = "lapack"):
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix."""
    if method == "jacobi":
        return jacobi_eigh(m)
    if method != "lapack":
        raise ValidationError(f"unknown eigensolver {method!r}")
    a = as_symmetric(m)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def sym_eigvals(m) -> np.ndarray:
    """Descending eigenvalues only."""
    a = as_symmetric(m)
    return np.linalg.eigvalsh(a)[::-1].copy()


def spd_inverse(m, *, name: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    If the factorization fails, ``(1e-10 * trace / dim) * I`` is added once and
    the factorization retried before giving up.
    """
    a = as_symmetric(m, name=name)
    dim = a.shape[0]
    scale = np.linalg.norm(a)
    for attempt in range(2):
        try:
            factor = sla.cho_factor(a, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            factor = None
        if factor is not None:
            diag = np.diag(factor[0]) ** 2
            if diag.min() > dim * 1e-12 * scale:
                inv = sla.cho_solve(factor, np.eye(dim), check_finite=False)
                return 0.5 * (inv + inv.T)
        if attempt == 0:
            jitter = 1e-10 * np.trace(a) / dim
            if not np.isfinite(jitter) or jitter <= 0:
                break
            a = a + jitter * np.eye(dim)
    raise SingularMatrixError(f"{name} is singular or not positive definite")


def psd_sqrt(m, *, name: str = "matrix") -> np.ndarray:
    """Symmetric PSD square root; eigenvalues down to ``-1e-10 ||m||`` are clamped to 0."""
    w, v = sym_eigen(m)
    w = clamp_eigenvalues(w, np.linalg.norm(as_symmetric(m)), name=name)
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def clamp_eigenvalues(w: np.ndarray, scale: float, *, name: str = "matrix") -> np.ndarray:
    if w.size and w.min() < -CLAMP_RTOL * scale:
        raise ValidationError(f"{name} is not positive semi-definite (eigenvalue {w.min():.3g})")
    return np.maximum(w, 0.0)


def block_diag(blocks) -> np.ndarray:
    return sla.block_diag(*blocks)
