"""Local estimators that turn centre data into :class:`CentreSummary` objects.

Each fitter exposes ``estimate(data, weights=None, start=None)`` returning the
point estimate only (used for bootstrap refits) and ``fit(data, centre_id)``
returning the full summary with plug-in ``V`` and ``Q`` from the original data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from .errors import ConvergenceError, NumericalError, ValidationError
from .summaries import CentreSummary, validate_summary

MAX_ITER = 100
STEP_TOL = 1e-10
SCORE_TOL = 1e-10
SCORE_ACCEPT = 1e-8
SEPARATION_ETA = 30.0
DEFAULT_DELTA = 1.345


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design ``X`` (n, p) and response ``y``; for U-statistics ``X`` is None and ``y`` holds the sample."""

    X: np.ndarray | None
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 0 or y.shape[0] == 0:
            raise ValidationError("dataset is empty")
        if not np.all(np.isfinite(y)):
            raise ValidationError("response has non-finite entries")
        object.__setattr__(self, "y", y)
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            if X.ndim != 2 or X.shape[0] != y.shape[0]:
                raise ValidationError(f"X has shape {X.shape} but y has {y.shape[0]} rows")
            if not np.all(np.isfinite(X)):
                raise ValidationError("design matrix has non-finite entries")
            object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return 1 if self.X is None else int(self.X.shape[1])

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(None if self.X is None else self.X[idx], self.y[idx])


def load_dataset(path, *, response: str = "y", intercept: bool = False) -> Dataset:
    """Read a CSV with a header row; ``response`` is the outcome, all other columns are features."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ValidationError(f"{path}: cannot read dataset: {exc}") from exc
    if response not in frame.columns:
        raise ValidationError(f"{path}: no response column {response!r}")
    feats = frame.drop(columns=[response])
    try:
        X = feats.to_numpy(dtype=float)
        y = frame[response].to_numpy(dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entries: {exc}") from exc
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return Dataset(X, y)


def _check_design(data: Dataset) -> None:
    if data.X is None:
        raise ValidationError("regression fits need a design matrix")
    n, p = data.X.shape
    if n <= p:
        raise ValidationError(f"need n > p for a regression fit (n={n}, p={p})")
    if np.linalg.matrix_rank(data.X) < p:
        raise ValidationError("design matrix is rank deficient")


def _weights(data: Dataset, weights) -> np.ndarray:
    if weights is None:
        return np.ones(data.n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be a finite nonnegative n-vector")
    return w


def _start(p: int, start) -> np.ndarray:
    return np.zeros(p) if start is None else np.asarray(start, dtype=float).copy()


# --- canonical GLMs --------------------------------------------------------


def _cumulant(family: str):
    """``(a, a', a'')`` of the canonical exponential family."""
    if family == "logistic":
        def a(eta):
            # log(1 + e^eta), overflow-free
            return np.log1p(np.exp(-np.abs(eta))) + np.maximum(eta, 0.0)

        def mu(eta):
            return 0.5 * (1.0 + np.tanh(0.5 * eta))

        def var(eta):
            m = mu(eta)
            return m * (1.0 - m)

        return a, mu, var
    if family == "poisson":
        def a(eta):
            return np.exp(eta)

        return a, a, a
    raise ValidationError(f"unknown GLM family {family!r}")


@dataclass
class GlmDiagnostics:
    iterations: int
    score_norm: float
    warnings: list[str] = field(default_factory=list)


def glm_objective(theta, X, y, family: str, w=None) -> float:
    """Average negative log-likelihood ``mean w (a(x'theta) - y x'theta)``."""
    a, _, _ = _cumulant(family)
    eta = X @ theta
    w = np.ones(len(y)) if w is None else w
    return float(np.mean(w * (a(eta) - y * eta)))


def glm_score(theta, X, y, family: str, w=None) -> np.ndarray:
    """``(1/n) sum w (y - a'(x'theta)) x``."""
    _, mu, _ = _cumulant(family)
    w = np.ones(len(y)) if w is None else w
    return X.T @ (w * (y - mu(X @ theta))) / len(y)


def _newton(X, y, family, w, theta) -> tuple[np.ndarray, int, float]:
    a, mu, var = _cumulant(family)
    n = len(y)

    def objective(t):
        eta = X @ t
        return float(np.mean(w * (a(eta) - y * eta)))

    obj = objective(theta)
    for it in range(1, MAX_ITER + 1):
        eta = X @ theta
        score = X.T @ (w * (y - mu(eta))) / n
        gnorm = float(np.linalg.norm(score))
        if gnorm < SCORE_TOL:
            return theta, it - 1, gnorm
        hess = (X * (w * var(eta))[:, None]).T @ X / n
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian in Newton iteration", iterations=it, score_norm=gnorm) from None
        t = 1.0
        while True:
            cand = theta + t * step
            c_obj = objective(cand)
            if np.isfinite(c_obj) and c_obj <= obj + 1e-4 * t * float(score @ -step):
                break
            t *= 0.5
            if t < 1e-12:
                cand, c_obj = theta + t * step, obj
                break
        delta = float(np.linalg.norm(cand - theta))
        theta, obj = cand, c_obj
        if delta < STEP_TOL:
            score = X.T @ (w * (y - mu(X @ theta))) / n
            gnorm = float(np.linalg.norm(score))
            if gnorm <= SCORE_ACCEPT:
                return theta, it, gnorm
    score = X.T @ (w * (y - mu(X @ theta))) / n
    gnorm = float(np.linalg.norm(score))
    if gnorm < SCORE_ACCEPT:
        return theta, MAX_ITER, gnorm
    raise ConvergenceError(
        f"Newton did not converge in {MAX_ITER} iterations (score norm {gnorm:.3g})",
        iterations=MAX_ITER,
        score_norm=gnorm,
    )


class GlmFitter:
    """Damped Newton for canonical logistic or Poisson regression."""

    def __init__(self, family: str = "logistic"):
        _cumulant(family)
        self.family = family

    def estimate(self, data: Dataset, weights=None, start=None) -> np.ndarray:
        theta, _, _ = _newton(data.X, data.y, self.family, _weights(data, weights), _start(data.p, start))
        return theta

    def fit(self, data: Dataset, centre_id: str = "centre") -> tuple[CentreSummary, GlmDiagnostics]:
        _check_design(data)
        if self.family == "logistic" and np.any((data.y != 0) & (data.y != 1)):
            raise ValidationError("logistic response must be 0/1")
        if self.family == "poisson" and np.any(data.y < 0):
            raise ValidationError("Poisson response must be nonnegative")
        X, y = data.X, data.y
        theta, iters, gnorm = _newton(X, y, self.family, np.ones(data.n), np.zeros(data.p))
        _, mu, var = _cumulant(self.family)
        eta = X @ theta
        V = (X * var(eta)[:, None]).T @ X / data.n
        resid = y - mu(eta)
        Q = (X * (resid * resid)[:, None]).T @ X / data.n
        diag = GlmDiagnostics(iters, gnorm)
        if self.family == "logistic" and np.max(np.abs(eta)) > SEPARATION_ETA:
            diag.warnings.append(f"possible quasi-separation: max |x'theta| = {np.max(np.abs(eta)):.1f}")
        summary = validate_summary(CentreSummary(str(centre_id), data.n, theta, V, Q))
        return summary, diag


def fit_glm(data: Dataset, family: str = "logistic", centre_id: str = "centre"):
    """Fit a canonical GLM; returns ``(CentreSummary, GlmDiagnostics)``."""
    return GlmFitter(family).fit(data, centre_id)


# --- robust linear regression ---------------------------------------------


@dataclass(frozen=True)
class RobustLoss:
    kind: str = "huber"
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.kind not in ("huber", "pseudo_huber", "log_cosh"):
            raise ValidationError(f"unknown robust loss {self.kind!r}")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValidationError(f"delta must be positive, got {self.delta}")

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        d = self.delta
        if self.kind == "huber":
            a = np.abs(t)
            return np.where(a <= d, 0.5 * t * t, d * a - 0.5 * d * d)
        if self.kind == "pseudo_huber":
            return d * d * (np.sqrt(1.0 + (t / d) ** 2) - 1.0)
        u = np.abs(t / d)
        # log cosh(u) = u + log1p(exp(-2u)) - log 2, stable for large u
        return d * d * (u + np.log1p(np.exp(-2.0 * u)) - np.log(2.0))

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        d = self.delta
        if self.kind == "huber":
            return np.clip(t, -d, d)
        if self.kind == "pseudo_huber":
            return t / np.sqrt(1.0 + (t / d) ** 2)
        return d * np.tanh(t / d)

    def dpsi(self, t):
        t = np.asarray(t, dtype=float)
        d = self.delta
        if self.kind == "huber":
            return (np.abs(t) <= d).astype(float)
        if self.kind == "pseudo_huber":
            return (1.0 + (t / d) ** 2) ** -1.5
        return 1.0 / np.cosh(np.clip(t / d, -350.0, 350.0)) ** 2

    def irls_weight(self, t):
        """``psi(t) / t`` with its limit 1 at zero."""
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        nz = t != 0
        out[nz] = self.psi(t[nz]) / t[nz]
        return out


def _irls(X, y, loss: RobustLoss, w, theta) -> tuple[np.ndarray, int, float]:
    n = len(y)
    for it in range(1, MAX_ITER + 1):
        r = y - X @ theta
        score = X.T @ (w * loss.psi(r)) / n
        gnorm = float(np.linalg.norm(score))
        if gnorm < SCORE_TOL:
            return theta, it - 1, gnorm
        c = w * loss.irls_weight(r)
        A = (X * c[:, None]).T @ X
        try:
            new = np.linalg.solve(A, X.T @ (c * y))
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular weighted normal equations", iterations=it, score_norm=gnorm) from None
        delta = float(np.linalg.norm(new - theta))
        theta = new
        if delta < STEP_TOL:
            break
    r = y - X @ theta
    gnorm = float(np.linalg.norm(X.T @ (w * loss.psi(r)) / n))
    if gnorm < SCORE_ACCEPT:
        return theta, it, gnorm
    raise ConvergenceError(
        f"IRLS did not converge in {MAX_ITER} iterations (score norm {gnorm:.3g})",
        iterations=it,
        score_norm=gnorm,
    )


class RobustFitter:
    """IRLS M-estimation of a linear model under a convex robust loss."""

    def __init__(self, loss: RobustLoss | None = None):
        self.loss = loss or RobustLoss()

    def estimate(self, data: Dataset, weights=None, start=None) -> np.ndarray:
        theta, _, _ = _irls(data.X, data.y, self.loss, _weights(data, weights), _start(data.p, start))
        return theta

    def fit(self, data: Dataset, centre_id: str = "centre") -> CentreSummary:
        _check_design(data)
        X = data.X
        theta, _, _ = _irls(X, data.y, self.loss, np.ones(data.n), np.zeros(data.p))
        r = data.y - X @ theta
        V = (X * self.loss.dpsi(r)[:, None]).T @ X / data.n
        psi = self.loss.psi(r)
        Q = (X * (psi * psi)[:, None]).T @ X / data.n
        return validate_summary(CentreSummary(str(centre_id), data.n, theta, V, Q))


def fit_robust(data: Dataset, loss: RobustLoss | None = None, centre_id: str = "centre") -> CentreSummary:
    return RobustFitter(loss).fit(data, centre_id)


# --- U-statistics ----------------------------------------------------------


def kernel_matrix(sample: np.ndarray, kernel: Callable) -> np.ndarray:
    """``h(x_i, x_j)`` for all pairs; uses broadcasting when the kernel supports it."""
    x = np.asarray(sample, dtype=float)
    n = x.shape[0]
    a = x[:, None] if x.ndim == 1 else x[:, None, :]
    b = x[None, :] if x.ndim == 1 else x[None, :, :]
    try:
        m = np.asarray(kernel(a, b), dtype=float)
        if m.shape == (n, n):
            return m
    except (TypeError, ValueError, IndexError):
        pass
    m = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            m[i, j] = m[j, i] = float(kernel(x[i], x[j]))
    return m


def ustat_parts(sample, kernel: Callable, weights=None) -> tuple[float, np.ndarray]:
    """U-statistic ``theta`` and the leave-one-out projections ``nu_i``.

    With ``weights`` the pair average is weighted by ``w_i w_j`` (multiplier bootstrap).
    """
    x = np.asarray(sample, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValidationError("a U-statistic needs at least two observations")
    m = kernel_matrix(x, kernel)
    if not np.all(np.isfinite(m)):
        raise NumericalError("kernel returned non-finite values")
    off = m - np.diag(np.diag(m))
    if weights is None:
        theta = float(np.triu(m, 1).sum()) / (n * (n - 1) / 2.0)
        nu = off.sum(axis=1) / (n - 1)
        return theta, nu
    w = np.asarray(weights, dtype=float)
    ww = np.outer(w, w)
    np.fill_diagonal(ww, 0.0)
    denom = ww.sum()
    if denom <= 0:
        raise NumericalError("weighted U-statistic has no positive pair weights")
    return float((ww * off).sum() / denom), off.sum(axis=1) / (n - 1)


class UstatFitter:
    """Order-two U-statistic with a symmetric kernel ``h(x, y)``.

    By default ``V`` is ``sqrt((4/n) sum (nu_i - theta)^2)`` and ``Q = 1``.  With
    ``calibrated=True``, ``V`` is the reciprocal of that root instead, so the
    sandwich ``V^-1 Q V^-1`` equals the asymptotic variance ``4 sigma_1^2``.
    """

    def __init__(self, kernel: Callable, calibrated: bool = False):
        self.kernel = kernel
        self.calibrated = calibrated

    def estimate(self, data: Dataset, weights=None, start=None) -> np.ndarray:
        theta, _ = ustat_parts(data.y, self.kernel, weights)
        return np.array([theta])

    def fit(self, data: Dataset, centre_id: str = "centre") -> CentreSummary:
        theta, nu = ustat_parts(data.y, self.kernel)
        n = data.n
        root = float(np.sqrt(4.0 / n * np.sum((nu - theta) ** 2)))
        if not root > 1e-12 * max(1.0, abs(theta)):
            raise ValidationError(f"centre {centre_id}: degenerate kernel projection (V = 0)")
        V = 1.0 / root if self.calibrated else root
        return validate_summary(CentreSummary(str(centre_id), n, np.array([theta]), np.array([[V]]), np.array([[1.0]])))


def fit_ustat(sample, kernel: Callable, centre_id: str = "centre", calibrated: bool = False) -> CentreSummary:
    return UstatFitter(kernel, calibrated).fit(Dataset(None, sample), centre_id)
