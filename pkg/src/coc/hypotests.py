"""Cochran-type equality tests on centre summaries.

``global_homogeneity_test`` checks whether all K centres share one parameter,
``integration_test`` whether two (internally homogeneous) blocks do, and
``local_power`` gives the asymptotic power against drifts ``Delta_k / sqrt(n)``.
Statistics are ``n * ||Vbar T||^2`` with null law a weighted chi-square
mixture; p-values come from :func:`coc.mixture.survival`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import SingularMatrixError, ValidationError
from .mixture import (
    ChiSquareMixture,
    MonteCarloConfig,
    noncentral_mixture,
    quantile,
    survival,
    weights_from_matrices,
)
from .numerics import block_diag, spd_inverse
from .summaries import Block, CentreSummary, check_analysis


@dataclass(frozen=True, eq=False)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    mixture: ChiSquareMixture
    p_value: float
    alpha: float
    reject: bool

    @property
    def weights(self) -> np.ndarray:
        return self.mixture.weights

    def to_dict(self) -> dict:
        return {
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "alpha": float(self.alpha),
            "reject": bool(self.reject),
            "weights": [float(w) for w in self.weights],
        }


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def _result(statistic: float, mix: ChiSquareMixture, alpha: float, cfg: MonteCarloConfig | None) -> TestResult:
    statistic = max(float(statistic), 0.0)
    # no evidence against equality can come from a degenerate null law
    p = 1.0 if mix.degenerate else survival(mix, statistic, cfg)
    return TestResult(statistic, mix, p, alpha, p < alpha)


@dataclass(frozen=True, eq=False)
class CentreArrays:
    """Summaries stacked into arrays: ``theta`` (K, p), ``V`` and ``Q`` (K, p, p)."""

    ids: tuple
    n: int
    theta: np.ndarray
    V: np.ndarray
    Q: np.ndarray

    @classmethod
    def from_summaries(cls, summaries: Sequence[CentreSummary]) -> "CentreArrays":
        n, _ = check_analysis(summaries)
        return cls(
            tuple(s.centre_id for s in summaries),
            n,
            np.stack([s.theta for s in summaries]),
            np.stack([s.V for s in summaries]),
            np.stack([s.Q for s in summaries]),
        )

    @property
    def K(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return int(self.theta.shape[1])

    def with_theta(self, theta: np.ndarray) -> "CentreArrays":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.theta.shape:
            raise ValidationError(f"theta has shape {theta.shape}, expected {self.theta.shape}")
        return CentreArrays(self.ids, self.n, theta, self.V, self.Q)

    def index_of(self, block: Block) -> list[int]:
        lookup = {c: i for i, c in enumerate(self.ids)}
        missing = [c for c in block.members if c not in lookup]
        if missing:
            raise ValidationError(f"unknown centre ids {sorted(missing)}")
        return sorted(lookup[c] for c in block.members)


def _canonical(summaries: Sequence[CentreSummary]) -> list[CentreSummary]:
    return sorted(summaries, key=lambda s: s.centre_id)


def _inv(m: np.ndarray, name: str) -> np.ndarray:
    return spd_inverse(m, name=name)


def build_H(V_list: Sequence[np.ndarray]) -> np.ndarray:
    """Block matrix with identity off-diagonal blocks and ``I - V V_k^{-1}`` on the diagonal.

    ``V`` is the sum of all ``V_k``.
    """
    if len(V_list) == 0:
        raise ValidationError("build_H needs at least one V")
    V_list = [np.atleast_2d(np.asarray(v, dtype=float)) for v in V_list]
    p = V_list[0].shape[0]
    if any(v.shape != (p, p) for v in V_list):
        raise ValidationError("all V_k must be p x p with a shared p")
    K = len(V_list)
    V = sum(V_list)
    eye = np.eye(p)
    H = np.tile(eye, (K, K))
    for k, Vk in enumerate(V_list):
        try:
            Vk_inv = _inv(Vk, f"V of centre {k + 1}")
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"V_{k + 1} is singular: {exc}") from exc
        H[k * p:(k + 1) * p, k * p:(k + 1) * p] = eye - V @ Vk_inv
    return H


def _weighted_mean(V: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """AEE mean of stacked ``theta`` (m, p) with weights ``V`` (m, p, p); exact when all rows agree."""
    ref = theta[0]
    V_sum = V.sum(axis=0)
    rhs = np.einsum("kij,kj->i", V, theta - ref)
    return ref + _inv(V_sum, "sum of V") @ rhs, V_sum


def global_statistic(arr: CentreArrays) -> float:
    """``n * sum_k ||V (theta_AEE - theta_k)||^2`` with ``V`` the sum of all ``V_k``."""
    theta_bar, V = _weighted_mean(arr.V, arr.theta)
    T = theta_bar[None, :] - arr.theta
    return arr.n * float(np.sum((T @ V.T) ** 2))


def global_mixture(arr: CentreArrays) -> ChiSquareMixture:
    return weights_from_matrices(build_H(list(arr.V)), block_diag(list(arr.Q)))


def global_test_arrays(arr: CentreArrays, alpha: float = 0.05, cfg: MonteCarloConfig | None = None) -> TestResult:
    alpha = _check_alpha(alpha)
    if arr.K < 2:
        raise ValidationError("the global homogeneity test needs at least two centres")
    return _result(global_statistic(arr), global_mixture(arr), alpha, cfg)


def global_homogeneity_test(
    summaries: Sequence[CentreSummary], alpha: float = 0.05, cfg: MonteCarloConfig | None = None
) -> TestResult:
    """Test that all centres share one parameter vector.

    Centres are processed in sorted-id order, so relabelling the input leaves
    the statistic and p-value bit-identical.
    """
    return global_test_arrays(CentreArrays.from_summaries(_canonical(summaries)), alpha, cfg)


def integration_statistic(arr: CentreArrays, idx_a: Sequence[int], idx_b: Sequence[int]) -> float:
    """``n * ||V12 (theta12 - theta1)||^2 + n * ||V12 (theta12 - theta2)||^2`` for two index blocks."""
    theta1, V1 = _weighted_mean(arr.V[idx_a], arr.theta[idx_a])
    theta2, V2 = _weighted_mean(arr.V[idx_b], arr.theta[idx_b])
    theta12, V12 = _weighted_mean(np.stack([V1, V2]), np.stack([theta1, theta2]))
    d1 = V12 @ (theta12 - theta1)
    d2 = V12 @ (theta12 - theta2)
    return arr.n * float(d1 @ d1 + d2 @ d2)


def integration_mixture(arr: CentreArrays, idx_a: Sequence[int], idx_b: Sequence[int]) -> ChiSquareMixture:
    """Null law of :func:`integration_statistic`; depends on ``V`` and ``Q`` only."""
    V1 = arr.V[idx_a].sum(axis=0)
    V2 = arr.V[idx_b].sum(axis=0)
    V12 = V1 + V2
    eye = np.eye(arr.p)
    H = np.block([
        [eye - V12 @ _inv(V1, "block V"), eye],
        [eye, eye - V12 @ _inv(V2, "block V")],
    ])
    Q_tilde = block_diag([arr.Q[idx_a].sum(axis=0), arr.Q[idx_b].sum(axis=0)])
    return weights_from_matrices(H, Q_tilde)


def _check_blocks(idx_a: Sequence[int], idx_b: Sequence[int]) -> tuple[list[int], list[int]]:
    idx_a, idx_b = list(idx_a), list(idx_b)
    if not idx_a or not idx_b:
        raise ValidationError("integration test blocks must be nonempty")
    if set(idx_a) & set(idx_b):
        raise ValidationError("integration test blocks overlap")
    return idx_a, idx_b


def integration_test_arrays(
    arr: CentreArrays,
    idx_a: Sequence[int],
    idx_b: Sequence[int],
    alpha: float = 0.05,
    cfg: MonteCarloConfig | None = None,
) -> TestResult:
    alpha = _check_alpha(alpha)
    idx_a, idx_b = _check_blocks(idx_a, idx_b)
    statistic = integration_statistic(arr, idx_a, idx_b)
    return _result(statistic, integration_mixture(arr, idx_a, idx_b), alpha, cfg)


def integration_test(
    a: Block,
    b: Block,
    summaries: Sequence[CentreSummary],
    alpha: float = 0.05,
    cfg: MonteCarloConfig | None = None,
) -> TestResult:
    """Test that two disjoint blocks of centres share one parameter vector."""
    if a.members & b.members:
        raise ValidationError(f"blocks overlap on {sorted(a.members & b.members)}")
    arr = CentreArrays.from_summaries(_canonical(summaries))
    return integration_test_arrays(arr, arr.index_of(a), arr.index_of(b), alpha, cfg)


def _stack_deltas(arr: CentreArrays, deltas) -> np.ndarray:
    if isinstance(deltas, Mapping):
        rows = [deltas.get(cid, np.zeros(arr.p)) for cid in arr.ids]
    else:
        rows = list(deltas)
    D = np.asarray(rows, dtype=float)
    if D.ndim == 1 and arr.p == 1:
        D = D[:, None]
    if D.shape != (arr.K, arr.p):
        raise ValidationError(f"deltas must have shape {(arr.K, arr.p)}, got {D.shape}")
    return D


def local_shift(V_list: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Stacked ``W_k = sum_j V_j Delta_j - V Delta_k``."""
    V = V_list.sum(axis=0)
    total = np.einsum("kij,kj->i", V_list, deltas)
    return (total[None, :] - deltas @ V.T).ravel()


def local_power(
    summaries: Sequence[CentreSummary],
    deltas,
    alpha: float = 0.05,
    cfg: MonteCarloConfig | None = None,
) -> float:
    """Asymptotic power of the global test under drifts ``theta_k = theta_0 + Delta_k / sqrt(n)``.

    ``deltas`` is a (K, p) array-like in summary order or a mapping from centre
    id to ``Delta_k`` (missing centres get zero drift).
    """
    alpha = _check_alpha(alpha)
    arr = CentreArrays.from_summaries(summaries)
    if arr.K < 2:
        raise ValidationError("local power needs at least two centres")
    D = _stack_deltas(arr, deltas)
    H = build_H(list(arr.V))
    Q_bar = block_diag(list(arr.Q))
    central = weights_from_matrices(H, Q_bar)
    if central.degenerate:
        return 0.0
    crit = quantile(central, 1.0 - alpha, cfg)
    alt = noncentral_mixture(H, Q_bar, local_shift(arr.V, D))
    return survival(alt, crit, cfg)
