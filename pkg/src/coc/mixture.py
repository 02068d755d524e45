"""Weighted chi-square mixtures: construction, Monte Carlo survival and quantiles.

The central law is ``sum_l w_l chi2_1`` and the noncentral law
``sum_{w_j>0} w_j chi2_1(nc_j) + offset``.  Tail probabilities are estimated
from ``M`` seeded standard normal draws per component.  Draws are taken
component by component from one stream per ``(seed, label, M)`` and cached, so
a mixture with ``d`` positive weights always sees the first ``d`` rows of the
same bank, and repeated evaluations are bit-identical.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .numerics import as_symmetric, psd_sqrt, sym_eigen
from .rng import stream

ZERO_WEIGHT_RTOL = 1e-10
DEFAULT_DRAWS = 100_000
MIN_DRAWS = 1_000


@dataclass(frozen=True)
class MonteCarloConfig:
    draws: int = DEFAULT_DRAWS
    seed: int = 0
    label: str = "mixture"

    def __post_init__(self):
        if int(self.draws) < MIN_DRAWS:
            raise ValidationError(f"Monte Carlo draws must be >= {MIN_DRAWS}, got {self.draws}")
        if int(self.seed) < 0:
            raise ValidationError("Monte Carlo seed must be nonnegative")


@dataclass(frozen=True, eq=False)
class ChiSquareMixture:
    """Weights in descending order; ``noncentralities`` align with the positive weights."""

    weights: np.ndarray
    noncentralities: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("mixture weights must be finite and nonnegative")
        w = np.sort(w)[::-1].copy()
        object.__setattr__(self, "weights", w)
        if self.noncentralities is not None:
            nc = np.asarray(self.noncentralities, dtype=float).ravel()
            if nc.shape[0] != self.n_positive:
                raise ValidationError("noncentralities must align with the positive weights")
            if np.any(nc < 0) or not np.all(np.isfinite(nc)):
                raise ValidationError("noncentralities must be finite and nonnegative")
            object.__setattr__(self, "noncentralities", nc)
        if not (np.isfinite(self.offset) and self.offset >= 0):
            raise ValidationError("offset must be finite and nonnegative")
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.weights > 0))

    @property
    def degenerate(self) -> bool:
        return self.n_positive == 0

    @property
    def mean(self) -> float:
        w = self.weights[: self.n_positive]
        nc = self.noncentralities if self.noncentralities is not None else 0.0
        return float(np.sum(w * (1.0 + nc)) + self.offset)


def _zero_small(w: np.ndarray, scale: float) -> np.ndarray:
    w = np.where(w > ZERO_WEIGHT_RTOL * scale, w, 0.0)
    return np.sort(w)[::-1].copy()


def _check_conformable(h, q_bar):
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"H must be square, got shape {h.shape}")
    q = as_symmetric(q_bar, name="Q-bar")
    if q.shape != h.shape:
        raise ValidationError(f"H {h.shape} and Q-bar {q.shape} are not conformable")
    return h, q


def weights_from_matrices(h, q_bar) -> ChiSquareMixture:
    """Mixture whose weights are the eigenvalues of ``Q^{1/2} H^T H Q^{1/2}``."""
    h, q = _check_conformable(h, q_bar)
    a = h @ psd_sqrt(q, name="Q-bar")
    gram = a.T @ a
    scale = float(np.sum(a * a))
    w, _ = sym_eigen(0.5 * (gram + gram.T))
    return ChiSquareMixture(_zero_small(np.maximum(w, 0.0), scale))


def noncentral_mixture(h, q_bar, shift) -> ChiSquareMixture:
    """Law of ``||H Q^{1/2} Z + shift||^2`` as a noncentral mixture.

    With ``H Q H^T = O diag(lam) O^T`` and ``delta = O^T shift``, components with
    ``lam_j > 0`` carry noncentrality ``delta_j^2 / lam_j`` and components with
    ``lam_j = 0`` contribute the constant ``delta_j^2`` to the offset.
    """
    h, q = _check_conformable(h, q_bar)
    shift = np.asarray(shift, dtype=float).ravel()
    if shift.shape[0] != h.shape[0]:
        raise ValidationError(f"shift has length {shift.shape[0]}, expected {h.shape[0]}")
    cov = h @ q @ h.T
    lam, o = sym_eigen(0.5 * (cov + cov.T))
    scale = float(np.trace(cov)) if np.trace(cov) > 0 else 0.0
    positive = lam > ZERO_WEIGHT_RTOL * scale
    delta = o.T @ shift
    weights = np.where(positive, lam, 0.0)
    nc = delta[positive] ** 2 / lam[positive]
    offset = float(np.sum(delta[~positive] ** 2))
    return ChiSquareMixture(weights, nc, offset)


# --- Monte Carlo engine ----------------------------------------------------


class _NormalBank:
    """Rows of standard normals of length ``draws`` from a single stream, grown on demand."""

    def __init__(self, seed: int, label: str, draws: int):
        self._gen = stream(seed, "mixture-bank", label)
        self.draws = draws
        self.z = np.empty((0, draws))
        self.z2 = np.empty((0, draws))
        self._lock = threading.Lock()

    def rows(self, d: int, squared: bool) -> np.ndarray:
        if d > self.z.shape[0]:
            with self._lock:
                if d > self.z.shape[0]:
                    extra = self._gen.standard_normal((d - self.z.shape[0], self.draws))
                    self.z = np.vstack([self.z, extra])
                    self.z2 = np.vstack([self.z2, extra * extra])
        return self.z2[:d] if squared else self.z[:d]


_BANKS: "OrderedDict[tuple, _NormalBank]" = OrderedDict()
_BANKS_LOCK = threading.Lock()
_MAX_BANKS = 4


def _bank(cfg: MonteCarloConfig) -> _NormalBank:
    key = (int(cfg.seed), str(cfg.label), int(cfg.draws))
    with _BANKS_LOCK:
        bank = _BANKS.get(key)
        if bank is None:
            bank = _NormalBank(*key)
            _BANKS[key] = bank
            while len(_BANKS) > _MAX_BANKS:
                _BANKS.popitem(last=False)
        else:
            _BANKS.move_to_end(key)
    return bank


def clear_cache() -> None:
    with _BANKS_LOCK:
        _BANKS.clear()


def sample(mix: ChiSquareMixture, cfg: MonteCarloConfig | None = None) -> np.ndarray:
    """The ``M`` seeded draws of the mixture (unsorted)."""
    cfg = cfg or MonteCarloConfig()
    d = mix.n_positive
    if d == 0:
        return np.full(int(cfg.draws), mix.offset)
    w = mix.weights[:d]
    bank = _bank(cfg)
    if mix.noncentralities is None or not np.any(mix.noncentralities > 0):
        out = w @ bank.rows(d, squared=True)
    else:
        shifted = bank.rows(d, squared=False) + np.sqrt(mix.noncentralities)[:, None]
        out = w @ (shifted * shifted)
    if mix.offset:
        out = out + mix.offset
    return out


def survival(mix: ChiSquareMixture, x: float, cfg: MonteCarloConfig | None = None) -> float:
    """Monte Carlo estimate of ``P(X >= x)``."""
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError("survival requires a finite x")
    if x <= mix.offset:
        return 1.0
    if mix.degenerate:
        return 0.0
    draws = sample(mix, cfg)
    return float(np.count_nonzero(draws >= x)) / draws.shape[0]


def quantile(mix: ChiSquareMixture, level: float, cfg: MonteCarloConfig | None = None) -> float:
    """Order statistic ``ceil(level * M)`` of the seeded draws (no interpolation)."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    if mix.degenerate:
        return mix.offset
    draws = sample(mix, cfg)
    k = max(math.ceil(level * draws.shape[0]), 1)
    return float(np.partition(draws, k - 1)[k - 1])
