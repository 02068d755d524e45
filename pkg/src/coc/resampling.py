"""Resampling schemes that produce the replicate estimates of a :class:`RoundSet`.

* nonparametric: resample rows with replacement and refit;
* weighted: refit with i.i.d. Exp(1) observation weights;
* universal: perturb the estimate by ``n^{-1/2} L z`` with ``L L' = V^-1 Q V^-1``.

Every draw for centre ``c`` in round ``r`` comes from ``stream(seed, c, r, scheme, attempt)``,
so replicates never depend on other centres or on execution order.  ``V`` and
``Q`` always come from the original fit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import RoundSet
from .errors import NumericalError, ValidationError
from .models import Dataset
from .numerics import psd_sqrt
from .rng import stream
from .summaries import CentreSummary

SCHEMES = ("nonparametric", "weighted", "universal")
MAX_RETRIES = 3


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "universal"
    rounds: int = 40
    seed: int = 0
    unit_weights: bool = False  # test hook: weighted scheme with every weight equal to 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if isinstance(self.rounds, bool) or int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValidationError(f"rounds must be a positive integer, got {self.rounds!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit nonnegative integer")


def _gen(cfg: SchemeConfig, centre_id: str, r: int, attempt: int) -> np.random.Generator:
    return stream(cfg.seed, str(centre_id), int(r), cfg.scheme, int(attempt))


def bootstrap_indices(n: int, cfg: SchemeConfig, centre_id: str, r: int, attempt: int = 0) -> np.ndarray:
    return _gen(cfg, centre_id, r, attempt).integers(0, n, size=n)


def multiplier_weights(n: int, cfg: SchemeConfig, centre_id: str, r: int, attempt: int = 0) -> np.ndarray:
    if cfg.unit_weights:
        return np.ones(n)
    return _gen(cfg, centre_id, r, attempt).standard_exponential(n)


def _retry(fn, centre_id: str, r: int):
    last = None
    for attempt in range(MAX_RETRIES + 1):
        try:
            theta = np.asarray(fn(attempt), dtype=float)
        except (NumericalError, ValidationError, np.linalg.LinAlgError) as exc:
            last = exc
            continue
        if np.all(np.isfinite(theta)):
            return theta
        last = NumericalError("non-finite refit")
    raise NumericalError(f"centre {centre_id}: round {r} refit failed after {MAX_RETRIES} retries: {last}")


def np_round(data: Dataset, fitter, r: int, cfg: SchemeConfig, centre_id: str = "centre", start=None) -> np.ndarray:
    """Refit on ``n`` rows drawn with replacement."""
    def attempt(a):
        return fitter.estimate(data.take(bootstrap_indices(data.n, cfg, centre_id, r, a)), start=start)

    return _retry(attempt, centre_id, r)


def weighted_round(data: Dataset, fitter, r: int, cfg: SchemeConfig, centre_id: str = "centre", start=None) -> np.ndarray:
    """Refit the Exp(1)-weighted estimating equation on the original rows."""
    def attempt(a):
        return fitter.estimate(data, weights=multiplier_weights(data.n, cfg, centre_id, r, a), start=start)

    return _retry(attempt, centre_id, r)


def universal_factor(summary: CentreSummary) -> np.ndarray:
    """``L = psd_sqrt(V^-1 Q V^-1)``."""
    return psd_sqrt(summary.sandwich, name=f"sandwich of centre {summary.centre_id}")


def universal_round(summary: CentreSummary, r: int, cfg: SchemeConfig, factor=None) -> np.ndarray:
    """``theta + n^{-1/2} L z`` with ``z`` standard normal from the centre's round stream."""
    L = universal_factor(summary) if factor is None else factor
    z = _gen(cfg, summary.centre_id, r, 0).standard_normal(summary.p)
    return summary.theta + (L @ z) / np.sqrt(summary.n)


def _fit(fitter, data: Dataset, centre_id: str) -> CentreSummary:
    out = fitter.fit(data, centre_id)
    return out[0] if isinstance(out, tuple) else out


def make_roundset(
    centres: Sequence,
    cfg: SchemeConfig,
    fitter=None,
    centre_ids: Sequence[str] | None = None,
) -> RoundSet:
    """Assemble ``cfg.rounds`` replicates for every centre.

    ``centres`` holds either :class:`Dataset` objects (fitted with ``fitter``) or
    :class:`CentreSummary` objects; summaries only support the universal scheme.
    """
    centres = list(centres)
    if not centres:
        raise ValidationError("no centres supplied")
    if all(isinstance(c, CentreSummary) for c in centres):
        summaries, datasets = centres, None
        if cfg.scheme != "universal":
            raise ValidationError(f"scheme {cfg.scheme!r} needs raw data; summaries support only 'universal'")
    elif all(isinstance(c, Dataset) for c in centres):
        if fitter is None:
            raise ValidationError("a fitter is required for raw datasets")
        ids = list(centre_ids) if centre_ids is not None else [f"c{k + 1}" for k in range(len(centres))]
        if len(ids) != len(centres):
            raise ValidationError("centre_ids must match the number of datasets")
        datasets = centres
        summaries = [_fit(fitter, d, cid) for d, cid in zip(datasets, ids)]
    else:
        raise ValidationError("centres must be all datasets or all summaries")

    K, p = len(summaries), summaries[0].p
    rounds = [np.empty((K, p)) for _ in range(cfg.rounds)]
    for k, s in enumerate(summaries):
        if cfg.scheme == "universal":
            L = universal_factor(s)
            for r in range(cfg.rounds):
                rounds[r][k] = universal_round(s, r + 1, cfg, L)
        else:
            one = np_round if cfg.scheme == "nonparametric" else weighted_round
            for r in range(cfg.rounds):
                rounds[r][k] = one(datasets[k], fitter, r + 1, cfg, s.centre_id, start=s.theta)
    return RoundSet(summaries, rounds)
