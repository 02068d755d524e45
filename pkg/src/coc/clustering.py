"""Clusters-of-Centres: one-shot, multi-round and cyclic merging of centres.

All variants work on centre indices in analysis order (the order of the input
summaries).  Blocks are always processed sorted by their smallest member, and an
incoming block joins the existing block with the largest integration p-value
among those with ``p >= alpha`` (ties to the smaller block index), otherwise it
stays on its own.  After round 1, rounds only merge blocks.

Because ``V`` and ``Q`` are shared by all rounds, the null law of every
integration test depends only on the pair of index sets; :class:`NullLawCache`
keeps the Monte Carlo draws of each law so later rounds only pay for the
statistic.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .hypotests import (
    CentreArrays,
    global_mixture,
    global_statistic,
    integration_mixture,
    integration_statistic,
    _check_alpha,
)
from .mixture import ChiSquareMixture, MonteCarloConfig, sample
from .summaries import Block, CentreSummary, Partition, check_analysis


def n_max(K: int) -> int:
    """Number of distinct two-block tests, ``K(K-1)/2 * 3^(K-2)``, as an exact integer."""
    if isinstance(K, bool) or int(K) != K or K < 2:
        raise ValidationError(f"n_max needs an integer K >= 2, got {K!r}")
    K = int(K)
    return K * (K - 1) // 2 * 3 ** (K - 2)


def stop_window(K: int) -> int:
    """Heuristic plateau length ``ceil(ln K * ln n_max(K))``, at least 1."""
    nm = n_max(K)
    return max(1, math.ceil(math.log(K) * math.log(nm)))


def resolve_window(window, K: int) -> int:
    """Map ``"heuristic"``/``"auto"``, ``"exact"``, ``"fixed:L"`` or an integer to a window length."""
    if isinstance(window, str):
        w = window.strip().lower()
        if w in ("heuristic", "auto"):
            return stop_window(K) if K >= 2 else 1
        if w == "exact":
            return n_max(K) + 1 if K >= 2 else 1
        if w.startswith("fixed:"):
            window = w.split(":", 1)[1]
        try:
            window = int(window)
        except ValueError:
            raise ValidationError(f"unknown window mode {window!r}") from None
    if isinstance(window, bool) or int(window) != window or window < 1:
        raise ValidationError(f"window must be a positive integer, got {window!r}")
    return int(window)


def provisioned_rounds(K: int, available: int | None = None) -> int:
    """``2 * n_max(K)`` replicates, capped by ``available`` when given."""
    want = 2 * n_max(K)
    return want if available is None else min(want, int(available))


# --- round sets ------------------------------------------------------------


@dataclass(eq=False)
class RoundSet:
    """Fixed per-centre ``(theta, V, Q)`` plus ``R`` replicate estimates.

    ``rounds[r]`` is a (K, p) array whose rows follow the order of ``summaries``.
    """

    summaries: list[CentreSummary]
    rounds: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.summaries = list(self.summaries)
        self._n, self._p = check_analysis(self.summaries)
        K = len(self.summaries)
        checked = []
        for i, th in enumerate(self.rounds):
            th = np.asarray(th, dtype=float)
            if th.shape != (K, self._p):
                raise ValidationError(f"round {i + 1} has shape {th.shape}, expected {(K, self._p)}")
            if not np.all(np.isfinite(th)):
                raise ValidationError(f"round {i + 1} has non-finite estimates")
            checked.append(th)
        self.rounds = checked

    @property
    def R(self) -> int:
        return len(self.rounds)

    @property
    def centre_ids(self) -> list[str]:
        return [s.centre_id for s in self.summaries]

    @property
    def base_theta(self) -> np.ndarray:
        return np.stack([s.theta for s in self.summaries])

    def arrays(self) -> CentreArrays:
        return CentreArrays.from_summaries(self.summaries)

    @classmethod
    def from_maps(cls, summaries: Sequence[CentreSummary], rounds: Sequence[dict]) -> "RoundSet":
        """Build from per-round ``{centre_id: theta}`` maps; every round must cover the same centres."""
        ids = [s.centre_id for s in summaries]
        stacked = []
        for i, rnd in enumerate(rounds):
            keys = {str(k) for k in rnd}
            if keys != set(ids):
                raise ValidationError(f"round {i + 1} covers centres {sorted(keys)}, expected {sorted(ids)}")
            lookup = {str(k): v for k, v in rnd.items()}
            stacked.append(np.stack([np.asarray(lookup[c], dtype=float).ravel() for c in ids]))
        return cls(list(summaries), stacked)

    def to_dict(self) -> dict:
        ids = self.centre_ids
        return {
            "summaries": [s.to_dict() for s in self.summaries],
            "rounds": [
                {"r": r + 1, "theta": {c: [float(x) for x in th[k]] for k, c in enumerate(ids)}}
                for r, th in enumerate(self.rounds)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundSet":
        try:
            summaries = [CentreSummary.from_dict(s) for s in d["summaries"]]
            rounds = sorted(d.get("rounds", []), key=lambda x: int(x.get("r", 0)))
            maps = [x["theta"] for x in rounds]
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed round set: {exc}") from exc
        return cls.from_maps(summaries, maps)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RoundSet":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass(eq=False)
class CocTrace:
    """Per-round record of a multi-round run and its final partition."""

    partition: Partition
    n_blocks: list[int]
    replicate_index: list[int]
    runlen: list[int]
    stop_reason: str

    @property
    def rounds_used(self) -> int:
        return len(self.n_blocks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "replicate_index", "n_blocks", "runlen"])
        for r, (i, nb, rl) in enumerate(zip(self.replicate_index, self.n_blocks, self.runlen), start=1):
            w.writerow([r, i, nb, rl])
        return buf.getvalue()


# --- testing engine --------------------------------------------------------


class NullLawCache:
    """Monte Carlo draws of null laws keyed by the index sets that define them.

    Draws are counted directly on first use and sorted once a law is reused, after
    which each p-value is a binary search.
    """

    def __init__(self, cfg: MonteCarloConfig | None = None):
        self.cfg = cfg or MonteCarloConfig()
        self._draws: dict = {}
        self._sorted: set = set()

    def p_value(self, key, build, statistic: float) -> float:
        if key not in self._draws:
            mix: ChiSquareMixture = build()
            draws = None if mix.degenerate else sample(mix, self.cfg)
            self._draws[key] = draws
            if draws is None or statistic <= 0.0:
                return 1.0
            return float(np.count_nonzero(draws >= statistic)) / draws.shape[0]
        draws = self._draws[key]
        if draws is None or statistic <= 0.0:
            return 1.0
        if key not in self._sorted:
            draws.sort()
            self._sorted.add(key)
        # fraction of draws >= statistic
        return float(draws.shape[0] - np.searchsorted(draws, statistic, side="left")) / draws.shape[0]


class _Engine:
    def __init__(self, arr: CentreArrays, alpha: float, cfg: MonteCarloConfig | None, cache: NullLawCache | None):
        self.arr = arr
        self.alpha = _check_alpha(alpha)
        self.cache = cache or NullLawCache(cfg)

    def global_p(self, cur: CentreArrays) -> float:
        return self.cache.p_value("global", lambda: global_mixture(self.arr), global_statistic(cur))

    def integration_p(self, cur: CentreArrays, a: list[int], b: list[int]) -> float:
        key = (tuple(a), tuple(b))
        stat = integration_statistic(cur, a, b)
        return self.cache.p_value(key, lambda: integration_mixture(self.arr, a, b), stat)

    def insert(self, blocks: list[list[int]], incoming: list[int], cur: CentreArrays) -> None:
        best, best_p = None, -1.0
        for i, b in enumerate(blocks):
            p = self.integration_p(cur, b, incoming)
            if p >= self.alpha and p > best_p:
                best, best_p = i, p
        if best is None:
            blocks.append(list(incoming))
        else:
            blocks[best] = sorted(blocks[best] + list(incoming))

    def one_shot(self, cur: CentreArrays) -> list[list[int]]:
        K = cur.K
        if K == 1 or self.global_p(cur) >= self.alpha:
            return [list(range(K))]
        blocks = [[0]]
        for k in range(1, K):
            self.insert(blocks, [k], cur)
        return blocks

    def merge_round(self, prev: list[list[int]], cur: CentreArrays) -> list[list[int]]:
        ordered = sorted(prev, key=min)
        blocks = [list(ordered[0])]
        for b in ordered[1:]:
            self.insert(blocks, b, cur)
        return blocks


def _to_partition(blocks: list[list[int]], ids: Sequence[str]) -> Partition:
    return Partition([Block(ids[i] for i in b) for b in blocks], order=tuple(ids))


def one_shot_coc(
    summaries: Sequence[CentreSummary],
    alpha: float = 0.05,
    cfg: MonteCarloConfig | None = None,
) -> Partition:
    """Single pass: global test, then sequential insertion of centres 2..K."""
    arr = CentreArrays.from_summaries(summaries)
    eng = _Engine(arr, alpha, cfg, None)
    return _to_partition(eng.one_shot(arr), arr.ids)


def _run(rs: RoundSet, alpha, cfg, cache, window: int | None, max_rounds: int | None) -> CocTrace:
    arr = rs.arrays()
    eng = _Engine(arr, alpha, cfg, cache)
    R = rs.R
    if R == 0:
        # no replicates: fall back to the original estimates
        rounds = [arr.theta]
        R = 1
    else:
        rounds = rs.rounds
    sizes: list[int] = []
    reps: list[int] = []
    runs: list[int] = []
    blocks: list[list[int]] = []
    r = 0
    limit = R if window is None else max_rounds
    stop = "rounds_exhausted"
    while limit is None or r < limit:
        r += 1
        i = (r - 1) % R
        cur = arr.with_theta(rounds[i])
        blocks = eng.one_shot(cur) if r == 1 else eng.merge_round(blocks, cur)
        runlen = 1 if r == 1 or len(blocks) != sizes[-1] else runs[-1] + 1
        sizes.append(len(blocks))
        reps.append(i + 1)
        runs.append(runlen)
        if window is not None and runlen >= window:
            stop = "plateau"
            break
    return CocTrace(_to_partition(blocks, arr.ids), sizes, reps, runs, stop)


def multi_round_coc(
    rs: RoundSet,
    alpha: float = 0.05,
    cfg: MonteCarloConfig | None = None,
    cache: NullLawCache | None = None,
) -> CocTrace:
    """One-shot on replicate 1, then one merge-only round per remaining replicate."""
    return _run(rs, alpha, cfg, cache, None, None)


def cyclic_coc(
    rs: RoundSet,
    alpha: float = 0.05,
    window="heuristic",
    cfg: MonteCarloConfig | None = None,
    cache: NullLawCache | None = None,
    max_rounds: int | None = None,
) -> CocTrace:
    """Merge rounds over replicates reused cyclically until the block count stays put ``window`` rounds.

    Block counts never increase and are bounded below, so the loop terminates;
    ``max_rounds`` is an optional safety cap (stop reason ``rounds_exhausted``).
    """
    L = resolve_window(window, len(rs.summaries))
    if max_rounds is not None and int(max_rounds) < 1:
        raise ValidationError("max_rounds must be positive")
    return _run(rs, alpha, cfg, cache, L, None if max_rounds is None else int(max_rounds))
