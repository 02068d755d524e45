"""Centre summaries, blocks, partitions and the AEE aggregation rule.

A centre transmits ``(n, theta, V, Q)`` where ``V`` and ``Q`` are the plug-in
sensitivity and variability matrices on the per-observation scale (averages
over ``n``).  Every test statistic multiplies by ``n`` explicitly, so all
centres entering one analysis must share the same ``n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .numerics import CLAMP_RTOL, SYMMETRY_RTOL, spd_inverse


@dataclass(frozen=True, eq=False)
class CentreSummary:
    """One centre's transmitted state."""

    centre_id: str
    n: int
    theta: np.ndarray
    V: np.ndarray
    Q: np.ndarray

    @property
    def p(self) -> int:
        return int(self.theta.shape[0])

    @property
    def sandwich(self) -> np.ndarray:
        """``V^-1 Q V^-1``, the asymptotic covariance of ``sqrt(n)(theta_hat - theta)``."""
        v_inv = spd_inverse(self.V, name=f"V of centre {self.centre_id}")
        return v_inv @ self.Q @ v_inv

    def with_theta(self, theta) -> "CentreSummary":
        return CentreSummary(self.centre_id, self.n, np.asarray(theta, dtype=float), self.V, self.Q)

    def to_dict(self) -> dict:
        return {
            "centre_id": self.centre_id,
            "n": int(self.n),
            "p": self.p,
            "theta": [float(x) for x in self.theta],
            "V": [float(x) for x in self.V.ravel()],
            "Q": [float(x) for x in self.Q.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CentreSummary":
        try:
            cid = str(d["centre_id"])
            n = d["n"]
            theta = np.asarray(d["theta"], dtype=float).ravel()
            p = int(d.get("p", theta.shape[0]))
            V = np.asarray(d["V"], dtype=float).ravel()
            Q = np.asarray(d["Q"], dtype=float).ravel()
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed summary record: {exc}") from exc
        if theta.shape[0] != p or V.shape[0] != p * p or Q.shape[0] != p * p:
            raise ValidationError(f"centre {cid}: theta/V/Q lengths do not match p={p}")
        return validate_summary(cls(cid, n, theta, V.reshape(p, p), Q.reshape(p, p)))


def validate_summary(s: CentreSummary) -> CentreSummary:
    """Check every invariant of a summary and return a normalized copy.

    All violations are collected and reported together, each prefixed with the
    centre id.
    """
    problems: list[str] = []
    cid = str(s.centre_id)
    n = s.n
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        if isinstance(n, float) and n.is_integer() and n >= 1:
            n = int(n)
        else:
            problems.append(f"n must be a positive integer, got {n!r}")
    theta = np.asarray(s.theta, dtype=float).ravel()
    p = theta.shape[0]
    if p == 0:
        problems.append("theta is empty")
    if not np.all(np.isfinite(theta)):
        problems.append("theta has non-finite entries")
    V = np.asarray(s.V, dtype=float)
    Q = np.asarray(s.Q, dtype=float)
    if V.ndim == 0:
        V = V.reshape(1, 1)
    if Q.ndim == 0:
        Q = Q.reshape(1, 1)
    for name, m in (("V", V), ("Q", Q)):
        if m.shape != (p, p):
            problems.append(f"{name} has shape {m.shape}, expected {(p, p)}")
            continue
        if not np.all(np.isfinite(m)):
            problems.append(f"{name} has non-finite entries")
            continue
        scale = max(np.abs(m).max(initial=0.0), np.finfo(float).tiny)
        if np.abs(m - m.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
            problems.append(f"{name} not symmetric")
            continue
        m = 0.5 * (m + m.T)
        w = np.linalg.eigvalsh(m)
        norm = np.linalg.norm(m)
        if name == "V":
            V = m
            if w.min() <= p * 1e-12 * norm:
                problems.append("V not positive definite")
        else:
            Q = m
            if norm == 0.0:
                problems.append("Q is the zero matrix")
            elif w.min() < -CLAMP_RTOL * norm:
                problems.append("Q not positive semi-definite")
    if problems:
        raise ValidationError("; ".join(f"centre {cid}: {msg}" for msg in problems))
    return CentreSummary(cid, int(n), theta, V, Q)


def check_analysis(summaries: Sequence[CentreSummary]) -> tuple[int, int]:
    """Shared ``(n, p)`` of a set of summaries; rejects unequal n or p and duplicate ids."""
    if len(summaries) == 0:
        raise ValidationError("at least one centre summary is required")
    ids = [s.centre_id for s in summaries]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate centre ids")
    ns = {int(s.n) for s in summaries}
    if len(ns) != 1:
        raise ValidationError(f"all centres must share the same n (got {sorted(ns)}); unequal sizes are not supported")
    ps = {s.p for s in summaries}
    if len(ps) != 1:
        raise ValidationError(f"all centres must share the same p (got {sorted(ps)})")
    return ns.pop(), ps.pop()


# --- blocks and partitions -------------------------------------------------


@dataclass(frozen=True)
class Block:
    """A nonempty set of centre ids."""

    members: frozenset

    def __init__(self, members: Iterable[str]):
        ms = [str(m) for m in members]
        if not ms:
            raise ValidationError("a block must have at least one member")
        if len(set(ms)) != len(ms):
            raise ValidationError("block members must be distinct")
        object.__setattr__(self, "members", frozenset(ms))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))


def merge_blocks(a: Block, b: Block) -> Block:
    """Union of two disjoint blocks."""
    overlap = a.members & b.members
    if overlap:
        raise ValidationError(f"blocks overlap on {sorted(overlap)}")
    return Block(a.members | b.members)


@dataclass(eq=False)
class Partition:
    """Disjoint blocks covering a centre set, in a canonical order.

    Blocks are ordered by the position of their first member in ``order``
    (the analysis centre order); without ``order`` ids are compared as strings.
    """

    blocks: list[Block]
    order: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        self.blocks = [b if isinstance(b, Block) else Block(b) for b in self.blocks]
        seen: set[str] = set()
        for b in self.blocks:
            if seen & b.members:
                raise ValidationError("partition blocks are not pairwise disjoint")
            seen |= b.members
        rank = {cid: i for i, cid in enumerate(self.order)}
        key = (lambda c: (rank.get(c, len(rank)), c))
        self.blocks.sort(key=lambda b: min(key(c) for c in b.members))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return {b.members for b in self.blocks} == {b.members for b in other.blocks}

    @property
    def centre_ids(self) -> set[str]:
        return set().union(*(b.members for b in self.blocks)) if self.blocks else set()

    def __len__(self) -> int:
        return len(self.blocks)

    def check_covers(self, centre_ids: Iterable[str]) -> None:
        if self.centre_ids != {str(c) for c in centre_ids}:
            raise ValidationError("partition does not cover exactly the centre set")

    def labels(self, centre_ids: Sequence[str]) -> list[int]:
        """Block index of each centre in ``centre_ids``."""
        self.check_covers(centre_ids)
        lookup = {c: i for i, b in enumerate(self.blocks) for c in b.members}
        return [lookup[str(c)] for c in centre_ids]

    def as_lists(self) -> list[list[str]]:
        rank = {cid: i for i, cid in enumerate(self.order)}
        return [sorted(b.members, key=lambda c: (rank.get(c, len(rank)), c)) for b in self.blocks]

    def to_dict(self, *, alpha: float, rounds_used: int, seed: int) -> dict:
        return {"alpha": float(alpha), "blocks": self.as_lists(), "rounds_used": int(rounds_used), "seed": int(seed)}

    @classmethod
    def from_labels(cls, centre_ids: Sequence[str], labels: Sequence) -> "Partition":
        groups: dict = {}
        for cid, lab in zip(centre_ids, labels):
            groups.setdefault(lab, []).append(str(cid))
        return cls([Block(g) for g in groups.values()], order=tuple(str(c) for c in centre_ids))


# --- aggregation -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AggregatedEstimate:
    theta: np.ndarray
    V_sum: np.ndarray
    Q_sum: np.ndarray

    @property
    def W(self) -> np.ndarray:
        """Sandwich covariance ``(sum V)^-1 (sum Q) (sum V)^-1``."""
        v_inv = spd_inverse(self.V_sum, name="aggregated V")
        w = v_inv @ self.Q_sum @ v_inv
        return 0.5 * (w + w.T)


def _weighted_mean(V_list, theta_list) -> tuple[np.ndarray, np.ndarray]:
    # deviations from a reference make the all-equal case exact
    ref = theta_list[0]
    V_sum = np.zeros_like(V_list[0])
    rhs = np.zeros_like(ref)
    for V, th in zip(V_list, theta_list):
        V_sum = V_sum + V
        rhs = rhs + V @ (th - ref)
    inv = spd_inverse(V_sum, name="sum of V")
    return ref + inv @ rhs, V_sum


def aee_aggregate(block_members: Sequence[CentreSummary]) -> AggregatedEstimate:
    """AEE estimate ``(sum V_k)^-1 sum V_k theta_k`` over a block of centres.

    Centres are processed in sorted-id order, so the result does not depend on
    the order of ``block_members``.
    """
    if len(block_members) == 0:
        raise ValidationError("cannot aggregate an empty block")
    ps = {s.p for s in block_members}
    if len(ps) != 1:
        raise ValidationError(f"dimension mismatch across centres: p in {sorted(ps)}")
    members = sorted(block_members, key=lambda s: s.centre_id)
    theta, V_sum = _weighted_mean([s.V for s in members], [s.theta for s in members])
    Q_sum = sum((s.Q for s in members), np.zeros_like(members[0].Q))
    return AggregatedEstimate(theta, V_sum, Q_sum)


def combine_aggregates(parts: Sequence[AggregatedEstimate]) -> AggregatedEstimate:
    """Aggregate already-aggregated blocks, weighting each by its summed ``V``."""
    if len(parts) == 0:
        raise ValidationError("nothing to combine")
    theta, V_sum = _weighted_mean([a.V_sum for a in parts], [a.theta for a in parts])
    Q_sum = sum((a.Q_sum for a in parts), np.zeros_like(parts[0].Q_sum))
    return AggregatedEstimate(theta, V_sum, Q_sum)


# --- JSON I/O --------------------------------------------------------------


def load_summaries(path) -> list[CentreSummary]:
    """Read summaries from a JSON array, a ``{"summaries": [...]}`` object, or JSON lines."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("summaries", [data])
    if not isinstance(data, list):
        raise ValidationError(f"{path}: expected a list of summary objects")
    return [CentreSummary.from_dict(d) for d in data]


def dump_summaries(summaries: Sequence[CentreSummary]) -> list[dict]:
    return [s.to_dict() for s in summaries]
