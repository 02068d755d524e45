"""Monte Carlo harness: simulated logistic centres, clustering metrics and outputs.

A replication draws K centres in three true clusters, fits a logistic model per
centre, builds a round set for each resampling scheme, runs the cyclic CoC
algorithm and scores the partition against the truth.  Datasets depend only on
``(seed, n, rep)``, so every scheme sees the same data.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import NullLawCache, cyclic_coc
from .errors import CocError, ValidationError
from .mixture import DEFAULT_DRAWS, MonteCarloConfig
from .models import Dataset, GlmFitter
from .resampling import SCHEMES, SchemeConfig, make_roundset
from .rng import seed_sequence, stream
from .summaries import Partition

BETA_BASE = (-0.70, 0.45, -0.35, 0.25, 0.10, -0.20, 0.55, -0.15)
PROFILES = {"desk": 200, "full": 5000}


@dataclass(frozen=True)
class SimConfig:
    K: int = 18
    cluster_sizes: tuple = (5, 4, 9)
    n_grid: tuple = (800, 2000, 5000)
    beta_base: tuple = BETA_BASE
    perturbation: float = 1.2
    perturbed_coords: tuple = (1, 2, 3)  # zero-based: e2, e3, e4
    alpha: float = 0.05
    mc_reps: int = PROFILES["desk"]
    schemes: tuple = ("weighted",)
    rounds: int = 40
    window: object = "heuristic"
    draws: int = DEFAULT_DRAWS
    seed: int = 0

    def __post_init__(self):
        if sum(self.cluster_sizes) != self.K or any(s < 1 for s in self.cluster_sizes):
            raise ValidationError(f"cluster sizes {self.cluster_sizes} must be positive and sum to K={self.K}")
        if len(self.perturbed_coords) != len(self.cluster_sizes):
            raise ValidationError("need one perturbed coordinate per cluster")
        if len(set(self.perturbed_coords)) != len(self.perturbed_coords):
            raise ValidationError("perturbed coordinates must be distinct")
        if any(not 0 <= c < len(self.beta_base) for c in self.perturbed_coords):
            raise ValidationError("perturbed coordinate outside the parameter vector")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.mc_reps < 1:
            raise ValidationError("mc_reps must be positive")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValidationError(f"unknown scheme {s!r}")
        if any(int(n) <= len(self.beta_base) for n in self.n_grid):
            raise ValidationError("every n must exceed the number of parameters")

    @property
    def p(self) -> int:
        return len(self.beta_base)

    def cluster_beta(self, g: int) -> np.ndarray:
        """Coefficients of cluster ``g`` (zero-based)."""
        beta = np.array(self.beta_base, dtype=float)
        beta[self.perturbed_coords[g]] += self.perturbation
        return beta

    def true_labels(self) -> list[int]:
        return [g + 1 for g, size in enumerate(self.cluster_sizes) for _ in range(size)]


def centre_ids(K: int) -> list[str]:
    return [f"c{k + 1}" for k in range(K)]


def simulate_centres(cfg: SimConfig, rep: int, n: int | None = None) -> tuple[list[Dataset], list[int]]:
    """Datasets for one replication and the 1-based true cluster labels."""
    n = int(cfg.n_grid[0] if n is None else n)
    labels = cfg.true_labels()
    out = []
    for k, lab in enumerate(labels):
        g = stream(cfg.seed, "simulate", n, int(rep), k)
        X = np.column_stack([np.ones(n), g.standard_normal((n, cfg.p - 1))])
        prob = 0.5 * (1.0 + np.tanh(0.5 * (X @ cfg.cluster_beta(lab - 1))))
        y = (g.random(n) < prob).astype(float)
        out.append(Dataset(X, y))
    return out, labels


# --- metrics ---------------------------------------------------------------


def _labels_of(estimate, ids: Sequence[str] | None, K: int) -> list:
    if isinstance(estimate, Partition):
        return estimate.labels(list(ids) if ids is not None else centre_ids(K))
    lab = list(estimate)
    if len(lab) != K:
        raise ValidationError(f"estimate labels cover {len(lab)} centres, truth covers {K}")
    return lab


def _contingency(a: Sequence, b: Sequence) -> np.ndarray:
    _, ia = np.unique(np.asarray(a, dtype=object).astype(str), return_inverse=True)
    _, ib = np.unique(np.asarray(b, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _comb2(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * (x - 1) / 2.0))


def ari(truth: Sequence, estimate, ids: Sequence[str] | None = None) -> float:
    """Adjusted Rand index from the contingency table.

    When both partitions are trivial in the same way (the chance correction is
    0/0) the index is 1 for identical partitions and 0 otherwise.
    """
    truth = list(truth)
    est = _labels_of(estimate, ids, len(truth))
    table = _contingency(truth, est)
    n = len(truth)
    index = _comb2(table)
    a = _comb2(table.sum(axis=1))
    b = _comb2(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = a * b / total if total else 0.0
    max_index = 0.5 * (a + b)
    if max_index == expected:
        return 1.0 if index == a == b else 0.0
    return (index - expected) / (max_index - expected)


def best_match_accuracy(truth: Sequence, estimate, ids: Sequence[str] | None = None) -> float:
    """Largest fraction of centres labelled correctly over bijections between labels."""
    truth = list(truth)
    est = _labels_of(estimate, ids, len(truth))
    table = _contingency(truth, est)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / len(truth)


# --- replication loop ------------------------------------------------------


@dataclass
class McRecord:
    n: int
    scheme: str
    rep: int
    ari: float
    accuracy: float
    rounds: int
    wall_ms: int
    error: str = ""

    @property
    def exact(self) -> bool:
        return not self.error and self.ari == 1.0


def _scheme_seed(cfg: SimConfig, n: int, rep: int) -> int:
    return int(seed_sequence(cfg.seed, "resample", n, rep).generate_state(1, np.uint64)[0])


def run_replication(cfg: SimConfig, n: int, rep: int, timing: bool = True) -> list[McRecord]:
    """All schemes on one simulated dataset."""
    datasets, labels = simulate_centres(cfg, rep, n)
    ids = centre_ids(cfg.K)
    fitter = GlmFitter("logistic")
    # one Monte Carlo bank for every replication: common random numbers across cells
    mc = MonteCarloConfig(draws=cfg.draws, seed=cfg.seed, label="coc")
    out = []
    for scheme in cfg.schemes:
        t0 = time.perf_counter()
        try:
            rs = make_roundset(datasets, SchemeConfig(scheme, cfg.rounds, _scheme_seed(cfg, n, rep)), fitter, ids)
            trace = cyclic_coc(rs, cfg.alpha, cfg.window, mc, NullLawCache(mc))
            est = trace.partition.labels(ids)
            rec = McRecord(n, scheme, rep, ari(labels, est), best_match_accuracy(labels, est), trace.rounds_used, 0)
        except CocError as exc:
            rec = McRecord(n, scheme, rep, math.nan, math.nan, 0, 0, f"{type(exc).__name__}: {exc}")
        rec.wall_ms = int(round(1000 * (time.perf_counter() - t0))) if timing else 0
        out.append(rec)
    return out


def _task(args):
    cfg, n, rep, timing = args
    return run_replication(cfg, n, rep, timing)


def run_mc(cfg: SimConfig, jobs: int = 1, timing: bool = True, progress=None) -> list[McRecord]:
    """Every ``(n, rep)`` cell; records are sorted by ``(n, scheme, rep)`` whatever the schedule."""
    tasks = [(cfg, int(n), rep, timing) for n in cfg.n_grid for rep in range(cfg.mc_reps)]
    records: list[McRecord] = []
    if jobs <= 1:
        for t in tasks:
            records.extend(_task(t))
            if progress:
                progress(len(records))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for recs in pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))):
                records.extend(recs)
                if progress:
                    progress(len(records))
    order = {s: i for i, s in enumerate(cfg.schemes)}
    records.sort(key=lambda r: (r.n, order[r.scheme], r.rep))
    return records


@dataclass
class SummaryRow:
    n: int
    scheme: str
    ari_mean: float
    ari_sd: float
    rounds_mean: float
    rounds_sd: float
    accuracy_mean: float = field(default=math.nan, repr=False)
    exact_fraction: float = field(default=math.nan, repr=False)
    failures: int = field(default=0, repr=False)


def _mean_sd(x: list[float]) -> tuple[float, float]:
    if not x:
        return math.nan, math.nan
    arr = np.asarray(x, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def summarize(records: Sequence[McRecord]) -> list[SummaryRow]:
    """Mean and sample sd (ddof=1) of ARI and rounds per ``(n, scheme)``; failed records are excluded."""
    cells: dict = {}
    for r in records:
        cells.setdefault((r.n, r.scheme), []).append(r)
    rows = []
    for (n, scheme), recs in cells.items():
        ok = [r for r in recs if not r.error]
        am, asd = _mean_sd([r.ari for r in ok])
        rm, rsd = _mean_sd([float(r.rounds) for r in ok])
        acc = float(np.mean([r.accuracy for r in ok])) if ok else math.nan
        exact = float(np.mean([r.exact for r in ok])) if ok else math.nan
        rows.append(SummaryRow(n, scheme, am, asd, rm, rsd, acc, exact, len(recs) - len(ok)))
    return rows


# --- outputs ---------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(round(x, 12))
    return str(x)


def metrics_csv(records: Sequence[McRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "scheme", "rep", "ari", "accuracy", "rounds", "wall_ms"])
    for r in records:
        w.writerow([r.n, r.scheme, r.rep, _fmt(r.ari), _fmt(r.accuracy), r.rounds, r.wall_ms])
    return buf.getvalue()


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "scheme", "ari_mean", "ari_sd", "rounds_mean", "rounds_sd"])
    for r in rows:
        w.writerow([r.n, r.scheme, _fmt(r.ari_mean), _fmt(r.ari_sd), _fmt(r.rounds_mean), _fmt(r.rounds_sd)])
    return buf.getvalue()


_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def line_svg(rows: Sequence[SummaryRow], metric: str, title: str, width: int = 480, height: int = 320) -> str:
    """Mean +/- sd of ``metric`` ("ari" or "rounds") against n, one line per scheme."""
    ns = sorted({r.n for r in rows})
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    pts = {(r.n, r.scheme): (getattr(r, f"{metric}_mean"), getattr(r, f"{metric}_sd")) for r in rows}
    vals = [m + s * sgn for m, s in pts.values() if not math.isnan(m) for sgn in (-1, 1)]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    left, right, top, bottom = 60, 20, 30, 40
    pw, ph = width - left - right, height - top - bottom

    def xpos(i):
        return left + (pw * (i + 0.5) / len(ns) if ns else 0)

    def ypos(v):
        return top + ph * (1 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        v = lo + frac * (hi - lo)
        parts.append(f'<text x="{left - 6}" y="{ypos(v) + 4:.1f}" text-anchor="end" font-size="10">{v:.3g}</text>')
    for i, n in enumerate(ns):
        parts.append(f'<text x="{xpos(i):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="10">n={n}</text>')
    for j, scheme in enumerate(schemes):
        colour = _COLOURS[j % len(_COLOURS)]
        coords = []
        for i, n in enumerate(ns):
            m, s = pts.get((n, scheme), (math.nan, math.nan))
            if math.isnan(m):
                continue
            x = xpos(i) + 6 * (j - (len(schemes) - 1) / 2)
            coords.append(f"{x:.1f},{ypos(m):.1f}")
            if not math.isnan(s):
                parts.append(
                    f'<line x1="{x:.1f}" y1="{ypos(m - s):.1f}" x2="{x:.1f}" y2="{ypos(m + s):.1f}" stroke="{colour}"/>'
                )
            parts.append(f'<circle cx="{x:.1f}" cy="{ypos(m):.1f}" r="3" fill="{colour}"/>')
        if coords:
            parts.append(f'<polyline points="{" ".join(coords)}" fill="none" stroke="{colour}"/>')
        parts.append(
            f'<text x="{left + 8}" y="{top + 12 + 14 * j}" font-size="11" fill="{colour}">{scheme}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_outputs(records: Sequence[McRecord], out_dir, config: dict | None = None) -> dict:
    """Write metrics.csv, summary.csv, fig_ari.svg, fig_rounds.svg and (given ``config``) config.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(records)
    paths = {
        "metrics": out / "metrics.csv",
        "summary": out / "summary.csv",
        "fig_ari": out / "fig_ari.svg",
        "fig_rounds": out / "fig_rounds.svg",
    }
    paths["metrics"].write_text(metrics_csv(records))
    paths["summary"].write_text(summary_csv(rows))
    paths["fig_ari"].write_text(line_svg(rows, "ari", "ARI (mean ± sd)"))
    paths["fig_rounds"].write_text(line_svg(rows, "rounds", "Rounds to plateau (mean ± sd)"))
    if config is not None:
        paths["config"] = out / "config.json"
        paths["config"].write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return paths


def config_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
