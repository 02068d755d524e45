import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coc.errors import ValidationError
from coc.experiments import (
    BETA_BASE,
    McRecord,
    SimConfig,
    ari,
    best_match_accuracy,
    line_svg,
    metrics_csv,
    run_mc,
    simulate_centres,
    summarize,
    summary_csv,
    write_outputs,
)
from coc.summaries import Partition


def _pair_count_ari(a, b):
    # brute-force oracle over all pairs
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    index = np.sum(same_a & same_b)
    m = len(pairs)
    expected = same_a.sum() * same_b.sum() / m
    top = 0.5 * (same_a.sum() + same_b.sum())
    if top == expected:
        return 1.0 if np.array_equal(same_a, same_b) else 0.0
    return (index - expected) / (top - expected)


def _exhaustive_accuracy(a, b):
    la, lb = sorted(set(a)), sorted(set(b))
    size = max(len(la), len(lb))
    la += [None] * (size - len(la))
    lb += [None] * (size - len(lb))
    best = 0
    for perm in itertools.permutations(lb):
        mapping = dict(zip(la, perm))
        best = max(best, sum(mapping[x] == y for x, y in zip(a, b)))
    return best / len(a)


def test_ari_examples():
    assert ari([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0
    assert ari([1, 1, 2, 2], [5, 6, 7, 8]) == 0.0
    assert ari([1, 1, 2, 2], ["b", "b", "a", "a"]) == 1.0


def test_accuracy_examples():
    assert best_match_accuracy([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0
    assert best_match_accuracy([1, 1, 2, 2], [2, 2, 1, 1]) == 1.0
    assert best_match_accuracy([1, 1, 2, 2], [1, 2, 1, 2]) == 0.5


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5)), min_size=2, max_size=9))
def test_metrics_match_oracles(pairs):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    assert ari(a, b) == pytest.approx(_pair_count_ari(a, b), abs=1e-12)
    assert best_match_accuracy(a, b) == pytest.approx(_exhaustive_accuracy(a, b))
    assert -1 <= ari(a, b) <= 1 and 0 <= best_match_accuracy(a, b) <= 1


def test_metrics_accept_partitions():
    ids = ["c1", "c2", "c3", "c4"]
    part = Partition([["c3", "c4"], ["c1", "c2"]], order=tuple(ids))
    assert ari([1, 1, 2, 2], part, ids) == 1.0
    assert best_match_accuracy([1, 1, 2, 2], part, ids) == 1.0
    with pytest.raises(ValidationError):
        ari([1, 1, 2], [1, 1])


def test_sim_config_defaults_and_validation():
    cfg = SimConfig()
    assert cfg.true_labels() == [1] * 5 + [2] * 4 + [3] * 9
    np.testing.assert_allclose(cfg.cluster_beta(1) - np.array(BETA_BASE), 1.2 * np.eye(8)[2])
    np.testing.assert_allclose(cfg.cluster_beta(0) - np.array(BETA_BASE), 1.2 * np.eye(8)[1])
    with pytest.raises(ValidationError):
        SimConfig(cluster_sizes=(5, 4, 8))
    with pytest.raises(ValidationError):
        SimConfig(perturbed_coords=(1, 1, 2))
    with pytest.raises(ValidationError):
        SimConfig(schemes=("bogus",))


def test_simulation_deterministic():
    cfg = SimConfig()
    a, labels = simulate_centres(cfg, 3, 800)
    b, _ = simulate_centres(cfg, 3, 800)
    assert len(a) == 18 and labels[0] == 1
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.X, y.X)
        np.testing.assert_array_equal(x.y, y.y)
    assert a[0].X.shape == (800, 8) and np.all(a[0].X[:, 0] == 1)


def test_run_mc_smoke_and_determinism(tmp_path):
    cfg = SimConfig(mc_reps=2, n_grid=(800,), schemes=("universal",), draws=20_000)
    recs = run_mc(cfg, timing=False)
    assert [(r.n, r.scheme, r.rep) for r in recs] == [(800, "universal", 0), (800, "universal", 1)]
    for r in recs:
        assert -1 <= r.ari <= 1 and 0 <= r.accuracy <= 1 and r.rounds >= 1 and not r.error
    assert metrics_csv(recs) == metrics_csv(run_mc(cfg, timing=False))
    paths = write_outputs(recs, tmp_path, {"seed": 0})
    assert (tmp_path / "metrics.csv").read_text().splitlines()[0] == "n,scheme,rep,ari,accuracy,rounds,wall_ms"
    assert (tmp_path / "summary.csv").read_text().splitlines()[0] == "n,scheme,ari_mean,ari_sd,rounds_mean,rounds_sd"
    assert paths["fig_ari"].read_text().startswith("<svg")


def test_run_mc_parallel_matches_serial():
    cfg = SimConfig(mc_reps=2, n_grid=(800,), schemes=("universal",), draws=20_000)
    assert metrics_csv(run_mc(cfg, jobs=2, timing=False)) == metrics_csv(run_mc(cfg, timing=False))


def test_summary_statistics():
    recs = [
        McRecord(800, "weighted", 0, 1.0, 1.0, 70, 0),
        McRecord(800, "weighted", 1, 0.5, 0.8, 72, 0),
        McRecord(800, "weighted", 2, float("nan"), float("nan"), 0, 0, "NumericalError: x"),
    ]
    (row,) = summarize(recs)
    assert row.ari_mean == pytest.approx(0.75) and row.ari_sd == pytest.approx(np.std([1.0, 0.5], ddof=1))
    assert row.rounds_mean == 71 and row.failures == 1 and row.exact_fraction == 0.5
    assert summary_csv([row]).splitlines()[1].startswith("800,weighted,0.75,")
    svg = line_svg([row], "rounds", "t")
    assert svg.count("<circle") == 1
