import math

import numpy as np
import pytest

from coc.clustering import (
    CocTrace,
    RoundSet,
    cyclic_coc,
    multi_round_coc,
    n_max,
    one_shot_coc,
    provisioned_rounds,
    resolve_window,
    stop_window,
)
from coc.errors import ValidationError
from coc.mixture import MonteCarloConfig
from coc.resampling import SchemeConfig, make_roundset
from coc.summaries import Partition

from conftest import make_summary

CFG = MonteCarloConfig(draws=20_000, seed=8)


def test_n_max_values():
    assert [n_max(k) for k in (2, 3, 4)] == [1, 9, 54]
    assert n_max(40) == 40 * 39 // 2 * 3**38  # exact big integer
    with pytest.raises(ValidationError):
        n_max(1)


def test_stop_window_values():
    assert stop_window(3) == 3
    assert stop_window(4) == 6
    assert stop_window(18) == 66
    # ln 2 * ln 1 = 0 is lifted to the smallest usable window
    assert stop_window(2) == 1
    with pytest.raises(ValidationError):
        stop_window(1)


def test_resolve_window():
    assert resolve_window("heuristic", 4) == 6
    assert resolve_window("exact", 3) == 10
    assert resolve_window("fixed:7", 3) == 7
    assert resolve_window(5, 3) == 5
    for bad in (0, -1, "fixed:0", "sometimes"):
        with pytest.raises(ValidationError):
            resolve_window(bad, 3)
    assert provisioned_rounds(3) == 18 and provisioned_rounds(3, 10) == 10


def _three_clusters(n=400, K_per=2, gap=1.0):
    ss = []
    for g, mu in enumerate((0.0, gap, 2 * gap)):
        for j in range(K_per):
            ss.append(make_summary(f"c{len(ss) + 1}", [mu, 0.0], n=n))
    return ss


def test_one_shot_single_centre_and_identical():
    assert one_shot_coc([make_summary("a", [0.0])], 0.05, CFG).as_lists() == [["a"]]
    ss = [make_summary(f"c{k}", [0.5]) for k in range(5)]
    assert len(one_shot_coc(ss, 0.05, CFG)) == 1


def test_one_shot_separates_clear_clusters():
    part = one_shot_coc(_three_clusters(), 0.05, CFG)
    assert part.as_lists() == [["c1", "c2"], ["c3", "c4"], ["c5", "c6"]]


def test_one_shot_tie_goes_to_smaller_block():
    # centre 3 sits exactly midway between centres 1 and 2: equal p-values
    n, d = 100, 0.25
    ss = [make_summary("c1", [-d], n=n), make_summary("c2", [d], n=n), make_summary("c3", [0.0], n=n)]
    part = one_shot_coc(ss, 0.05, CFG)
    assert part.as_lists() == [["c1", "c3"], ["c2"]]


def test_one_shot_end_to_end_simulation():
    from coc.experiments import SimConfig, ari, simulate_centres
    from coc.models import fit_glm

    cfg = SimConfig()
    datasets, labels = simulate_centres(cfg, rep=0, n=5000)
    ss = [fit_glm(d, "logistic", f"c{k + 1}")[0] for k, d in enumerate(datasets)]
    part = one_shot_coc(ss, 0.05, MonteCarloConfig(seed=1))
    assert ari(labels, part, [s.centre_id for s in ss]) >= 0.9


def _roundset(ss, R, seed=0):
    return make_roundset(ss, SchemeConfig("universal", R, seed))


def test_multi_round_single_round_equals_one_shot():
    ss = _three_clusters(gap=0.3)
    rs = _roundset(ss, 1, seed=4)
    trace = multi_round_coc(rs, 0.05, CFG)
    direct = one_shot_coc([s.with_theta(th) for s, th in zip(ss, rs.rounds[0])], 0.05, CFG)
    assert trace.partition == direct and trace.rounds_used == 1
    assert trace.stop_reason == "rounds_exhausted"


def test_duplicated_rounds_reach_fixed_point():
    ss = [make_summary(f"c{k}", [0.0, 0.0], n=500) for k in range(5)]
    base = _roundset(ss, 1, seed=9).rounds[0]
    rs = RoundSet(ss, [base.copy() for _ in range(4)])
    trace = multi_round_coc(rs, 0.05, CFG)
    assert trace.n_blocks[1] == trace.n_blocks[2] == trace.n_blocks[3]


def test_block_counts_nonincreasing_and_deterministic():
    ss = _three_clusters(n=300, gap=0.15)
    rs = _roundset(ss, 15, seed=3)
    a = multi_round_coc(rs, 0.05, CFG)
    b = multi_round_coc(rs, 0.05, CFG)
    assert all(x >= y for x, y in zip(a.n_blocks, a.n_blocks[1:]))
    assert a.n_blocks == b.n_blocks and a.partition == b.partition
    c = cyclic_coc(rs, 0.05, 4, CFG)
    assert all(x >= y for x, y in zip(c.n_blocks, c.n_blocks[1:]))
    assert c.to_csv() == cyclic_coc(rs, 0.05, 4, CFG).to_csv()


def test_cyclic_stops_on_plateau():
    ss = [make_summary(f"c{k}", [0.0], n=500) for k in range(4)]
    rs = RoundSet(ss, [np.zeros((4, 1))])
    trace = cyclic_coc(rs, 0.05, 3, CFG)
    assert trace.n_blocks == [1, 1, 1] and trace.runlen == [1, 2, 3]
    assert trace.replicate_index == [1, 1, 1] and trace.stop_reason == "plateau"


def test_cyclic_replicate_index_wraps():
    ss = _three_clusters(gap=5.0)
    rs = _roundset(ss, 3)
    trace = cyclic_coc(rs, 0.05, 5, CFG)
    assert trace.replicate_index == [1 + (r - 1) % 3 for r in range(1, trace.rounds_used + 1)]


def test_cyclic_exact_window_small_K():
    ss = [make_summary(f"c{k}", [0.1 * k], n=50) for k in range(3)]
    trace = cyclic_coc(_roundset(ss, 4), 0.05, "exact", CFG)
    assert trace.stop_reason == "plateau" and trace.runlen[-1] == n_max(3) + 1


def test_cyclic_max_rounds_and_bad_window():
    ss = [make_summary(f"c{k}", [0.0], n=50) for k in range(3)]
    rs = _roundset(ss, 2)
    trace = cyclic_coc(rs, 0.05, 50, CFG, max_rounds=5)
    assert trace.rounds_used == 5 and trace.stop_reason == "rounds_exhausted"
    with pytest.raises(ValidationError):
        cyclic_coc(rs, 0.05, 0, CFG)


def test_zero_rounds_fall_back_to_one_shot():
    ss = _three_clusters()
    trace = multi_round_coc(RoundSet(ss, []), 0.05, CFG)
    assert trace.partition == one_shot_coc(ss, 0.05, CFG)


def test_size_decreases_bounded_by_n_max():
    decreases = []
    for seed in range(100):
        ss = [make_summary(f"c{k}", [0.02 * k], n=200) for k in range(3)]
        trace = cyclic_coc(_roundset(ss, 6, seed), 0.05, "heuristic", CFG)
        decreases.append(sum(a > b for a, b in zip(trace.n_blocks, trace.n_blocks[1:])))
    assert max(decreases) <= n_max(3)


def test_roundset_json_round_trip(tmp_path):
    ss = _three_clusters()
    rs = _roundset(ss, 3)
    path = tmp_path / "rs.json"
    rs.dump(path)
    back = RoundSet.load(path)
    assert back.R == 3 and back.centre_ids == rs.centre_ids
    for a, b in zip(rs.rounds, back.rounds):
        np.testing.assert_array_equal(a, b)


def test_roundset_centre_mismatch():
    ss = [make_summary("a", [0.0]), make_summary("b", [0.0])]
    with pytest.raises(ValidationError):
        RoundSet.from_maps(ss, [{"a": [0.0], "b": [0.1]}, {"a": [0.0], "c": [0.1]}])
    with pytest.raises(ValidationError):
        RoundSet(ss, [np.zeros((3, 1))])


def test_trace_csv_header():
    trace = CocTrace(Partition([["a"]]), [1, 1], [1, 2], [1, 2], "plateau")
    assert trace.to_csv().splitlines() == ["round,replicate_index,n_blocks,runlen", "1,1,1,1", "2,2,1,2"]
