import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from coc.errors import ValidationError
from coc.mixture import (
    ChiSquareMixture,
    MonteCarloConfig,
    noncentral_mixture,
    quantile,
    sample,
    survival,
    weights_from_matrices,
)
from coc.numerics import psd_sqrt

from conftest import random_spd

CFG = MonteCarloConfig(draws=100_000, seed=3)


def test_single_chi2_matches_scipy():
    mix = ChiSquareMixture([1.0])
    for x in (0.5, 1.0, 3.84, 6.63):
        assert survival(mix, x, CFG) == pytest.approx(stats.chi2.sf(x, 1), abs=0.005)
    assert quantile(mix, 0.95, CFG) == pytest.approx(stats.chi2.ppf(0.95, 1), rel=0.03)


def test_equal_weights_are_chi2_k():
    mix = ChiSquareMixture([2.0, 2.0, 2.0])
    assert survival(mix, 2 * 7.81, CFG) == pytest.approx(0.05, abs=0.004)


def test_noncentral_matches_scipy():
    mix = ChiSquareMixture([1.0, 1.0], noncentralities=[2.0, 0.5])
    assert survival(mix, 6.0, CFG) == pytest.approx(stats.ncx2.sf(6.0, 2, 2.5), abs=0.005)


def test_degenerate_and_offset():
    mix = ChiSquareMixture([0.0, 0.0])
    assert mix.degenerate
    assert survival(mix, 0.0, CFG) == 1.0
    assert survival(mix, 1e-3, CFG) == 0.0
    off = ChiSquareMixture([0.0], offset=2.0)
    assert survival(off, 1.5, CFG) == 1.0 and survival(off, 2.5, CFG) == 0.0


def test_survival_monotone_and_deterministic():
    mix = ChiSquareMixture([3.0, 1.0, 0.2])
    xs = np.linspace(0.1, 20, 30)
    s = [survival(mix, x, CFG) for x in xs]
    assert all(a >= b for a, b in zip(s, s[1:]))
    assert s == [survival(mix, x, CFG) for x in xs]
    assert survival(mix, 0.0, CFG) == 1.0


def test_validation():
    with pytest.raises(ValidationError):
        ChiSquareMixture([-1.0])
    with pytest.raises(ValidationError):
        ChiSquareMixture([1.0], noncentralities=[1.0, 2.0])
    with pytest.raises(ValidationError):
        MonteCarloConfig(draws=10)
    with pytest.raises(ValidationError):
        quantile(ChiSquareMixture([1.0]), 1.0)
    with pytest.raises(ValidationError):
        weights_from_matrices(np.eye(2), np.eye(3))


def test_weights_sorted_and_zeroed(rng):
    h = np.array([[1.0, 1.0], [1.0, 1.0]])
    mix = weights_from_matrices(h, np.eye(2))
    np.testing.assert_allclose(mix.weights, [4.0, 0.0])
    assert mix.n_positive == 1


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_spectral_equality_of_weight_matrices(d, seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((d, d))
    q = random_spd(rng, d)
    r = psd_sqrt(q)
    a = np.linalg.eigvalsh(r @ h.T @ h @ r)[::-1]
    b = np.linalg.eigvalsh(h @ q @ h.T)[::-1]
    np.testing.assert_allclose(a, b, atol=1e-8 * max(1.0, a.max()))
    np.testing.assert_allclose(weights_from_matrices(h, q).weights, np.where(a > 1e-10 * a.sum(), a, 0), atol=1e-8 * a.max())


def test_noncentral_mixture_reduces_to_central(rng):
    h = rng.standard_normal((3, 3))
    q = random_spd(rng, 3)
    nc = noncentral_mixture(h, q, np.zeros(3))
    np.testing.assert_allclose(nc.weights, weights_from_matrices(h, q).weights, rtol=1e-8)
    np.testing.assert_allclose(nc.noncentralities, 0.0, atol=1e-20)
    assert nc.offset == 0.0


def test_noncentral_offset_for_null_directions():
    # H Q H' has rank 1; a shift orthogonal to its range is a constant
    h = np.array([[1.0, 0.0], [0.0, 0.0]])
    nc = noncentral_mixture(h, np.eye(2), [0.0, 2.0])
    assert nc.offset == pytest.approx(4.0)
    np.testing.assert_allclose(nc.weights, [1.0, 0.0])


def test_noncentral_matches_direct_simulation(rng):
    h = rng.standard_normal((3, 3))
    q = random_spd(rng, 3)
    shift = np.array([1.0, -0.5, 2.0])
    nc = noncentral_mixture(h, q, shift)
    z = rng.standard_normal((200_000, 3))
    direct = np.sum((z @ (h @ psd_sqrt(q)).T + shift) ** 2, axis=1)
    for x in np.quantile(direct, [0.2, 0.5, 0.9]):
        assert survival(nc, x, CFG) == pytest.approx(np.mean(direct >= x), abs=0.01)


def test_sample_shape_and_mean():
    mix = ChiSquareMixture([2.0, 0.5])
    draws = sample(mix, CFG)
    assert draws.shape == (100_000,)
    assert draws.mean() == pytest.approx(mix.mean, rel=0.02)
