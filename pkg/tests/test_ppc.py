import numpy as np
import pytest

from netepi.epidemic import EpidemicParams
from netepi.mcmc import ChainDraw
from netepi.model import MixtureState
from netepi.ppc import long_format, ppc_degrees, ppc_epidemic_max, predictive_interval


def draws(n=8, count=5, atom=0.0, beta=1.0):
    m = MixtureState(np.array([1.0]), np.zeros(n, dtype=np.int64), np.array([atom]), 1.0, 0.0, 1.0)
    return [ChainDraw(t, EpidemicParams(beta, (2.0, 0.5), (2.0, 0.5)), m, 0.0) for t in range(count)]


def test_degree_histograms_count_every_member(rng):
    hist = ppc_degrees(draws(), rng)
    assert hist.shape == (5, 8)
    assert np.all(hist.sum(axis=1) == 8)


def test_dense_theta_gives_complete_graphs(rng):
    hist = ppc_degrees(draws(atom=40.0), rng)
    assert np.all(hist[:, 7] == 8)


def test_subsampling_is_even(rng):
    assert ppc_degrees(draws(count=10), rng, max_draws=3).shape == (3, 8)
    assert ppc_degrees(draws(count=2), rng, max_draws=3).shape == (2, 8)
    with pytest.raises(ValueError):
        ppc_degrees([], rng)


def test_epidemic_peak_bounds(rng):
    peaks = ppc_epidemic_max(draws(count=30), rng)
    assert peaks.shape == (30,)
    assert np.all((peaks >= 1) & (peaks <= 8))
    # no contacts: only the index case is ever infectious
    assert np.all(ppc_epidemic_max(draws(atom=-40.0), rng) == 1)


def test_predictive_interval_quantiles():
    lo, hi = predictive_interval(np.arange(101), 0.9)
    assert lo == pytest.approx(5.0) and hi == pytest.approx(95.0)


def test_long_format_rows():
    assert long_format("x", np.array([1, 2]), "a") == [("x", 1, "a"), ("x", 2, "a")]
