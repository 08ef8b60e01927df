import numpy as np
import pytest

from netepi.geweke import GewekeSetup, batch_means_z, marginal_conditional, prior_draw, successive_conditional


def test_batch_means_z_is_small_for_equal_streams(rng):
    a = rng.normal(size=(4000, 2))
    b = rng.normal(size=(4000, 2))
    assert np.all(np.abs(batch_means_z(a, b)) < 4)
    shifted = batch_means_z(a, b + 1.0)
    assert np.all(shifted < -20)


def test_batch_means_widen_for_autocorrelated_streams(rng):
    a = rng.normal(size=(5000, 1))
    b = np.repeat(rng.normal(size=(50, 1)), 100, axis=0)
    naive = (a.mean() - b.mean()) / np.sqrt(a.var() / 5000 + b.var() / 5000)
    assert abs(batch_means_z(a, b)[0]) < abs(naive)


def test_prior_draws_respect_supports(rng):
    setup = GewekeSetup()
    for _ in range(50):
        params, mixture = prior_draw(setup, rng)
        assert setup.eta_priors.log_density("beta", params.beta) > -np.inf
        assert mixture.proportions.sum() == pytest.approx(1.0)
        assert mixture.n_members == setup.n_members


def test_marginal_conditional_shape(rng):
    out = marginal_conditional(GewekeSetup(), 20, rng)
    assert out.shape == (20, 4)
    assert np.all(np.isfinite(out))


def test_successive_conditional_moves_and_stays_finite():
    # the z-test itself needs long runs (gamma_1 mixes slowly); see the acceptance suite
    out = successive_conditional(GewekeSetup(), 200, np.random.default_rng(5))
    assert out.shape == (200, 4)
    assert np.all(np.isfinite(out))
    assert np.unique(out[:, 0]).size > 100
