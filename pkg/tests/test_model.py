import itertools

import numpy as np
import pytest
from scipy.special import expit, logsumexp

from netepi.model import (
    ContactNetwork,
    MixtureState,
    contact_probability,
    degrees,
    expected_degree,
    expected_degrees,
    inverse_stick_breaking,
    materialize_theta,
    network_log_density,
    sample_network,
    sample_truncated_dp,
    softplus,
    stick_breaking,
)


def all_networks(n):
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        adj = np.zeros((n, n), dtype=bool)
        for (i, j), b in zip(pairs, bits):
            adj[i, j] = adj[j, i] = b
        yield ContactNetwork(adj)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_density_sums_to_one_over_all_networks(n, rng):
    nets = list(all_networks(n))
    for _ in range(7):
        theta = rng.normal(0.0, 3.0, size=n)
        total = np.exp(logsumexp([network_log_density(y, theta) for y in nets]))
        assert abs(total - 1.0) < 1e-10


def test_density_matches_product_of_bernoullis(rng):
    theta = rng.normal(size=5)
    net = sample_network(theta, rng)
    expected = 0.0
    for i, j in itertools.combinations(range(5), 2):
        p = expit(theta[i] + theta[j])
        expected += np.log(p if net.has_edge(i, j) else 1 - p)
    assert network_log_density(net, theta) == pytest.approx(expected, abs=1e-12)


def test_softplus_is_stable_at_extremes():
    x = np.array([-800.0, -40.0, 0.0, 40.0, 800.0])
    out = softplus(x)
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0
    assert out[-1] == 800.0
    assert out[2] == pytest.approx(np.log(2.0))
    assert out[1] == pytest.approx(np.exp(-40.0), rel=1e-12)


def test_extreme_theta_gives_finite_density():
    net = ContactNetwork.from_edges(3, [(0, 1)])
    theta = [400.0, 400.0, -800.0]
    assert network_log_density(net, theta) == pytest.approx(0.0, abs=1e-12)
    assert network_log_density(ContactNetwork.empty(3), theta) == -800.0


def test_network_rejects_loops_and_asymmetry():
    with pytest.raises(ValueError):
        ContactNetwork(np.eye(3, dtype=bool))
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = True
    with pytest.raises(ValueError):
        ContactNetwork(adj)


def test_network_is_immutable():
    net = ContactNetwork.from_edges(3, [(0, 2)])
    with pytest.raises(ValueError):
        net.adjacency[0, 1] = True
    other = net.with_edge(0, 1, True)
    assert not net.has_edge(0, 1) and other.has_edge(0, 1)


def test_theta_length_must_match():
    with pytest.raises(ValueError):
        network_log_density(ContactNetwork.empty(3), [0.0, 0.0])


def test_expected_degree_agrees_with_sampling(rng):
    theta = np.array([-2.0, -1.0, 0.0, 0.5, 1.0])
    mean = np.mean([degrees(sample_network(theta, rng)) for _ in range(20000)], axis=0)
    exact = expected_degrees(theta)
    assert np.all(np.abs(mean - exact) < 0.03)
    assert expected_degree(3, theta) == pytest.approx(exact[3])
    assert contact_probability(0.2, -0.2) == pytest.approx(0.5)


def test_equal_theta_gives_equal_expected_degrees():
    ed = expected_degrees(np.zeros(6))
    assert np.allclose(ed, 2.5)


def test_stick_breaking_round_trip(rng):
    for k in (1, 2, 5, 30):
        v = np.append(rng.uniform(0.01, 1.0, size=k - 1), 1.0)
        pi = stick_breaking(v)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(stick_breaking(inverse_stick_breaking(pi)), pi, rtol=1e-9, atol=1e-15)
        assert np.allclose(inverse_stick_breaking(pi)[:5], v[:5], rtol=1e-9)


def test_stick_breaking_needs_unit_last_stick():
    with pytest.raises(ValueError):
        stick_breaking([0.5, 0.5])


def test_truncated_dp_draw_is_a_distribution(rng):
    atoms, pi = sample_truncated_dp(5.0, -5.0, 25.0, 50, rng)
    assert atoms.shape == pi.shape == (50,)
    assert pi.min() >= 0 and pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_truncated_dp_first_stick_mean(rng):
    # E[pi_1] = E[V_1] = 1 / (1 + alpha)
    draws = np.array([sample_truncated_dp(3.0, 0.0, 1.0, 4, rng)[1][0] for _ in range(20000)])
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - 0.25) < 4 * se


def test_materialize_theta_maps_labels():
    m = MixtureState(np.array([0.5, 1.0]), np.array([1, 0, 1]), np.array([-1.0, 2.0]), 1.0, 0.0, 1.0)
    assert np.array_equal(materialize_theta(m).theta, [2.0, -1.0, 2.0])
    bad = MixtureState(np.array([0.5, 1.0]), np.array([2, 0]), np.array([-1.0, 2.0]), 1.0, 0.0, 1.0)
    with pytest.raises(IndexError):
        materialize_theta(bad)
