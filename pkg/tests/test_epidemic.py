import numpy as np
import pytest
from scipy import stats

from netepi.epidemic import (
    INDEX_CASE,
    NOT_INFECTED,
    EpidemicParams,
    EpidemicRecord,
    exposure_statistic,
    max_infectious,
    period_log_likelihood,
    simulate_epidemic,
    transmission_log_likelihood,
)
from netepi.model import ContactNetwork, sample_network

from conftest import small_outbreak


def brute_pressure(rec, net):
    total = 0.0
    for i in rec.infected_members:
        for j in range(rec.n_members):
            if j == i or not net.has_edge(i, j):
                continue
            ej = rec.exposure[j] if rec.infected[j] else np.inf
            total += max(min(ej, rec.removal[i]) - rec.infectious[i], 0.0)
    return total


def test_simulated_records_are_valid(rng):
    params = EpidemicParams(2.0, (8.0, 0.25), (4.0, 0.25))
    for _ in range(30):
        net = sample_network(rng.normal(-1.0, 1.0, size=25), rng)
        rec = simulate_epidemic(net, params, None, rng)
        assert rec.validate(net) == []
        assert rec.exposure[rec.index_case] == 0.0


def test_isolated_index_case_infects_nobody(rng):
    rec = simulate_epidemic(ContactNetwork.empty(4), EpidemicParams(5.0, (2, 1), (2, 1)), 2, rng)
    assert rec.n_infected == 1
    assert rec.infector[2] == INDEX_CASE
    assert np.all(rec.infector[[0, 1, 3]] == NOT_INFECTED)


def test_pair_infection_probability(rng):
    # P(contact infected) = E[1 - exp(-beta D)] with D ~ Gamma(k, s): 1 - (1 + beta s)^-k
    beta, k, s = 0.8, 3.0, 0.5
    params = EpidemicParams(beta, (2.0, 1.0), (k, s))
    net = ContactNetwork.from_edges(2, [(0, 1)])
    hits = np.array([simulate_epidemic(net, params, 0, rng).n_infected == 2 for _ in range(20000)])
    p = 1.0 - (1.0 + beta * s) ** -k
    assert abs(hits.mean() - p) < 4 * np.sqrt(p * (1 - p) / hits.size)


def test_period_durations_follow_shape_scale(rng):
    params = EpidemicParams(1.0, (4.0, 0.5), (2.0, 3.0))
    net = ContactNetwork.empty(1)
    d = np.array([[r.infectious[0] - r.exposure[0], r.removal[0] - r.infectious[0]]
                  for r in (simulate_epidemic(net, params, 0, rng) for _ in range(4000))])
    assert stats.kstest(d[:, 0], stats.gamma(4.0, scale=0.5).cdf).pvalue > 1e-3
    assert stats.kstest(d[:, 1], stats.gamma(2.0, scale=3.0).cdf).pvalue > 1e-3


def test_exposure_statistic_matches_brute_force():
    for seed in range(10):
        net, rec, _ = small_outbreak(n=10, seed=seed, min_infected=3)
        assert exposure_statistic(rec, net) == pytest.approx(brute_pressure(rec, net), rel=1e-12)


def test_exposure_statistic_hand_example():
    # 0 infectious on [1, 3]; 1 exposed at 2, infectious on [2.5, 4]; 2 never infected, contact of both
    rec = EpidemicRecord([0.0, 2.0, np.nan], [1.0, 2.5, np.nan], [3.0, 4.0, np.nan], [INDEX_CASE, 0, NOT_INFECTED])
    net = ContactNetwork.from_edges(3, [(0, 1), (0, 2), (1, 2)])
    # 0->1: min(2, 3) - 1 = 1; 0->2: 3 - 1 = 2; 1->2: 4 - 2.5 = 1.5
    assert exposure_statistic(rec, net) == pytest.approx(4.5)
    assert transmission_log_likelihood(0.5, rec, net) == pytest.approx(np.log(0.5) - 2.25)


def test_period_log_likelihood_matches_scipy(rng):
    d = rng.gamma(3.0, 0.7, size=20)
    assert period_log_likelihood(3.0, 0.7, d) == pytest.approx(stats.gamma(3.0, scale=0.7).logpdf(d).sum())
    with pytest.raises(ValueError):
        period_log_likelihood(1.0, 1.0, [1.0, -0.1])


def test_max_infectious_counts_overlaps():
    rec = EpidemicRecord([0, 1, 2, np.nan], [1, 2, 3, np.nan], [3, 4, 5, np.nan], [INDEX_CASE, 0, 1, NOT_INFECTED])
    assert max_infectious(rec) == 2
    # a removal and an onset at the same instant do not overlap
    rec = EpidemicRecord([0, 1], [1, 2], [2, 3], [INDEX_CASE, 0])
    assert max_infectious(rec) == 1


def test_validate_reports_broken_windows():
    rec = EpidemicRecord([0.0, 5.0], [1.0, 6.0], [2.0, 7.0], [INDEX_CASE, 0])
    problems = rec.validate(ContactNetwork.from_edges(2, [(0, 1)]))
    assert any("infectious period" in p for p in problems)


def test_permuted_record_keeps_tree(rng):
    net, rec, _ = small_outbreak(n=8, seed=3, min_infected=3)
    perm = rng.permutation(8)
    new = rec.permuted(perm)
    assert new.validate(net.permuted(perm)) == []
    assert exposure_statistic(new, net.permuted(perm)) == pytest.approx(exposure_statistic(rec, net))


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        EpidemicParams(0.0, (1, 1), (1, 1))
