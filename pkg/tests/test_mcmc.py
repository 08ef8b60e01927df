import math

import numpy as np
import pytest
from scipy import special, stats

from netepi import _kernels as kern
from netepi.data import ObservedData
from netepi.epidemic import (INDEX_CASE, NOT_INFECTED, EpidemicParams, EpidemicRecord, simulate_epidemic,
                             transmission_log_likelihood)
from netepi.model import ContactNetwork, Hyperpriors, network_log_density, sample_network
from netepi.mcmc import (
    ChainConfig,
    ChainState,
    EtaPriors,
    InitializationError,
    contact_probabilities,
    impute_times,
    run_chain,
    sample_transmission_sources,
    sample_truncated_gamma,
    update_assignments,
    update_gamma_mh,
    update_pi,
    update_sigma2,
)
from netepi.observation import ObservationMask, build_transmission_prior

from conftest import observed, small_outbreak


def brute_contact_probability(rec, net, a, b, theta, beta):
    """P(y_ab = 1 | rest) from the joint density of the two completions."""
    f = []
    for v in (False, True):
        y = net.with_edge(a, b, v)
        ok = all(y.has_edge(rec.infector[j], j) for j in rec.infected_members if rec.infector[j] >= 0)
        f.append(math.exp(network_log_density(y, theta) + transmission_log_likelihood(beta, rec, y)) if ok else 0.0)
    return f[1] / (f[0] + f[1])


def test_contact_conditional_matches_enumeration_on_pairs_and_triples(rng):
    worst = 0.0
    for n in (2, 3):
        for _ in range(20):
            theta = rng.normal(0.0, 1.5, size=n)
            beta = rng.uniform(0.2, 3.0)
            net = sample_network(theta + 2.0, rng)
            rec = simulate_epidemic(net, EpidemicParams(beta, (3, 0.5), (3, 0.5)), None, rng)
            obs = np.triu(rng.random((n, n)) < 0.3, 1)
            obs = obs | obs.T
            full = ObservationMask.full(n)
            mask = ObservationMask(full.obs_E, full.obs_I, full.obs_R, full.obs_T, obs, full.sampled)
            for a, b, p in zip(*contact_probabilities(rec, mask, theta, beta)):
                worst = max(worst, abs(p - brute_contact_probability(rec, net, a, b, theta, beta)))
    assert worst < 1e-10


def test_two_member_label_conditional_by_hand():
    gamma = np.array([-1.0, 0.7])
    pi = np.array([0.3, 0.7])
    y = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    mat = np.ones((2, 2), dtype=bool)
    # member 0's conditional with member 1 in cluster 1 and the dyad present
    w = pi * special.expit(gamma + gamma[1])
    p0 = w[0] / w.sum()
    for u, label in ((p0 - 1e-12, 0), (p0 + 1e-12, 1)):
        z = np.array([0, 1])
        kern.sweep_assignments(z, y, mat, gamma, np.log(pi), np.array([u, 0.5]))
        assert z[0] == label


def test_equal_atoms_give_prior_label_frequencies(rng):
    net = sample_network(np.zeros(30), rng)
    gamma = np.array([0.3, 0.3])
    pi = np.array([0.25, 0.75])
    zs = [update_assignments(np.zeros(30, int), net.adjacency, np.ones((30, 30), bool), gamma, pi, rng)
          for _ in range(300)]
    frac = np.mean(zs)
    assert abs(frac - 0.75) < 4 * math.sqrt(0.75 * 0.25 / (300 * 30))


def test_summed_out_dyads_do_not_inform_labels(rng):
    net = sample_network(np.full(10, 3.0), rng)
    none = np.zeros((10, 10), bool)
    z = [update_assignments(np.zeros(10, int), net.adjacency, none, np.array([-5.0, 5.0]), np.array([.5, .5]), rng)
         for _ in range(400)]
    assert abs(np.mean(z) - 0.5) < 0.05


def test_sigma2_and_pi_moments(rng):
    hp = Hyperpriors(prec_shape=3.0, prec_rate=2.0)
    gamma = np.array([-1.0, 0.0, 2.0])
    draws = np.array([1.0 / update_sigma2(0.5, gamma, hp, rng) for _ in range(40000)])
    shape, rate = 3.0 + 1.5, 2.0 + 0.5 * np.sum((gamma - 0.5) ** 2)
    assert abs(draws.mean() - shape / rate) < 4 * draws.std() / 200
    z = np.array([0] * 5 + [1] * 3 + [2] * 2)
    v = np.array([update_pi(z, 2.0, 3, rng)[0][0] for _ in range(40000)])
    assert abs(v.mean() - 6.0 / (6.0 + 2.0 + 5.0)) < 4 * v.std() / 200


def test_truncated_gamma_matches_scipy(rng):
    for shape, rate, lo, hi in ((3.0, 2.0, 0.5, 4.0), (40.0, 3.0, 0.1, 8.0), (2.0, 50.0, 1.0, np.inf)):
        x = np.array([sample_truncated_gamma(shape, rate, lo, hi, rng) for _ in range(3000)])
        assert x.min() > lo and x.max() < hi
        g = stats.gamma(shape, scale=1 / rate)
        cdf = lambda t: (g.sf(lo) - g.sf(t)) / (g.sf(lo) - g.sf(hi))
        assert stats.kstest(x, cdf).pvalue > 1e-3


def test_truncated_gamma_flat_case(rng):
    x = [sample_truncated_gamma(1.0, 0.0, 2.0, 3.0, rng) for _ in range(100)]
    assert 2.0 < min(x) and max(x) < 3.0
    with pytest.raises(ValueError):
        sample_truncated_gamma(2.0, 0.0, 0.0, np.inf, rng)


def test_incomplete_gamma_kernel_agrees_with_scipy():
    for s in (0.5, 1.0, 7.3, 59.0, 240.0):
        for x in (1e-3, 0.5, s, 3 * s + 10, 1e3):
            assert kern._gammainc_lower(s, x) == pytest.approx(special.gammainc(s, x), abs=1e-12)
            assert kern._gammainc_upper(s, x) == pytest.approx(special.gammaincc(s, x), abs=1e-12)


def test_pressure_inverse_round_trip():
    net, rec, _ = small_outbreak(n=14, seed=4, min_infected=6)
    inf = rec.infected
    E, I, R = rec.exposure_or_inf(), np.where(inf, rec.infectious, 0), np.where(inf, rec.removal, 0)
    Y = net.adjacency.astype(np.uint8)
    for j in rec.infected_members:
        if rec.infector[j] < 0:
            continue
        w = kern.pressure_on(j, E[j], inf, I, R, Y)
        assert kern.pressure_inverse(j, w, inf, I, R, Y) == pytest.approx(E[j], abs=1e-9)


def test_sources_stay_feasible(rng):
    net, rec, _ = small_outbreak(n=15, seed=6, min_infected=6)
    prior = build_transmission_prior("uniform", {}, rec.infected, rec.infectious, rec.removal, rec.exposure)
    for _ in range(50):
        rec = sample_transmission_sources(rec, net, prior, rng)
        assert rec.validate(net) == []


def test_source_conditional_is_uniform_over_window(rng):
    # 3 is exposed at 2.5 while 0, 1 and 2 are all infectious and in contact with it
    rec = EpidemicRecord([0.0, 0.2, 0.3, 2.5], [1.0, 1.1, 1.2, 3.0], [4.0, 4.0, 4.0, 5.0], [INDEX_CASE, 0, 0, 0])
    net = ContactNetwork.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)])
    prior = build_transmission_prior("uniform", {}, rec.infected, rec.infectious, rec.removal, rec.exposure)
    picks = [sample_transmission_sources(rec, net, prior, rng, members=[3]).infector[3] for _ in range(3000)]
    counts = np.bincount(picks, minlength=3)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_isolated_case_exposure_posterior(rng):
    # one infected member, no contacts: E = I - Gamma(eta_E) a posteriori
    rec = EpidemicRecord([np.nan, np.nan], [2.0, np.nan], [3.0, np.nan], [INDEX_CASE, NOT_INFECTED])
    ones = np.ones(2, bool)
    mask = ObservationMask(~ones, ones, ones, ones, np.ones((2, 2), bool), ones)
    params = EpidemicParams(1.0, (3.0, 0.5), (2.0, 1.0))
    draws = np.empty(100000)
    cur = EpidemicRecord([1.0, np.nan], rec.infectious, rec.removal, rec.infector)
    for t in range(draws.size):
        cur = impute_times(cur, mask, ContactNetwork.empty(2), params, 0.3, rng)
        draws[t] = cur.exposure[0]
    lag = 2.0 - draws
    batches = lag.reshape(100, -1).mean(axis=1)
    se = batches.std(ddof=1) / 10
    assert abs(lag.mean() - 1.5) < 3 * se
    assert abs(lag.var() - 0.75) < 0.03


def test_gamma_mh_prefers_denser_cluster(rng):
    net = sample_network(np.full(40, 0.5), rng)
    atoms = np.array([-3.0])
    for _ in range(400):
        atoms, _ = update_gamma_mh(np.zeros(40, int), net.adjacency, np.ones((40, 40), bool), atoms, 0.0, 4.0, 0.2, rng)
    assert abs(atoms[0] - 0.5) < 0.15


def test_same_seed_same_chain():
    net, rec, _ = small_outbreak(seed=8)
    data = observed(net, rec, n_sampled=5)
    cfg = ChainConfig(iterations=60, burn_in=10, thin=5, seed=11, eta_priors=EtaPriors(beta=(0.1, 10),
                      eta_E_shape=(1, 10), eta_E_scale=(0.05, 2), eta_I_shape=(1, 10), eta_I_scale=(0.05, 2)))
    a, b = run_chain(data, cfg), run_chain(data, cfg)
    assert [d.params for d in a.draws] == [d.params for d in b.draws]
    assert all(np.array_equal(x.mixture.assignments, y.mixture.assignments) for x, y in zip(a.draws, b.draws))
    assert len(a.draws) == cfg.n_retained() == 10


def test_invariants_hold_along_a_latent_chain(rng):
    net, rec, _ = small_outbreak(n=15, seed=9, min_infected=6)
    data = observed(net, rec, n_sampled=3, observe_removal=False)
    cfg = ChainConfig(iterations=300, burn_in=100, thin=20, debug=True,
                      eta_priors=EtaPriors().widened_to(dict(beta=1.5, eta_E_shape=4, eta_E_scale=0.25,
                                                             eta_I_shape=3, eta_I_scale=0.4)))
    out = run_chain(data, cfg, rng)
    for d in out.draws:
        assert d.record.validate() == []
        assert np.array_equal(d.record.infectious[rec.infected], rec.infectious[rec.infected])
    assert set(out.acceptance) >= {"exposure", "removal", "gamma", "beta_rescale"}


def test_observed_contacts_are_never_overwritten(rng):
    net, rec, _ = small_outbreak(n=12, seed=10, min_infected=5)
    data = observed(net, rec, n_sampled=6)
    cfg = ChainConfig(iterations=50, burn_in=0, thin=10, eta_priors=EtaPriors().widened_to(
        dict(beta=1.5, eta_E_shape=4, eta_E_scale=0.25, eta_I_shape=3, eta_I_scale=0.4)))
    state = ChainState(data, cfg, rng)
    obs = data.mask.obs_Y
    for _ in range(50):
        state.step(rng)
        assert np.array_equal(state.Y.astype(bool)[obs], net.adjacency[obs])


def test_infeasible_data_fails_at_initialisation(rng):
    # member 1 turns infectious long after everyone else was removed and has no candidate infector
    rec = EpidemicRecord([0.0, 10.0], [1.0, 11.0], [2.0, 12.0], [INDEX_CASE, 0])
    ones = np.ones(2, bool)
    mask = ObservationMask(ones, ones, ones, ~ones, np.ones((2, 2), bool), ones)
    data = ObservedData.from_complete(rec, ContactNetwork.from_edges(2, [(0, 1)]), mask)
    with pytest.raises(InitializationError):
        ChainState(data, ChainConfig(iterations=1, burn_in=0), rng)


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(transmission_prior_mode="nearest")
    with pytest.raises(ValueError):
        EtaPriors(beta=(2.0, 1.0))
