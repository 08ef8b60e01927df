"""Joint-distribution ("getting it right") check of the sampler.

Marginal-conditional draws come straight from the prior and the
data-generating process.  Successive-conditional draws alternate one
sampler iteration with regenerating the complete data from the current
parameters.  If the sampler leaves the posterior invariant both schemes
sample the same joint distribution of parameters and data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ObservedData
from .epidemic import EpidemicParams, simulate_epidemic
from .mcmc import ChainConfig, ChainState, EtaPriors
from .model import Hyperpriors, MixtureState, degrees, sample_network, stick_breaking
from .observation import ObservationMask, ego_centric_mask

__all__ = ["GewekeSetup", "GewekeResult", "prior_draw", "marginal_conditional", "successive_conditional",
           "batch_means_z", "geweke_test"]

FUNCTIONALS = ("beta", "gamma_1", "alpha", "mean_degree")


@dataclass(frozen=True)
class GewekeSetup:
    n_members: int = 10
    K: int = 2
    n_sampled: int = 5
    removal_missing_prob: float = 0.2
    observe_exposure: bool = False
    observe_transmissions: bool = False
    hyperpriors: Hyperpriors = field(default_factory=lambda: Hyperpriors(5.0, 1.0, 0.0, 0.25, 20.0, 10.0))
    eta_priors: EtaPriors = field(default_factory=lambda: EtaPriors(
        beta=(0.5, 2.0), eta_E_shape=(2.0, 4.0), eta_E_scale=(0.25, 0.5),
        eta_I_shape=(2.0, 4.0), eta_I_scale=(0.5, 1.0)))

    def chain_config(self) -> ChainConfig:
        return ChainConfig(iterations=1, burn_in=0, thin=1, K=self.K, hyperpriors=self.hyperpriors,
                           eta_priors=self.eta_priors)


@dataclass
class GewekeResult:
    z: dict
    marginal_mean: dict
    successive_mean: dict

    def passed(self, bound: float = 4.0) -> bool:
        return all(abs(v) < bound for v in self.z.values())


def prior_draw(setup: GewekeSetup, rng: np.random.Generator):
    """Parameters drawn from the prior: ``(EpidemicParams, MixtureState)``."""
    pr = setup.eta_priors
    u = [rng.uniform(*getattr(pr, name)) for name in EtaPriors.names()]
    params = EpidemicParams(u[0], (u[1], u[2]), (u[3], u[4]))
    hp = setup.hyperpriors
    alpha = rng.gamma(hp.alpha_shape, 1.0 / hp.alpha_rate)
    mu = rng.normal(hp.mean_loc, np.sqrt(hp.mean_var))
    sigma2 = 1.0 / rng.gamma(hp.prec_shape, 1.0 / hp.prec_rate)
    sticks = np.ones(setup.K)
    sticks[:-1] = rng.beta(1.0, alpha, size=setup.K - 1)
    atoms = rng.normal(mu, np.sqrt(sigma2), size=setup.K)
    z = rng.choice(setup.K, size=setup.n_members, p=stick_breaking(sticks))
    return params, MixtureState(sticks, z, atoms, alpha, mu, sigma2)


def _generate_data(setup: GewekeSetup, params, mixture, rng):
    theta = mixture.atoms[mixture.assignments]
    network = sample_network(theta, rng)
    record = simulate_epidemic(network, params, None, rng)
    infected = record.infected
    mask = ego_centric_mask(setup.n_members, infected, setup.n_sampled, rng,
                            observe_exposure=setup.observe_exposure,
                            observe_transmissions=setup.observe_transmissions)
    # the index case is exposed at time 0 by construction
    obs_E = mask.obs_E.copy()
    obs_E[record.index_case] = True
    obs_R = mask.obs_R & ~(rng.random(setup.n_members) < setup.removal_missing_prob)
    mask = ObservationMask(obs_E, mask.obs_I, obs_R, mask.obs_T, mask.obs_Y, mask.sampled)
    return network, record, mask


def _functionals(params, mixture, network) -> tuple:
    return (params.beta, float(mixture.atoms[0]), mixture.concentration, float(degrees(network).mean()))


def marginal_conditional(setup: GewekeSetup, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((n_samples, len(FUNCTIONALS)))
    for m in range(n_samples):
        params, mixture = prior_draw(setup, rng)
        network, _, _ = _generate_data(setup, params, mixture, rng)
        out[m] = _functionals(params, mixture, network)
    return out


def successive_conditional(setup: GewekeSetup, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Alternate data regeneration with one sampler iteration started at the regenerated truth."""
    config = setup.chain_config()
    params, mixture = prior_draw(setup, rng)
    out = np.empty((n_samples, len(FUNCTIONALS)))
    for m in range(n_samples):
        network, record, mask = _generate_data(setup, params, mixture, rng)
        out[m] = _functionals(params, mixture, network)
        state = ChainState(ObservedData.from_complete(record, network, mask), config, rng)
        state.set_latent(record, network)
        state.set_parameters(params, mixture)
        state.step(rng)
        params, mixture = state.params, state.mixture()
    return out


def batch_means_z(a: np.ndarray, b: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Two-sample z statistics; ``b`` is autocorrelated so its variance uses batch means."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    var_a = a.var(axis=0, ddof=1) / a.shape[0]
    size = b.shape[0] // n_batches
    batches = b[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    var_b = batches.var(axis=0, ddof=1) / n_batches
    return (a.mean(axis=0) - b.mean(axis=0)) / np.sqrt(var_a + var_b)


def geweke_test(setup: GewekeSetup, n_samples: int, rng: np.random.Generator) -> GewekeResult:
    mc = marginal_conditional(setup, n_samples, rng)
    sc = successive_conditional(setup, n_samples, rng)
    z = batch_means_z(mc, sc)
    return GewekeResult(dict(zip(FUNCTIONALS, z)), dict(zip(FUNCTIONALS, mc.mean(axis=0))),
                        dict(zip(FUNCTIONALS, sc.mean(axis=0))))
