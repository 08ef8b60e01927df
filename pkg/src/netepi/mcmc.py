"""Posterior sampler for the semiparametric network SEIR model.

One iteration cycles, in this order: latent times, transmission sources,
unobserved contacts, cluster atoms, cluster labels, degree parameters,
epidemic parameters, and the DP hyperparameters (alpha, sticks, mu, sigma2).

Gamma distributions in the conjugate hyperparameter updates use the
shape-rate convention; exposed and infectious periods use shape-scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, gammainc, gammaincc, gammainccinv, gammaincinv, gammaln

from . import _kernels as kern
from .data import ObservedData
from .epidemic import INDEX_CASE, UNKNOWN_INFECTOR, EpidemicParams, EpidemicRecord
from .model import ContactNetwork, Hyperpriors, MixtureState, softplus, stick_breaking
from .observation import ObservationMask, TransmissionPrior, build_transmission_prior, validate_mask

__all__ = [
    "EtaPriors",
    "ProposalScales",
    "ChainConfig",
    "ChainDraw",
    "ChainOutput",
    "ChainState",
    "InitializationError",
    "AugmentationError",
    "update_alpha",
    "update_mu",
    "update_sigma2",
    "update_pi",
    "update_assignments",
    "update_gamma_mh",
    "sample_truncated_gamma",
    "update_eta",
    "contact_probabilities",
    "impute_contacts",
    "sample_transmission_sources",
    "impute_times",
    "run_chain",
]


class InitializationError(RuntimeError):
    """No feasible starting transmission tree exists for the data."""


class AugmentationError(RuntimeError):
    """The augmented state became inconsistent (e.g. a member has no possible infector)."""


@dataclass(frozen=True)
class EtaPriors:
    """Uniform prior supports ``(low, high)`` of the epidemic parameters.

    ``high`` may be ``inf``, which gives a flat prior on ``(low, inf)``.
    """

    beta: tuple = (0.1, 8.0)
    eta_E_shape: tuple = (4.0, 8.0)
    eta_E_scale: tuple = (0.75, 3.0)
    eta_I_shape: tuple = (1.5, 8.0)
    eta_I_scale: tuple = (2.5, 7.5)

    def __post_init__(self):
        for name in self.names():
            lo, hi = (float(v) for v in getattr(self, name))
            if not (0 <= lo < hi):
                raise ValueError(f"invalid prior support for {name}: ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))

    @staticmethod
    def names():
        return ("beta", "eta_E_shape", "eta_E_scale", "eta_I_shape", "eta_I_scale")

    def start(self, name: str) -> float:
        """Starting value: the prior mean when it exists, else a point inside the support."""
        lo, hi = getattr(self, name)
        if math.isfinite(hi):
            return 0.5 * (lo + hi)
        return max(2.0 * lo, 1.0)

    def log_density(self, name: str, value: float) -> float:
        lo, hi = getattr(self, name)
        if not lo < value < hi:
            return -math.inf
        return -math.log(hi - lo) if math.isfinite(hi) else 0.0

    def widened_to(self, truth: dict) -> "EtaPriors":
        """Supports stretched to contain ``truth[name]`` with a factor-2 margin."""
        out = {}
        for name in self.names():
            lo, hi = getattr(self, name)
            if name in truth:
                lo = min(lo, truth[name] / 2.0)
                hi = max(hi, truth[name] * 2.0)
            out[name] = (lo, hi)
        return EtaPriors(**out)


@dataclass(frozen=True)
class ProposalScales:
    gamma: float = 0.1
    eta: float = 0.1
    times: float = 0.1
    rescale: float = 0.1  # log-scale step of the joint beta / exposure move

    def __post_init__(self):
        if min(self.gamma, self.eta, self.times, self.rescale) <= 0:
            raise ValueError("proposal scales must be positive")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 20000
    burn_in: int = 2000
    thin: int = 10
    K: int = 3
    hyperpriors: Hyperpriors = field(default_factory=Hyperpriors)
    eta_priors: EtaPriors = field(default_factory=EtaPriors)
    proposal_scales: ProposalScales = field(default_factory=ProposalScales)
    seed: int = 0
    transmission_prior_mode: str = "uniform"
    strict: bool = True
    store_latent: bool = True
    debug: bool = False
    collapse_beta: bool = True
    adapt: bool = True  # tune proposal scales during burn-in only

    def __post_init__(self):
        if self.iterations < 0 or self.thin < 1 or self.K < 1 or self.burn_in < 0:
            raise ValueError("need iterations >= 0, burn_in >= 0, thin >= 1 and K >= 1")
        if self.iterations > 0 and not self.burn_in < self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.transmission_prior_mode not in ("doctor", "uniform"):
            raise ValueError("transmission_prior_mode must be 'doctor' or 'uniform'")

    def n_retained(self) -> int:
        if self.iterations == 0:
            return 0
        return self.iterations // self.thin - self.burn_in // self.thin


@dataclass
class ChainDraw:
    iteration: int
    params: EpidemicParams
    mixture: MixtureState
    log_posterior: float
    record: EpidemicRecord | None = None
    contacts: np.ndarray | None = None  # (E, 2) 0-based edges among materialised dyads

    @property
    def theta(self) -> np.ndarray:
        return self.mixture.atoms[self.mixture.assignments]


@dataclass
class ChainOutput:
    draws: list
    acceptance: dict
    diagnostics: list
    iterations: int
    wall_clock: float = 0.0

    def trace(self, name: str) -> np.ndarray:
        """Scalar trace by name: ``beta``, ``eta_E_shape`` ... ``alpha``, ``mu``, ``sigma2``, ``gamma_<k>`` (1-based)."""
        if name.startswith("gamma_"):
            k = int(name.split("_")[1]) - 1
            return np.array([d.mixture.atoms[k] for d in self.draws])
        getters = {
            "beta": lambda d: d.params.beta,
            "eta_E_shape": lambda d: d.params.eta_E[0],
            "eta_E_scale": lambda d: d.params.eta_E[1],
            "eta_I_shape": lambda d: d.params.eta_I[0],
            "eta_I_scale": lambda d: d.params.eta_I[1],
            "alpha": lambda d: d.mixture.concentration,
            "mu": lambda d: d.mixture.base_mean,
            "sigma2": lambda d: d.mixture.base_var,
            "log_posterior": lambda d: d.log_posterior,
        }
        return np.array([getters[name](d) for d in self.draws], dtype=float)


# ---------------------------------------------------------------------------
# Conjugate hyperparameter updates
# ---------------------------------------------------------------------------

def update_alpha(pi, hp: Hyperpriors, rng: np.random.Generator) -> float:
    """alpha | pi ~ Gamma(A1 + K - 1, rate = B1 - log pi_K)."""
    pi = np.asarray(pi, dtype=float)
    if not pi[-1] > 0:
        raise FloatingPointError("last mixing proportion is zero; sticks are degenerate")
    shape = hp.alpha_shape + pi.shape[0] - 1
    rate = hp.alpha_rate - math.log(pi[-1])
    return float(rng.gamma(shape, 1.0 / rate))


def update_mu(sigma2: float, gamma, hp: Hyperpriors, rng: np.random.Generator) -> float:
    gamma = np.asarray(gamma, dtype=float)
    prec = 1.0 / hp.mean_var + gamma.shape[0] / sigma2
    mean = (hp.mean_loc / hp.mean_var + gamma.sum() / sigma2) / prec
    return float(rng.normal(mean, math.sqrt(1.0 / prec)))


def update_sigma2(mu: float, gamma, hp: Hyperpriors, rng: np.random.Generator) -> float:
    """Draw the precision from its Gamma conditional and return its reciprocal."""
    gamma = np.asarray(gamma, dtype=float)
    shape = hp.prec_shape + gamma.shape[0] / 2.0
    rate = hp.prec_rate + 0.5 * np.sum((gamma - mu) ** 2)
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def update_pi(assignments, alpha: float, k_max: int, rng: np.random.Generator):
    """Sticks ``V_k ~ Beta(1 + N_k, alpha + sum_{j>k} N_j)`` for ``k < K``, ``V_K = 1``."""
    counts = np.bincount(np.asarray(assignments, dtype=np.int64), minlength=k_max).astype(float)
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])
    sticks = np.ones(k_max)
    if k_max > 1:
        sticks[:-1] = rng.beta(1.0 + counts[:-1], alpha + tail[:-1])
        # keep pi_K > 0 in floating point
        sticks[:-1] = np.clip(sticks[:-1], np.finfo(float).tiny, np.nextafter(1.0, 0.0))
    return sticks, stick_breaking(sticks)


# ---------------------------------------------------------------------------
# Population-model updates
# ---------------------------------------------------------------------------

def _as_u8(y) -> np.ndarray:
    if isinstance(y, ContactNetwork):
        y = y.adjacency
    return np.ascontiguousarray(y, dtype=np.uint8)


def update_assignments(assignments, contacts, materialized, atoms, proportions,
                       rng: np.random.Generator) -> np.ndarray:
    """One sequential Gibbs sweep over the cluster labels of all members.

    Only dyads flagged in ``materialized`` enter the likelihood; the rest
    are summed out.
    """
    z = np.array(assignments, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(proportions, dtype=float))
    u = rng.random(z.shape[0])
    kern.sweep_assignments(z, _as_u8(contacts), np.ascontiguousarray(materialized, dtype=np.bool_),
                           np.asarray(atoms, dtype=float), log_pi, u)
    return z


def _gamma_loglik(atoms, S, D) -> float:
    g = atoms[:, None] + atoms[None, :]
    return 0.5 * float(np.sum(g * S - D * softplus(g)))


def update_gamma_mh(assignments, contacts, materialized, atoms, mu: float, sigma2: float,
                    proposal_scale: float, rng: np.random.Generator):
    """Gaussian random-walk MH on each atom; returns ``(atoms, n_accepted)``."""
    atoms = np.array(atoms, dtype=float)
    k_max = atoms.shape[0]
    S, D = kern.cluster_dyad_counts(np.asarray(assignments, dtype=np.int64), _as_u8(contacts),
                                    np.ascontiguousarray(materialized, dtype=np.bool_), k_max)
    steps = rng.normal(0.0, proposal_scale, size=k_max)
    log_u = np.log(rng.random(k_max))
    accepted = 0
    current = _gamma_loglik(atoms, S, D)
    for k in range(k_max):
        prop = atoms.copy()
        prop[k] += steps[k]
        new = _gamma_loglik(prop, S, D)
        log_ratio = new - current - ((prop[k] - mu) ** 2 - (atoms[k] - mu) ** 2) / (2.0 * sigma2)
        if log_u[k] < log_ratio:
            atoms = prop
            current = new
            accepted += 1
    return atoms, accepted


# ---------------------------------------------------------------------------
# Epidemic-parameter updates
# ---------------------------------------------------------------------------

def sample_truncated_gamma(shape: float, rate: float, low: float, high: float,
                           rng: np.random.Generator) -> float:
    """Draw from Gamma(shape, rate) restricted to ``(low, high)`` by inverting the CDF.

    ``rate == 0`` with ``shape == 1`` is the flat density and gives a uniform draw.
    """
    u = rng.random()
    if rate <= 0.0:
        if shape == 1.0 and math.isfinite(high):
            return low + u * (high - low)
        raise ValueError("improper conditional: zero rate")
    xl, xh = rate * low, rate * high
    lower = gammainc(shape, xl)
    if lower < 0.5:
        hi_cdf = gammainc(shape, xh)
        if hi_cdf > lower:
            return float(gammaincinv(shape, lower + u * (hi_cdf - lower)) / rate)
    else:
        sl, sh = gammaincc(shape, xl), gammaincc(shape, xh)
        if sl > sh:
            return float(gammainccinv(shape, sh + u * (sl - sh)) / rate)
    # interval carries no representable mass: invert on a grid of the log-density
    top = high if math.isfinite(high) else max(low, (shape - 1.0) / rate) + 50.0 * math.sqrt(shape) / rate
    grid = np.linspace(low, top, 4097)[1:-1]
    logd = (shape - 1.0) * np.log(grid) - rate * grid
    w = np.exp(logd - logd.max())
    cdf = np.cumsum(w)
    return float(grid[np.searchsorted(cdf, u * cdf[-1])])


def _period_stats(durations) -> tuple:
    d = np.asarray(durations, dtype=float)
    return d.size, float(d.sum()), float(np.log(d).sum())


def _period_loglik(shape, scale, stats) -> float:
    n, total, log_total = stats
    return (shape - 1.0) * log_total - total / scale - n * (shape * math.log(scale) + math.lgamma(shape))


def _mh_period(shape, scale, stats, priors: EtaPriors, prefix: str, step: float, rng):
    """Log-scale random walks on shape, on scale, and on both with their product held fixed."""
    accepted = [0, 0, 0]
    cur = _period_loglik(shape, scale, stats)
    eps = rng.normal(0.0, step, size=3)
    log_u = np.log(rng.random(3))
    prop = shape * math.exp(eps[0])
    if priors.log_density(prefix + "_shape", prop) > -math.inf:
        new = _period_loglik(prop, scale, stats)
        if log_u[0] < new - cur + eps[0]:
            shape, cur = prop, new
            accepted[0] = 1
    prop = scale * math.exp(eps[1])
    if priors.log_density(prefix + "_scale", prop) > -math.inf:
        new = _period_loglik(shape, prop, stats)
        if log_u[1] < new - cur + eps[1]:
            scale, cur = prop, new
            accepted[1] = 1
    # the mean-preserving move has unit Jacobian on the log scale
    k, s = shape * math.exp(eps[2]), scale * math.exp(-eps[2])
    if priors.log_density(prefix + "_shape", k) > -math.inf and priors.log_density(prefix + "_scale", s) > -math.inf:
        new = _period_loglik(k, s, stats)
        if log_u[2] < new - cur:
            shape, scale = k, s
            accepted[2] = 1
    return shape, scale, accepted


def _eta_step(params: EpidemicParams, n_infected: int, pressure: float, exposed_stats, infectious_stats,
              priors: EtaPriors, step, rng):
    if n_infected > 1 and pressure <= 0.0:
        raise AugmentationError("zero infectious pressure with more than one infection")
    beta = sample_truncated_gamma(float(n_infected), pressure, *priors.beta, rng)
    step_E, step_I = (step, step) if np.isscalar(step) else step
    kE, sE, accE = _mh_period(*params.eta_E, exposed_stats, priors, "eta_E", step_E, rng)
    kI, sI, accI = _mh_period(*params.eta_I, infectious_stats, priors, "eta_I", step_I, rng)
    return EpidemicParams(beta, (kE, sE), (kI, sI)), accE + accI


def update_eta(record: EpidemicRecord, network: ContactNetwork, params: EpidemicParams,
               priors: EtaPriors, proposal_scale: float, rng: np.random.Generator) -> EpidemicParams:
    """Gibbs draw of beta from its truncated Gamma(M, a) conditional, then MH on the period parameters."""
    inf = record.infected
    e = record.exposure_or_inf()
    i_ = np.where(inf, record.infectious, 0.0)
    r = np.where(inf, record.removal, 0.0)
    a = kern.total_pressure(inf, e, i_, r, _as_u8(network))
    new, _ = _eta_step(params, int(inf.sum()), a, _period_stats(i_[inf] - e[inf]),
                       _period_stats(r[inf] - i_[inf]), priors, proposal_scale, rng)
    return new


# ---------------------------------------------------------------------------
# Data augmentation
# ---------------------------------------------------------------------------

def _dyad_logits(ii, jj, theta, beta, E, I, R):
    """Log-odds of a contact on each listed dyad given the epidemic.

    Pressure in both directions counts; ``E`` is +inf and ``I = R = 0`` for
    never-infected members, which makes their outgoing pressure vanish.
    """
    p_ij = np.maximum(np.minimum(E[jj], R[ii]) - I[ii], 0.0)
    p_ji = np.maximum(np.minimum(E[ii], R[jj]) - I[jj], 0.0)
    return theta[ii] + theta[jj] - beta * (p_ij + p_ji)


def _state_times(record: EpidemicRecord):
    inf = record.infected
    return (np.where(inf, record.exposure, np.inf), np.where(inf, record.infectious, 0.0),
            np.where(inf, record.removal, 0.0))


def contact_probabilities(record: EpidemicRecord, mask: ObservationMask, theta, beta: float):
    """Full-conditional contact probabilities of the imputed dyads.

    Returns ``(i, j, p)`` over unobserved upper-triangle dyads with at least
    one infected endpoint.  Dyads carrying a transmission have ``p = 1``.
    """
    inf = record.infected
    ii, jj = np.triu_indices(record.n_members, 1)
    keep = ~mask.obs_Y[ii, jj] & (inf[ii] | inf[jj])
    ii, jj = ii[keep], jj[keep]
    E, I, R = _state_times(record)
    p = expit(_dyad_logits(ii, jj, np.asarray(theta, dtype=float), beta, E, I, R))
    T = record.infector
    p[(T[jj] == ii) | (T[ii] == jj)] = 1.0
    return ii, jj, p


def impute_contacts(record: EpidemicRecord, network: ContactNetwork, mask: ObservationMask, theta,
                    beta: float, rng: np.random.Generator) -> ContactNetwork:
    """Gibbs draw of every unobserved dyad with at least one infected endpoint.

    Unobserved dyads between two never-infected members are left untouched
    (they are summed out).
    """
    ii, jj, p = contact_probabilities(record, mask, theta, beta)
    y = rng.random(ii.shape[0]) < p
    adj = np.array(network.adjacency)
    adj[ii, jj] = y
    adj[jj, ii] = y
    return ContactNetwork(adj)


def sample_transmission_sources(record: EpidemicRecord, network: ContactNetwork, prior: TransmissionPrior,
                                rng: np.random.Generator, members=None) -> EpidemicRecord:
    """Redraw the infector of every non-index infected member (or just ``members``)."""
    inf = record.infected
    if members is None:
        members = np.flatnonzero(inf & (record.infector != INDEX_CASE))
    members = np.asarray(members, dtype=np.int64)
    E, I, R = _state_times(record)
    T = record.infector.copy()
    bad = kern.sample_sources(members, T, E, I, R, _as_u8(network), prior.allowed,
                              np.flatnonzero(inf).astype(np.int64), rng.random(members.shape[0]))
    if bad >= 0:
        raise AugmentationError(f"member {bad + 1} has no feasible infector")
    return replace(record, infector=T)


def impute_times(record: EpidemicRecord, mask: ObservationMask, network: ContactNetwork,
                 params: EpidemicParams, proposal_scale: float, rng: np.random.Generator) -> EpidemicRecord:
    """MH updates of latent exposure, removal and onset times.

    Each latent exposure gets a random-walk move and an independence move
    drawn from the exposed-period distribution; latent removals likewise.
    Latent onsets get a random-walk move.
    """
    E, I, R = _state_times(record)
    state = _TimeBlock(record.infected, ~mask.obs_E, ~mask.obs_I, ~mask.obs_R)
    state.run(E, I, R, record.infector.copy(), _as_u8(network), params, proposal_scale, rng)
    inf = record.infected
    return EpidemicRecord(np.where(inf, E, np.nan), np.where(inf, I, np.nan), np.where(inf, R, np.nan),
                          record.infector)


class _TimeBlock:
    def __init__(self, infected, lat_E, lat_I, lat_R):
        self.infected = np.asarray(infected, dtype=np.bool_)
        self.members_E = np.flatnonzero(self.infected & lat_E).astype(np.int64)
        self.members_I = np.flatnonzero(self.infected & lat_I).astype(np.int64)
        self.members_R = np.flatnonzero(self.infected & lat_R).astype(np.int64)

    def run(self, E, I, R, T, Y, params: EpidemicParams, scale: float, rng, beta_support=None):
        """One sweep over the latent times.

        With ``beta_support = (lo, hi)`` the targets integrate beta against
        its uniform prior instead of conditioning on ``params.beta``.
        """
        kE, sE = params.eta_E
        kI, sI = params.eta_I
        collapsed = beta_support is not None
        lo, hi = beta_support if collapsed else (0.0, math.inf)
        m_inf = float(self.infected.sum())
        a_box = np.array([kern.total_pressure(self.infected, E, I, R, Y)])
        tail = (a_box, params.beta, m_inf, lo, hi, collapsed)
        acc = {}
        m = self.members_E.shape[0]
        if m:
            acc["exposure"] = (kern.update_exposures(
                self.members_E, E, I, R, T, self.infected, Y, kE, sE, scale * kE * sE,
                rng.standard_normal(m), rng.gamma(kE, sE, size=m), np.log(rng.random(2 * m)), *tail), 2 * m)
        m = self.members_I.shape[0]
        if m:
            acc["onset"] = (kern.update_onsets(
                self.members_I, E, I, R, T, Y, kE, sE, kI, sI, scale * kE * sE,
                rng.standard_normal(m), np.log(rng.random(m)), *tail), m)
        m = self.members_R.shape[0]
        if m:
            acc["removal"] = (kern.update_removals(
                self.members_R, E, I, R, T, Y, kI, sI, scale * kI * sI,
                rng.standard_normal(m), rng.gamma(kI, sI, size=m), np.log(rng.random(2 * m)), *tail), 2 * m)
        return acc

    @property
    def has_latent(self) -> bool:
        return bool(self.members_E.size or self.members_I.size or self.members_R.size)


# ---------------------------------------------------------------------------
# Full chain
# ---------------------------------------------------------------------------

class ChainState:
    """Mutable augmented state of one chain.

    Built from an :class:`ObservedData` bundle only, so the chain never
    sees values the mask hides.
    """

    def __init__(self, data: ObservedData, config: ChainConfig, rng: np.random.Generator):
        diag = validate_mask(data.mask, data.record, data.network)
        if diag.hard:
            raise ValueError("; ".join(diag.hard))
        self.data = data
        self.config = config
        self.diagnostics = diag.lines()
        n = data.n_members
        rec = data.record
        mask = data.mask
        self.n = n
        self.K = config.K
        self.infected = rec.infected.copy()
        self.inf_members = np.flatnonzero(self.infected).astype(np.int64)
        self.index_case = data.index_case
        self.times = _TimeBlock(self.infected, ~mask.obs_E, ~mask.obs_I, ~mask.obs_R)
        self.latent_T = np.flatnonzero(rec.infector == UNKNOWN_INFECTOR).astype(np.int64)
        self.prior = build_transmission_prior(config.transmission_prior_mode, data.assessments, self.infected,
                                              rec.infectious, rec.removal, rec.exposure,
                                              index_case=self.index_case)

        off_diag = ~np.eye(n, dtype=bool)
        self.materialized = (mask.obs_Y | self.infected[:, None] | self.infected[None, :]) & off_diag
        ii, jj = np.triu_indices(n, 1)
        keep = ~mask.obs_Y[ii, jj] & self.materialized[ii, jj]
        self.imp_i, self.imp_j = ii[keep], jj[keep]

        priors = config.eta_priors
        hp = config.hyperpriors
        self.params = EpidemicParams(
            priors.start("beta"),
            (priors.start("eta_E_shape"), priors.start("eta_E_scale")),
            (priors.start("eta_I_shape"), priors.start("eta_I_scale")),
        )
        self._init_times_and_tree()
        self.Y = np.zeros((n, n), dtype=np.uint8)
        self.Y[mask.obs_Y] = data.network.adjacency[mask.obs_Y]
        for j in self.inf_members:
            src = self.T[j]
            if src >= 0:
                self.Y[src, j] = self.Y[j, src] = 1

        self.alpha = hp.alpha_shape / hp.alpha_rate
        self.mu = hp.mean_loc
        self.sigma2 = hp.prec_rate / hp.prec_shape
        self.gamma = rng.normal(self.mu, math.sqrt(self.sigma2), size=self.K)
        self.Z = np.zeros(n, dtype=np.int64)
        self.V, self.pi = update_pi(self.Z, self.alpha, self.K, rng)
        self.theta = self.gamma[self.Z]
        self.accept = {}
        self.proposed = {}
        ps = config.proposal_scales
        self.scale = {"gamma": ps.gamma, "eta_E": ps.eta, "eta_I": ps.eta, "times": ps.times, "rescale": ps.rescale}
        self._window = ({}, {})

    # -- initialisation ----------------------------------------------------
    def _init_times_and_tree(self):
        rec = self.data.record
        inf = self.infected
        kE, sE = self.params.eta_E
        kI, sI = self.params.eta_I
        mean_E, mean_I = kE * sE, kI * sI
        E = np.where(inf, rec.exposure, np.inf)
        I = np.where(inf, rec.infectious, 0.0)
        R = np.where(inf, rec.removal, 0.0)
        for j in self.inf_members:
            if np.isnan(I[j]):
                if np.isfinite(E[j]) and not np.isnan(E[j]):
                    I[j] = E[j] + mean_E
                elif not np.isnan(R[j]):
                    I[j] = R[j] - mean_I
                else:
                    raise InitializationError(f"member {j + 1}: no observed time to anchor the onset")
                if not np.isnan(R[j]) and I[j] >= R[j]:
                    lo = E[j] if not np.isnan(E[j]) else R[j] - 2 * mean_I
                    I[j] = 0.5 * (lo + R[j])
            if np.isnan(E[j]):
                E[j] = I[j] - mean_E
            if np.isnan(R[j]):
                R[j] = I[j] + mean_I
        T = rec.infector.copy()
        lat_E = ~self.data.mask.obs_E
        lat_R = ~self.data.mask.obs_R
        obs_Y = self.data.mask.obs_Y
        y_obs = self.data.network.adjacency
        allowed = self.prior.allowed
        order = self.inf_members[np.argsort(I[self.inf_members], kind="stable")]
        for j in order:
            if j == self.index_case:
                continue
            if T[j] >= 0:
                cands = [int(T[j])]
            else:
                ok = allowed[:, j] & inf & (I < I[j]) & ~(obs_Y[:, j] & ~y_obs[:, j])
                ok[j] = False
                cands = list(np.flatnonzero(ok)[np.argsort(I[ok], kind="stable")])
            chosen = None
            for i in cands:  # earliest feasible infector at the current times
                if I[i] < E[j] < R[i]:
                    chosen = i
                    break
            if chosen is None:
                for i in cands:
                    hi = I[j] if lat_R[i] else min(R[i], I[j])
                    if lat_E[j] and I[i] < hi:
                        E[j] = 0.5 * (I[i] + hi)
                    elif not (I[i] < E[j] and E[j] < I[j]):
                        continue
                    if not E[j] < R[i]:
                        if not lat_R[i]:
                            continue
                        R[i] = E[j] + 0.5 * (I[j] - E[j]) + mean_I
                    chosen = i
                    break
            if chosen is None:
                raise InitializationError(f"no feasible infector for member {j + 1}")
            T[j] = chosen
        self.E, self.I, self.R, self.T = E, I, R, T

    def set_latent(self, record: EpidemicRecord, network: ContactNetwork):
        """Overwrite the augmented data with complete values (e.g. the truth)."""
        E, I, R = _state_times(record)
        self.E, self.I, self.R = E, I, R
        self.T = record.infector.copy()
        self.Y = np.where(self.materialized, network.adjacency, 0).astype(np.uint8)

    def set_parameters(self, params: EpidemicParams, mixture: MixtureState):
        self.params = params
        self.gamma = mixture.atoms.astype(float).copy()
        self.Z = mixture.assignments.astype(np.int64).copy()
        self.V = mixture.sticks.copy()
        self.pi = stick_breaking(self.V)
        self.alpha, self.mu, self.sigma2 = mixture.concentration, mixture.base_mean, mixture.base_var
        self.theta = self.gamma[self.Z]

    # -- one iteration -----------------------------------------------------
    def _count(self, name, accepted, proposed):
        self.accept[name] = self.accept.get(name, 0) + accepted
        self.proposed[name] = self.proposed.get(name, 0) + proposed

    def step(self, rng: np.random.Generator):
        cfg = self.config
        scale = self.scale
        # 1. latent times; beta is integrated out and then redrawn so later steps see a matching value
        support = cfg.eta_priors.beta if cfg.collapse_beta else None
        for name, (acc, prop) in self.times.run(self.E, self.I, self.R, self.T, self.Y, self.params,
                                                 scale["times"], rng, support).items():
            self._count(name, acc, prop)
        if support is not None and self.times.has_latent:
            beta = sample_truncated_gamma(float(self.inf_members.size), self.pressure(), *support, rng)
            self.params = replace(self.params, beta=beta)
        if self.times.members_E.size:
            p = self.params
            beta, acc = kern.rescale_exposures(
                self.times.members_E, self.E, self.I, self.R, self.T, self.infected, self.Y, p.beta,
                rng.normal(0.0, scale["rescale"]), *cfg.eta_priors.beta, *p.eta_E,
                float(self.inf_members.size), math.log(rng.random()))
            self.params = replace(p, beta=beta)
            self._count("beta_rescale", acc, 1)
        # 2. transmission sources
        if self.latent_T.size:
            bad = kern.sample_sources(self.latent_T, self.T, self.E, self.I, self.R, self.Y, self.prior.allowed,
                                      self.inf_members, rng.random(self.latent_T.shape[0]))
            if bad >= 0:
                raise AugmentationError(f"member {bad + 1} has no feasible infector")
        # 3. unobserved contacts
        if self.imp_i.size:
            ii, jj = self.imp_i, self.imp_j
            p = expit(_dyad_logits(ii, jj, self.theta, self.params.beta, self.E, self.I, self.R))
            y = rng.random(ii.shape[0]) < p
            y |= (self.T[jj] == ii) | (self.T[ii] == jj)
            self.Y[ii, jj] = y
            self.Y[jj, ii] = y
        # 4. atoms
        self.gamma, acc = update_gamma_mh(self.Z, self.Y, self.materialized, self.gamma, self.mu, self.sigma2,
                                          scale["gamma"], rng)
        self._count("gamma", acc, self.K)
        # 5. labels, 6. degree parameters
        with np.errstate(divide="ignore"):
            log_pi = np.log(self.pi)
        kern.sweep_assignments(self.Z, self.Y, self.materialized, self.gamma, log_pi, rng.random(self.n))
        self.theta = self.gamma[self.Z]
        # 7. epidemic parameters
        inf = self.inf_members
        a = kern.total_pressure(self.infected, self.E, self.I, self.R, self.Y)
        self.params, acc = _eta_step(self.params, inf.size, a, _period_stats(self.I[inf] - self.E[inf]),
                                     _period_stats(self.R[inf] - self.I[inf]), cfg.eta_priors,
                                     (scale["eta_E"], scale["eta_I"]), rng)
        for name, flag in zip(("eta_E_shape", "eta_E_scale", "eta_E_mean", "eta_I_shape", "eta_I_scale",
                               "eta_I_mean"), acc):
            self._count(name, flag, 1)
        # 8. hyperparameters
        hp = cfg.hyperpriors
        self.alpha = update_alpha(self.pi, hp, rng)
        self.V, self.pi = update_pi(self.Z, self.alpha, self.K, rng)
        self.mu = update_mu(self.sigma2, self.gamma, hp, rng)
        self.sigma2 = update_sigma2(self.mu, self.gamma, hp, rng)

    def adapt_scales(self, target: float = 0.3):
        """Nudge each block's proposal scale towards ``target`` acceptance over the last window."""
        for block, names in _ADAPT_BLOCKS.items():
            acc = sum(self.accept.get(n, 0) - self._window[0].get(n, 0) for n in names)
            prop = sum(self.proposed.get(n, 0) - self._window[1].get(n, 0) for n in names)
            if prop:
                log_s = math.log(self.scale[block]) + 2.0 * (acc / prop - target)
                self.scale[block] = math.exp(min(max(log_s, math.log(1e-3)), math.log(10.0)))
        self._window = (dict(self.accept), dict(self.proposed))

    # -- read-out ----------------------------------------------------------
    def mixture(self) -> MixtureState:
        return MixtureState(self.V.copy(), self.Z.copy(), self.gamma.copy(), self.alpha, self.mu, self.sigma2)

    def record(self) -> EpidemicRecord:
        inf = self.infected
        return EpidemicRecord(np.where(inf, self.E, np.nan), np.where(inf, self.I, np.nan),
                              np.where(inf, self.R, np.nan), self.T.copy())

    def contacts(self) -> ContactNetwork:
        """Current contacts on materialised dyads; summed-out dyads are reported absent."""
        return ContactNetwork(self.Y.astype(bool))

    def pressure(self) -> float:
        return kern.total_pressure(self.infected, self.E, self.I, self.R, self.Y)

    def log_posterior(self) -> float:
        """Unnormalised log density of the augmented state and parameters."""
        cfg = self.config
        hp = cfg.hyperpriors
        p = self.params
        inf = self.inf_members
        iu, ju = np.nonzero(np.triu(self.materialized, 1))
        lam = self.theta[iu] + self.theta[ju]
        lp = float(np.sum(lam * self.Y[iu, ju] - softplus(lam)))
        m = inf.size
        lp += (m - 1) * math.log(p.beta) - p.beta * self.pressure()
        for j in inf:
            src = self.T[j]
            if src >= 0 and not (self.I[src] < self.E[j] < self.R[src] and self.Y[src, j]):
                return -math.inf
        for durations, (k, s) in ((self.I[inf] - self.E[inf], p.eta_E), (self.R[inf] - self.I[inf], p.eta_I)):
            if np.any(durations <= 0):
                return -math.inf
            lp += _period_loglik(k, s, _period_stats(durations))
        priors = cfg.eta_priors
        for name, value in zip(EtaPriors.names(), (p.beta, *p.eta_E, *p.eta_I)):
            lp += priors.log_density(name, value)
        lp += float(np.sum(-0.5 * (self.gamma - self.mu) ** 2 / self.sigma2 - 0.5 * math.log(2 * math.pi * self.sigma2)))
        with np.errstate(divide="ignore"):
            lp += float(np.sum(np.log(self.pi[self.Z])))
        v = self.V[:-1]
        lp += float(np.sum(math.log(self.alpha) + (self.alpha - 1.0) * np.log1p(-v)))
        lp += (hp.alpha_shape * math.log(hp.alpha_rate) - gammaln(hp.alpha_shape)
               + (hp.alpha_shape - 1) * math.log(self.alpha) - hp.alpha_rate * self.alpha)
        lp += -0.5 * (self.mu - hp.mean_loc) ** 2 / hp.mean_var - 0.5 * math.log(2 * math.pi * hp.mean_var)
        prec = 1.0 / self.sigma2
        lp += (hp.prec_shape * math.log(hp.prec_rate) - gammaln(hp.prec_shape)
               + (hp.prec_shape - 1) * math.log(prec) - hp.prec_rate * prec)
        return lp

    def check_invariants(self):
        rec = self.record()
        problems = rec.validate(self.contacts())
        if problems:
            raise AugmentationError("; ".join(problems))
        obs = self.data.mask.obs_Y
        if np.any(self.Y.astype(bool)[obs] != self.data.network.adjacency[obs]):
            raise AugmentationError("observed contacts were altered")

    def snapshot(self, iteration: int, store_latent: bool) -> ChainDraw:
        draw = ChainDraw(iteration, self.params, self.mixture(), self.log_posterior())
        if store_latent:
            draw.record = self.record()
            iu, ju = np.nonzero(np.triu(self.Y, 1))
            draw.contacts = np.column_stack([iu, ju])
        return draw

    def acceptance_rates(self) -> dict:
        return {k: self.accept[k] / self.proposed[k] for k in sorted(self.accept) if self.proposed[k]}


_ADAPT_BLOCKS = {
    "gamma": ("gamma",),
    "eta_E": ("eta_E_shape", "eta_E_scale", "eta_E_mean"),
    "eta_I": ("eta_I_shape", "eta_I_scale", "eta_I_mean"),
    "times": ("exposure", "onset", "removal"),
    "rescale": ("beta_rescale",),
}
ADAPT_WINDOW = 50


def run_chain(data: ObservedData, config: ChainConfig, rng: np.random.Generator | None = None) -> ChainOutput:
    """Run one chain and keep draws at iterations ``t > burn_in`` with ``t % thin == 0``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    state = ChainState(data, config, rng)
    draws = []
    for t in range(1, config.iterations + 1):
        state.step(rng)
        if config.adapt and t <= config.burn_in and t % ADAPT_WINDOW == 0:
            state.adapt_scales()
        if t > config.burn_in and t % config.thin == 0:
            if config.debug:
                state.check_invariants()
            draws.append(state.snapshot(t, config.store_latent))
    return ChainOutput(draws, state.acceptance_rates(), state.diagnostics, config.iterations,
                       time.perf_counter() - start)
