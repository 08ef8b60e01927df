"""Simulation studies: interval coverage, MSE against contact-sample size,
and the truncated-DP expected-degree demonstration.

Every replication owns a child of the master ``SeedSequence``, so results
do not depend on the number of workers or the order in which jobs finish.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import ObservedData
from .epidemic import EpidemicParams, EpidemicRecord, simulate_epidemic
from .mcmc import AugmentationError, ChainConfig, EtaPriors, InitializationError, run_chain
from .model import ContactNetwork, expected_degrees, sample_network, sample_truncated_dp
from .observation import ego_centric_mask, link_tracing_mask
from .relabel import relabel

__all__ = [
    "TruthConfig",
    "ObserveConfig",
    "Truth",
    "CoverageTable",
    "MseCurve",
    "scaled_sizes",
    "draw_truth",
    "apply_design",
    "fit_priors",
    "align_to_truth",
    "posterior_summary",
    "coverage_experiment",
    "mse_experiment",
    "dpp_demo",
]

EPI_PARAMETERS = ("beta", "eta_E_shape", "eta_E_scale", "eta_I_shape", "eta_I_scale")
MSE_DESIGN_SIZES = (127, 50, 10)


def scaled_sizes(n_members: int, sizes=MSE_DESIGN_SIZES) -> tuple:
    """Subpopulation sizes proportional to ``sizes`` summing to ``n_members`` (largest remainders)."""
    sizes = np.asarray(sizes, dtype=float)
    exact = sizes / sizes.sum() * n_members
    out = np.floor(exact).astype(int)
    short = n_members - out.sum()
    order = np.argsort(-(exact - out), kind="stable")
    out[order[:short]] += 1
    return tuple(int(v) for v in out)


@dataclass(frozen=True)
class TruthConfig:
    """Data-generating values.

    Members join clusters by a multinomial draw with ``proportions`` unless
    ``sizes`` fixes the cluster sizes.  Epidemics with fewer than
    ``min_infected`` infections are redrawn from a new index case.
    """

    n_members: int = 60
    gamma: tuple = (-2.0, -1.0, 0.0)
    proportions: tuple = (0.4, 0.3, 0.3)
    sizes: tuple | None = None
    beta: float = 2.0
    eta_E: tuple = (8.0, 0.25)
    eta_I: tuple = (4.0, 0.25)
    min_infected: int = 1

    def __post_init__(self):
        if self.sizes is not None and sum(self.sizes) != self.n_members:
            raise ValueError("cluster sizes must sum to n_members")
        if self.sizes is None and len(self.proportions) != len(self.gamma):
            raise ValueError("need one proportion per cluster")
        if self.sizes is not None and len(self.sizes) != len(self.gamma):
            raise ValueError("need one size per cluster")

    @property
    def params(self) -> EpidemicParams:
        return EpidemicParams(self.beta, self.eta_E, self.eta_I)

    def values(self) -> dict:
        out = {"beta": self.beta, "eta_E_shape": self.eta_E[0], "eta_E_scale": self.eta_E[1],
               "eta_I_shape": self.eta_I[0], "eta_I_scale": self.eta_I[1]}
        out.update({f"gamma_{k + 1}": g for k, g in enumerate(self.gamma)})
        return out


@dataclass(frozen=True)
class ObserveConfig:
    """Sampling design applied to the simulated truth; ``n_sampled=None`` samples everyone."""

    n_sampled: int | None = 0
    waves: int = 0
    exposure: bool = False
    infectious: bool = True
    removal: bool = True
    transmissions: bool = False

    def flags(self) -> dict:
        return dict(observe_exposure=self.exposure, observe_infectious=self.infectious,
                    observe_removal=self.removal, observe_transmissions=self.transmissions)


@dataclass
class Truth:
    assignments: np.ndarray
    theta: np.ndarray
    network: ContactNetwork
    record: EpidemicRecord


def draw_truth(cfg: TruthConfig, rng: np.random.Generator) -> Truth:
    gamma = np.asarray(cfg.gamma, dtype=float)
    if cfg.sizes is not None:
        z = np.repeat(np.arange(len(cfg.sizes)), cfg.sizes)
    else:
        z = rng.choice(len(gamma), size=cfg.n_members, p=np.asarray(cfg.proportions) / np.sum(cfg.proportions))
    theta = gamma[z]
    network = sample_network(theta, rng)
    for _ in range(1000):
        record = simulate_epidemic(network, cfg.params, None, rng)
        if record.n_infected >= cfg.min_infected:
            return Truth(z, theta, network, record)
    raise RuntimeError(f"no epidemic with at least {cfg.min_infected} infections in 1000 attempts")


def apply_design(truth: Truth, observe: ObserveConfig, rng: np.random.Generator) -> ObservedData:
    n = truth.network.n_members
    n0 = n if observe.n_sampled is None else observe.n_sampled
    if observe.waves:
        mask = link_tracing_mask(truth.network, truth.record.infected, n0, observe.waves, rng, **observe.flags())
    else:
        mask = ego_centric_mask(n, truth.record.infected, n0, rng, **observe.flags())
    return ObservedData.from_complete(truth.record, truth.network, mask)


def fit_priors(kind: str, truth: TruthConfig, base: EtaPriors | None = None) -> EtaPriors:
    """``default`` keeps ``base``; ``widened`` stretches it around the truth; ``flat`` is (0, inf)."""
    base = base or EtaPriors()
    if kind == "default":
        return base
    if kind == "widened":
        return base.widened_to(truth.values())
    if kind == "flat":
        return EtaPriors(**{name: (0.0, math.inf) for name in EtaPriors.names()})
    raise ValueError(f"unknown prior kind {kind!r}")


def align_to_truth(reference: np.ndarray, true_assignments, n_true: int) -> np.ndarray:
    """Fitted label matched to each true cluster, maximising expected overlap.

    ``reference`` is the (N x K) classification-probability matrix of a
    relabelled chain.  Returns an array of length ``n_true`` (``-1`` when
    the fit has fewer clusters than the truth).
    """
    overlap = np.zeros((reference.shape[1], n_true))
    for k in range(n_true):
        overlap[:, k] = reference[np.asarray(true_assignments) == k].sum(axis=0)
    rows, cols = linear_sum_assignment(-overlap)
    out = np.full(n_true, -1, dtype=np.int64)
    out[cols] = rows
    return out


def posterior_summary(output, truth_assignments=None, n_true: int = 0, gamma: str = "members") -> dict:
    """Per-parameter arrays of draws.

    Given a truth, ``gamma_k`` is estimated either by averaging each draw's
    ``theta`` over the true members of cluster ``k`` (``"members"``, label
    invariant) or by the relabelled atom best matched to that cluster
    (``"aligned"``).
    """
    samples = {name: output.trace(name) for name in EPI_PARAMETERS}
    if not (n_true and output.draws):
        return samples
    z = np.asarray(truth_assignments)
    if gamma == "members":
        theta = np.stack([d.theta for d in output.draws])
        for k in range(n_true):
            if np.any(z == k):
                samples[f"gamma_{k + 1}"] = theta[:, z == k].mean(axis=1)
    elif gamma == "aligned":
        draws, report = relabel(output.draws)
        match = align_to_truth(report.reference_probabilities, z, n_true)
        atoms = np.stack([d.mixture.atoms for d in draws])
        for k in range(n_true):
            if match[k] >= 0:
                samples[f"gamma_{k + 1}"] = atoms[:, match[k]]
    else:
        raise ValueError(f"unknown gamma estimator {gamma!r}")
    return samples


@dataclass
class CoverageTable:
    """Per-parameter coverage of central credible intervals."""

    rows: list = field(default_factory=list)  # dicts: parameter, replications, coverage, mean_width
    failures: list = field(default_factory=list)  # (replication, message)
    level: float = 0.95

    def row(self, parameter: str) -> dict:
        for r in self.rows:
            if r["parameter"] == parameter:
                return r
        raise KeyError(parameter)


@dataclass
class MseCurve:
    sample_sizes: list
    rows: list = field(default_factory=list)  # dicts: n, parameter, mse_median, mse_mean, replications
    failures: list = field(default_factory=list)

    def value(self, n: int, parameter: str, stat: str = "mse_median") -> float:
        for r in self.rows:
            if r["n"] == n and r["parameter"] == parameter:
                return r[stat]
        raise KeyError((n, parameter))


def _spawn(master_seed: int, count: int) -> list:
    return np.random.SeedSequence(master_seed).spawn(count)


def _map(fn, jobs, workers: int) -> list:
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _chain_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _coverage_job(job):
    r, seq, truth_cfg, observe, chain, level, gamma = job
    truth_seq, design_seq, chain_seq = seq.spawn(3)
    truth = draw_truth(truth_cfg, np.random.default_rng(truth_seq))
    data = apply_design(truth, observe, np.random.default_rng(design_seq))
    try:
        out = run_chain(data, replace(chain, seed=_chain_seed(chain_seq)))
    except (InitializationError, AugmentationError, ValueError, FloatingPointError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}"
    samples = posterior_summary(out, truth.assignments, len(truth_cfg.gamma), gamma)
    tail = (1.0 - level) / 2.0
    result = {}
    values = truth_cfg.values()
    for name, x in samples.items():
        lo, hi = np.quantile(x, [tail, 1.0 - tail])
        result[name] = (bool(lo <= values[name] <= hi), float(hi - lo))
    return r, result, None


def coverage_experiment(truth: TruthConfig, replications: int, chain: ChainConfig, observe: ObserveConfig,
                        master_seed: int = 0, workers: int = 1, level: float = 0.95,
                        gamma: str = "members") -> CoverageTable:
    """Fraction of replications whose central ``level`` interval contains the truth."""
    jobs = [(r, seq, truth, observe, chain, level, gamma) for r, seq in enumerate(_spawn(master_seed, replications))]
    table = CoverageTable(level=level)
    per_param = {}
    for r, result, err in _map(_coverage_job, jobs, workers):
        if err is not None:
            table.failures.append((r, err))
            continue
        for name, hit in result.items():
            per_param.setdefault(name, []).append(hit)
    order = list(EPI_PARAMETERS) + [f"gamma_{k + 1}" for k in range(len(truth.gamma))]
    for name in order:
        hits = per_param.get(name, [])
        if not hits:
            continue
        table.rows.append({
            "parameter": name,
            "replications": len(hits),
            "coverage": float(np.mean([h for h, _ in hits])),
            "mean_width": float(np.mean([w for _, w in hits])),
        })
    return table


def _mse_job(job):
    r, seq, truth_cfg, observe, sizes, chain, gamma = job
    truth_seq, *fit_seqs = seq.spawn(1 + 2 * len(sizes))
    truth = draw_truth(truth_cfg, np.random.default_rng(truth_seq))
    values = truth_cfg.values()
    out = []
    for m, n in enumerate(sizes):
        design_seq, chain_seq = fit_seqs[2 * m], fit_seqs[2 * m + 1]
        data = apply_design(truth, replace(observe, n_sampled=n), np.random.default_rng(design_seq))
        try:
            fit = run_chain(data, replace(chain, seed=_chain_seed(chain_seq)))
        except (InitializationError, AugmentationError, ValueError, FloatingPointError) as exc:
            out.append((n, None, f"{type(exc).__name__}: {exc}"))
            continue
        samples = posterior_summary(fit, truth.assignments, len(truth_cfg.gamma), gamma)
        errs = {name: ((float(np.median(x)) - values[name]) ** 2, (float(np.mean(x)) - values[name]) ** 2)
                for name, x in samples.items()}
        out.append((n, errs, None))
    return r, out


def mse_experiment(truth: TruthConfig, sample_sizes, replications: int, chain: ChainConfig,
                   observe: ObserveConfig, master_seed: int = 0, workers: int = 1,
                   gamma: str = "members") -> MseCurve:
    """Squared error of posterior medians and means against the number of sampled members.

    Each replication draws one truth and fits it once per sample size.
    """
    sizes = [int(n) for n in sample_sizes]
    for n in sizes:
        if not 0 <= n <= truth.n_members:
            raise ValueError(f"sample size {n} outside [0, {truth.n_members}]")
    jobs = [(r, seq, truth, observe, sizes, chain, gamma) for r, seq in enumerate(_spawn(master_seed, replications))]
    curve = MseCurve(sizes)
    acc = {}
    for r, per_n in _map(_mse_job, jobs, workers):
        for n, errs, err in per_n:
            if err is not None:
                curve.failures.append((r, n, err))
                continue
            for name, pair in errs.items():
                acc.setdefault((n, name), []).append(pair)
    order = list(EPI_PARAMETERS) + [f"gamma_{k + 1}" for k in range(len(truth.gamma))]
    for n in sizes:
        for name in order:
            pairs = acc.get((n, name))
            if not pairs:
                continue
            arr = np.asarray(pairs)
            curve.rows.append({"n": n, "parameter": name, "mse_median": float(arr[:, 0].mean()),
                               "mse_mean": float(arr[:, 1].mean()), "replications": len(pairs)})
    return curve


def dpp_demo(alpha: float, mu: float, sigma2: float, n_members: int, n_draws: int,
             rng: np.random.Generator) -> list:
    """Draws of ``(theta, expected_degrees)`` from the DP prior truncated at ``K = N``."""
    out = []
    for _ in range(n_draws):
        atoms, pi = sample_truncated_dp(alpha, mu, sigma2, n_members, rng)
        z = rng.choice(n_members, size=n_members, p=pi / pi.sum())
        theta = atoms[z]
        out.append((theta, expected_degrees(theta)))
    return out
