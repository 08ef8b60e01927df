"""Posterior-predictive checks: degree distributions and epidemic peaks."""

from __future__ import annotations

import numpy as np

from .epidemic import max_infectious, simulate_epidemic
from .model import degrees, sample_network

__all__ = ["ppc_degrees", "ppc_epidemic_max", "predictive_interval", "long_format"]


def _subsample(draws, max_draws: int | None):
    draws = list(draws)
    if not draws:
        raise ValueError("need at least one draw")
    if max_draws is None or max_draws >= len(draws):
        return draws
    idx = np.linspace(0, len(draws) - 1, max_draws).round().astype(int)
    return [draws[i] for i in idx]


def ppc_degrees(draws, rng: np.random.Generator, max_draws: int | None = None) -> np.ndarray:
    """Degree histograms of networks simulated from each draw's ``theta``.

    Row ``t`` counts members with degree ``0 .. N-1`` in the network of draw ``t``.
    """
    draws = _subsample(draws, max_draws)
    n = draws[0].mixture.n_members
    out = np.zeros((len(draws), n), dtype=np.int64)
    for t, d in enumerate(draws):
        out[t] = np.bincount(degrees(sample_network(d.theta, rng)), minlength=n)
    return out


def ppc_epidemic_max(draws, rng: np.random.Generator, max_draws: int | None = None) -> np.ndarray:
    """Peak number of simultaneously infectious members in epidemics replayed from each draw.

    Each replay samples a fresh network and starts from a uniformly chosen index case.
    """
    draws = _subsample(draws, max_draws)
    out = np.zeros(len(draws), dtype=np.int64)
    for t, d in enumerate(draws):
        network = sample_network(d.theta, rng)
        out[t] = max_infectious(simulate_epidemic(network, d.params, None, rng))
    return out


def predictive_interval(samples, level: float = 0.9) -> tuple:
    """Central interval from sample quantiles."""
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(samples, dtype=float), [tail, 1.0 - tail])
    return float(lo), float(hi)


def long_format(variable: str, values, group: str = "") -> list:
    """Plot-ready ``(variable, value, group)`` rows."""
    return [(variable, v, group) for v in np.asarray(values).tolist()]
