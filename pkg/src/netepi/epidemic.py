"""Network SEIR epidemics: forward simulation and complete-data likelihood terms."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .model import ContactNetwork

__all__ = [
    "INDEX_CASE",
    "NOT_INFECTED",
    "UNKNOWN_INFECTOR",
    "EpidemicParams",
    "EpidemicRecord",
    "simulate_epidemic",
    "exposure_statistic",
    "transmission_log_likelihood",
    "period_log_likelihood",
    "max_infectious",
]

INDEX_CASE = -1
NOT_INFECTED = -2
UNKNOWN_INFECTOR = -3


@dataclass(frozen=True)
class EpidemicParams:
    """Infection rate and Gamma period parameters.

    Period parameters are ``(shape, scale)`` pairs, so the mean exposed
    period is ``eta_E[0] * eta_E[1]``.
    """

    beta: float
    eta_E: tuple[float, float]
    eta_I: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "eta_E", tuple(float(v) for v in self.eta_E))
        object.__setattr__(self, "eta_I", tuple(float(v) for v in self.eta_I))
        if not (self.beta > 0 and min(self.eta_E) > 0 and min(self.eta_I) > 0):
            raise ValueError("epidemic parameters must be positive")

    def as_dict(self) -> dict:
        return {"beta": float(self.beta), "eta_E": list(self.eta_E), "eta_I": list(self.eta_I)}


@dataclass(frozen=True)
class EpidemicRecord:
    """Exposure, infectious and removal times plus the transmission tree.

    All arrays have one entry per population member.  Times are NaN for
    members that were never infected.  ``infector[j]`` is the 0-based
    infector of ``j``, ``INDEX_CASE`` for the index case,
    ``UNKNOWN_INFECTOR`` when the source is unobserved and ``NOT_INFECTED``
    for members that escaped infection.
    """

    exposure: np.ndarray
    infectious: np.ndarray
    removal: np.ndarray
    infector: np.ndarray

    def __post_init__(self):
        for name in ("exposure", "infectious", "removal"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "infector", np.asarray(self.infector, dtype=np.int64))
        n = self.infector.shape[0]
        if not all(getattr(self, f).shape == (n,) for f in ("exposure", "infectious", "removal")):
            raise ValueError("record arrays must all have length n_members")

    @property
    def n_members(self) -> int:
        return self.infector.shape[0]

    @property
    def infected(self) -> np.ndarray:
        return self.infector != NOT_INFECTED

    @property
    def infected_members(self) -> np.ndarray:
        return np.flatnonzero(self.infected)

    @property
    def n_infected(self) -> int:
        return int(self.infected.sum())

    @property
    def index_case(self) -> int:
        idx = np.flatnonzero(self.infector == INDEX_CASE)
        if idx.size != 1:
            raise ValueError(f"record has {idx.size} index cases")
        return int(idx[0])

    def exposure_or_inf(self) -> np.ndarray:
        """Exposure times with never-infected members at ``+inf``."""
        return np.where(self.infected, self.exposure, np.inf)

    def permuted(self, perm) -> "EpidemicRecord":
        """Relabel members so that new member ``perm[i]`` is old member ``i``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        old_infector = self.infector[inv]
        new_infector = np.where(old_infector >= 0, perm[np.maximum(old_infector, 0)], old_infector)
        return EpidemicRecord(self.exposure[inv], self.infectious[inv], self.removal[inv], new_infector)

    def validate(self, network: ContactNetwork | None = None) -> list[str]:
        """Return a list of invariant violations (empty when the record is valid)."""
        problems = []
        inf = self.infected
        n_index = int(np.sum(self.infector == INDEX_CASE))
        if n_index != 1:
            problems.append(f"expected exactly one index case, found {n_index}")
        for j in np.flatnonzero(inf):
            e, i_, r = self.exposure[j], self.infectious[j], self.removal[j]
            if not (e < i_ < r):
                problems.append(f"member {j + 1}: times not ordered E < I < R")
            src = self.infector[j]
            if src >= 0:
                if not inf[src]:
                    problems.append(f"member {j + 1}: infector {src + 1} was never infected")
                elif not (self.infectious[src] < e < self.removal[src]):
                    problems.append(f"member {j + 1}: exposure outside infector {src + 1}'s infectious period")
                if network is not None and not network.has_edge(src, j):
                    problems.append(f"member {j + 1}: infected by {src + 1} without a contact")
        return problems


def simulate_epidemic(network: ContactNetwork, params: EpidemicParams, index_case: int | None,
                      rng: np.random.Generator) -> EpidemicRecord:
    """Event-driven SEIR simulation on a fixed contact network.

    The index case is exposed at time 0 (a uniformly random member when
    ``index_case`` is None).  Each infected member draws its exposed and
    infectious durations on exposure; on turning infectious it draws an
    Exponential(beta) delay for each currently susceptible contact and
    discards delays that end after its own removal.
    """
    n = network.n_members
    if index_case is None:
        index_case = int(rng.integers(n))
    if not 0 <= index_case < n:
        raise IndexError(f"index case {index_case + 1} outside population of size {n}")
    adj = network.adjacency
    kE, sE = params.eta_E
    kI, sI = params.eta_I

    E = np.full(n, np.nan)
    I = np.full(n, np.nan)
    R = np.full(n, np.nan)
    infector = np.full(n, NOT_INFECTED, dtype=np.int64)
    susceptible = np.ones(n, dtype=bool)

    # (time, kind, member, source); kind 0 = exposure, 1 = onset of infectiousness.
    events = [(0.0, 0, index_case, INDEX_CASE)]
    while events:
        t, kind, j, src = heapq.heappop(events)
        if kind == 0:
            if not susceptible[j]:
                continue
            susceptible[j] = False
            infector[j] = src
            E[j] = t
            I[j] = t + rng.gamma(kE, sE)
            R[j] = I[j] + rng.gamma(kI, sI)
            heapq.heappush(events, (I[j], 1, j, src))
        else:
            contacts = np.flatnonzero(adj[j] & susceptible)
            if contacts.size == 0:
                continue
            delays = rng.exponential(1.0 / params.beta, size=contacts.size)
            for c, d in zip(contacts, delays):
                if I[j] + d < R[j]:
                    heapq.heappush(events, (I[j] + d, 0, int(c), j))
    return EpidemicRecord(E, I, R, infector)


def _pressure_rows(record: EpidemicRecord) -> np.ndarray:
    """Matrix ``P[i, j] = max(min(E_j, R_i) - I_i, 0)`` for infected ``i``, zero rows otherwise."""
    inf = record.infected
    e = record.exposure_or_inf()
    p = np.zeros((record.n_members, record.n_members))
    rows = np.flatnonzero(inf)
    if rows.size:
        block = np.minimum(e[None, :], record.removal[rows, None]) - record.infectious[rows, None]
        p[rows] = np.maximum(block, 0.0)
    np.fill_diagonal(p, 0.0)
    return p


def exposure_statistic(record: EpidemicRecord, network: ContactNetwork) -> float:
    """Total infectious pressure ``a(x, y)``.

    Sums, over infectious members ``i`` and their contacts ``j``, the time
    ``i`` spent infectious while ``j`` was still susceptible.  Never-infected
    contacts count for the whole infectious period.
    """
    if record.n_members != network.n_members:
        raise ValueError("record and network disagree on the population size")
    return float(np.sum(_pressure_rows(record) * network.adjacency))


def transmission_log_likelihood(beta: float, record: EpidemicRecord, network: ContactNetwork) -> float:
    if not beta > 0:
        raise ValueError("beta must be positive")
    a = exposure_statistic(record, network)
    return (record.n_infected - 1) * np.log(beta) - beta * a


def period_log_likelihood(shape: float, scale: float, durations) -> float:
    """Sum of Gamma(shape, scale) log-densities of ``durations``."""
    d = np.asarray(durations, dtype=float)
    if not (shape > 0 and scale > 0):
        raise ValueError("shape and scale must be positive")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("durations must be positive and finite")
    return float(np.sum((shape - 1.0) * np.log(d) - d / scale) - d.size * (shape * np.log(scale) + gammaln(shape)))


def max_infectious(record: EpidemicRecord) -> int:
    """Largest number of simultaneously infectious members, counting ``[I, R)`` intervals."""
    inf = record.infected
    starts = record.infectious[inf]
    stops = record.removal[inf]
    times = np.concatenate([stops, starts])
    steps = np.concatenate([-np.ones(stops.size), np.ones(starts.size)])
    # removals before onsets at equal times
    order = np.lexsort((steps, times))
    return int(np.max(np.cumsum(steps[order]), initial=0))
