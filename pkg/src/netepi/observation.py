"""Observation masks, network sampling designs and priors over transmission sources."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .epidemic import INDEX_CASE, EpidemicRecord
from .model import ContactNetwork

__all__ = [
    "ObservationMask",
    "TransmissionPrior",
    "MaskDiagnostics",
    "ego_centric_mask",
    "link_tracing_mask",
    "build_transmission_prior",
    "validate_mask",
    "index_case_from_times",
]


@dataclass(frozen=True)
class ObservationMask:
    """Which parts of the complete data are observed.

    Time and transmission indicators have one entry per member and are only
    meaningful for infected members.  ``obs_Y`` is a symmetric dyad matrix
    with a false diagonal.
    """

    obs_E: np.ndarray
    obs_I: np.ndarray
    obs_R: np.ndarray
    obs_T: np.ndarray
    obs_Y: np.ndarray
    sampled: np.ndarray

    def __post_init__(self):
        n = len(self.sampled)
        for name in ("obs_E", "obs_I", "obs_R", "obs_T", "sampled"):
            arr = np.array(getattr(self, name), dtype=bool)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per member")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        y = np.array(self.obs_Y, dtype=bool)
        if y.shape != (n, n) or not np.array_equal(y, y.T):
            raise ValueError("obs_Y must be a symmetric n_members x n_members matrix")
        np.fill_diagonal(y, False)
        y.setflags(write=False)
        object.__setattr__(self, "obs_Y", y)

    @property
    def n_members(self) -> int:
        return self.sampled.shape[0]

    @classmethod
    def full(cls, n_members: int) -> "ObservationMask":
        ones = np.ones(n_members, dtype=bool)
        y = np.ones((n_members, n_members), dtype=bool)
        return cls(ones, ones, ones, ones, y, ones)

    def n_observed_dyads(self) -> int:
        return int(np.triu(self.obs_Y, 1).sum())

    def sampled_members(self) -> np.ndarray:
        return np.flatnonzero(self.sampled)

    def to_dict(self, infected=None) -> dict:
        """JSON-ready representation with 1-based member labels."""
        members = range(self.n_members) if infected is None else np.flatnonzero(infected)
        iu, ju = np.nonzero(np.triu(self.obs_Y, 1))
        return {
            "format_version": 1,
            "n_members": self.n_members,
            "sampled": [int(i) + 1 for i in self.sampled_members()],
            "unobserved_E": [int(i) + 1 for i in members if not self.obs_E[i]],
            "unobserved_I": [int(i) + 1 for i in members if not self.obs_I[i]],
            "unobserved_R": [int(i) + 1 for i in members if not self.obs_R[i]],
            "unobserved_T": [int(i) + 1 for i in members if not self.obs_T[i]],
            "observed_dyads": [[int(a) + 1, int(b) + 1] for a, b in zip(iu, ju)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationMask":
        n = int(d["n_members"])

        def flags(key):
            arr = np.ones(n, dtype=bool)
            arr[np.asarray(d.get(key, []), dtype=np.int64) - 1] = False
            return arr

        y = np.zeros((n, n), dtype=bool)
        for a, b in d.get("observed_dyads", []):
            y[a - 1, b - 1] = y[b - 1, a - 1] = True
        sampled = np.zeros(n, dtype=bool)
        sampled[np.asarray(d.get("sampled", []), dtype=np.int64) - 1] = True
        return cls(flags("unobserved_E"), flags("unobserved_I"), flags("unobserved_R"),
                   flags("unobserved_T"), y, sampled)


def _field_mask(n: int, observe: bool) -> np.ndarray:
    return np.full(n, bool(observe))


def _mask_from_sample(n, sampled, observe_exposure, observe_infectious, observe_removal,
                      observe_transmissions) -> ObservationMask:
    obs_y = np.zeros((n, n), dtype=bool)
    obs_y[sampled, :] = True
    obs_y[:, sampled] = True
    np.fill_diagonal(obs_y, False)
    flag = np.zeros(n, dtype=bool)
    flag[sampled] = True
    return ObservationMask(
        _field_mask(n, observe_exposure),
        _field_mask(n, observe_infectious),
        _field_mask(n, observe_removal),
        _field_mask(n, observe_transmissions),
        obs_y,
        flag,
    )


def ego_centric_mask(population_size: int, infected, n: int, rng: np.random.Generator, *,
                     observe_exposure: bool = False, observe_infectious: bool = True,
                     observe_removal: bool = True, observe_transmissions: bool = False) -> ObservationMask:
    """Simple random sample of ``n`` members; all dyads incident to a sampled member are observed.

    Epidemiological fields are observed or not for every infected member
    according to the ``observe_*`` flags.  ``infected`` is accepted for
    interface symmetry; the design never looks at it.
    """
    if not 0 <= n <= population_size:
        raise ValueError(f"sample size {n} outside [0, {population_size}]")
    sampled = np.sort(rng.choice(population_size, size=n, replace=False))
    return _mask_from_sample(population_size, sampled, observe_exposure, observe_infectious,
                             observe_removal, observe_transmissions)


def link_tracing_mask(network: ContactNetwork, infected, n0: int, k: int, rng: np.random.Generator,
                      **observe) -> ObservationMask:
    """k-wave link-tracing sample seeded by an ego-centric sample of size ``n0``.

    Wave ``l`` adds every contact of the members added in wave ``l - 1``.
    Only contacts of already-sampled members are consulted, and those are
    observed by construction.
    """
    n = network.n_members
    if not 0 <= n0 <= n:
        raise ValueError(f"initial sample size {n0} outside [0, {n}]")
    if k < 0:
        raise ValueError("number of waves must be non-negative")
    in_sample = np.zeros(n, dtype=bool)
    wave = rng.choice(n, size=n0, replace=False)
    in_sample[wave] = True
    adj = network.adjacency
    for _ in range(k):
        if wave.size == 0:
            break
        reached = adj[wave].any(axis=0) & ~in_sample
        wave = np.flatnonzero(reached)
        in_sample[wave] = True
    defaults = dict(observe_exposure=False, observe_infectious=True, observe_removal=True,
                    observe_transmissions=False)
    defaults.update(observe)
    return _mask_from_sample(n, np.flatnonzero(in_sample), **defaults)


def index_case_from_times(infected, exposure, infectious) -> int:
    """Index case: earliest exposure when all exposures are known, else earliest onset."""
    members = np.flatnonzero(infected)
    e = np.asarray(exposure, dtype=float)[members]
    key = e if np.all(np.isfinite(e)) else np.asarray(infectious, dtype=float)[members]
    if not np.all(np.isfinite(key)):
        raise ValueError("cannot identify the index case: onset times missing")
    return int(members[np.argmin(key)])


@dataclass
class TransmissionPrior:
    """Prior weights over who infected whom.

    ``allowed[i, j]`` says whether the prior puts any weight on ``i``
    infecting ``j`` before time windows are checked.  Normalised rows,
    restricted to candidates feasible at the times supplied on
    construction, live in ``phi``.
    """

    mode: str
    allowed: np.ndarray
    index_case: int
    phi: dict = field(default_factory=dict)
    demoted: list = field(default_factory=list)

    def probabilities(self, j: int, exposure_j: float, infectious, removal) -> np.ndarray:
        """Row for ``j`` re-normalised against the time window at ``exposure_j``."""
        w = self.allowed[:, j] & _window(exposure_j, infectious, removal)
        w[j] = False
        total = w.sum()
        if total == 0:
            return w.astype(float)
        return w / total


def _window(e_j, infectious, removal) -> np.ndarray:
    infectious = np.asarray(infectious, dtype=float)
    removal = np.where(np.isnan(removal), np.inf, removal)
    with np.errstate(invalid="ignore"):
        return (infectious < e_j) & (e_j < removal)


def _possible_window(j, exposure, infectious, removal) -> np.ndarray:
    """Candidates whose infectious period can contain ``E_j`` given what is observed."""
    e_j = exposure[j]
    if np.isfinite(e_j):
        return _window(e_j, infectious, removal)
    rem = np.where(np.isnan(removal), np.inf, removal)
    with np.errstate(invalid="ignore"):
        return (infectious < infectious[j]) & (infectious < rem)


def build_transmission_prior(mode: str, doctor_assessments: dict, infected, infectious, removal,
                             exposure=None, index_case: int | None = None) -> TransmissionPrior:
    """Prior probabilities that ``i`` infected ``j``.

    ``mode='doctor'`` puts all mass on the assessed infector where one is
    given and feasible; unassessed members, and members whose assessment is
    infeasible at the observed times, get a uniform row over feasible
    candidates.  ``mode='uniform'`` uses uniform rows everywhere.
    ``doctor_assessments`` maps 0-based ``j`` to 0-based ``i``.
    """
    if mode not in ("doctor", "uniform"):
        raise ValueError(f"unknown transmission prior mode {mode!r}")
    infected = np.asarray(infected, dtype=bool)
    n = infected.shape[0]
    infectious = np.asarray(infectious, dtype=float)
    removal = np.asarray(removal, dtype=float)
    exposure = np.full(n, np.nan) if exposure is None else np.asarray(exposure, dtype=float)
    for j in np.flatnonzero(infected):
        if np.isfinite(exposure[j]) and np.isfinite(infectious[j]) and not exposure[j] < infectious[j]:
            raise ValueError(f"member {j + 1}: exposure not before onset")
        if np.isfinite(removal[j]) and np.isfinite(infectious[j]) and not infectious[j] < removal[j]:
            raise ValueError(f"member {j + 1}: onset not before removal")

    if index_case is None:
        index_case = index_case_from_times(infected, exposure, infectious)
    allowed = np.zeros((n, n), dtype=bool)
    allowed[np.ix_(infected, infected)] = True
    np.fill_diagonal(allowed, False)

    prior = TransmissionPrior(mode=mode, allowed=allowed, index_case=index_case)
    for j in np.flatnonzero(infected):
        if j == index_case:
            allowed[:, j] = False
            continue
        feasible = _possible_window(j, exposure, infectious, removal) & allowed[:, j]
        src = doctor_assessments.get(int(j)) if mode == "doctor" else None
        if src is not None:
            if 0 <= src < n and feasible[src]:
                allowed[:, j] = False
                allowed[src, j] = True
                feasible = allowed[:, j].copy()
            else:
                prior.demoted.append(int(j))
                warnings.warn(f"assessed infector {src + 1} of member {j + 1} is infeasible; "
                              "using a uniform prior for this member", stacklevel=2)
        count = feasible.sum()
        prior.phi[int(j)] = feasible / count if count else feasible.astype(float)
    return prior


@dataclass
class MaskDiagnostics:
    """Findings of :func:`validate_mask`.

    ``hard`` lists probability-zero configurations, ``implied`` lists dyads
    that a known transmission reveals to be contacts, and ``missing`` counts
    unobserved quantities (only nonzero counts are kept).
    """

    hard: list = field(default_factory=list)
    implied: list = field(default_factory=list)
    missing: dict = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not (self.hard or self.implied or self.missing)

    def lines(self) -> list[str]:
        out = [f"error: {m}" for m in self.hard]
        out += [f"implied contact: members {i + 1} and {j + 1}" for i, j in self.implied]
        out += [f"missing {k}: {v}" for k, v in self.missing.items()]
        return out


def validate_mask(mask: ObservationMask, record: EpidemicRecord, network: ContactNetwork | None = None) -> MaskDiagnostics:
    """Cross-check a mask against (partially observed) data."""
    diag = MaskDiagnostics()
    n = mask.n_members
    if record.n_members != n or (network is not None and network.n_members != n):
        diag.hard.append("mask, record and network disagree on the population size")
        return diag
    inf = record.infected
    e = np.where(mask.obs_E & inf, record.exposure, np.nan)
    i_ = np.where(mask.obs_I & inf, record.infectious, np.nan)
    r = np.where(mask.obs_R & inf, record.removal, np.nan)
    for j in np.flatnonzero(inf):
        if np.isfinite(e[j]) and np.isfinite(i_[j]) and not e[j] < i_[j]:
            diag.hard.append(f"member {j + 1}: observed E >= I")
        if np.isfinite(i_[j]) and np.isfinite(r[j]) and not i_[j] < r[j]:
            diag.hard.append(f"member {j + 1}: observed I >= R")
        if np.isfinite(e[j]) and np.isfinite(r[j]) and not e[j] < r[j]:
            diag.hard.append(f"member {j + 1}: observed E >= R")
        src = record.infector[j]
        if not mask.obs_T[j] or src == INDEX_CASE:
            continue
        if src < 0 or not inf[src]:
            diag.hard.append(f"member {j + 1}: observed infector is not an infected member")
            continue
        if mask.obs_Y[src, j]:
            if network is not None and not network.has_edge(src, j):
                diag.hard.append(f"member {j + 1}: observed infector {src + 1} has no contact with them")
        else:
            diag.implied.append((int(min(src, j)), int(max(src, j))))
        lo, hi = i_[src], r[src]
        if np.isfinite(e[j]) and ((np.isfinite(lo) and not lo < e[j]) or (np.isfinite(hi) and not e[j] < hi)):
            diag.hard.append(f"member {j + 1}: exposure outside infector {src + 1}'s infectious period")

    counts = {
        "exposure times": int(np.sum(inf & ~mask.obs_E)),
        "infectious times": int(np.sum(inf & ~mask.obs_I)),
        "removal times": int(np.sum(inf & ~mask.obs_R)),
        "transmissions": int(np.sum(inf & ~mask.obs_T & (record.infector != INDEX_CASE))),
        "contacts": int(n * (n - 1) // 2 - mask.n_observed_dyads()),
    }
    diag.missing = {k: v for k, v in counts.items() if v}
    return diag
