"""The observed-data bundle consumed by the sampler."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .epidemic import INDEX_CASE, NOT_INFECTED, UNKNOWN_INFECTOR, EpidemicRecord
from .model import ContactNetwork
from .observation import ObservationMask, index_case_from_times

__all__ = ["ObservedData"]


@dataclass(frozen=True)
class ObservedData:
    """Everything the sampler is allowed to see.

    Unobserved times are NaN, unobserved sources are ``UNKNOWN_INFECTOR`` and
    unobserved dyads are stored as absent; ``mask`` says which entries are
    real observations.  ``assessments`` maps 0-based members to the 0-based
    infector named by an external assessment (used only as a prior).
    """

    record: EpidemicRecord
    network: ContactNetwork
    mask: ObservationMask
    assessments: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.mask.n_members
        if self.record.n_members != n or self.network.n_members != n:
            raise ValueError("record, network and mask disagree on the population size")

    @classmethod
    def from_complete(cls, record: EpidemicRecord, network: ContactNetwork, mask: ObservationMask,
                      assessments: dict | None = None) -> "ObservedData":
        """Hide every entry the mask marks as unobserved."""
        inf = record.infected
        e = np.where(inf & mask.obs_E, record.exposure, np.nan)
        i_ = np.where(inf & mask.obs_I, record.infectious, np.nan)
        r = np.where(inf & mask.obs_R, record.removal, np.nan)
        index = index_case_from_times(inf, e, i_) if np.all(np.isfinite(i_[inf])) else record.index_case
        infector = np.full(record.n_members, NOT_INFECTED, dtype=np.int64)
        infector[inf] = np.where(mask.obs_T[inf], record.infector[inf], UNKNOWN_INFECTOR)
        infector[index] = INDEX_CASE
        adj = network.adjacency & mask.obs_Y
        return cls(EpidemicRecord(e, i_, r, infector), ContactNetwork(adj), mask, dict(assessments or {}))

    @property
    def n_members(self) -> int:
        return self.mask.n_members

    @property
    def infected(self) -> np.ndarray:
        return self.record.infected

    @property
    def index_case(self) -> int:
        return self.record.index_case

    def latent_counts(self) -> dict:
        inf = self.infected
        return {
            "E": int(np.sum(inf & ~self.mask.obs_E)),
            "I": int(np.sum(inf & ~self.mask.obs_I)),
            "R": int(np.sum(inf & ~self.mask.obs_R)),
            "T": int(np.sum(self.record.infector == UNKNOWN_INFECTOR)),
        }
