"""Network SEIR epidemics with a truncated Dirichlet-process beta-model for contacts.

Simulation, partial observation, posterior sampling by data augmentation,
label-switching correction and posterior-predictive checks.
"""

__version__ = "0.1.0"

from .data import ObservedData
from .epidemic import EpidemicParams, EpidemicRecord, exposure_statistic, max_infectious, simulate_epidemic
from .mcmc import ChainConfig, ChainDraw, ChainOutput, EtaPriors, ProposalScales, run_chain
from .model import ContactNetwork, DegreeParams, Hyperpriors, MixtureState, sample_network
from .observation import ObservationMask, ego_centric_mask, link_tracing_mask
from .relabel import relabel

__all__ = [
    "ChainConfig",
    "ChainDraw",
    "ChainOutput",
    "ContactNetwork",
    "DegreeParams",
    "EpidemicParams",
    "EpidemicRecord",
    "EtaPriors",
    "Hyperpriors",
    "MixtureState",
    "ObservationMask",
    "ObservedData",
    "ProposalScales",
    "ego_centric_mask",
    "exposure_statistic",
    "link_tracing_mask",
    "max_infectious",
    "relabel",
    "run_chain",
    "sample_network",
    "simulate_epidemic",
]
