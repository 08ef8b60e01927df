"""Population model: contact networks, the beta-model and truncated DP priors.

Members are 0-based internally; file formats and error messages use 1-based
labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "ContactNetwork",
    "DegreeParams",
    "MixtureState",
    "Hyperpriors",
    "softplus",
    "degrees",
    "contact_probability",
    "network_log_density",
    "sample_network",
    "expected_degree",
    "expected_degrees",
    "stick_breaking",
    "inverse_stick_breaking",
    "sample_truncated_dp",
    "materialize_theta",
]


def softplus(x):
    """Stable ``log(1 + exp(x))``, branch split at zero."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


class ContactNetwork:
    """Undirected, loop-free binary contact network over ``n_members`` members.

    Stored as a dense symmetric boolean adjacency matrix with an empty
    diagonal; the constructor enforces both properties so an invalid
    network cannot be built.
    """

    __slots__ = ("_adj",)

    def __init__(self, adjacency):
        adj = np.array(adjacency, dtype=bool, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ValueError("adjacency must be a non-empty square matrix")
        if adj.diagonal().any():
            raise ValueError("self-contacts are not allowed")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        adj.setflags(write=False)
        self._adj = adj

    @classmethod
    def empty(cls, n_members: int) -> "ContactNetwork":
        return cls(np.zeros((n_members, n_members), dtype=bool))

    @classmethod
    def from_edges(cls, n_members: int, edges) -> "ContactNetwork":
        adj = np.zeros((n_members, n_members), dtype=bool)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-contact at member {i + 1}")
            if not (0 <= i < n_members and 0 <= j < n_members):
                raise IndexError(f"edge ({i + 1}, {j + 1}) outside population of size {n_members}")
            adj[i, j] = adj[j, i] = True
        return cls(adj)

    @property
    def n_members(self) -> int:
        return self._adj.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        """Read-only view of the symmetric adjacency matrix."""
        return self._adj

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self._adj[i, j])

    def edges(self) -> np.ndarray:
        """Edges as an ``(E, 2)`` array of pairs ``i < j`` in row-major order."""
        iu, ju = np.nonzero(np.triu(self._adj, 1))
        return np.column_stack([iu, ju])

    @property
    def n_edges(self) -> int:
        return int(np.triu(self._adj, 1).sum())

    def with_edge(self, i: int, j: int, present: bool) -> "ContactNetwork":
        adj = self._adj.copy()
        adj[i, j] = adj[j, i] = bool(present)
        return ContactNetwork(adj)

    def permuted(self, perm) -> "ContactNetwork":
        """Relabel members so that new member ``perm[i]`` is old member ``i``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return ContactNetwork(self._adj[np.ix_(inv, inv)])

    def __eq__(self, other):
        return isinstance(other, ContactNetwork) and np.array_equal(self._adj, other._adj)

    def __hash__(self):
        return hash(self._adj.tobytes())

    def __repr__(self):
        return f"ContactNetwork(n_members={self.n_members}, n_edges={self.n_edges})"


@dataclass(frozen=True)
class DegreeParams:
    """Per-member degree parameters on the log-odds scale."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ValueError("degree parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return self.theta.shape[0]


@dataclass(frozen=True)
class Hyperpriors:
    """Hyperpriors of the truncated DP.

    ``alpha ~ Gamma(alpha_shape, rate=alpha_rate)``,
    ``mu ~ N(mean_loc, mean_var)`` and
    ``1/sigma2 ~ Gamma(prec_shape, rate=prec_rate)``.
    """

    alpha_shape: float = 5.0
    alpha_rate: float = 1.0
    mean_loc: float = 0.0
    mean_var: float = 1.0
    prec_shape: float = 1.0
    prec_rate: float = 10.0

    def __post_init__(self):
        for name in ("alpha_shape", "alpha_rate", "mean_var", "prec_shape", "prec_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not np.isfinite(self.mean_loc):
            raise ValueError("mean_loc must be finite")


@dataclass
class MixtureState:
    """State of the truncated Dirichlet-process mixture.

    ``assignments`` holds 0-based cluster labels.  ``proportions`` are
    always derived from ``sticks``.
    """

    sticks: np.ndarray
    assignments: np.ndarray
    atoms: np.ndarray
    concentration: float
    base_mean: float
    base_var: float
    proportions: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sticks = np.asarray(self.sticks, dtype=float)
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.sticks.shape != self.atoms.shape:
            raise ValueError("sticks and atoms must both have length K")
        if not self.concentration > 0 or not self.base_var > 0:
            raise ValueError("concentration and base_var must be positive")
        self.proportions = stick_breaking(self.sticks)

    @property
    def k_max(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_members(self) -> int:
        return self.assignments.shape[0]

    def cluster_counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k_max)

    def copy(self) -> "MixtureState":
        return MixtureState(self.sticks.copy(), self.assignments.copy(), self.atoms.copy(),
                            self.concentration, self.base_mean, self.base_var)


def degrees(network: ContactNetwork) -> np.ndarray:
    return network.adjacency.sum(axis=1).astype(np.int64)


def contact_probability(theta_i, theta_j):
    """Probability of a contact, ``logistic(theta_i + theta_j)``."""
    return expit(np.add(theta_i, theta_j))


def _as_theta(theta) -> np.ndarray:
    if isinstance(theta, DegreeParams):
        return theta.theta
    return np.asarray(theta, dtype=float)


def network_log_density(network: ContactNetwork, theta) -> float:
    """Log-probability of ``network`` under the beta-model with parameters ``theta``.

    Computed dyad by dyad as ``sum_{i<j} lam*y - softplus(lam)`` with
    ``lam = theta_i + theta_j``.
    """
    theta = _as_theta(theta)
    n = network.n_members
    if theta.shape != (n,):
        raise ValueError(f"theta has length {theta.shape[0]}, network has {n} members")
    iu, ju = np.triu_indices(n, 1)
    lam = theta[iu] + theta[ju]
    y = network.adjacency[iu, ju]
    return float(np.sum(lam * y - softplus(lam)))


def sample_network(theta, rng: np.random.Generator) -> ContactNetwork:
    """Draw every dyad independently with probability ``contact_probability``."""
    theta = _as_theta(theta)
    n = theta.shape[0]
    iu, ju = np.triu_indices(n, 1)
    p = expit(theta[iu] + theta[ju])
    draw = rng.random(iu.shape[0]) < p
    adj = np.zeros((n, n), dtype=bool)
    adj[iu, ju] = draw
    adj[ju, iu] = draw
    return ContactNetwork(adj)


def expected_degrees(theta) -> np.ndarray:
    """Expected degree of every member, ``sum_{j != i} logistic(theta_i + theta_j)``."""
    theta = _as_theta(theta)
    p = expit(theta[:, None] + theta[None, :])
    np.fill_diagonal(p, 0.0)
    return p.sum(axis=1)


def expected_degree(i: int, theta) -> float:
    theta = _as_theta(theta)
    n = theta.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"member {i + 1} outside population of size {n}")
    p = expit(theta[i] + theta)
    return float(p.sum() - p[i])


def stick_breaking(sticks) -> np.ndarray:
    """Mixing proportions ``pi_k = V_k prod_{j<k} (1 - V_j)``.

    The last stick must equal 1 so the proportions sum to one.
    """
    v = np.asarray(sticks, dtype=float)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError("sticks must be a non-empty vector")
    if v[-1] != 1.0:
        raise ValueError("last stick must equal 1 (truncation)")
    if np.any(v[:-1] <= 0.0) or np.any(v[:-1] > 1.0):
        raise ValueError("sticks must lie in (0, 1]")
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    return v * remaining


def inverse_stick_breaking(proportions) -> np.ndarray:
    """Sticks reproducing ``proportions``; exact inverse of :func:`stick_breaking` up to rounding."""
    pi = np.asarray(proportions, dtype=float)
    left = 1.0 - np.concatenate([[0.0], np.cumsum(pi[:-1])])
    v = np.empty_like(pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        v[:-1] = np.where(left[:-1] > 0, pi[:-1] / left[:-1], 1.0)
    v[:-1] = np.clip(v[:-1], np.finfo(float).tiny, 1.0)
    v[-1] = 1.0
    return v


def sample_truncated_dp(alpha: float, mu: float, sigma2: float, k: int, rng: np.random.Generator):
    """Draw ``(atoms, proportions)`` from a DP truncated at ``k`` atoms.

    Atoms are iid ``N(mu, sigma2)``; sticks are iid ``Beta(1, alpha)`` with the
    last stick set to one.
    """
    if not alpha > 0 or not sigma2 > 0 or k < 1:
        raise ValueError("need alpha > 0, sigma2 > 0 and k >= 1")
    atoms = rng.normal(mu, np.sqrt(sigma2), size=k)
    sticks = np.ones(k)
    if k > 1:
        sticks[:-1] = rng.beta(1.0, alpha, size=k - 1)
        # Beta(1, alpha) can round to exactly 0 for large alpha.
        sticks[:-1] = np.maximum(sticks[:-1], np.finfo(float).tiny)
    return atoms, stick_breaking(sticks)


def materialize_theta(state: MixtureState) -> DegreeParams:
    z = state.assignments
    if z.size and (z.min() < 0 or z.max() >= state.k_max):
        bad = int(z[(z < 0) | (z >= state.k_max)][0])
        raise IndexError(f"cluster label {bad + 1} outside 1..{state.k_max}")
    return DegreeParams(state.atoms[z])
