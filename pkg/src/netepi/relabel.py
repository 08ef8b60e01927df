"""Post-hoc correction of label switching in mixture draws.

Each draw's labels are permuted to minimise the squared distance between
its one-hot classification matrix and a running reference matrix of
classification probabilities; the reference is then recomputed from the
permuted labels, and the two steps alternate until no permutation changes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import MixtureState, inverse_stick_breaking

__all__ = ["RelabelReport", "relabel", "relabel_assignments", "permute_mixture"]

_ENUMERATE_UP_TO = 6
MAX_OUTER_ITERATIONS = 100


@dataclass
class RelabelReport:
    """``permutations[t, l]`` is the new (0-based) label of old label ``l`` in draw ``t``."""

    permutations: np.ndarray
    loss_trajectory: list
    converged: bool
    reference_probabilities: np.ndarray

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "permutations": (self.permutations + 1).tolist(),
            "loss_trajectory": [float(v) for v in self.loss_trajectory],
            "converged": bool(self.converged),
            "reference_probabilities": self.reference_probabilities.tolist(),
        }


def _classification(labels: np.ndarray, k: int) -> np.ndarray:
    """Mean one-hot classification matrix (N x K) of a (T x N) label array."""
    t, n = labels.shape
    p = np.zeros((n, k))
    for col in range(k):
        p[:, col] = np.sum(labels == col, axis=0)
    return p / t


def _loss(labels: np.ndarray, p: np.ndarray) -> float:
    # sum over draws of ||onehot(Z_t) - P||^2
    t = labels.shape[0]
    picked = np.take_along_axis(np.broadcast_to(p, (t,) + p.shape), labels[:, :, None], axis=2)[:, :, 0]
    return float(t * np.sum(p ** 2) - 2.0 * picked.sum() + labels.size)


def _cost_matrix(z: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``C[l, k] = -sum_{i: z_i = l} P[i, k]``: cost of sending old label ``l`` to ``k``."""
    k = p.shape[1]
    c = np.zeros((k, k))
    np.add.at(c, z, -p)
    return c


class _Solver:
    def __init__(self, k: int):
        self.k = k
        if k <= _ENUMERATE_UP_TO:
            # lexicographic order, so argmin picks the smallest permutation among ties
            self.perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
        else:
            self.perms = None

    def best(self, cost: np.ndarray) -> np.ndarray:
        if self.perms is not None:
            totals = cost[np.arange(self.k), self.perms].sum(axis=1)
            return self.perms[int(np.argmin(totals))]
        _, cols = linear_sum_assignment(cost)
        return cols.astype(np.int64)


def relabel_assignments(labels, k: int, max_iterations: int = MAX_OUTER_ITERATIONS):
    """Core alternation on a (T x N) array of 0-based labels.

    Returns ``(permutations, loss_trajectory, converged, reference)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 2:
        raise ValueError("labels must be a (draws x members) array")
    n_draws = labels.shape[0]
    perms = np.tile(np.arange(k, dtype=np.int64), (n_draws, 1))
    if n_draws == 0:
        return perms, [], True, np.zeros((labels.shape[1], k))
    solver = _Solver(k)
    losses = []
    converged = False
    current = labels
    for _ in range(max_iterations):
        p = _classification(current, k)
        new = np.stack([solver.best(_cost_matrix(labels[t], p)) for t in range(n_draws)])
        current = np.take_along_axis(new, labels, axis=1)
        losses.append(_loss(current, p))
        if np.array_equal(new, perms):
            converged = True
            break
        perms = new
    return perms, losses, converged, _classification(current, k)


def permute_mixture(mixture: MixtureState, perm) -> MixtureState:
    """Send old label ``l`` to ``perm[l]``; the sticks are rebuilt from the permuted proportions."""
    perm = np.asarray(perm, dtype=np.int64)
    atoms = np.empty_like(mixture.atoms)
    atoms[perm] = mixture.atoms
    pi = np.empty_like(mixture.proportions)
    pi[perm] = mixture.proportions
    if np.array_equal(perm, np.arange(perm.shape[0])):
        sticks = mixture.sticks.copy()
    else:
        sticks = inverse_stick_breaking(pi)
    return MixtureState(sticks, perm[mixture.assignments], atoms, mixture.concentration,
                        mixture.base_mean, mixture.base_var)


def relabel(draws, max_iterations: int = MAX_OUTER_ITERATIONS):
    """Relabel a sequence of chain draws; returns ``(new_draws, RelabelReport)``.

    Only the mixture part of each draw changes.  ``theta`` and the stored
    log-posterior are carried over unchanged.
    """
    draws = list(draws)
    if not draws:
        return [], RelabelReport(np.zeros((0, 0), dtype=np.int64), [], True, np.zeros((0, 0)))
    ks = {d.mixture.k_max for d in draws}
    ns = {d.mixture.n_members for d in draws}
    if len(ks) != 1 or len(ns) != 1:
        raise ValueError("all draws must share K and N")
    k = ks.pop()
    labels = np.stack([d.mixture.assignments for d in draws])
    perms, losses, converged, reference = relabel_assignments(labels, k, max_iterations)
    out = [replace(d, mixture=permute_mixture(d.mixture, perms[t])) for t, d in enumerate(draws)]
    return out, RelabelReport(perms, losses, converged, reference)
