"""Diversity-driven grouping of agents and proportional budget allocation.

Agents are summarized by the mean and variance of their idle time to
absorption.  A linear sum assignment on the negated feature-distance matrix
pairs maximally dissimilar agents; sorting pairs by their distance and
dealing the matched partners round-robin yields groups with comparable
mixes of slow- and fast-failing agents, one group per repair slot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .agents import TtaStats
from .errors import DomainError

# Forbids self-pairing in the assignment without branching on matrix values.
DIAGONAL_SENTINEL = 1e18


def distance_matrix(stats: list[TtaStats]) -> np.ndarray:
    """Pairwise Euclidean distance between (TTA mean, TTA variance) features."""
    if len(stats) < 1:
        raise DomainError("need at least one agent")
    feats = np.array([[s.mean, s.variance] for s in stats])
    diff = feats[:, None, :] - feats[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def solve_lsap(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimize the total cost of a one-to-one assignment.

    Returns the optimal permutation (row i assigned to column perm[i]) and
    its total cost.  Uses the shortest-augmenting-path solver from scipy.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return np.array([], dtype=int), 0.0
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DomainError("cost matrix must be square")
    row, col = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[row] = col
    return perm, float(cost[row, col].sum())


@dataclass
class PartitionSpec:
    """Group membership plus per-group budgets.

    ``groups[q]`` holds original agent indices; ``budgets[q]`` the repair
    units allotted to that group.  ``pair_scores`` and ``permutation`` are
    retained from assignment-based builds for diagnostics (None otherwise).
    """

    groups: list[np.ndarray]
    budgets: np.ndarray
    pair_scores: np.ndarray | None = None
    permutation: np.ndarray | None = None

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    @property
    def num_agents(self) -> int:
        return sum(len(g) for g in self.groups)

    def validate(self, n: int, total_budget: int) -> None:
        """Raise if the spec is not a balanced exact partition of 0..n-1."""
        all_ids = np.concatenate([np.asarray(g) for g in self.groups]) if self.groups else np.array([])
        if sorted(all_ids.tolist()) != list(range(n)):
            raise DomainError("groups must partition the agent set exactly")
        sizes = [len(g) for g in self.groups]
        if max(sizes) - min(sizes) > 1:
            raise DomainError("group sizes must differ by at most one")
        if int(np.sum(self.budgets)) != int(total_budget):
            raise DomainError("group budgets must sum to the global budget")


def allocate_budget(total: int, sizes) -> np.ndarray:
    """Split a budget across groups in proportion to group size.

    Each group gets floor(total * size / n); leftover units are dealt one
    per group in descending size order, ties broken by group index.
    """
    sizes = np.asarray(sizes, dtype=int)
    if total < 0 or np.any(sizes <= 0):
        raise DomainError("budget must be nonnegative and sizes positive")
    n = int(sizes.sum())
    shares = (total * sizes) // n
    remainder = total - int(shares.sum())
    order = np.lexsort((np.arange(len(sizes)), -sizes))
    shares[order[:remainder]] += 1
    return shares


def _score_sorted_order(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices sorted by descending score, ties broken uniformly at random."""
    return np.lexsort((rng.random(scores.shape[0]), -scores))


def build_partition(d: np.ndarray, r: int, total_budget: int, rng: np.random.Generator) -> PartitionSpec:
    """Assignment-based grouping: pair dissimilar agents, deal partners round-robin.

    The assignment runs on the negated distance matrix with the diagonal
    forbidden, so each agent is matched to a maximally distant partner.
    Pairs are ranked by their distance and the *matched partner* of each
    pair is dealt into the r groups in round-robin order.
    """
    n = d.shape[0]
    if not 1 <= r <= n:
        raise DomainError(f"capacity r={r} must satisfy 1 <= r <= n={n}")
    cost = -d.astype(float)
    np.fill_diagonal(cost, DIAGONAL_SENTINEL)
    perm, _ = solve_lsap(cost)
    scores = d[np.arange(n), perm]
    order = _score_sorted_order(scores, rng)
    groups = [perm[order[k::r]].copy() for k in range(r)]
    budgets = allocate_budget(total_budget, [len(g) for g in groups])
    return PartitionSpec(groups=groups, budgets=budgets, pair_scores=scores, permutation=perm)


def build_partition_pair_rr(
    d: np.ndarray, r: int, total_budget: int, rng: np.random.Generator
) -> PartitionSpec:
    """Variant that deals whole matched pairs round-robin instead of partners.

    Agents already placed (the assignment contains 2-cycles) are skipped.
    Groups are then rebalanced by moving the most recently added agents from
    the largest group to the smallest until sizes differ by at most one.
    """
    n = d.shape[0]
    if not 1 <= r <= n:
        raise DomainError(f"capacity r={r} must satisfy 1 <= r <= n={n}")
    cost = -d.astype(float)
    np.fill_diagonal(cost, DIAGONAL_SENTINEL)
    perm, _ = solve_lsap(cost)
    scores = d[np.arange(n), perm]
    order = _score_sorted_order(scores, rng)
    groups: list[list[int]] = [[] for _ in range(r)]
    placed = set()
    dealt = 0
    for idx in order:
        members = [int(idx), int(perm[idx])]
        fresh = [a for a in members if a not in placed]
        if not fresh:
            continue
        groups[dealt % r].extend(fresh)
        placed.update(fresh)
        dealt += 1
    while True:
        sizes = [len(g) for g in groups]
        big, small = int(np.argmax(sizes)), int(np.argmin(sizes))
        if sizes[big] - sizes[small] <= 1:
            break
        groups[small].append(groups[big].pop())
    arrays = [np.array(g, dtype=int) for g in groups]
    budgets = allocate_budget(total_budget, [len(g) for g in arrays])
    return PartitionSpec(groups=arrays, budgets=budgets, pair_scores=scores, permutation=perm)


def random_partition(n: int, r: int, total_budget: int, rng: np.random.Generator) -> PartitionSpec:
    """Balanced uniform-random grouping with proportional budgets."""
    if not 1 <= r <= n:
        raise DomainError(f"capacity r={r} must satisfy 1 <= r <= n={n}")
    shuffled = rng.permutation(n)
    groups = [shuffled[k::r].copy() for k in range(r)]
    budgets = allocate_budget(total_budget, [len(g) for g in groups])
    return PartitionSpec(groups=groups, budgets=budgets)


def diversity_score(spec: PartitionSpec, d: np.ndarray) -> float:
    """Average in-group pairwise distance, averaged over groups.

    Each group contributes the mean distance over its unordered member
    pairs; singleton groups contribute zero.
    """
    total = 0.0
    for g in spec.groups:
        m = len(g)
        if m < 2:
            continue
        sub = d[np.ix_(g, g)]
        total += sub.sum() / (m * (m - 1))
    return total / spec.num_groups


PARTITION_FILE_VERSION = 1


def save_partition(path, spec: PartitionSpec) -> None:
    payload = {
        "version": PARTITION_FILE_VERSION,
        "groups": [g.tolist() for g in spec.groups],
        "budgets": np.asarray(spec.budgets).tolist(),
        "pair_scores": None if spec.pair_scores is None else spec.pair_scores.tolist(),
        "permutation": None if spec.permutation is None else spec.permutation.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_partition(path) -> PartitionSpec:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != PARTITION_FILE_VERSION:
        raise DomainError(f"unsupported partition file version {payload.get('version')!r}")
    return PartitionSpec(
        groups=[np.array(g, dtype=int) for g in payload["groups"]],
        budgets=np.array(payload["budgets"], dtype=int),
        pair_scores=None if payload["pair_scores"] is None else np.array(payload["pair_scores"]),
        permutation=None if payload["permutation"] is None else np.array(payload["permutation"], dtype=int),
    )
