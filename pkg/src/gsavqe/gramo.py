"""Non-dominated ranking on (cost, normalized gradient magnitude).

``a`` dominates ``b`` when ``a.cost < b.cost`` and ``a.grad_mag >= b.grad_mag``.
Lower cost is better, larger gradient is better; equal costs never dominate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence

import numpy as np


@dataclass
class ScoredAnsatz:
    path: Any
    params: np.ndarray
    cost: float
    grad_mag: float
    grad: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.cost):
            raise ValueError("cost must be finite")
        if self.grad_mag < 0:
            raise ValueError("grad_mag must be non-negative")


def dominates(a, b) -> bool:
    return a.cost < b.cost and a.grad_mag >= b.grad_mag


@dataclass
class RankedFronts:
    fronts: List[List[int]]
    unranked: List[int]

    def rank_of(self, i):
        for k, front in enumerate(self.fronts):
            if i in front:
                return k + 1
        return None

    def top(self, k) -> List[int]:
        """Indices in the union of the first ``k`` fronts, in front order."""
        return [i for front in self.fronts[:k] for i in front]


def rank_fronts(population: Sequence, max_rank: Optional[int] = None) -> RankedFronts:
    """Peel non-dominated fronts; fronts hold population indices in input order.

    Sorting by cost makes each peel a single sweep: within a front candidate
    list, ``i`` is dominated iff some strictly cheaper remaining member has a
    gradient at least as large.
    """
    if not population:
        raise ValueError("population must be non-empty")
    cost = np.array([p.cost for p in population], dtype=float)
    grad = np.array([p.grad_mag for p in population], dtype=float)
    remaining = sorted(range(len(population)), key=lambda i: (cost[i], i))
    fronts: List[List[int]] = []
    limit = len(population) if max_rank is None else max_rank
    while remaining and len(fronts) < limit:
        front, rest = [], []
        best_grad = -np.inf  # max gradient among strictly cheaper members
        k = 0
        while k < len(remaining):
            j = k
            c = cost[remaining[k]]
            while j < len(remaining) and cost[remaining[j]] == c:
                j += 1
            group = remaining[k:j]
            for i in group:
                (rest if grad[i] <= best_grad else front).append(i)
            best_grad = max(best_grad, max(grad[i] for i in group))
            k = j
        fronts.append(sorted(front))
        remaining = rest
    return RankedFronts(fronts, sorted(remaining))


def brute_force_fronts(population: Sequence, max_rank: Optional[int] = None):
    """Quadratic reference peeling, used as a test oracle."""
    left = list(range(len(population)))
    fronts = []
    limit = len(population) if max_rank is None else max_rank
    while left and len(fronts) < limit:
        front = [i for i in left
                 if not any(dominates(population[j], population[i]) for j in left)]
        fronts.append(front)
        left = [i for i in left if i not in front]
    return fronts, left
