"""Ground-set partitions, feasible subsets, and instrumented set functions.

Element ids are global 0-based integers.  A :class:`Partition` owns the
element -> community lookup table built at construction, so feasibility
checks and indicator arithmetic are O(1) per element.

Set functions are wrapped in :class:`SetFunctionHandle`, which counts every
evaluation.  The handle's native representation of a subset is a boolean
membership mask of length ``n``; solvers and estimators submit batches of
masks so that vectorised objectives (coverage, facility location, ...) can
amortise their work.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Partition",
    "Subset",
    "SetFunctionHandle",
    "WeakRatioEstimate",
    "StateSpaceError",
    "ProtocolError",
    "feasibility_check",
    "estimate_weak_ratios",
    "normalize_empty",
    "check_monotone_samples",
]


class StateSpaceError(RuntimeError):
    """An exact oracle would enumerate more outcomes than its cap allows."""


class ProtocolError(RuntimeError):
    """An online-protocol step was taken out of order."""


class Partition:
    """Disjoint communities covering {0, ..., n-1} with per-community budgets.

    Parameters
    ----------
    communities : sequence of K element-id sequences
    budgets : sequence of K positive ints, budget k at most the community size
    """

    def __init__(self, communities: Sequence[Sequence[int]], budgets: Sequence[int]):
        if len(communities) != len(budgets):
            raise ValueError("communities and budgets must have equal length")
        if not communities:
            raise ValueError("partition needs at least one community")
        self.communities = tuple(
            np.asarray(sorted(c), dtype=np.int64) for c in communities
        )
        self.budgets = np.asarray(budgets, dtype=np.int64)
        sizes = np.array([c.size for c in self.communities])
        if np.any(sizes == 0):
            raise ValueError("empty community")
        if np.any(self.budgets < 1) or np.any(self.budgets > sizes):
            raise ValueError("budgets must satisfy 1 <= B_k <= |community k|")

        self.K = len(self.communities)
        self.n = int(sizes.sum())
        all_ids = np.concatenate(self.communities)
        if np.unique(all_ids).size != self.n or all_ids.min() != 0 or all_ids.max() != self.n - 1:
            raise ValueError("communities must be disjoint and cover 0..n-1 exactly")

        self.rank = int(self.budgets.sum())
        self.max_budget = int(self.budgets.max())
        self.community_of = np.empty(self.n, dtype=np.int64)
        for k, comm in enumerate(self.communities):
            self.community_of[comm] = k
        # draw slots: community k owns slots slot_offsets[k]:slot_offsets[k+1]
        self.slot_offsets = np.concatenate(([0], np.cumsum(self.budgets)))
        self.slot_community = np.repeat(np.arange(self.K), self.budgets)

    def community_sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.communities], dtype=np.int64)

    def __repr__(self) -> str:
        return f"Partition(K={self.K}, n={self.n}, rank={self.rank})"


@dataclass(frozen=True)
class Subset:
    """A strictly increasing tuple of element ids."""

    elements: tuple[int, ...]

    def __post_init__(self):
        elems = self.elements
        if any(elems[i] >= elems[i + 1] for i in range(len(elems) - 1)):
            raise ValueError("subset elements must be strictly increasing")

    @classmethod
    def from_iterable(cls, ids: Iterable[int]) -> "Subset":
        """Build a subset from any iterable; duplicates collapse."""
        return cls(tuple(sorted(set(int(i) for i in ids))))

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        if self.elements:
            m[list(self.elements)] = True
        return m

    def feasible(self, partition: Partition) -> bool:
        return feasibility_check(partition, self)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, v) -> bool:
        return v in self.elements


def _as_id_array(subset, n: int) -> np.ndarray:
    ids = np.asarray(list(subset), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValueError(f"element id out of range [0, {n})")
    return ids


def feasibility_check(partition: Partition, subset) -> bool:
    """True iff |S ∩ community_k| <= budget_k for every k."""
    ids = _as_id_array(subset, partition.n)
    if np.unique(ids).size != ids.size:
        raise ValueError("subset contains duplicate elements")
    counts = np.bincount(partition.community_of[ids], minlength=partition.K)
    return bool(np.all(counts <= partition.budgets))


class SetFunctionHandle:
    """An evaluable, query-counted, nonnegative set objective.

    ``batch_evaluator`` maps a boolean membership matrix of shape (B, n) to
    a float array of shape (B,).  It must be pure; the query counter is the
    only mutable state and is guarded by a lock so concurrent workers can
    share one handle.
    """

    def __init__(
        self,
        n: int,
        batch_evaluator: Callable[[np.ndarray], np.ndarray],
        monotone: bool = False,
        name: str = "f",
    ):
        self.n = int(n)
        self._batch = batch_evaluator
        self.monotone = bool(monotone)
        self.name = name
        self._lock = threading.Lock()
        self._queries = 0

    @classmethod
    def from_scalar(
        cls,
        n: int,
        fn: Callable[[frozenset], float],
        monotone: bool = False,
        name: str = "f",
    ) -> "SetFunctionHandle":
        """Wrap a plain ``subset -> value`` callable (evaluated row by row)."""

        def batch(masks: np.ndarray) -> np.ndarray:
            return np.array(
                [fn(frozenset(np.flatnonzero(row).tolist())) for row in masks],
                dtype=float,
            )

        return cls(n, batch, monotone=monotone, name=name)

    @property
    def query_count(self) -> int:
        return self._queries

    def _tally(self, k: int) -> None:
        with self._lock:
            self._queries += k

    def mask_of(self, subset) -> np.ndarray:
        ids = _as_id_array(subset, self.n)
        m = np.zeros(self.n, dtype=bool)
        m[ids] = True
        return m

    def evaluate(self, subset) -> float:
        """f(subset); one query."""
        mask = self.mask_of(subset)
        val = float(np.asarray(self._batch(mask[None, :]))[0])
        self._tally(1)
        return val

    def evaluate_masks(self, masks: np.ndarray) -> np.ndarray:
        """f on each row of a (B, n) membership matrix; B queries."""
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim != 2 or masks.shape[1] != self.n:
            raise ValueError(f"mask batch must have shape (B, {self.n})")
        vals = np.asarray(self._batch(masks), dtype=float)
        self._tally(masks.shape[0])
        return vals

    def marginal(self, v: int, subset) -> float:
        """f(subset ∪ {v}) - f(subset); two queries."""
        mask = self.mask_of(subset)
        if not 0 <= v < self.n:
            raise ValueError(f"element id out of range [0, {self.n})")
        if mask[v]:
            raise ValueError(f"element {v} already in subset")
        with_v = mask.copy()
        with_v[v] = True
        vals = self.evaluate_masks(np.stack([mask, with_v]))
        return float(vals[1] - vals[0])


def normalize_empty(handle: SetFunctionHandle) -> SetFunctionHandle:
    """Shifted objective g(S) = f(S) - f(∅), so g(∅) = 0 exactly.

    f(∅) is evaluated once on the wrapped handle (counted there); afterwards
    the wrapper keeps its own independent query counter.
    """
    base = handle.evaluate(())
    inner = handle._batch

    def batch(masks: np.ndarray) -> np.ndarray:
        return np.asarray(inner(masks), dtype=float) - base

    return SetFunctionHandle(
        handle.n, batch, monotone=handle.monotone, name=f"{handle.name}-f0"
    )


def check_monotone_samples(
    handle: SetFunctionHandle,
    samples: int,
    rng: np.random.Generator,
    tol: float = 1e-12,
) -> bool:
    """Spot-check f(A) <= f(B) + tol on random nested pairs A ⊆ B."""
    n = handle.n
    for _ in range(samples):
        b = rng.random(n) < rng.uniform(0.2, 0.9)
        a = b & (rng.random(n) < rng.uniform(0.0, 1.0))
        va, vb = handle.evaluate_masks(np.stack([a, b]))
        if va > vb + tol:
            return False
    return True


@dataclass(frozen=True)
class WeakRatioEstimate:
    """Empirical submodularity-ratio diagnostics.

    ``alpha`` and ``gamma`` are optimistic (upper) bounds clamped to (0, 1],
    ``beta`` is a lower bound clamped to [1, inf).  Exact ratios are
    exponentially hard, so solvers that need them take explicit config.
    """

    alpha: float
    gamma: float
    beta: float
    dr_pairs: int
    chain_pairs: int


def estimate_weak_ratios(
    handle: SetFunctionHandle,
    partition: Partition,
    samples: int,
    rng: np.random.Generator,
    tol: float = 1e-12,
) -> WeakRatioEstimate:
    """Sample chains A ⊆ B and elements v, and report the extreme ratios.

    Degenerate 0/0 ratios are skipped.  The diminishing-return ratio uses
    f(v|A)/f(v|B) for v ∉ B; the from-below/from-above ratios compare summed
    singleton gains against f(B) - f(A).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = handle.n
    alpha_min = np.inf
    gamma_min = np.inf
    beta_max = -np.inf
    dr_pairs = 0
    chain_pairs = 0
    for _ in range(samples):
        b = rng.random(n) < rng.uniform(0.2, 0.9)
        a = b & (rng.random(n) < rng.random())
        outside = np.flatnonzero(~b)
        if outside.size:
            v = int(rng.choice(outside))
            av = a.copy()
            av[v] = True
            bv = b.copy()
            bv[v] = True
            fa, fav, fb, fbv = handle.evaluate_masks(np.stack([a, av, b, bv]))
            g_a, g_b = fav - fa, fbv - fb
            if abs(g_b) > tol:
                alpha_min = min(alpha_min, g_a / g_b)
                dr_pairs += 1
        diff = np.flatnonzero(b & ~a)
        if diff.size:
            fa, fb = handle.evaluate_masks(np.stack([a, b]))
            gap = fb - fa
            if abs(gap) > tol:
                below = 0.0
                above = 0.0
                rows = []
                for v in diff:
                    av = a.copy()
                    av[v] = True
                    bm = b.copy()
                    bm[v] = False
                    rows.extend([av, bm])
                vals = handle.evaluate_masks(np.stack(rows))
                for i, v in enumerate(diff):
                    below += vals[2 * i] - fa
                    above += fb - vals[2 * i + 1]
                gamma_min = min(gamma_min, below / gap)
                beta_max = max(beta_max, above / gap)
                chain_pairs += 1
    alpha = 1.0 if not np.isfinite(alpha_min) else min(1.0, alpha_min)
    gamma = 1.0 if not np.isfinite(gamma_min) else min(1.0, gamma_min)
    beta = 1.0 if not np.isfinite(beta_max) else max(1.0, beta_max)
    return WeakRatioEstimate(alpha, gamma, beta, dr_pairs, chain_pairs)
