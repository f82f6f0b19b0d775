"""Geometry of the product-of-simplexes domain.

A point lives in the product over communities k of the scaled simplex
{p >= 0, sum(p) <= 1}.  Points and gradients are flat float arrays of
length n indexed by global element id; the Partition supplies the block
structure.  Everything here is pure, so concurrent use is safe.

Tie-breaking is by lowest element id throughout, which keeps every
operation deterministic and testable.
"""

from __future__ import annotations

import numpy as np

from .core import Partition, Subset, feasibility_check

__all__ = [
    "check_point",
    "project",
    "simplex_project_block",
    "scaled_indicator",
    "linear_argmax_subset",
    "linear_max_over_domain",
    "convex_step",
    "uniform_point",
    "zero_point",
]

BLOCK_SUM_TOL = 1e-9


def zero_point(partition: Partition) -> np.ndarray:
    return np.zeros(partition.n)


def uniform_point(partition: Partition) -> np.ndarray:
    """The point with mass 1/n_k on every element of community k."""
    x = np.empty(partition.n)
    for comm in partition.communities:
        x[comm] = 1.0 / comm.size
    return x


def check_point(x: np.ndarray, partition: Partition, tol: float = BLOCK_SUM_TOL) -> None:
    """Raise ValueError unless x is (numerically) inside the domain."""
    x = np.asarray(x, dtype=float)
    if x.shape != (partition.n,):
        raise ValueError(f"point must have shape ({partition.n},)")
    if np.any(x < -tol):
        raise ValueError("point has a negative coordinate")
    for comm in partition.communities:
        if x[comm].sum() > 1.0 + tol:
            raise ValueError("block probability mass exceeds 1")


def simplex_project_block(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a block onto {x >= 0, sum(x) = 1}.

    Sort-and-threshold rule: with u the coordinates sorted descending,
    rho = max{j : u_j + (1 - sum_{i<=j} u_i)/j > 0} and the shift is
    (1 - sum_{i<=rho} u_i)/rho.
    """
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    rho = np.nonzero(u + (1.0 - css) / j > 0)[0][-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + theta, 0.0)


def project(y: np.ndarray, partition: Partition) -> np.ndarray:
    """Blockwise Euclidean projection onto the product domain.

    Per block: clip negatives; if the clipped mass is at most 1 the
    inequality constraint is inactive (KKT), otherwise project onto the
    unit-sum simplex.  Idempotent and nonexpansive.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (partition.n,):
        raise ValueError(f"layout mismatch: expected shape ({partition.n},)")
    x = np.empty_like(y)
    for comm in partition.communities:
        block = y[comm]
        clipped = np.maximum(block, 0.0)
        if clipped.sum() <= 1.0:
            x[comm] = clipped
        else:
            x[comm] = simplex_project_block(block)
    return x


def scaled_indicator(subset, partition: Partition) -> np.ndarray:
    """The point with coordinate 1/B_k on each selected element of community k."""
    if not feasibility_check(partition, subset):
        raise ValueError("subset is infeasible for the partition")
    x = np.zeros(partition.n)
    ids = np.asarray(list(subset), dtype=np.int64)
    if ids.size:
        x[ids] = 1.0 / partition.budgets[partition.community_of[ids]]
    return x


def linear_argmax_subset(weights: np.ndarray, partition: Partition) -> tuple[Subset, float]:
    """Feasible subset maximizing <weights, scaled_indicator(S)>.

    Per community, selects up to B_k elements with the largest strictly
    positive weights (nonpositive weights are excluded since the budget is
    an upper bound; ties go to the lowest element id).
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (partition.n,):
        raise ValueError(f"layout mismatch: expected shape ({partition.n},)")
    chosen: list[int] = []
    value = 0.0
    for k, comm in enumerate(partition.communities):
        w = weights[comm]
        order = np.lexsort((comm, -w))  # descending weight, then lowest id
        for idx in order[: partition.budgets[k]]:
            if w[idx] > 0.0:
                chosen.append(int(comm[idx]))
                value += w[idx] / partition.budgets[k]
    return Subset.from_iterable(chosen), float(value)


def linear_max_over_domain(weights: np.ndarray, partition: Partition) -> tuple[np.ndarray, float]:
    """max_{y in domain} <weights, y> and an attaining vertex.

    Per block the maximum of a linear function over {p >= 0, sum <= 1} is
    max(0, max coordinate), attained at a one-hot vertex or at 0.  Used for
    stationarity checks; note this differs from ``linear_argmax_subset``,
    whose feasible directions are scaled subset indicators.
    """
    weights = np.asarray(weights, dtype=float)
    y = np.zeros(partition.n)
    value = 0.0
    for comm in partition.communities:
        w = weights[comm]
        best = int(np.argmax(w))
        if w[best] > 0.0:
            y[comm[best]] = 1.0
            value += w[best]
    return y, float(value)


def convex_step(
    x: np.ndarray,
    direction: np.ndarray,
    step_count: int,
    partition: Partition,
) -> np.ndarray:
    """x + direction/step_count, asserting the result stays in the domain.

    Starting from 0, at most ``step_count`` such steps with directions in
    the domain keep the iterate inside it (convexity); a violation beyond
    tolerance indicates an internal error.
    """
    out = np.asarray(x, dtype=float) + np.asarray(direction, dtype=float) / step_count
    for comm in partition.communities:
        if out[comm].sum() > 1.0 + BLOCK_SUM_TOL or np.any(out[comm] < -BLOCK_SUM_TOL):
            raise RuntimeError("convex step left the product-simplex domain")
    return out
