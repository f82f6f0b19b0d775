"""Turning multinoulli priors into feasible subsets.

Two rounders are provided.  The without-replacement rounder normalizes each
block (uniform fallback for all-zero blocks), sequentially samples distinct
elements with residual-renormalized probabilities, and tops up with uniform
draws from the unchosen remainder, so every community ends up with exactly
its budget.  The naive rounder replays the defining expectation: one joint
draw, duplicates and empty slots collapse.

Sampling is vectorized across repeat counts: step b draws one categorical
per repeat via inverse-CDF on the renormalized residual weights, which is
the same sequential scheme applied to each repeat independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Partition, SetFunctionHandle, Subset
from .extension import EvalTally, sample_draws_batch
from .geometry import check_point

__all__ = [
    "RoundingConfig",
    "round_without_replacement",
    "round_without_replacement_batch",
    "round_naive",
    "best_of_rounds",
]

NONZERO_TOL = 1e-12  # threshold for counting a prior coordinate as nonzero


@dataclass
class RoundingConfig:
    mode: str = "without_replacement"  # or "naive"
    retries: int = 1

    def __post_init__(self):
        if self.retries < 1:
            raise ValueError("retries must be >= 1")
        if self.mode not in ("without_replacement", "naive"):
            raise ValueError(f"unknown rounding mode {self.mode!r}")


def _categorical_rows(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a nonnegative weight matrix (rows sum > 0)."""
    w = weights / weights.sum(axis=1, keepdims=True)
    cdf = np.cumsum(w, axis=1)
    u = rng.random(w.shape[0])
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, w.shape[1] - 1)


def round_without_replacement_batch(
    x: np.ndarray,
    partition: Partition,
    rng: np.random.Generator,
    count: int,
) -> np.ndarray:
    """(count, n) membership masks, each with exactly B_k elements per community."""
    check_point(x, partition)
    masks = np.zeros((count, partition.n), dtype=bool)
    for k, comm in enumerate(partition.communities):
        nk = comm.size
        budget = int(partition.budgets[k])
        p = np.clip(np.asarray(x, dtype=float)[comm], 0.0, None)
        if p.sum() > 0.0:
            p = p / p.sum()
        else:
            p = np.full(nk, 1.0 / nk)
        b_prob = min(int((p > NONZERO_TOL).sum()), budget)
        avail = np.ones((count, nk), dtype=bool)
        for step in range(budget):
            if step < b_prob:
                w = p[None, :] * avail
            else:
                w = avail.astype(float)  # uniform complement over the remainder
            idx = _categorical_rows(w, rng)
            avail[np.arange(count), idx] = False
            masks[np.arange(count), comm[idx]] = True
    return masks


def round_without_replacement(
    x: np.ndarray, partition: Partition, rng: np.random.Generator
) -> Subset:
    mask = round_without_replacement_batch(x, partition, rng, 1)[0]
    return Subset.from_iterable(np.flatnonzero(mask))


def round_naive(x: np.ndarray, partition: Partition, rng: np.random.Generator) -> Subset:
    """One joint draw of the defining expectation; may under-fill budgets."""
    draws = sample_draws_batch(x, partition, rng, 1)[0]
    return Subset.from_iterable(draws[draws >= 0])


def _round_masks(
    x: np.ndarray,
    partition: Partition,
    rng: np.random.Generator,
    mode: str,
    count: int,
) -> np.ndarray:
    if mode == "without_replacement":
        return round_without_replacement_batch(x, partition, rng, count)
    draws = sample_draws_batch(x, partition, rng, count)
    masks = np.zeros((count, partition.n), dtype=bool)
    rows = np.repeat(np.arange(count), partition.rank)
    flat = draws.ravel()
    live = flat >= 0
    masks[rows[live], flat[live]] = True
    return masks


def best_of_rounds(
    x: np.ndarray,
    partition: Partition,
    handle: SetFunctionHandle,
    config: RoundingConfig,
    rng: np.random.Generator,
    audit: EvalTally | None = None,
    chunk: int = 8192,
) -> Subset:
    """Round ``retries`` times, evaluate each, return the first argmax.

    Costs exactly ``retries`` evaluations on the handle.
    """
    best_val = -np.inf
    best_mask = None
    done = 0
    while done < config.retries:
        g = min(chunk, config.retries - done)
        masks = _round_masks(x, partition, rng, config.mode, g)
        if audit is not None:
            audit.add(g)
        vals = handle.evaluate_masks(masks)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_mask = masks[i]
        done += g
    return Subset.from_iterable(np.flatnonzero(best_mask))
