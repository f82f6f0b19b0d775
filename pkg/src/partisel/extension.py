"""The multinoulli relaxation of a set function and its stochastic oracles.

The relaxed objective F(p_1, ..., p_K) is the expectation of f over
independent per-slot draws: community k gets B_k slots, each selecting one
of its elements with the block's probabilities or nothing with the leftover
mass.  This module provides

* exact enumeration oracles for F and its gradient (test-scale, capped),
* unbiased single-draw estimators for the gradient and for Hessian entries,
* the path-integrated differential state used by the continuous-greedy
  solvers (exact gradient at 0, then Hessian-vector corrections), and
* the reweighted gradient sampler for the non-oblivious auxiliary
  objective, with exponential weight exp(c*(z-1)) on [0, 1].

Estimators accept an external numpy Generator.  Batches are evaluated
serially here; a parallel fan-out must derive one child stream per sample
index (e.g. ``rng.spawn``) so results stay reproducible for a fixed seed
regardless of worker count.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Partition, SetFunctionHandle, StateSpaceError
from .geometry import check_point

__all__ = [
    "EvalTally",
    "RatioParams",
    "SpiderState",
    "sample_draws",
    "sample_draws_batch",
    "exact_value",
    "exact_gradient",
    "estimate_gradient",
    "sample_hessian_columns",
    "estimate_hessian_entries",
    "spider_init",
    "spider_update",
    "sample_auxiliary_z",
    "auxiliary_gradient_sample",
    "EMPTY",
]

EMPTY = -1  # slot value for "no element drawn"
_NZ_TOL = 1e-15


class EvalTally:
    """Caller-side count of objective rows submitted, independent of the
    handle's own counter so the two can be cross-checked."""

    def __init__(self):
        self.count = 0

    def add(self, k: int) -> None:
        self.count += int(k)


@dataclass
class RatioParams:
    """Structural ratios handed explicitly to solvers that need them.

    ``phi = beta*(1-gamma) + gamma**2`` weights the auxiliary objective for
    weakly submodular instances; a value below 3/4 contradicts the known
    bound for valid (gamma, beta) pairs and triggers a warning.
    """

    alpha: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.beta < 1.0:
            raise ValueError("beta must be >= 1")
        if self.phi < 0.75:
            warnings.warn(
                f"phi(gamma, beta) = {self.phi:.4f} < 3/4; ratios are likely inconsistent",
                stacklevel=2,
            )

    @property
    def phi(self) -> float:
        return self.beta * (1.0 - self.gamma) + self.gamma**2


def _slot_distributions(x: np.ndarray, partition: Partition) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per community: (outcome ids incl. EMPTY, outcome probabilities)."""
    check_point(x, partition)
    dists = []
    for comm in partition.communities:
        p = np.clip(x[comm], 0.0, None)
        empty = max(0.0, 1.0 - p.sum())
        probs = np.append(p, empty)
        probs /= probs.sum()
        ids = np.append(comm, EMPTY)
        dists.append((ids, probs))
    return dists


def sample_draws(x: np.ndarray, partition: Partition, rng: np.random.Generator) -> np.ndarray:
    """One joint draw: an array of length rank, element id or EMPTY per slot."""
    return sample_draws_batch(x, partition, rng, 1)[0]


def sample_draws_batch(
    x: np.ndarray, partition: Partition, rng: np.random.Generator, count: int
) -> np.ndarray:
    """(count, rank) independent joint draws."""
    dists = _slot_distributions(x, partition)
    out = np.empty((count, partition.rank), dtype=np.int64)
    for k, (ids, probs) in enumerate(dists):
        lo, hi = partition.slot_offsets[k], partition.slot_offsets[k + 1]
        idx = rng.choice(ids.size, size=(count, hi - lo), p=probs)
        out[:, lo:hi] = ids[idx]
    return out


def _outcome_count(partition: Partition) -> int:
    total = 1
    for k, comm in enumerate(partition.communities):
        total *= (comm.size + 1) ** int(partition.budgets[k])
    return total


def _support_count(x: np.ndarray, partition: Partition) -> int:
    """Outcome count after dropping zero-probability slot values."""
    total = 1
    for k, (_, probs) in enumerate(_slot_distributions(x, partition)):
        total *= int((probs > 0.0).sum()) ** int(partition.budgets[k])
    return total


def _union_mask(draws: np.ndarray, n: int) -> np.ndarray:
    live = draws[draws >= 0]
    mask = np.zeros(n, dtype=bool)
    mask[live] = True
    return mask


def exact_value(
    handle: SetFunctionHandle,
    partition: Partition,
    x: np.ndarray,
    cap: int = 10**6,
    chunk: int = 4096,
) -> float:
    """F(x) by full enumeration of the defining expectation.

    Raises StateSpaceError when the outcome space exceeds ``cap``; large
    instances should fall back to Monte Carlo.
    """
    total = _outcome_count(partition)
    if total > cap and _support_count(x, partition) > cap:
        raise StateSpaceError(f"{total} outcomes exceed the cap of {cap}")
    dists = _slot_distributions(x, partition)
    slot_ids = []
    slot_probs = []
    for k in range(partition.K):
        ids, probs = dists[k]
        live = probs > 0.0  # zero-probability outcomes cannot contribute
        for _ in range(int(partition.budgets[k])):
            slot_ids.append(ids[live])
            slot_probs.append(probs[live])

    value = 0.0
    masks: list[np.ndarray] = []
    probs: list[float] = []

    def flush():
        nonlocal value
        if not masks:
            return 0.0
        vals = handle.evaluate_masks(np.stack(masks))
        value += float(np.dot(vals, probs))
        masks.clear()
        probs.clear()

    for combo in itertools.product(*(range(ids.size) for ids in slot_ids)):
        p = 1.0
        mask = np.zeros(partition.n, dtype=bool)
        for s, i in enumerate(combo):
            p *= slot_probs[s][i]
            e = slot_ids[s][i]
            if e >= 0:
                mask[e] = True
        if p == 0.0:
            continue
        masks.append(mask)
        probs.append(p)
        if len(masks) >= chunk:
            flush()
    flush()
    return value


def exact_gradient(
    handle: SetFunctionHandle,
    partition: Partition,
    x: np.ndarray,
    cap: int = 10**6,
    chunk: int = 256,
) -> np.ndarray:
    """The exact gradient of F at x by enumeration.

    The coordinate for element v of community k is B_k times the expected
    marginal f(v | union of all slots except community k's first one).
    """
    dists = _slot_distributions(x, partition)
    grad = np.zeros(partition.n)
    for k, comm in enumerate(partition.communities):
        # slots of every community, minus one slot of community k
        slot_ids = []
        slot_probs = []
        for kk in range(partition.K):
            ids, probs = dists[kk]
            live = probs > 0.0
            copies = int(partition.budgets[kk]) - (1 if kk == k else 0)
            for _ in range(copies):
                slot_ids.append(ids[live])
                slot_probs.append(probs[live])
        reduced = 1
        for ids in slot_ids:
            reduced *= ids.size
        if reduced > cap:
            raise StateSpaceError(f"{reduced} outcomes exceed the cap of {cap}")

        nk = comm.size
        pend_masks: list[np.ndarray] = []
        pend_probs: list[float] = []

        def flush():
            if not pend_masks:
                return
            base = np.stack(pend_masks)
            g = base.shape[0]
            rows = np.repeat(base, 1 + nk, axis=0)
            for j in range(nk):
                rows[j + 1 :: 1 + nk, comm[j]] = True
            vals = handle.evaluate_masks(rows).reshape(g, 1 + nk)
            w = np.asarray(pend_probs)
            grad[comm] += partition.budgets[k] * (
                (vals[:, 1:] - vals[:, :1]) * w[:, None]
            ).sum(axis=0)
            pend_masks.clear()
            pend_probs.clear()

        if not slot_ids:
            pend_masks.append(np.zeros(partition.n, dtype=bool))
            pend_probs.append(1.0)
            flush()
            continue
        for combo in itertools.product(*(range(ids.size) for ids in slot_ids)):
            p = 1.0
            mask = np.zeros(partition.n, dtype=bool)
            for s, i in enumerate(combo):
                p *= slot_probs[s][i]
                e = slot_ids[s][i]
                if e >= 0:
                    mask[e] = True
            if p == 0.0:
                continue
            pend_masks.append(mask)
            pend_probs.append(p)
            if len(pend_masks) >= chunk:
                flush()
        flush()
    return grad


def estimate_gradient(
    handle: SetFunctionHandle,
    partition: Partition,
    x: np.ndarray,
    batch: int,
    rng: np.random.Generator,
    audit: EvalTally | None = None,
    chunk: int = 256,
) -> np.ndarray:
    """Unbiased Monte-Carlo gradient: mean over ``batch`` joint draws.

    One shared draw serves all n coordinates: coordinate (k, m) reads
    B_k * f(v_k^m | union of the draw minus community k's first slot).
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    n, K = partition.n, partition.K
    sizes = partition.community_sizes()
    rows_per_sample = int(K + n)
    grad = np.zeros(n)

    done = 0
    while done < batch:
        g = min(chunk, batch - done)
        draws = sample_draws_batch(x, partition, rng, g)
        rows = np.zeros((g * rows_per_sample, n), dtype=bool)
        r0 = 0
        for i in range(g):
            counts = np.bincount(draws[i][draws[i] >= 0], minlength=n)
            for k, comm in enumerate(partition.communities):
                e0 = draws[i, partition.slot_offsets[k]]
                base = counts.copy()
                if e0 >= 0:
                    base[e0] -= 1
                s_mask = base > 0
                nk = sizes[k]
                rows[r0] = s_mask
                blk = np.repeat(s_mask[None, :], nk, axis=0)
                blk[np.arange(nk), comm] = True
                rows[r0 + 1 : r0 + 1 + nk] = blk
                r0 += 1 + nk
        if audit is not None:
            audit.add(rows.shape[0])
        vals = handle.evaluate_masks(rows)
        r0 = 0
        for i in range(g):
            for k, comm in enumerate(partition.communities):
                nk = sizes[k]
                grad[comm] += partition.budgets[k] * (
                    vals[r0 + 1 : r0 + 1 + nk] - vals[r0]
                )
                r0 += 1 + nk
        done += g
    return grad / batch


def sample_hessian_columns(
    handle: SetFunctionHandle,
    partition: Partition,
    x: np.ndarray,
    cols: np.ndarray,
    rng: np.random.Generator,
    audit: EvalTally | None = None,
    draws: np.ndarray | None = None,
) -> np.ndarray:
    """One joint draw's estimate of the Hessian columns ``cols``.

    Returns an (n, len(cols)) array.  Cross-community entries use the
    conditioning set with the two first slots removed and coefficient
    B_k1*B_k2; same-community entries (budget >= 2) remove that community's
    first two slots with coefficient B_k**2 - B_k; same-community entries
    with budget 1 are exactly 0 and never sampled.  Only the requested
    columns are touched, and rows whose element already sits in the
    conditioning set are skipped (their marginal difference is exactly 0).
    """
    cols = np.asarray(cols, dtype=np.int64)
    if cols.size == 0:
        return np.zeros((partition.n, 0))
    if draws is None:
        draws = sample_draws(x, partition, rng)
    if partition.max_budget == 1:
        return _hessian_columns_budget1(handle, partition, cols, draws, audit)
    return _hessian_columns_general(handle, partition, cols, draws, audit)


def _hessian_columns_budget1(
    handle: SetFunctionHandle,
    partition: Partition,
    cols: np.ndarray,
    draws: np.ndarray,
    audit: EvalTally | None,
) -> np.ndarray:
    return _hessian_columns_budget1_batched(handle, partition, cols, draws[None, :], audit)


def _hessian_columns_budget1_batched(
    handle: SetFunctionHandle,
    partition: Partition,
    cols: np.ndarray,
    draws: np.ndarray,
    audit: EvalTally | None,
) -> np.ndarray:
    """All-budgets-one fast path, averaged over a (L, K) batch of draws.

    With budget one, slot k is community k, so every row and column element
    lies outside its conditioning set and the blocks for all draws can be
    assembled with whole-array operations (the row layout is draw-free).
    """
    n, K = partition.n, partition.K
    L = draws.shape[0]
    out = np.zeros((n, cols.size))
    comm_of = partition.community_of
    col_comm = comm_of[cols]
    all_ids = np.arange(n)

    unions = np.zeros((L, n), dtype=bool)
    li, ki = np.nonzero(draws >= 0)
    unions[li, draws[li, ki]] = True

    for k2 in np.unique(col_comm):
        cpos = np.flatnonzero(col_comm == k2)
        v2 = cols[cpos]
        c = v2.size
        u2 = unions.copy()
        e2 = draws[:, k2]
        l2 = np.flatnonzero(e2 >= 0)
        u2[l2, e2[l2]] = False
        # per-draw, per-k1 conditioning sets: u2 minus community k1's draw
        bases = np.repeat(u2[:, None, :], K, axis=1)
        bases[li, ki, draws[li, ki]] = False

        k1s = np.flatnonzero(np.arange(K) != k2)
        v1 = all_ids[comm_of != k2]
        kv1 = comm_of[v1]
        pos_of = np.full(K, -1)
        pos_of[k1s] = np.arange(k1s.size)
        kv1pos = pos_of[kv1]

        rows_base = bases[:, k1s, :]
        rows_v1 = bases[:, kv1, :].copy()
        rows_v1[:, np.arange(v1.size), v1] = True
        rows_v2 = np.repeat(bases[:, k1s, :], c, axis=1)
        rows_v2[:, np.arange(k1s.size * c), np.tile(v2, k1s.size)] = True
        rows_pair = np.repeat(bases[:, kv1, :], c, axis=1)
        ridx = np.arange(v1.size * c)
        rows_pair[:, ridx, np.repeat(v1, c)] = True
        rows_pair[:, ridx, np.tile(v2, v1.size)] = True

        masks = np.concatenate([rows_base, rows_v1, rows_v2, rows_pair], axis=1)
        per_draw = masks.shape[1]
        if audit is not None:
            audit.add(L * per_draw)
        vals = handle.evaluate_masks(masks.reshape(L * per_draw, n)).reshape(L, per_draw)
        o1 = k1s.size
        o2 = o1 + v1.size
        o3 = o2 + k1s.size * c
        f_base = vals[:, :o1]
        f_v1 = vals[:, o1:o2]
        f_v2 = vals[:, o2:o3].reshape(L, k1s.size, c)
        f_pair = vals[:, o3:].reshape(L, v1.size, c)
        block = (
            f_pair
            - f_v2[:, kv1pos, :]
            - f_v1[:, :, None]
            + f_base[:, kv1pos, None]
        )
        out[np.ix_(v1, cpos)] = block.sum(axis=0)
    return out / L


def _hessian_columns_general(
    handle: SetFunctionHandle,
    partition: Partition,
    cols: np.ndarray,
    draws: np.ndarray,
    audit: EvalTally | None,
) -> np.ndarray:
    n = partition.n
    out = np.zeros((n, cols.size))
    counts = np.bincount(draws[draws >= 0], minlength=n)
    col_comm = partition.community_of[cols]

    masks: list[np.ndarray] = []
    fills: list[tuple] = []  # (k1 rows, col positions, coef, offsets)

    for k2 in np.unique(col_comm):
        cpos = np.flatnonzero(col_comm == k2)
        v2_all = cols[cpos]
        for k1 in range(partition.K):
            b1 = int(partition.budgets[k1])
            if k1 == k2:
                if b1 == 1:
                    continue  # identically zero block
                coef = float(b1 * b1 - b1)
                removed = (partition.slot_offsets[k1], partition.slot_offsets[k1] + 1)
            else:
                coef = float(b1 * partition.budgets[k2])
                removed = (partition.slot_offsets[k1], partition.slot_offsets[k2])
            base = counts.copy()
            for s in removed:
                e = draws[s]
                if e >= 0:
                    base[e] -= 1
            s_mask = base > 0
            comm1 = partition.communities[k1]
            v1 = comm1[~s_mask[comm1]]
            live = ~s_mask[v2_all]
            v2 = v2_all[live]
            p2 = cpos[live]
            if v1.size == 0 or v2.size == 0:
                continue
            n1, n2 = v1.size, v2.size
            block = np.repeat(s_mask[None, :], 1 + n1 + n2 + n1 * n2, axis=0)
            block[1 : 1 + n1][np.arange(n1), v1] = True
            block[1 + n1 : 1 + n1 + n2][np.arange(n2), v2] = True
            pair = block[1 + n1 + n2 :]
            ridx = np.arange(n1 * n2)
            pair[ridx, np.repeat(v1, n2)] = True
            pair[ridx, np.tile(v2, n1)] = True
            masks.append(block)
            fills.append((v1, p2, coef, n1, n2))

    if not masks:
        return out
    all_masks = np.concatenate(masks, axis=0)
    if audit is not None:
        audit.add(all_masks.shape[0])
    vals = handle.evaluate_masks(all_masks)
    r0 = 0
    for v1, p2, coef, n1, n2 in fills:
        f0 = vals[r0]
        f1 = vals[r0 + 1 : r0 + 1 + n1]
        f2 = vals[r0 + 1 + n1 : r0 + 1 + n1 + n2]
        f12 = vals[r0 + 1 + n1 + n2 : r0 + 1 + n1 + n2 + n1 * n2].reshape(n1, n2)
        out[np.ix_(v1, p2)] = coef * (f12 - f2[None, :] - f1[:, None] + f0)
        r0 += 1 + n1 + n2 + n1 * n2
    return out


def estimate_hessian_entries(
    handle: SetFunctionHandle,
    partition: Partition,
    x: np.ndarray,
    cols: np.ndarray,
    batch: int,
    rng: np.random.Generator,
    audit: EvalTally | None = None,
    chunk: int = 2048,
) -> np.ndarray:
    """Mean of ``batch`` single-draw Hessian column samples."""
    cols = np.asarray(cols, dtype=np.int64)
    acc = np.zeros((partition.n, cols.size))
    if cols.size == 0 or batch < 1:
        return acc
    if partition.max_budget == 1:
        done = 0
        while done < batch:
            g = min(chunk, batch - done)
            draws = sample_draws_batch(x, partition, rng, g)
            acc += g * _hessian_columns_budget1_batched(handle, partition, cols, draws, audit)
            done += g
        return acc / batch
    for _ in range(batch):
        acc += sample_hessian_columns(handle, partition, x, cols, rng, audit=audit)
    return acc / batch


@dataclass
class SpiderState:
    """Running path-integrated gradient estimate along an iterate sequence."""

    g: np.ndarray
    x_prev: np.ndarray
    t: int


def spider_init(
    handle: SetFunctionHandle,
    partition: Partition,
    audit: EvalTally | None = None,
) -> SpiderState:
    """Exact gradient at the zero point: coordinate (k, m) is B_k * f(v_k^m | ∅).

    Costs n + 1 evaluations and carries no sampling error.
    """
    n = partition.n
    rows = np.zeros((n + 1, n), dtype=bool)
    rows[1:][np.arange(n), np.arange(n)] = True
    if audit is not None:
        audit.add(n + 1)
    vals = handle.evaluate_masks(rows)
    g = (vals[1:] - vals[0]) * partition.budgets[partition.community_of[np.arange(n)]]
    return SpiderState(g=g, x_prev=np.zeros(n), t=1)


def spider_update(
    state: SpiderState,
    handle: SetFunctionHandle,
    partition: Partition,
    x_new: np.ndarray,
    batch: int,
    rng: np.random.Generator,
    audit: EvalTally | None = None,
) -> SpiderState:
    """Advance the estimate across the segment [x_prev, x_new].

    Each of the ``batch`` samples interpolates at a uniform location on the
    segment, draws one Hessian column sample restricted to the nonzero
    support of the displacement, and applies it to the displacement.  The
    averaged correction is conditionally unbiased for the true gradient
    difference given the iterates.
    """
    check_point(x_new, partition)
    delta = np.asarray(x_new, dtype=float) - state.x_prev
    cols = np.flatnonzero(np.abs(delta) > _NZ_TOL)
    g = state.g.copy()
    if cols.size:
        d = delta[cols]
        if partition.max_budget == 1:
            # one draw per interpolation point; the correction is linear in
            # the averaged Hessian sample, so the draws batch together
            draws = np.empty((batch, partition.rank), dtype=np.int64)
            for ell in range(batch):
                a = rng.random()
                draws[ell] = sample_draws(a * x_new + (1.0 - a) * state.x_prev, partition, rng)
            hmean = _hessian_columns_budget1_batched(handle, partition, cols, draws, audit)
            g += hmean @ d
        else:
            xi = np.zeros(partition.n)
            for _ in range(batch):
                a = rng.random()
                x_l = a * x_new + (1.0 - a) * state.x_prev
                h = sample_hessian_columns(handle, partition, x_l, cols, rng, audit=audit)
                xi += h @ d
            g += xi / batch
    return SpiderState(g=g, x_prev=np.array(x_new, dtype=float), t=state.t + 1)


def sample_auxiliary_z(c: float, u: float) -> float:
    """Inverse CDF of the auxiliary weight distribution at quantile u.

    The weight exp(c*(z-1)) on [0, 1] has CDF
    (exp(c*(z-1)) - exp(-c)) / (1 - exp(-c)), inverted in closed form.
    """
    if c <= 0:
        raise ValueError("weight exponent c must be positive")
    ec = math.exp(-c)
    return 1.0 + math.log(ec + u * (1.0 - ec)) / c


def auxiliary_gradient_sample(
    handle: SetFunctionHandle,
    partition: Partition,
    x: np.ndarray,
    c: float,
    rng: np.random.Generator,
    batch: int = 1,
    audit: EvalTally | None = None,
) -> np.ndarray:
    """Unbiased gradient of the auxiliary objective at x.

    Each sample scales x by z drawn from the weight distribution, estimates
    the plain gradient there with one joint draw, and multiplies by the
    weight's total mass (1 - exp(-c)) / c.  Samples use independent z's.
    """
    if c <= 0:
        raise ValueError("weight exponent c must be positive")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    integral = (1.0 - math.exp(-c)) / c
    total = np.zeros(partition.n)
    for _ in range(batch):
        z = sample_auxiliary_z(c, rng.random())
        total += estimate_gradient(handle, partition, z * np.asarray(x), 1, rng, audit=audit)
    return integral * total / batch
