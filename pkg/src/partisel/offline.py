"""Offline maximizers for partition-constrained subset selection.

Two relaxation-based solvers (a stochastic continuous greedy with a
path-integrated gradient estimate, and projected stochastic gradient
ascent with an optional non-oblivious reweighting) plus two discrete
baselines (deterministic standard greedy and residual random greedy).

Every solver keeps its own arithmetic count of submitted evaluations in
the trace, independent of the handle's counter, so tests can cross-check
the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Partition, SetFunctionHandle, Subset
from .extension import (
    EvalTally,
    auxiliary_gradient_sample,
    estimate_gradient,
    spider_init,
    spider_update,
)
from .geometry import (
    convex_step,
    linear_argmax_subset,
    project,
    scaled_indicator,
    uniform_point,
    zero_point,
)
from .rounding import RoundingConfig, best_of_rounds, round_without_replacement

__all__ = [
    "ScgConfig",
    "SgaConfig",
    "IterationRecord",
    "SolveTrace",
    "multinoulli_scg",
    "multinoulli_sga",
    "standard_greedy",
    "residual_random_greedy",
]


@dataclass
class ScgConfig:
    """Continuous-greedy configuration.

    Defaults follow the benchmark setting: T = 167 iterations, Hessian
    batch T/2 rounded up, and T**2 rounding retries.  Smaller batches trade
    estimator variance for speed.
    """

    T: int = 167
    L: int | None = None
    rounding_retries: int | None = None
    seed: int = 0
    trace_values: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.L is None:
            self.L = math.ceil(self.T / 2)
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.rounding_retries is None:
            self.rounding_retries = self.T**2
        if self.rounding_retries < 1:
            raise ValueError("rounding_retries must be >= 1")


@dataclass
class SgaConfig:
    """Projected-ascent configuration.

    ``auxiliary_c`` switches on the non-oblivious reweighted gradient with
    exponent c (use the DR ratio, or phi(gamma, beta) for weakly submodular
    objectives; 1 recovers the submodular setting).  ``init`` is "uniform"
    or an explicit starting point.
    """

    T: int = 167
    eta: float | None = None
    L: int = 20
    auxiliary_c: float | None = None
    seed: int = 0
    init: str | np.ndarray = "uniform"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.eta is None:
            self.eta = 1.0 / math.sqrt(self.T)
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.auxiliary_c is not None and self.auxiliary_c <= 0:
            raise ValueError("auxiliary_c must be positive")


@dataclass
class IterationRecord:
    t: int
    subset: tuple[int, ...]
    value: float | None
    queries: int  # solver-side cumulative count after this iteration


@dataclass
class SolveTrace:
    solver: str
    records: list[IterationRecord] = field(default_factory=list)
    final_subset: tuple[int, ...] = ()
    final_value: float = 0.0
    reported_evaluations: int = 0

    @property
    def best_so_far(self) -> list[float]:
        out, best = [], -np.inf
        for rec in self.records:
            if rec.value is not None:
                best = max(best, rec.value)
            out.append(best)
        return out


def _require_monotone(handle: SetFunctionHandle, solver: str) -> None:
    if not handle.monotone:
        raise ValueError(f"{solver} requires a monotone objective")


def multinoulli_scg(
    handle: SetFunctionHandle, partition: Partition, config: ScgConfig
) -> tuple[Subset, SolveTrace]:
    """Continuous greedy on the relaxation with variance-reduced gradients.

    Starts at 0 with the exact gradient there, then per iteration takes the
    best feasible scaled-indicator direction, moves 1/T along it, and
    updates the gradient estimate with averaged Hessian-vector samples on
    the traversed segment.  The final point is rounded without replacement
    ``rounding_retries`` times and the best subset is returned.
    """
    _require_monotone(handle, "multinoulli_scg")
    rng = np.random.default_rng(config.seed)
    tally = EvalTally()
    trace = SolveTrace(solver="multinoulli_scg")

    x = zero_point(partition)
    state = spider_init(handle, partition, audit=tally)
    for t in range(1, config.T + 1):
        s_t, _ = linear_argmax_subset(state.g, partition)
        x_new = convex_step(x, scaled_indicator(s_t, partition), config.T, partition)
        if t < config.T:
            state = spider_update(state, handle, partition, x_new, config.L, rng, audit=tally)
        x = x_new
        value = None
        if config.trace_values:
            tally.add(1)
            value = handle.evaluate(s_t)
        trace.records.append(IterationRecord(t, s_t.elements, value, tally.count))

    rounding = RoundingConfig(mode="without_replacement", retries=config.rounding_retries)
    best = best_of_rounds(x, partition, handle, rounding, rng, audit=tally)
    tally.add(1)
    best_value = handle.evaluate(best)
    trace.final_subset = best.elements
    trace.final_value = best_value
    trace.reported_evaluations = tally.count
    return best, trace


def multinoulli_sga(
    handle: SetFunctionHandle, partition: Partition, config: SgaConfig
) -> tuple[Subset, SolveTrace]:
    """Projected stochastic gradient ascent on the relaxation.

    Each iteration rounds the current point (one evaluation to score the
    candidate), estimates the gradient (plain, or reweighted when
    ``auxiliary_c`` is set), steps, and projects back.  Returns the best
    rounded subset seen.
    """
    _require_monotone(handle, "multinoulli_sga")
    rng = np.random.default_rng(config.seed)
    tally = EvalTally()
    name = "multinoulli_asga" if config.auxiliary_c is not None else "multinoulli_sga"
    trace = SolveTrace(solver=name)

    if isinstance(config.init, str):
        if config.init != "uniform":
            raise ValueError(f"unknown init {config.init!r}")
        x = uniform_point(partition)
    else:
        x = project(np.asarray(config.init, dtype=float), partition)

    best_val = -np.inf
    best: Subset = Subset(())
    for t in range(1, config.T + 1):
        s_t = round_without_replacement(x, partition, rng)
        tally.add(1)
        val = handle.evaluate(s_t)
        if val > best_val:
            best_val, best = val, s_t
        if config.auxiliary_c is not None:
            g = auxiliary_gradient_sample(
                handle, partition, x, config.auxiliary_c, rng, batch=config.L, audit=tally
            )
        else:
            g = estimate_gradient(handle, partition, x, config.L, rng, audit=tally)
        x = project(x + config.eta * g, partition)
        trace.records.append(IterationRecord(t, s_t.elements, val, tally.count))

    trace.final_subset = best.elements
    trace.final_value = best_val
    trace.reported_evaluations = tally.count
    return best, trace


def standard_greedy(
    handle: SetFunctionHandle, partition: Partition
) -> tuple[Subset, SolveTrace]:
    """Deterministic marginal-gain greedy under the partition budgets.

    Runs for at most rank rounds, each time adding the feasible element
    with the largest marginal (ties to the lowest id) and stopping early
    once no marginal is positive.
    """
    _require_monotone(handle, "standard_greedy")
    tally = EvalTally()
    trace = SolveTrace(solver="standard_greedy")

    chosen = np.zeros(partition.n, dtype=bool)
    remaining = partition.budgets.copy()
    current = 0.0
    for t in range(1, partition.rank + 1):
        cands = np.flatnonzero(~chosen & (remaining[partition.community_of] > 0))
        if cands.size == 0:
            break
        rows = np.repeat(chosen[None, :], cands.size + 1, axis=0)
        rows[1:][np.arange(cands.size), cands] = True
        tally.add(cands.size + 1)
        vals = handle.evaluate_masks(rows)
        gains = vals[1:] - vals[0]
        best = int(np.argmax(gains))  # first max wins, candidates are id-sorted
        if gains[best] <= 0.0:
            break
        chosen[cands[best]] = True
        remaining[partition.community_of[cands[best]]] -= 1
        current = float(vals[1 + best])
        trace.records.append(
            IterationRecord(t, tuple(np.flatnonzero(chosen)), current, tally.count)
        )

    subset = Subset.from_iterable(np.flatnonzero(chosen))
    trace.final_subset = subset.elements
    trace.final_value = current
    trace.reported_evaluations = tally.count
    return subset, trace


def residual_random_greedy(
    handle: SetFunctionHandle, partition: Partition, rng: np.random.Generator
) -> tuple[Subset, SolveTrace]:
    """Random greedy over residual bases.

    Each of the rank rounds forms, per community with leftover budget, the
    residual-budget-many best unchosen elements by marginal gain, then adds
    one uniform pick from that pool.  Always fills every budget exactly.
    """
    _require_monotone(handle, "residual_random_greedy")
    tally = EvalTally()
    trace = SolveTrace(solver="residual_random_greedy")

    chosen = np.zeros(partition.n, dtype=bool)
    remaining = partition.budgets.copy()
    current = 0.0
    for t in range(1, partition.rank + 1):
        cands = np.flatnonzero(~chosen & (remaining[partition.community_of] > 0))
        rows = np.repeat(chosen[None, :], cands.size + 1, axis=0)
        rows[1:][np.arange(cands.size), cands] = True
        tally.add(cands.size + 1)
        vals = handle.evaluate_masks(rows)
        gains = vals[1:] - vals[0]

        pool: list[int] = []
        for k in np.unique(partition.community_of[cands]):
            in_k = np.flatnonzero(partition.community_of[cands] == k)
            order = np.lexsort((cands[in_k], -gains[in_k]))
            pool.extend(int(cands[in_k[j]]) for j in order[: remaining[k]])
        pick = int(pool[rng.integers(len(pool))])
        chosen[pick] = True
        remaining[partition.community_of[pick]] -= 1
        pos = int(np.flatnonzero(cands == pick)[0])
        current = float(vals[1 + pos])
        trace.records.append(
            IterationRecord(t, tuple(np.flatnonzero(chosen)), current, tally.count)
        )

    subset = Subset.from_iterable(np.flatnonzero(chosen))
    trace.final_subset = subset.elements
    trace.final_value = current
    trace.reported_evaluations = tally.count
    return subset, trace
