"""Online partition-constrained subset selection.

The protocol is commit-then-observe: a session produces a feasible subset
first, and only afterwards may the round's objective be queried.  Both
solvers expose an explicit ``commit`` / ``observe`` pair (calling them out
of order raises ProtocolError) plus a one-call convenience wrapper that
takes a reveal callback invoked strictly after commitment.

The continuous-greedy variant composes the plays of Q online linear
oracles over the product-simplex domain and feeds each oracle a
path-integrated gradient estimate of the revealed objective; the ascent
variant keeps a single projected iterate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Partition, ProtocolError, SetFunctionHandle, Subset
from .extension import (
    EvalTally,
    SpiderState,
    auxiliary_gradient_sample,
    estimate_gradient,
    spider_init,
    spider_update,
)
from .geometry import project, uniform_point, zero_point
from .offline import standard_greedy
from .rounding import round_without_replacement

__all__ = [
    "LinearOracle",
    "OnlineRound",
    "OscgConfig",
    "OscgSession",
    "OsgaSession",
    "oracle_step",
    "oscg_round",
    "osga_round",
    "rho_regret",
    "hindsight_best",
    "rounds_to_csv",
]


@dataclass
class LinearOracle:
    """Gradient-ascent player for online linear maximization over the domain."""

    v: np.ndarray
    eta: float
    steps: int = 0


def oracle_step(oracle: LinearOracle, feedback: np.ndarray, partition: Partition) -> LinearOracle:
    """Play update: project(v + eta * feedback)."""
    feedback = np.asarray(feedback, dtype=float)
    if feedback.shape != (partition.n,):
        raise ValueError(f"layout mismatch: expected shape ({partition.n},)")
    return LinearOracle(
        v=project(oracle.v + oracle.eta * feedback, partition),
        eta=oracle.eta,
        steps=oracle.steps + 1,
    )


@dataclass
class OnlineRound:
    t: int
    subset: tuple[int, ...]
    reward: float
    queries: int  # session-side cumulative evaluation count
    cumulative_reward: float
    feedbacks: list[np.ndarray] | None = None


@dataclass
class OscgConfig:
    """Oracle count Q and differential batch L; both trade regret for cost.

    The theory-balanced choice is Q = L = ceil(sqrt(rank * T)); desk-scale
    runs usually dial both down.  The oracle step size defaults to
    sqrt(2 * rank) / (G * sqrt(T)) with G an online-estimated bound on the
    feedback norm.
    """

    Q: int
    L: int
    T: int
    eta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.Q < 1 or self.L < 1 or self.T < 1:
            raise ValueError("Q, L and T must all be >= 1")

    @classmethod
    def balanced(cls, partition: Partition, T: int, **kw) -> "OscgConfig":
        q = math.ceil(math.sqrt(partition.rank * T))
        return cls(Q=q, L=q, T=T, **kw)


class OscgSession:
    """State for the meta-action continuous-greedy protocol."""

    def __init__(self, partition: Partition, config: OscgConfig):
        self.partition = partition
        self.config = config
        start = uniform_point(partition)
        self.oracles = [LinearOracle(v=start.copy(), eta=0.0) for _ in range(config.Q)]
        self.t = 0
        self.tally = EvalTally()
        self.cumulative_reward = 0.0
        self._grad_bound = 1e-12
        self._pending: tuple[Subset, list[np.ndarray]] | None = None

    def _eta(self) -> float:
        if self.config.eta is not None:
            return self.config.eta
        return math.sqrt(2.0 * self.partition.rank) / (
            self._grad_bound * math.sqrt(self.config.T)
        )

    def commit(self, rng: np.random.Generator) -> Subset:
        if self._pending is not None:
            raise ProtocolError("commit called twice without an observe")
        xs = [zero_point(self.partition)]
        for oracle in self.oracles:
            xs.append(xs[-1] + oracle.v / self.config.Q)
        subset = round_without_replacement(xs[-1], self.partition, rng)
        self._pending = (subset, xs)
        return subset

    def observe(
        self, handle: SetFunctionHandle, rng: np.random.Generator, keep_feedbacks: bool = False
    ) -> OnlineRound:
        if self._pending is None:
            raise ProtocolError("observe called before commit")
        subset, xs = self._pending
        self._pending = None
        self.t += 1
        self.tally.add(1)
        reward = handle.evaluate(subset)
        self.cumulative_reward += reward

        state = spider_init(handle, self.partition, audit=self.tally)
        feedbacks = [state.g.copy()]
        for q in range(2, self.config.Q + 1):
            state = SpiderState(g=state.g, x_prev=xs[q - 2], t=state.t)
            state = spider_update(
                state, handle, self.partition, xs[q - 1], self.config.L, rng, audit=self.tally
            )
            feedbacks.append(state.g.copy())
        for g in feedbacks:
            self._grad_bound = max(self._grad_bound, float(np.linalg.norm(g)))
        eta = self._eta()
        for q, g in enumerate(feedbacks):
            self.oracles[q].eta = eta
            self.oracles[q] = oracle_step(self.oracles[q], g, self.partition)

        return OnlineRound(
            t=self.t,
            subset=subset.elements,
            reward=reward,
            queries=self.tally.count,
            cumulative_reward=self.cumulative_reward,
            feedbacks=feedbacks if keep_feedbacks else None,
        )


def oscg_round(
    session: OscgSession,
    reveal,
    rng: np.random.Generator,
    keep_feedbacks: bool = False,
) -> tuple[Subset, OnlineRound]:
    """Commit, then reveal the objective, then observe."""
    subset = session.commit(rng)
    handle = reveal()
    return subset, session.observe(handle, rng, keep_feedbacks=keep_feedbacks)


class OsgaSession:
    """State for projected online gradient ascent on the relaxation."""

    def __init__(
        self,
        partition: Partition,
        eta: float,
        batch: int = 1,
        auxiliary_c: float | None = None,
    ):
        if auxiliary_c is not None and auxiliary_c <= 0:
            raise ValueError("auxiliary_c must be positive")
        self.partition = partition
        self.eta = float(eta)
        self.batch = int(batch)
        self.auxiliary_c = auxiliary_c
        self.x = uniform_point(partition)
        self.t = 0
        self.tally = EvalTally()
        self.cumulative_reward = 0.0
        self._pending: Subset | None = None

    def commit(self, rng: np.random.Generator) -> Subset:
        if self._pending is not None:
            raise ProtocolError("commit called twice without an observe")
        self._pending = round_without_replacement(self.x, self.partition, rng)
        return self._pending

    def observe(self, handle: SetFunctionHandle, rng: np.random.Generator) -> OnlineRound:
        if self._pending is None:
            raise ProtocolError("observe called before commit")
        subset = self._pending
        self._pending = None
        self.t += 1
        self.tally.add(1)
        reward = handle.evaluate(subset)
        self.cumulative_reward += reward

        if self.auxiliary_c is not None:
            g = auxiliary_gradient_sample(
                handle, self.partition, self.x, self.auxiliary_c, rng,
                batch=self.batch, audit=self.tally,
            )
        else:
            g = estimate_gradient(
                handle, self.partition, self.x, self.batch, rng, audit=self.tally
            )
        self.x = project(self.x + self.eta * g, self.partition)

        return OnlineRound(
            t=self.t,
            subset=subset.elements,
            reward=reward,
            queries=self.tally.count,
            cumulative_reward=self.cumulative_reward,
        )


def osga_round(
    session: OsgaSession, reveal, rng: np.random.Generator
) -> tuple[Subset, OnlineRound]:
    """Commit, then reveal the objective, then observe."""
    subset = session.commit(rng)
    handle = reveal()
    return subset, session.observe(handle, rng)


def rho_regret(
    history: list[OnlineRound],
    rho: float,
    best_fixed: Subset,
    handles: list[SetFunctionHandle],
) -> float:
    """rho * (cumulative value of the fixed comparator) - cumulative reward."""
    if len(history) != len(handles):
        raise ValueError("history and handles must have equal length")
    comparator = sum(h.evaluate(best_fixed) for h in handles)
    realized = sum(r.reward for r in history)
    return rho * comparator - realized


def hindsight_best(
    handles: list[SetFunctionHandle],
    partition: Partition,
    cap: int = 10**5,
) -> tuple[Subset, bool]:
    """Best fixed feasible subset for the summed objectives.

    Exhaustive when the feasible family has at most ``cap`` members;
    otherwise a greedy approximation on the summed objective, flagged by
    the returned boolean (True means exact).
    """
    family_size = 1
    for k, comm in enumerate(partition.communities):
        per_comm = sum(
            math.comb(comm.size, j) for j in range(int(partition.budgets[k]) + 1)
        )
        family_size *= per_comm
        if family_size > cap:
            break

    if family_size <= cap:
        best_val, best = -np.inf, Subset(())
        options_per_comm = []
        for k, comm in enumerate(partition.communities):
            opts = []
            for j in range(int(partition.budgets[k]) + 1):
                opts.extend(itertools.combinations(comm.tolist(), j))
            options_per_comm.append(opts)
        for combo in itertools.product(*options_per_comm):
            subset = Subset.from_iterable(itertools.chain.from_iterable(combo))
            val = sum(h.evaluate(subset) for h in handles)
            if val > best_val:
                best_val, best = val, subset
        return best, True

    def batch(masks: np.ndarray) -> np.ndarray:
        return sum(np.asarray(h._batch(masks), dtype=float) for h in handles)

    summed = SetFunctionHandle(partition.n, batch, monotone=True, name="hindsight-sum")
    subset, _ = standard_greedy(summed, partition)
    return subset, False


def rounds_to_csv(history: list[OnlineRound]) -> str:
    """Serialize a round history as CSV text."""
    lines = ["t,reward,running_average,queries"]
    for r in history:
        lines.append(f"{r.t},{r.reward:.10g},{r.cumulative_reward / r.t:.10g},{r.queries}")
    return "\n".join(lines) + "\n"
