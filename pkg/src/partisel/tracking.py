"""Planar multi-target tracking environment for the online solvers.

Each round every agent picks one action (a heading from the 8-direction
grid times a scenario speed), which is one community of a budget-1
partition.  Targets move by one of three laws: fully random rewalks,
polyline trajectories that re-randomize only at a fixed set of waypoint
iterations, and adversarial targets that flee at top speed for one second
once an agent comes within trigger range.

Episodes are deterministic under a fixed seed: the target stepping order,
the policy's random stream, and the per-round objective construction are
all sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Partition, SetFunctionHandle, Subset
from .objectives import ekf_aoptimal_handle, facility_location_handle
from .online import OnlineRound, OscgConfig, OscgSession, OsgaSession

__all__ = [
    "HEADINGS",
    "Action",
    "TargetState",
    "Scenario",
    "step_targets",
    "build_round_objective",
    "run_episode",
    "parse_mix",
]

HEADINGS = tuple(math.pi / 4.0 * j for j in range(1, 9))  # 8-direction grid
EVADE_SPEED = 15.0
EVADE_TRIGGER = 20.0
RANDOM_SPEED_RANGE = (5.0, 10.0)


@dataclass(frozen=True)
class Action:
    theta: float
    speed: float
    agent_id: int


@dataclass
class TargetState:
    position: np.ndarray
    kind: str  # "random" | "polyline" | "adversarial"
    heading: float = 0.0
    speed: float = 0.0
    poly_k: int = 1
    evade_steps: int = 0
    evade_heading: float = 0.0


def parse_mix(mix: str) -> tuple[int, int, int]:
    """Parse a 'R:A:P' ratio string into integer parts."""
    parts = [int(p) for p in mix.split(":")]
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) == 0:
        raise ValueError(f"bad mix {mix!r}; want three nonnegative integers like '4:5:1'")
    return tuple(parts)  # type: ignore[return-value]


def _apportion(total: int, ratios: tuple[int, int, int]) -> tuple[int, int, int]:
    """Largest-remainder split of ``total`` into the given proportions."""
    s = sum(ratios)
    raw = [total * r / s for r in ratios]
    counts = [int(x) for x in raw]
    order = np.argsort([c - x for c, x in zip(counts, raw)])
    for i in range(total - sum(counts)):
        counts[order[i]] += 1
    return tuple(counts)  # type: ignore[return-value]


@dataclass
class Scenario:
    num_agents: int = 20
    num_targets: int = 30
    mix: str = "4:5:1"  # random : adversarial : polyline
    T: int = 1250
    horizon: float = 25.0
    speed_set: tuple[float, ...] = (5.0, 10.0, 15.0)
    spawn_radius: float = 20.0
    mode: str = "facility"  # or "ekf"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("facility", "ekf"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.T < 1 or self.horizon <= 0:
            raise ValueError("need T >= 1 and a positive horizon")
        parse_mix(self.mix)

    @property
    def dt(self) -> float:
        return self.horizon / self.T

    @property
    def actions_per_agent(self) -> int:
        return len(HEADINGS) * len(self.speed_set)


def _spawn_positions(count: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    angles = rng.uniform(0.0, 2.0 * math.pi, size=count)
    radii = radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def spawn_targets(scenario: Scenario, rng: np.random.Generator) -> list[TargetState]:
    n_r, n_a, n_p = _apportion(scenario.num_targets, parse_mix(scenario.mix))
    kinds = ["random"] * n_r + ["adversarial"] * n_a + ["polyline"] * n_p
    positions = _spawn_positions(scenario.num_targets, scenario.spawn_radius, rng)
    states = []
    for pos, kind in zip(positions, kinds):
        st = TargetState(position=pos, kind=kind)
        st.heading = rng.uniform(0.0, 2.0 * math.pi)
        st.speed = rng.uniform(*RANDOM_SPEED_RANGE)
        if kind == "polyline":
            st.poly_k = int(rng.choice([1, 2, 4]))
        states.append(st)
    return states


def _random_move(state: TargetState, dt: float, rng: np.random.Generator) -> None:
    state.heading = rng.uniform(0.0, 2.0 * math.pi)
    state.speed = rng.uniform(*RANDOM_SPEED_RANGE)
    _advance(state, state.heading, state.speed, dt)


def _advance(state: TargetState, heading: float, speed: float, dt: float) -> None:
    state.position = state.position + speed * dt * np.array(
        [math.cos(heading), math.sin(heading)]
    )


def _evasion_heading(position: np.ndarray, agent_positions: np.ndarray, dt: float) -> float:
    """Heading among 16 candidates maximizing mean post-step agent distance."""
    best_h, best_d = 0.0, -np.inf
    for j in range(16):
        h = 2.0 * math.pi * j / 16.0
        nxt = position + EVADE_SPEED * dt * np.array([math.cos(h), math.sin(h)])
        d = float(np.sqrt(((agent_positions - nxt) ** 2).sum(axis=1)).mean())
        if d > best_d:
            best_h, best_d = h, d
    return best_h


def step_targets(
    states: list[TargetState],
    agent_positions: np.ndarray,
    dt: float,
    rng: np.random.Generator,
    t_index: int,
    total_steps: int,
) -> None:
    """Advance every target one step in place.

    ``t_index`` counts completed steps (0 for the first move) and drives
    the polyline waypoint schedule {0, floor(T/k), 2*floor(T/k), ...}.
    """
    for st in states:
        if st.kind == "random":
            _random_move(st, dt, rng)
        elif st.kind == "polyline":
            stride = max(1, total_steps // st.poly_k)
            if t_index % stride == 0 and t_index // stride < st.poly_k:
                _random_move(st, dt, rng)
            else:
                _advance(st, st.heading, st.speed, dt)
        elif st.kind == "adversarial":
            if st.evade_steps > 0:
                _advance(st, st.evade_heading, EVADE_SPEED, dt)
                st.evade_steps -= 1
            else:
                dists = np.sqrt(((agent_positions - st.position) ** 2).sum(axis=1))
                if dists.size and float(dists.min()) <= EVADE_TRIGGER:
                    st.evade_heading = _evasion_heading(st.position, agent_positions, dt)
                    st.evade_steps = math.ceil(1.0 / dt)
                    _advance(st, st.evade_heading, EVADE_SPEED, dt)
                    st.evade_steps -= 1
                else:
                    _random_move(st, dt, rng)
        else:
            raise ValueError(f"unknown target kind {st.kind!r}")


def action_table(scenario: Scenario) -> list[Action]:
    """Global action list; agent i owns the contiguous block i * 24 ... ."""
    actions = []
    for i in range(scenario.num_agents):
        for theta in HEADINGS:
            for speed in scenario.speed_set:
                actions.append(Action(theta=theta, speed=speed, agent_id=i))
    return actions


def candidate_positions(
    scenario: Scenario, agent_positions: np.ndarray
) -> np.ndarray:
    """Post-action position of every (agent, action) pair."""
    per = scenario.actions_per_agent
    out = np.empty((scenario.num_agents * per, 2))
    idx = 0
    for i in range(scenario.num_agents):
        for theta in HEADINGS:
            for speed in scenario.speed_set:
                out[idx] = agent_positions[i] + scenario.dt * speed * np.array(
                    [math.cos(theta), math.sin(theta)]
                )
                idx += 1
    return out


def build_round_objective(
    scenario: Scenario,
    agent_positions: np.ndarray,
    target_positions: np.ndarray,
    prev_target_positions: np.ndarray | None = None,
) -> tuple[SetFunctionHandle, Partition]:
    """The round's utility over candidate actions, one community per agent.

    Facility mode scores proximity to current target positions; EKF mode
    scores information about targets relative to their previous positions.
    """
    cand = candidate_positions(scenario, agent_positions)
    per = scenario.actions_per_agent
    if scenario.mode == "facility":
        handle = facility_location_handle(cand, target_positions)
    else:
        prev = target_positions if prev_target_positions is None else prev_target_positions
        handle = ekf_aoptimal_handle(cand, prev)
    communities = [
        list(range(i * per, (i + 1) * per)) for i in range(scenario.num_agents)
    ]
    partition = Partition(communities, [1] * scenario.num_agents)
    return handle, partition


@dataclass
class EpisodeTrace:
    policy: str
    rounds: list[OnlineRound] = field(default_factory=list)

    @property
    def final_running_average(self) -> float:
        if not self.rounds:
            return 0.0
        last = self.rounds[-1]
        return last.cumulative_reward / last.t


def run_episode(
    scenario: Scenario,
    policy: str,
    seed: int | None = None,
    osga_eta: float | None = None,
    osga_batch: int = 10,
    osga_auxiliary_c: float | None = 1.0,
    oscg_q: int = 3,
    oscg_l: int = 1,
    oscg_eta: float | None = None,
) -> EpisodeTrace:
    """Run one sequential episode under the given policy.

    Policies: "osga", "oscg", or "random" (each agent executes a uniform
    action from its own set).  The committed subset moves every agent;
    rewards are recorded before the policy observes the objective.
    """
    policy = policy.lower()
    if policy not in ("osga", "oscg", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    env_rng = np.random.default_rng(rng.integers(2**63))
    pol_rng = np.random.default_rng(rng.integers(2**63))

    agent_positions = _spawn_positions(scenario.num_agents, scenario.spawn_radius, env_rng)
    targets = spawn_targets(scenario, env_rng)
    actions = action_table(scenario)
    per = scenario.actions_per_agent

    session = None
    if policy == "osga":
        eta = (1.0 / math.sqrt(scenario.T)) if osga_eta is None else osga_eta
        dummy_partition = Partition(
            [list(range(i * per, (i + 1) * per)) for i in range(scenario.num_agents)],
            [1] * scenario.num_agents,
        )
        session = OsgaSession(
            dummy_partition, eta=eta, batch=osga_batch, auxiliary_c=osga_auxiliary_c
        )
    elif policy == "oscg":
        dummy_partition = Partition(
            [list(range(i * per, (i + 1) * per)) for i in range(scenario.num_agents)],
            [1] * scenario.num_agents,
        )
        session = OscgSession(
            dummy_partition, OscgConfig(Q=oscg_q, L=oscg_l, T=scenario.T, eta=oscg_eta)
        )

    trace = EpisodeTrace(policy=policy)
    cumulative = 0.0
    queries = 0
    for t in range(1, scenario.T + 1):
        prev_target_positions = np.stack([st.position for st in targets])
        step_targets(targets, agent_positions, scenario.dt, env_rng, t - 1, scenario.T)
        target_positions = np.stack([st.position for st in targets])
        handle, partition = build_round_objective(
            scenario, agent_positions, target_positions, prev_target_positions
        )

        if policy == "random":
            picks = [
                int(i * per + pol_rng.integers(per)) for i in range(scenario.num_agents)
            ]
            subset = Subset.from_iterable(picks)
            reward = handle.evaluate(subset)
            queries += 1
            cumulative += reward
            record = OnlineRound(
                t=t, subset=subset.elements, reward=reward,
                queries=queries, cumulative_reward=cumulative,
            )
        else:
            subset = session.commit(pol_rng)
            record = session.observe(handle, pol_rng)

        trace.rounds.append(record)
        for e in subset:
            act = actions[e]
            agent_positions[act.agent_id] = agent_positions[act.agent_id] + (
                scenario.dt * act.speed * np.array([math.cos(act.theta), math.sin(act.theta)])
            )
    return trace
