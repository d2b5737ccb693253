"""Explore-then-commit dynamics driven by one satisfaction bit per agent.

Random-stream contract: agent ``i`` owns the substream
``rng.substream(seed, rng.AGENT, i)`` and, every exploration round, draws
exactly two uniforms from it, first for its action and then for the
Bernoulli gate of its message. Draws are consumed whether or not they
matter, so traces only depend on ``(game, K, epsilon, seed, mode)``.

Two engines implement the same contract. ``reference`` steps
:class:`Agent` objects one round at a time; ``vectorized`` processes blocks
of rounds with numpy. They produce identical traces.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence, TextIO

import numpy as np

from . import rng
from .estimator import EmpiricalTheta
from .game import GameSpec, JointAction, joint_from_index, require_valid
from .oracle import TIE_TOL, EmptyFeasibleSetError, solve

Mode = Literal["base", "br"]
CHUNK = 1 << 16


class AssumptionViolation(ValueError):
    """A message probability exceeded one, i.e. ``w_i * u_i >= 1``."""


class CommitError(RuntimeError):
    pass


class Agent:
    """What one agent knows: its own parameters, counters and random stream.

    The public methods take only the agent's own realized utility and the
    broadcast unanimity bit; nothing about the other agents reaches it.
    """

    def __init__(self, index: int, n_actions: int, weight: float, threshold: float,
                 epsilon: float, stream: np.random.Generator):
        self.index = index
        self.n_actions = n_actions
        self.weight = weight
        self.threshold = threshold
        self.epsilon = epsilon
        self.counters = np.zeros(n_actions, dtype=np.int64)
        self.committed: Optional[int] = None
        self._rng = stream
        self._last_action: Optional[int] = None

    def choose_action(self) -> int:
        a = min(int(self._rng.random() * self.n_actions), self.n_actions - 1)
        self._last_action = a
        return a

    def message(self, utility: float) -> int:
        return sample_message(self, utility)

    def observe(self, unanimous: int) -> None:
        if unanimous:
            self.counters[self._last_action] += 1

    def commit(self) -> int:
        return commit(self)


def make_agents(game: GameSpec, epsilon: float, seed: int) -> list[Agent]:
    return [
        Agent(i, game.action_counts[i], float(game.weights[i]), float(game.thresholds[i]),
              epsilon, rng.substream(seed, rng.AGENT, i))
        for i in range(game.n)
    ]


def _gate(agent: Agent, utility: float) -> bool:
    exponent = 1.0 - agent.weight * utility
    if not exponent > 0:
        raise AssumptionViolation(
            f"agent {agent.index}: w*u = {agent.weight * utility!r} >= 1 makes the message probability exceed 1")
    return agent._rng.random() < agent.epsilon ** exponent


def sample_message(agent: Agent, utility: float) -> int:
    """Threshold message: 1 with probability ``eps**(1 - w u)`` if ``u > lambda``, else 0."""
    gate = _gate(agent, utility)
    return int(gate and utility > agent.threshold)


def best_response_table(game: GameSpec) -> np.ndarray:
    """``table[i, k]`` is True iff agent i's action at joint index k is a best response."""
    tensor = game.utility_tensor()
    out = np.empty((game.n, game.num_joint), dtype=bool)
    for i in range(game.n):
        best = tensor[i].max(axis=i, keepdims=True)
        out[i] = (tensor[i] >= best - TIE_TOL).reshape(-1)
    return out


def sample_message_br(agent: Agent, game: GameSpec, joint: Sequence[int]) -> int:
    """Best-response message; the agent is granted the full joint action."""
    i = agent.index
    row = game.utility_tensor()[i]
    others = tuple(joint[:i]) + (slice(None),) + tuple(joint[i + 1:])
    own = row[others]
    utility = float(own[joint[i]])
    gate = _gate(agent, utility)
    return int(gate and own[joint[i]] >= own.max() - TIE_TOL)


@dataclass(frozen=True)
class RoundRecord:
    t: int
    joint: JointAction
    joint_index: int
    utilities: tuple[float, ...]
    messages: tuple[int, ...]
    unanimous: int


def explore_round(agents: Sequence[Agent], game: GameSpec, t: int = 1, mode: Mode = "base") -> RoundRecord:
    if any(ag.committed is not None for ag in agents):
        raise CommitError("exploration round with a committed agent")
    joint = tuple(ag.choose_action() for ag in agents)
    k = sum(a * s for a, s in zip(joint, game.strides))
    utilities = tuple(float(u) for u in game.utilities[:, k])
    if mode == "base":
        messages = tuple(ag.message(u) for ag, u in zip(agents, utilities))
    else:
        messages = tuple(sample_message_br(ag, game, joint) for ag in agents)
    unanimous = int(all(messages))
    for ag in agents:
        ag.observe(unanimous)
    return RoundRecord(t, joint, k, utilities, messages, unanimous)


def commit(agent: Agent) -> int:
    """Lock in the most-counted own action (smallest index on ties)."""
    if agent.committed is not None:
        raise CommitError(f"agent {agent.index} already committed")
    agent.committed = int(np.argmax(agent.counters))
    return agent.committed


def message_probability_table(game: GameSpec, epsilon: float, mode: Mode = "base") -> np.ndarray:
    """P(m_i = 1 | joint index) for every agent, folding in the indicator."""
    exponent = 1.0 - game.weights[:, None] * game.utilities
    if np.any(~(exponent > 0)):
        raise AssumptionViolation("some w_i * u_i(a) >= 1; message probability would exceed 1")
    gate = epsilon ** exponent
    if mode == "base":
        indicator = game.utilities > game.thresholds[:, None]
    else:
        indicator = best_response_table(game)
    return np.where(indicator, gate, 0.0)


@dataclass
class ExplorationBlock:
    start: int
    actions: np.ndarray
    joint: np.ndarray
    messages: np.ndarray
    unanimous: np.ndarray


def exploration_blocks(game: GameSpec, epsilon: float, seed: int, K: int, mode: Mode = "base",
                       stops: Sequence[int] = (), chunk: int = CHUNK) -> Iterator[ExplorationBlock]:
    """Vectorized exploration rounds in blocks; a block boundary falls on every ``stops`` entry."""
    gens = [rng.substream(seed, rng.AGENT, i) for i in range(game.n)]
    ptable = message_probability_table(game, epsilon, mode)
    counts = np.array(game.action_counts)
    strides = game.strides
    bounds = sorted({int(s) for s in stops if 0 < s < K} | {K})
    t = 0
    for b in bounds:
        while t < b:
            c = min(chunk, b - t)
            draws = [g.random((c, 2)) for g in gens]
            actions = np.empty((c, game.n), dtype=np.int64)
            joint = np.zeros(c, dtype=np.int64)
            for i, d in enumerate(draws):
                actions[:, i] = np.minimum((d[:, 0] * counts[i]).astype(np.int64), counts[i] - 1)
                joint += actions[:, i] * strides[i]
            messages = np.empty((c, game.n), dtype=bool)
            for i, d in enumerate(draws):
                messages[:, i] = d[:, 1] < ptable[i, joint]
            yield ExplorationBlock(t, actions, joint, messages, messages.all(axis=1))
            t += c


@dataclass
class RunTrace:
    K: int
    T: int
    seed: int
    epsilon: float
    mode: str
    committed_joint: JointAction
    counters: list[np.ndarray]
    exploration_welfare: np.ndarray
    committed_welfare: float
    empirical: EmpiricalTheta
    realized_regret: Optional[float]
    round_joint: Optional[np.ndarray] = field(default=None, repr=False)
    round_messages: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def welfare_per_stage(self) -> np.ndarray:
        return np.concatenate([self.exploration_welfare,
                               np.full(self.T - self.K, self.committed_welfare)])

    def rounds(self, game: GameSpec) -> Iterator[RoundRecord]:
        """Replay retained exploration rounds (requires ``keep_rounds=True``)."""
        if self.round_joint is None:
            raise ValueError("trace was run without keep_rounds")
        for t, (k, msgs) in enumerate(zip(self.round_joint, self.round_messages), start=1):
            k = int(k)
            yield RoundRecord(t, joint_from_index(game, k), k,
                              tuple(float(u) for u in game.utilities[:, k]),
                              tuple(int(m) for m in msgs), int(msgs.all()))

    def to_dict(self) -> dict:
        return {
            "config": {"K": self.K, "T": self.T, "seed": self.seed,
                       "epsilon": self.epsilon, "mode": self.mode},
            "committed_joint": list(self.committed_joint),
            "counters": [c.tolist() for c in self.counters],
            "committed_welfare": self.committed_welfare,
            "exploration_welfare_sum": float(self.exploration_welfare.sum()),
            "unanimous_rounds": int(self.empirical.counts.sum()),
            "realized_regret": self.realized_regret,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_stage_csv(self, out: TextIO) -> None:
        """One row per stage: ``t, welfare, unanimous`` (blank during exploitation)."""
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "welfare", "unanimous"])
        unanimous = None
        if self.round_messages is not None:
            unanimous = self.round_messages.all(axis=1)
        for t, x in enumerate(self.exploration_welfare, start=1):
            w.writerow([t, repr(float(x)), "" if unanimous is None else int(unanimous[t - 1])])
        cw = repr(self.committed_welfare)
        for t in range(self.K + 1, self.T + 1):
            w.writerow([t, cw, ""])


def _check_run_args(game: GameSpec, K: int, T: int, epsilon: float):
    require_valid(game)
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 1 <= K <= T:
        raise ValueError(f"need 1 <= K <= T, got K={K}, T={T}")


def _stage_gaps(w_star: float, K: int, T: int, exploration_welfare: np.ndarray, committed_welfare: float) -> float:
    return math.fsum(w_star - exploration_welfare) + (T - K) * (w_star - committed_welfare)


def run(game: GameSpec, K: int, T: int, epsilon: float, seed: int, mode: Mode = "base",
        keep_rounds: bool = False, engine: Literal["vectorized", "reference"] = "vectorized") -> RunTrace:
    """One explore-then-commit execution: K exploration rounds, then T - K stages of the commitment."""
    _check_run_args(game, K, T, epsilon)
    if engine == "reference":
        return _run_reference(game, K, T, epsilon, seed, mode, keep_rounds)
    W = game.welfare_vector()
    emp = EmpiricalTheta.for_game(game)
    counters = [np.zeros(c, dtype=np.int64) for c in game.action_counts]
    welfare_parts, joint_parts, msg_parts = [], [], []
    for blk in exploration_blocks(game, epsilon, seed, K, mode):
        emp.update_batch(blk.joint, blk.unanimous)
        for i, c in enumerate(counters):
            c += np.bincount(blk.actions[blk.unanimous, i], minlength=len(c))
        welfare_parts.append(W[blk.joint])
        if keep_rounds:
            joint_parts.append(blk.joint)
            msg_parts.append(blk.messages)
    committed = tuple(int(np.argmax(c)) for c in counters)
    return _finish(game, K, T, epsilon, seed, mode, committed, counters, np.concatenate(welfare_parts), emp,
                   np.concatenate(joint_parts) if keep_rounds else None,
                   np.concatenate(msg_parts) if keep_rounds else None)


def _run_reference(game, K, T, epsilon, seed, mode, keep_rounds) -> RunTrace:
    agents = make_agents(game, epsilon, seed)
    emp = EmpiricalTheta.for_game(game)
    W = game.welfare_vector()
    welfare = np.empty(K)
    joints = np.empty(K, dtype=np.int64)
    msgs = np.empty((K, game.n), dtype=bool)
    for t in range(1, K + 1):
        rec = explore_round(agents, game, t, mode)
        emp.update(rec)
        welfare[t - 1] = W[rec.joint_index]
        joints[t - 1] = rec.joint_index
        msgs[t - 1] = rec.messages
    committed = tuple(ag.commit() for ag in agents)
    return _finish(game, K, T, epsilon, seed, mode, committed, [ag.counters for ag in agents], welfare, emp,
                   joints if keep_rounds else None, msgs if keep_rounds else None)


def _finish(game, K, T, epsilon, seed, mode, committed, counters, welfare, emp, joints, msgs) -> RunTrace:
    k = sum(a * s for a, s in zip(committed, game.strides))
    cw = float(game.welfare_vector()[k])
    report = solve(game)
    regret = None if report.M == 0 else _stage_gaps(report.w_star, K, T, welfare, cw)
    return RunTrace(K, T, int(seed), float(epsilon), mode, committed, counters, welfare, cw, emp,
                    regret, joints, msgs)


def realized_regret(game: GameSpec, trace: RunTrace) -> float:
    """``T * W(a*) - sum_t W(a^t)`` with the maximum taken over the feasible set.

    Summed stage by stage as ``W(a*) - W(a^t)`` so an all-optimal trace gives exactly 0.
    """
    report = solve(game)
    if report.M == 0:
        raise EmptyFeasibleSetError("regret is undefined without a feasible joint action")
    return _stage_gaps(report.w_star, trace.K, trace.T, trace.exploration_welfare, trace.committed_welfare)
