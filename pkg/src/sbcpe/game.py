"""Finite n-agent games with weighted utilities and local thresholds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng

JointAction = tuple[int, ...]


class InvalidActionError(ValueError):
    """A joint action or joint index does not belong to the game."""


class GameValidationError(ValueError):
    """The game violates a structural requirement or ``w_i * u_i(a) < 1``."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class GameSpec:
    """An n-agent normal-form game.

    ``utilities`` has shape ``(n, |A|)``; column ``k`` holds every agent's
    payoff at the joint action with ``joint_index == k`` (row-major, agent 0
    most significant). Construction does not validate; call :func:`validate`
    or :func:`require_valid`.
    """

    n: int
    action_counts: tuple[int, ...]
    weights: np.ndarray
    thresholds: np.ndarray
    utilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "action_counts", tuple(int(c) for c in self.action_counts))
        for name in ("weights", "thresholds", "utilities"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_joint(self) -> int:
        return math.prod(self.action_counts)

    @property
    def strides(self) -> tuple[int, ...]:
        out = []
        s = 1
        for c in reversed(self.action_counts):
            out.append(s)
            s *= c
        return tuple(reversed(out))

    def welfare_vector(self) -> np.ndarray:
        """W(a) for every joint index."""
        return self.weights @ self.utilities

    def feasible_mask(self) -> np.ndarray:
        return np.all(self.utilities > self.thresholds[:, None], axis=0)

    def utility_tensor(self) -> np.ndarray:
        """Utilities reshaped to ``(n, |A_1|, ..., |A_n|)``."""
        return self.utilities.reshape((self.n,) + self.action_counts)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "action_counts": list(self.action_counts),
            "weights": self.weights.tolist(),
            "thresholds": self.thresholds.tolist(),
            "utilities": self.utilities.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameSpec":
        missing = {"n", "action_counts", "weights", "thresholds", "utilities"} - set(data)
        if missing:
            raise GameValidationError([f"missing field {f!r}" for f in sorted(missing)])
        return cls(
            n=int(data["n"]),
            action_counts=tuple(data["action_counts"]),
            weights=data["weights"],
            thresholds=data["thresholds"],
            utilities=data["utilities"],
        )


def save_game(game: GameSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game.to_dict()) + "\n")


def load_game(path: str | Path) -> GameSpec:
    return GameSpec.from_dict(json.loads(Path(path).read_text()))


def _check_action(game: GameSpec, a: Sequence[int]) -> JointAction:
    if len(a) != game.n:
        raise InvalidActionError(f"joint action has {len(a)} entries, game has {game.n} agents")
    out = []
    for i, (ai, c) in enumerate(zip(a, game.action_counts)):
        if int(ai) != ai or not 0 <= ai < c:
            raise InvalidActionError(f"agent {i} action {ai} outside [0, {c})")
        out.append(int(ai))
    return tuple(out)


def joint_index(game: GameSpec, a: Sequence[int]) -> int:
    a = _check_action(game, a)
    return sum(ai * s for ai, s in zip(a, game.strides))


def joint_from_index(game: GameSpec, k: int) -> JointAction:
    if int(k) != k or not 0 <= k < game.num_joint:
        raise InvalidActionError(f"joint index {k} outside [0, {game.num_joint})")
    k = int(k)
    out = []
    for s, c in zip(game.strides, game.action_counts):
        out.append(k // s % c)
    return tuple(out)


def welfare(game: GameSpec, a: Sequence[int]) -> float:
    k = joint_index(game, a)
    return float(math.fsum(w * u for w, u in zip(game.weights, game.utilities[:, k])))


def is_feasible(game: GameSpec, a: Sequence[int]) -> bool:
    k = joint_index(game, a)
    return bool(np.all(game.utilities[:, k] > game.thresholds))


def random_game(n: int, m: int, seed: int, weight: float = 1.0, threshold: float = 0.2) -> GameSpec:
    """Game with ``m`` actions per agent and utilities i.i.d. uniform on [0, 1).

    Utilities are drawn as one ``(n, m**n)`` block from the ``GAME``
    substream of ``seed``.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    if weight <= 0:
        raise ValueError(f"weight must be positive, got {weight}")
    gen = rng.substream(seed, rng.GAME)
    utilities = gen.random((n, m**n))
    return GameSpec(
        n=n,
        action_counts=(m,) * n,
        weights=np.full(n, float(weight)),
        thresholds=np.full(n, float(threshold)),
        utilities=utilities,
    )


def validate(game: GameSpec) -> list[str]:
    """List every violated condition; empty means the game is usable."""
    problems = []
    if game.n < 1:
        problems.append(f"n must be >= 1, got {game.n}")
    if len(game.action_counts) != game.n:
        problems.append(f"action_counts has {len(game.action_counts)} entries, expected n={game.n}")
    for i, c in enumerate(game.action_counts):
        if c < 1:
            problems.append(f"agent {i}: action count {c} < 1")
    if game.weights.shape != (game.n,):
        problems.append(f"weights shape {game.weights.shape}, expected ({game.n},)")
    if game.thresholds.shape != (game.n,):
        problems.append(f"thresholds shape {game.thresholds.shape}, expected ({game.n},)")
    if problems:
        return problems
    for i, w in enumerate(game.weights):
        if not w > 0:
            problems.append(f"agent {i}: weight {w} is not positive")
    expected = (game.n, game.num_joint)
    if game.utilities.shape != expected:
        problems.append(f"utilities shape {game.utilities.shape}, expected {expected}")
        return problems
    if not np.all(np.isfinite(game.utilities)):
        problems.append("utilities contain non-finite values")
    if not np.all(np.isfinite(game.thresholds)):
        problems.append("thresholds contain non-finite values")
    scaled = game.weights[:, None] * game.utilities
    for i, k in zip(*np.nonzero(~(scaled < 1))):
        a = joint_from_index(game, k)
        problems.append(f"agent {i} at joint action {a}: w*u = {scaled[i, k]!r} >= 1")
    return problems


def require_valid(game: GameSpec) -> GameSpec:
    problems = validate(game)
    if problems:
        raise GameValidationError(problems)
    return game
