"""Observer-side estimate of how often each joint action is unanimously endorsed.

Agents never hold this object; the experiment harness feeds it every
exploration round to check the concentration argument behind the regret bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .game import GameSpec, joint_index
from .oracle import marginals, theta_vector


class EstimatorError(ValueError):
    pass


@dataclass
class EmpiricalTheta:
    num_joint: int
    counts: np.ndarray = field(default=None)
    t: int = 0

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.num_joint, dtype=np.int64)

    @classmethod
    def for_game(cls, game: GameSpec) -> "EmpiricalTheta":
        return cls(game.num_joint)

    def update(self, record) -> "EmpiricalTheta":
        """Fold in one :class:`~sbcpe.dynamics.RoundRecord`; rounds must arrive in order."""
        if record.t != self.t + 1:
            raise EstimatorError(f"expected round {self.t + 1}, got {record.t}")
        if record.unanimous:
            self.counts[record.joint_index] += 1
        self.t += 1
        return self

    def update_batch(self, joint: np.ndarray, unanimous: np.ndarray) -> "EmpiricalTheta":
        self.counts += np.bincount(joint[unanimous], minlength=self.num_joint)
        self.t += len(joint)
        return self

    def merge(self, other: "EmpiricalTheta") -> "EmpiricalTheta":
        return EmpiricalTheta(self.num_joint, self.counts + other.counts, self.t + other.t)

    def _require_rounds(self):
        if self.t < 1:
            raise EstimatorError("no rounds observed")

    def theta_hat_vector(self) -> np.ndarray:
        self._require_rounds()
        return self.counts / self.t

    def theta_hat(self, game: GameSpec, a) -> float:
        self._require_rounds()
        return self.counts[joint_index(game, a)] / self.t

    def marginal(self, game: GameSpec, i: int, a_i: int) -> float:
        self._require_rounds()
        return marginal_counts(game, self.counts)[i][a_i] / self.t

    def marginal_count(self, game: GameSpec, i: int, a_i: int) -> int:
        """``t * marginal(i, a_i)`` as an exact integer; equals agent i's counter on the same trace."""
        return int(marginal_counts(game, self.counts)[i][a_i])

    def sup_error(self, game: GameSpec, epsilon: float) -> float:
        return float(np.max(np.abs(self.theta_hat_vector() - theta_vector(game, epsilon))))

    def most_endorsed(self) -> int:
        """Joint index maximizing the estimate; smallest index on ties."""
        return int(np.argmax(self.counts))

    def dump_csv(self, game: GameSpec, epsilon: float, out: TextIO) -> None:
        th = theta_vector(game, epsilon)
        est = self.theta_hat_vector()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["joint_index", "count", "theta_hat", "theta", "abs_error"])
        for k in range(self.num_joint):
            w.writerow([k, int(self.counts[k]), repr(float(est[k])), repr(float(th[k])),
                        repr(float(abs(est[k] - th[k])))])


def marginal_counts(game: GameSpec, counts: np.ndarray) -> list[np.ndarray]:
    """Integer marginal counts, comparable exactly with agent counters."""
    return marginals(game, np.asarray(counts, dtype=np.int64))


def hoeffding_envelope(K: int, xi: float, M: int) -> float:
    """``min(1, 2 M exp(-2 K xi^2))``."""
    return min(1.0, 2 * M * math.exp(-2 * K * xi**2))
