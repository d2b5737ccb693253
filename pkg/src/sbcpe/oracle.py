"""Brute-force welfare oracle and the theory constants built on it.

Everything here enumerates the full joint action space, so it is meant for
games where ``|A|`` fits comfortably in memory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .game import GameSpec, JointAction, joint_from_index, joint_index

TIE_TOL = 1e-12


class OracleError(ValueError):
    """A precondition of an oracle computation does not hold."""


class EmptyFeasibleSetError(OracleError):
    pass


class HorizonTooShortError(OracleError):
    pass


class InadmissibleEpsilonError(OracleError):
    pass


@dataclass(frozen=True)
class OracleReport:
    a_star: Optional[JointAction]
    w_star: float
    feasible_set: list[JointAction]
    M: int
    delta1: Optional[float]
    delta_max: Optional[float]
    unique_maximizer: bool
    second_best_welfare: Optional[float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a_star"] = None if self.a_star is None else list(self.a_star)
        d["feasible_set"] = [list(a) for a in self.feasible_set]
        if self.M == 0:
            d["w_star"] = None
        return d


@dataclass(frozen=True)
class ParameterPlan:
    epsilon: float
    delta: float
    xi: float
    epsilon_max: float
    horizon_T: int
    k_star: int
    k_star_exact: float
    beta: float
    regret_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def solve(game: GameSpec) -> OracleReport:
    W = game.welfare_vector()
    feasible = np.flatnonzero(game.feasible_mask())
    M = len(feasible)
    fset = [joint_from_index(game, k) for k in feasible]
    if M == 0:
        return OracleReport(None, float("nan"), [], 0, None, None, False, None)
    fw = W[feasible]
    best = int(np.argmax(fw))
    w_star = float(fw[best])
    k_star = int(feasible[best])
    delta_max = float(np.max(w_star - W))
    if M == 1:
        return OracleReport(joint_from_index(game, k_star), w_star, fset, 1, None, delta_max, True, None)
    second = float(np.max(np.delete(fw, best)))
    unique = w_star - second > TIE_TOL
    return OracleReport(
        a_star=joint_from_index(game, k_star),
        w_star=w_star,
        feasible_set=fset,
        M=M,
        delta1=w_star - second,
        delta_max=delta_max,
        unique_maximizer=unique,
        second_best_welfare=second,
    )


def _check_epsilon(epsilon: float) -> float:
    if not 0 < epsilon < 1:
        raise OracleError(f"epsilon must lie in (0, 1), got {epsilon}")
    return float(epsilon)


def content_prob_vector(game: GameSpec, epsilon: float) -> np.ndarray:
    """P(all agents signal 1 | a) for every joint index."""
    epsilon = _check_epsilon(epsilon)
    W = game.welfare_vector()
    return np.where(game.feasible_mask(), epsilon ** (game.n - W), 0.0)


def theta_vector(game: GameSpec, epsilon: float) -> np.ndarray:
    """P(a is played and unanimously endorsed) under uniform exploration."""
    return content_prob_vector(game, epsilon) / game.num_joint


def content_prob(game: GameSpec, epsilon: float, a: Sequence[int]) -> float:
    return float(content_prob_vector(game, epsilon)[joint_index(game, a)])


def theta(game: GameSpec, epsilon: float, a: Sequence[int]) -> float:
    return float(theta_vector(game, epsilon)[joint_index(game, a)])


def endorsed_distribution(game: GameSpec, epsilon: float) -> np.ndarray:
    """Distribution of the joint action given a unanimous round.

    Proportional to ``epsilon ** -W(a)`` on the feasible set. Computed
    relative to the best feasible welfare so small epsilons do not overflow.
    """
    epsilon = _check_epsilon(epsilon)
    mask = game.feasible_mask()
    if not mask.any():
        raise EmptyFeasibleSetError("no feasible joint action")
    W = game.welfare_vector()
    top = W[mask].max()
    rel = np.where(mask, np.exp((top - W) * math.log(epsilon)), 0.0)
    return rel / rel.sum()


def _needs_second_best(report: OracleReport) -> float:
    if report.M < 2:
        raise OracleError(f"need at least two feasible joint actions, have M={report.M}")
    return report.second_best_welfare


def xi(game: GameSpec, epsilon: float, delta: float, report: OracleReport | None = None) -> float:
    """Separation margin ``delta/(|A| M) * epsilon**(n - W_second)``."""
    epsilon = _check_epsilon(epsilon)
    if delta <= 0:
        raise OracleError(f"delta must be positive, got {delta}")
    report = report or solve(game)
    second = _needs_second_best(report)
    return delta / (game.num_joint * report.M) * epsilon ** (game.n - second)


def epsilon_bound(game: GameSpec, delta: float, report: OracleReport | None = None) -> float:
    """Largest admissible epsilon (exclusive): ``(M + delta) ** (-1 / delta1)``."""
    if delta <= 0:
        raise OracleError(f"delta must be positive, got {delta}")
    report = report or solve(game)
    _needs_second_best(report)
    if not report.unique_maximizer:
        raise OracleError("welfare maximizer is not unique")
    return (report.M + delta) ** (-1.0 / report.delta1)


def optimal_exploration(xi_: float, M: int, T: int) -> float:
    """Unrounded regret-minimizing exploration length ``log(4 M T xi^2) / (2 xi^2)``."""
    arg = 4 * M * T * xi_**2
    if arg <= 1:
        raise HorizonTooShortError(f"4*M*T*xi^2 = {arg:.6g} <= 1; horizon too short")
    return math.log(arg) / (2 * xi_**2)


def regret_bound(xi_: float, M: int, T: int, delta_max: float) -> float:
    arg = 4 * M * T * xi_**2
    if arg <= 1:
        raise HorizonTooShortError(f"4*M*T*xi^2 = {arg:.6g} <= 1; horizon too short")
    return delta_max / (2 * xi_**2) * (1 + math.log(arg) * (1 - 1 / (2 * T * xi_**2)))


def failure_probability(K: float, xi_: float, M: int) -> float:
    """Union-bound failure probability ``2 M exp(-2 K xi^2)`` (not clipped)."""
    return 2 * M * math.exp(-2 * K * xi_**2)


def plan(game: GameSpec, epsilon: float, delta: float, T: int) -> ParameterPlan:
    report = solve(game)
    eps_max = epsilon_bound(game, delta, report)
    if epsilon >= eps_max:
        raise InadmissibleEpsilonError(f"epsilon={epsilon} is not below the bound {eps_max:.6g}")
    x = xi(game, epsilon, delta, report)
    k_exact = optimal_exploration(x, report.M, T)
    k = min(math.ceil(k_exact), int(T))
    return ParameterPlan(
        epsilon=float(epsilon),
        delta=float(delta),
        xi=x,
        epsilon_max=eps_max,
        horizon_T=int(T),
        k_star=k,
        k_star_exact=k_exact,
        beta=failure_probability(k, x, report.M),
        regret_bound=regret_bound(x, report.M, T, report.delta_max),
    )


def scaled_theta(game: GameSpec, epsilon: float, delta: float,
                 report: OracleReport | None = None) -> tuple[np.ndarray, float]:
    """``theta`` and ``xi`` both divided by ``epsilon**(n - W_second) / |A|``.

    Every comparison in the separation lemma and in marginal identification
    is invariant under this common positive factor, and the scaled values stay
    representable when ``epsilon`` is tiny.
    """
    epsilon = _check_epsilon(epsilon)
    report = report or solve(game)
    second = _needs_second_best(report)
    W = game.welfare_vector()
    with np.errstate(over="ignore"):
        rel = np.where(game.feasible_mask(), np.exp((W - second) * -math.log(epsilon)), 0.0)
    return rel, delta / report.M


def separation_sides(game: GameSpec, epsilon: float, delta: float,
                 report: OracleReport | None = None, scaled: bool = False) -> tuple[float, float]:
    """Both sides of ``theta(a*) - xi > sum_{a in A_lambda, a != a*} (theta(a) + xi)``."""
    report = report or solve(game)
    _needs_second_best(report)
    if not report.unique_maximizer:
        raise OracleError("welfare maximizer is not unique")
    if delta <= 0:
        raise OracleError(f"delta must be positive, got {delta}")
    if scaled:
        th, x = scaled_theta(game, epsilon, delta, report)
    else:
        th, x = theta_vector(game, epsilon), xi(game, epsilon, delta, report)
    k_star = joint_index(game, report.a_star)
    others = [th[joint_index(game, a)] + x for a in report.feasible_set if a != report.a_star]
    return float(th[k_star] - x), math.fsum(others)


def verify_lemma1(game: GameSpec, epsilon: float, delta: float,
                  report: OracleReport | None = None) -> bool:
    lhs, rhs = separation_sides(game, epsilon, delta, report, scaled=True)
    return bool(lhs > rhs)


def marginals(game: GameSpec, values: np.ndarray) -> list[np.ndarray]:
    """Per-agent sums of a joint-action map over every other agent's action."""
    t = np.asarray(values).reshape(game.action_counts)
    out = []
    for i in range(game.n):
        axes = tuple(j for j in range(game.n) if j != i)
        out.append(t.sum(axis=axes) if axes else t.copy())
    return out


def identify_from_estimate(game: GameSpec, theta_hat: np.ndarray) -> JointAction:
    """Each agent's argmax of its marginal; ties go to the smallest index."""
    return tuple(int(np.argmax(mg)) for mg in marginals(game, theta_hat))
