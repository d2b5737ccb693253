"""Explore-then-commit coordination with one satisfaction bit per agent per round."""

from .dynamics import RunTrace, run
from .estimator import EmpiricalTheta, hoeffding_envelope
from .game import GameSpec, joint_from_index, joint_index, random_game, validate, welfare
from .oracle import OracleReport, ParameterPlan, plan, solve

__all__ = [
    "EmpiricalTheta",
    "GameSpec",
    "OracleReport",
    "ParameterPlan",
    "RunTrace",
    "hoeffding_envelope",
    "joint_from_index",
    "joint_index",
    "plan",
    "random_game",
    "run",
    "solve",
    "validate",
    "welfare",
]
