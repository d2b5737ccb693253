"""Batch experiments: replica statistics, parameter sweeps, epsilon maps,
regret curves and the randomized checks of the separation results.

Every batch derives its per-replica (or per-sample) seeds up front from the
master seed, so results do not depend on evaluation order or on
``SBCPE_THREADS``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import rng
from .dynamics import Mode, exploration_blocks, run
from .estimator import EmpiricalTheta
from .game import GameSpec, joint_index, random_game, require_valid
from .oracle import (
    HorizonTooShortError,
    OracleReport,
    epsilon_bound,
    identify_from_estimate,
    plan,
    scaled_theta,
    solve,
    verify_lemma1,
)

DEFAULT_K_GRID = [int(round(10 ** (2 + 0.5 * j))) for j in range(9)]
# four points per decade below 1e-3, then a linear grid up to 0.999
DEFAULT_LIMIT_GRID = [float(10.0 ** (-300 + 0.25 * j)) for j in range(1188)] + [round(0.001 * j, 3) for j in range(1, 1000)]


def _workers() -> int:
    try:
        return max(0, int(os.environ.get("SBCPE_THREADS", "0")))
    except ValueError:
        return 0


def _pmap(fn: Callable, items: Iterable) -> list:
    items = list(items)
    workers = _workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def replica_seeds(seed: int, R: int) -> list[int]:
    return [rng.child_seed(seed, rng.REPLICA, r) for r in range(R)]


@dataclass(frozen=True)
class ReplicaSummary:
    success_rate: float
    mean_regret: Optional[float]
    mean_committed_welfare: float
    replicas: int
    regrets: tuple = field(default=(), repr=False)


def run_replicas(game: GameSpec, K: int, T: int, epsilon: float, R: int, seed: int,
                 mode: Mode = "base") -> ReplicaSummary:
    if R < 1:
        raise ValueError("need at least one replica")
    report = solve(game)
    traces = _pmap(lambda s: run(game, K, T, epsilon, s, mode=mode), replica_seeds(seed, R))
    hits = sum(report.a_star is not None and tr.committed_joint == report.a_star for tr in traces)
    regrets = tuple(tr.realized_regret for tr in traces)
    return ReplicaSummary(
        success_rate=hits / R,
        mean_regret=None if report.M == 0 else math.fsum(regrets) / R,
        mean_committed_welfare=math.fsum(tr.committed_welfare for tr in traces) / R,
        replicas=R,
        regrets=regrets,
    )


@dataclass(frozen=True)
class SweepRow:
    K: int
    epsilon: float
    welfare_committed: float
    welfare_committed_se: float
    welfare_endorsed: float
    welfare_endorsed_se: float
    success_rate: float
    optimal_welfare: float


def _exploration_snapshots(game: GameSpec, epsilon: float, seed: int, ks: Sequence[int], mode: Mode):
    """Committed joint index and most-endorsed joint index after each K in ``ks``."""
    counters = [np.zeros(c, dtype=np.int64) for c in game.action_counts]
    emp = EmpiricalTheta.for_game(game)
    wanted = set(ks)
    out = {}
    for blk in exploration_blocks(game, epsilon, seed, max(ks), mode, stops=ks):
        emp.update_batch(blk.joint, blk.unanimous)
        for i, c in enumerate(counters):
            c += np.bincount(blk.actions[blk.unanimous, i], minlength=len(c))
        if emp.t in wanted:
            committed = tuple(int(np.argmax(c)) for c in counters)
            out[emp.t] = (joint_index(game, committed), emp.most_endorsed())
    return [out[k] for k in ks]


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def sweep_fig1(game: GameSpec, K_grid: Sequence[int], epsilon_grid: Sequence[float], R: int, T: int,
               seed: int, mode: Mode = "base") -> list[SweepRow]:
    """Committed and most-endorsed welfare over a K x epsilon grid.

    Replica ``r`` uses the same seed at every grid point, and the exploration
    prefix of length K is shared by all longer K, so one pass per
    (epsilon, replica) serves the whole K grid. Each row equals what
    independent :func:`~sbcpe.dynamics.run` calls with those seeds would give.
    """
    require_valid(game)
    ks = sorted({int(k) for k in K_grid})
    if not ks or not len(epsilon_grid) or R < 1:
        raise ValueError("grids must be nonempty and R >= 1")
    if ks[0] < 1 or ks[-1] > T:
        raise ValueError(f"K grid must lie in [1, T={T}]")
    report = solve(game)
    if report.M == 0:
        raise ValueError("game has no feasible joint action")
    W = game.welfare_vector()
    k_star = joint_index(game, report.a_star)
    seeds = replica_seeds(seed, R)
    rows = {}
    for eps in epsilon_grid:
        snaps = _pmap(lambda s: _exploration_snapshots(game, eps, s, ks, mode), seeds)
        snaps = np.array(snaps)  # (R, len(ks), 2)
        for j, K in enumerate(ks):
            committed, endorsed = snaps[:, j, 0], snaps[:, j, 1]
            wc, wc_se = _mean_se(W[committed])
            we, we_se = _mean_se(W[endorsed])
            rows[K, float(eps)] = SweepRow(K, float(eps), wc, wc_se, we, we_se,
                                    float(np.mean(committed == k_star)), report.w_star)
    return [rows[K, float(eps)] for K in ks for eps in epsilon_grid]


def _identification_margins(game: GameSpec, report: OracleReport, grid: np.ndarray) -> np.ndarray:
    """For each epsilon, whether exact-theta marginal identification yields a* with strict argmaxes."""
    feas = np.flatnonzero(game.feasible_mask())
    W = game.welfare_vector()[feas]
    acts = np.array([[k // s % c for s, c in zip(game.strides, game.action_counts)] for k in feas])
    with np.errstate(under="ignore"):
        rel = np.exp(np.outer(np.log(grid), report.w_star - W))  # theta up to a common factor
    ok = np.ones(len(grid), dtype=bool)
    for i, c in enumerate(game.action_counts):
        onehot = (acts[:, i][:, None] == np.arange(c)[None, :]).astype(float)
        marg = rel @ onehot
        order = np.sort(marg, axis=1)
        top = order[:, -1]
        second = order[:, -2] if c > 1 else np.full(len(grid), -np.inf)
        ok &= (np.argmax(marg, axis=1) == report.a_star[i]) & (top - second > 1e-12 * top)
    return ok


def limit_epsilon(game: GameSpec, epsilon_grid: Sequence[float] = DEFAULT_LIMIT_GRID,
                  report: OracleReport | None = None) -> Optional[float]:
    """Largest grid epsilon up to which exact-theta identification succeeds.

    Scans the grid upward and stops at the first failure; returns None when
    the smallest grid value already fails.
    """
    report = report or solve(game)
    if report.M < 2 or not report.unique_maximizer:
        raise ValueError("limit epsilon needs a unique maximizer and M >= 2")
    grid = np.sort(np.asarray(epsilon_grid, dtype=float))
    ok = _identification_margins(game, report, grid)
    fails = np.flatnonzero(~ok)
    stop = fails[0] if len(fails) else len(grid)
    return None if stop == 0 else float(grid[stop - 1])


def limit_epsilon_empirical(game: GameSpec, epsilon_grid: Sequence[float], K: int, R: int, seed: int,
                            min_success: float = 0.95) -> Optional[float]:
    """Simulation-based alternative: largest grid epsilon (scanning upward) whose
    replica success rate at exploration length K stays at least ``min_success``."""
    best = None
    for eps in sorted(epsilon_grid):
        if run_replicas(game, K, K, eps, R, seed).success_rate < min_success:
            break
        best = float(eps)
    return best


@dataclass(frozen=True)
class EpsMapBin:
    bin: int
    delta1_low: float
    delta1_high: float
    delta1_mean: float
    games: int
    mean_limit_epsilon: float
    min_limit_epsilon: float
    mean_epsilon_bound: float


@dataclass
class EpsMapResult:
    bins: list[EpsMapBin]
    samples: int
    kept: int
    discarded: int
    unresolved: int
    per_game: list[tuple[float, float, float]] = field(repr=False)  # (delta1, limit, bound)


def epsmap_fig2(n: int, m: int, samples: int, seed: int, delta: float = 1.0, bins: int = 10,
                epsilon_grid: Sequence[float] = DEFAULT_LIMIT_GRID, weight: float = 1.0,
                threshold: float = 0.2, empirical: Optional[dict] = None) -> EpsMapResult:
    """Limit epsilon against the welfare gap over random games, binned by gap quantiles.

    Games without a unique maximizer or with fewer than two feasible joint
    actions are discarded; games whose smallest grid epsilon already fails
    are counted as unresolved. ``kept + discarded == samples``.
    ``empirical`` switches to :func:`limit_epsilon_empirical` with the given
    ``K``, ``R`` keyword arguments.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")

    def one(s):
        g = random_game(n, m, rng.child_seed(seed, rng.SAMPLE, s), weight, threshold)
        rep = solve(g)
        if rep.M < 2 or not rep.unique_maximizer:
            return None
        if empirical:
            lim = limit_epsilon_empirical(g, epsilon_grid, seed=rng.child_seed(seed, rng.SAMPLE, s, 1),
                                          **empirical)
        else:
            lim = limit_epsilon(g, epsilon_grid, rep)
        return rep.delta1, lim, epsilon_bound(g, delta, rep)

    results = _pmap(one, range(samples))
    kept = [r for r in results if r is not None]
    discarded = samples - len(kept)
    if not kept:
        raise ValueError("every sampled game was discarded")
    resolved = [r for r in kept if r[1] is not None]
    per_game = [(d, float("nan") if lim is None else lim, b) for d, lim, b in kept]
    out = []
    if resolved:
        d1 = np.array([r[0] for r in resolved])
        lim = np.array([r[1] for r in resolved])
        bnd = np.array([r[2] for r in resolved])
        nb = max(1, min(bins, len(resolved)))
        edges = np.quantile(d1, np.linspace(0, 1, nb + 1))
        which = np.clip(np.searchsorted(edges, d1, side="right") - 1, 0, nb - 1)
        for b in range(nb):
            sel = which == b
            if not sel.any():
                continue
            out.append(EpsMapBin(b, float(edges[b]), float(edges[b + 1]), float(d1[sel].mean()),
                                 int(sel.sum()), float(lim[sel].mean()), float(lim[sel].min()),
                                 float(bnd[sel].mean())))
    return EpsMapResult(out, samples, len(kept), discarded, len(kept) - len(resolved), per_game)


@dataclass(frozen=True)
class RegretRow:
    T: int
    k_star: Optional[int]
    mean_regret: Optional[float]
    bound: Optional[float]
    beta: Optional[float]
    skipped: bool


def regret_curve(game: GameSpec, epsilon: float, delta: float, T_grid: Sequence[int], R: int,
                 seed: int) -> list[RegretRow]:
    rows = []
    for T in T_grid:
        try:
            p = plan(game, epsilon, delta, int(T))
        except HorizonTooShortError:
            rows.append(RegretRow(int(T), None, None, None, None, True))
            continue
        summary = run_replicas(game, p.k_star, int(T), epsilon, R, seed)
        rows.append(RegretRow(int(T), p.k_star, summary.mean_regret, p.regret_bound, p.beta, False))
    return rows


@dataclass
class SuiteGame:
    game: GameSpec
    report: OracleReport
    epsilons: list[float]


@dataclass
class SuiteResult:
    games: int
    checks: int
    failures: int
    discarded: dict
    counterexamples: list = field(default_factory=list, repr=False)


def verification_corpus(games: int, seed: int, n_choices=(2, 3, 4), m_choices=(2, 3),
                        eps_per_game: int = 5, delta: float = 1.0, threshold: float = 0.2,
                        weight: float = 1.0) -> tuple[list[SuiteGame], dict]:
    """Random games with a unique maximizer and M >= 2, each with epsilons drawn
    uniformly below its admissibility bound.

    Draws that fail those requirements, or whose bound is not representable as
    a positive double, are skipped and tallied by reason.
    """
    pick = rng.substream(seed, rng.SAMPLE)
    corpus, discarded = [], {"M<2": 0, "non-unique": 0, "bound-underflow": 0}
    s = 0
    while len(corpus) < games:
        n = int(pick.choice(n_choices))
        m = int(pick.choice(m_choices))
        g = random_game(n, m, rng.child_seed(seed, rng.SAMPLE, s), weight, threshold)
        s += 1
        rep = solve(g)
        if rep.M < 2:
            discarded["M<2"] += 1
            continue
        if not rep.unique_maximizer:
            discarded["non-unique"] += 1
            continue
        bound = epsilon_bound(g, delta, rep)
        if not bound > 0:
            discarded["bound-underflow"] += 1
            continue
        eps = []
        while len(eps) < eps_per_game:
            e = bound * pick.random()
            if 0 < e < bound:
                eps.append(float(e))
        corpus.append(SuiteGame(g, rep, eps))
    return corpus, discarded


def separation_suite(corpus: Sequence[SuiteGame], delta: float = 1.0) -> list[tuple[int, float]]:
    """Return (game position, epsilon) for every case where the separation inequality fails."""
    bad = []
    for j, item in enumerate(corpus):
        for eps in item.epsilons:
            if not verify_lemma1(item.game, eps, delta, item.report):
                bad.append((j, eps))
    return bad


def identification_suite(corpus: Sequence[SuiteGame], seed: int, perturbations: int = 100,
                       delta: float = 1.0, perturb_infeasible: bool = False) -> list[tuple[int, float]]:
    """Perturb exact theta by less than xi in sup-norm and check identification recovers a*.

    Perturbations stay nonnegative and, unless ``perturb_infeasible``, vanish
    off the feasible set just as the empirical estimate does.
    Work happens in the scaled units of :func:`~sbcpe.oracle.scaled_theta`.
    """
    bad = []
    for j, item in enumerate(corpus):
        gen = rng.substream(seed, rng.PERTURB, j)
        mask = item.game.feasible_mask()
        support = np.ones_like(mask) if perturb_infeasible else mask
        per_eps = np.array_split(np.arange(perturbations), len(item.epsilons))
        for eps, block in zip(item.epsilons, per_eps):
            th, x = scaled_theta(item.game, eps, delta, item.report)
            for _ in block:
                noise = gen.uniform(-1.0, 1.0, th.size) * x * (1 - 1e-9)
                est = np.where(support, np.maximum(th + noise, 0.0), 0.0)
                if identify_from_estimate(item.game, est) != item.report.a_star:
                    bad.append((j, eps))
    return bad


@dataclass
class ExperimentConfig:
    game: Optional[str] = None
    n: int = 10
    m: int = 2
    weight: float = 1.0
    threshold: float = 0.2
    game_seed: Optional[int] = None
    epsilons: list = field(default_factory=lambda: [0.01, 0.05, 0.18])
    ks: list = field(default_factory=lambda: list(DEFAULT_K_GRID))
    T: int = 1_000_000
    t_grid: list = field(default_factory=lambda: [1_000, 10_000, 100_000])
    replicas: int = 100
    seed: Optional[int] = None
    delta: float = 1.0
    mode: str = "base"
    samples: int = 2000
    bins: int = 10
    limit_grid: list = field(default_factory=lambda: list(DEFAULT_LIMIT_GRID))
    out: Optional[str] = None
    json: bool = False

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def override(self, **kwargs) -> "ExperimentConfig":
        data = asdict(self)
        data.update({k: v for k, v in kwargs.items() if v is not None and k in data})
        return ExperimentConfig(**data)

    def check(self) -> None:
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        for name in ("epsilons", "ks", "t_grid", "limit_grid"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if self.mode not in ("base", "br"):
            raise ValueError(f"mode must be 'base' or 'br', got {self.mode!r}")
