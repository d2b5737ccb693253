"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 invalid game or parameters,
3 a verification suite found counterexamples.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, fields
from typing import Optional, Sequence

from . import dynamics, experiments, oracle
from .experiments import ExperimentConfig
from .game import GameSpec, GameValidationError, load_game, random_game, require_valid, save_game

EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x]


def _add_common(p: argparse.ArgumentParser, game: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write primary output here instead of stdout")
    p.add_argument("--json", action="store_true", default=None, help="JSON lines instead of CSV")
    if game:
        p.add_argument("--game", help="game JSON file")
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--weight", type=float)
        p.add_argument("--threshold", type=float)
        p.add_argument("--game-seed", type=int, dest="game_seed")
    p.add_argument("--delta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbcpe", description="Single-bit explore-then-commit coordination toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="write a random game to a JSON file")
    _add_common(p)

    p = sub.add_parser("solve", help="brute-force welfare oracle report")
    _add_common(p)

    p = sub.add_parser("plan", help="theory constants for (epsilon, delta, T)")
    _add_common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--T", type=int, required=True)

    p = sub.add_parser("run", help="one explore-then-commit trace, per-stage CSV")
    _add_common(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--mode", choices=["base", "br"])
    p.add_argument("--trace", help="also write the trace summary JSON here")

    p = sub.add_parser("sweep", help="committed/endorsed welfare over a K x epsilon grid")
    _add_common(p)
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--ks", type=_ints)
    p.add_argument("--T", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--mode", choices=["base", "br"])

    p = sub.add_parser("epsmap", help="limit epsilon vs welfare gap over random games")
    _add_common(p, game=False)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--empirical", action="store_true",
                   help="limit from simulated success rates instead of exact theta")
    p.add_argument("--K", type=int, default=10_000, help="exploration length for --empirical")
    p.add_argument("--replicas", type=int)
    p.add_argument("--min-success", type=float, default=0.95, dest="min_success")

    p = sub.add_parser("regret", help="mean realized regret vs the theoretical bound over T")
    _add_common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--t-grid", type=_ints, dest="t_grid")
    p.add_argument("--replicas", type=int)

    p = sub.add_parser("verify", help="randomized checks of the separation lemma and identification")
    _add_common(p, game=False)
    p.add_argument("--games", type=int, default=1000)
    p.add_argument("--perturbations", type=int, default=100)
    p.add_argument("--eps-per-game", type=int, default=5, dest="eps_per_game")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    cfg = cfg.override(**vars(args))
    cfg.check()
    return cfg


def _need_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is None:
        raise UsageError("--seed is required")
    return cfg.seed


def _game(cfg: ExperimentConfig) -> GameSpec:
    if cfg.game:
        return require_valid(load_game(cfg.game))
    seed = cfg.game_seed if cfg.game_seed is not None else cfg.seed
    if seed is None:
        raise UsageError("give --game or a seed for a random game (--game-seed/--seed)")
    return require_valid(random_game(cfg.n, cfg.m, seed, cfg.weight, cfg.threshold))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _write_rows(rows: Sequence[dict], header: Sequence[str], cfg: ExperimentConfig, out) -> None:
    if cfg.json:
        for r in rows:
            out.write(json.dumps(r) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r[h]) for h in header])


def _emit(cfg: ExperimentConfig, write, stdout) -> None:
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            write(fh)
    else:
        write(stdout)


def _dataclass_rows(items) -> tuple[list[dict], list[str]]:
    header = [f.name for f in fields(items[0])] if items else []
    return [asdict(x) for x in items], header


def cmd_gen(args, cfg, stdout, stderr):
    seed = cfg.game_seed if cfg.game_seed is not None else _need_seed(cfg)
    game = random_game(cfg.n, cfg.m, seed, cfg.weight, cfg.threshold)
    if cfg.out:
        save_game(game, cfg.out)
    else:
        stdout.write(json.dumps(game.to_dict()) + "\n")
    return 0


def cmd_solve(args, cfg, stdout, stderr):
    report = oracle.solve(_game(cfg))
    _emit(cfg, lambda fh: fh.write(json.dumps(report.to_dict(), indent=2) + "\n"), stdout)
    return 0


def cmd_plan(args, cfg, stdout, stderr):
    p = oracle.plan(_game(cfg), args.epsilon, cfg.delta, args.T)
    _emit(cfg, lambda fh: fh.write(json.dumps(p.to_dict(), indent=2) + "\n"), stdout)
    return 0


def cmd_run(args, cfg, stdout, stderr):
    seed = _need_seed(cfg)
    game = _game(cfg)
    trace = dynamics.run(game, args.K, args.T, args.epsilon, seed, mode=cfg.mode, keep_rounds=True)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(json.dumps(trace.to_dict(), indent=2) + "\n")

    def write(fh):
        if cfg.json:
            buf = io.StringIO()
            trace.write_stage_csv(buf)
            buf.seek(0)
            for row in csv.DictReader(buf):
                fh.write(json.dumps(row) + "\n")
        else:
            trace.write_stage_csv(fh)

    _emit(cfg, write, stdout)
    stderr.write(f"committed={list(trace.committed_joint)} regret={trace.realized_regret}\n")
    return 0


def cmd_sweep(args, cfg, stdout, stderr):
    seed = _need_seed(cfg)
    game = _game(cfg)
    rows = experiments.sweep_fig1(game, cfg.ks, cfg.epsilons, cfg.replicas, cfg.T, seed, cfg.mode)
    data, header = _dataclass_rows(rows)
    _emit(cfg, lambda fh: _write_rows(data, header, cfg, fh), stdout)
    return 0


def cmd_epsmap(args, cfg, stdout, stderr):
    seed = _need_seed(cfg)
    empirical = None
    if args.empirical:
        empirical = {"K": args.K, "R": cfg.replicas, "min_success": args.min_success}
    res = experiments.epsmap_fig2(cfg.n, cfg.m, cfg.samples, seed, cfg.delta, cfg.bins, cfg.limit_grid,
                                  cfg.weight, cfg.threshold, empirical=empirical)
    data, header = _dataclass_rows(res.bins)
    _emit(cfg, lambda fh: _write_rows(data, header, cfg, fh), stdout)
    stderr.write(f"samples={res.samples} kept={res.kept} discarded={res.discarded} "
                 f"unresolved={res.unresolved}\n")
    return 0


def cmd_regret(args, cfg, stdout, stderr):
    seed = _need_seed(cfg)
    rows = experiments.regret_curve(_game(cfg), args.epsilon, cfg.delta, cfg.t_grid, cfg.replicas, seed)
    data, header = _dataclass_rows(rows)
    _emit(cfg, lambda fh: _write_rows(data, header, cfg, fh), stdout)
    return 0


def cmd_verify(args, cfg, stdout, stderr):
    seed = _need_seed(cfg)
    corpus, discarded = experiments.verification_corpus(args.games, seed, eps_per_game=args.eps_per_game,
                                                        delta=cfg.delta)
    lemma_bad = experiments.separation_suite(corpus, cfg.delta)
    prop_bad = experiments.identification_suite(corpus, seed, args.perturbations, cfg.delta)
    rows = [
        {"suite": "separation", "games": len(corpus), "checks": len(corpus) * args.eps_per_game,
         "failures": len(lemma_bad)},
        {"suite": "identification", "games": len(corpus), "checks": len(corpus) * args.perturbations,
         "failures": len(prop_bad)},
    ]
    _emit(cfg, lambda fh: _write_rows(rows, ["suite", "games", "checks", "failures"], cfg, fh), stdout)
    stderr.write("skipped draws: " + ", ".join(f"{k}={v}" for k, v in discarded.items()) + "\n")
    return EXIT_VERIFY if lemma_bad or prop_bad else 0


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "plan": cmd_plan,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "epsmap": cmd_epsmap,
    "regret": cmd_regret,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg, stdout, stderr)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (GameValidationError, oracle.OracleError, dynamics.AssumptionViolation, ValueError,
            OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
