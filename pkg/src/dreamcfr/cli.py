"""Command-line entry points.

Subcommands: ``train`` a config file, ``eval`` a saved model archive,
``ablate`` one of the named sweeps, ``print-config`` the resolved
defaults with origin notes, and ``bestresponse`` for per-seat values.
Exit codes: 0 on success, 2 for configuration or usage errors, 3 when
training diverges (non-finite loss).
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .buffers import UNIFORM, WEIGHTING_NAMES, load_archive
from .config import GAMES, PROFILES, build_config, load_config, render_config
from .errors import ConfigError, TrainingDivergedError
from .evaluation import TabularPolicy, UniformPolicy, exploitability, head_to_head
from .games import make_game
from .harness import (
    ABLATION_SUITES,
    format_ablation,
    run_ablation,
    run_seeds,
    run_train,
)
from .trainer import ALGORITHMS, ArchiveAveragePolicy, archive_average_profile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dreamcfr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training from a config file")
    p_train.add_argument("config", help="path to a key=value config file")
    p_train.add_argument("--output-root", default=None, help="runs directory root")
    p_train.add_argument("--resume", action="store_true", help="continue from the run checkpoint")
    p_train.add_argument("--seeds", type=int, nargs="*", default=None,
                         help="run once per seed and summarize mean +/- std")

    p_eval = sub.add_parser("eval", help="evaluate a saved model archive")
    p_eval.add_argument("archive", help="archive directory (with index.json)")
    p_eval.add_argument("--game", required=True, choices=GAMES)
    p_eval.add_argument("--weighting", default=UNIFORM, choices=WEIGHTING_NAMES)
    p_eval.add_argument("--hands", type=int, default=1000, help="probe hands for large games")
    p_eval.add_argument("--seed", type=int, default=0)

    p_abl = sub.add_parser("ablate", help="run a named ablation sweep at desk profile")
    p_abl.add_argument("suite", choices=ABLATION_SUITES)
    p_abl.add_argument("--game", default="leduc", choices=GAMES)
    p_abl.add_argument("--algorithm", default="dream", choices=ALGORITHMS)
    p_abl.add_argument("--iterations", type=int, default=None)
    p_abl.add_argument("--seeds", type=int, nargs="*", default=[0])
    p_abl.add_argument("--output-root", default=None)

    p_cfg = sub.add_parser("print-config", help="show resolved settings and their origins")
    p_cfg.add_argument("config", nargs="?", default=None, help="optional config file to resolve")
    p_cfg.add_argument("--game", default="leduc", choices=GAMES)
    p_cfg.add_argument("--algorithm", default="dream", choices=ALGORITHMS)
    p_cfg.add_argument("--profile", default=None, choices=PROFILES)

    p_br = sub.add_parser("bestresponse", help="best-response values against an archive average")
    p_br.add_argument("archive")
    p_br.add_argument("--game", required=True, choices=GAMES)
    p_br.add_argument("--weighting", default=UNIFORM, choices=WEIGHTING_NAMES)
    return parser


def _cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seeds:
        manifests, summary = run_seeds(config, args.seeds, root=args.output_root)
        for m in manifests:
            print(f"{m.run_id}: {m.status} after {m.iterations_done} iterations -> {m.directory}")
        print(f"{summary['metric']}: {summary['mean']:.3f} +/- {summary['std']:.3f} "
              f"over {len(manifests)} seeds")
        return EXIT_OK
    manifest = run_train(config, root=args.output_root, resume=args.resume)
    print(f"{manifest.run_id}: {manifest.status} after {manifest.iterations_done} iterations")
    print(f"  nodes touched: {manifest.cumulative_nodes}")
    if manifest.final_eval and "exploitability_mbb" in manifest.final_eval:
        print(f"  exploitability: {manifest.final_eval['exploitability_mbb']:.3f} mbb/hand")
    print(f"  run directory: {manifest.directory}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    game = make_game(args.game)
    archive = load_archive(args.archive)
    if getattr(game, "enumerable", False):
        profile = archive_average_profile(game, archive, weighting=args.weighting)
        result = exploitability(game, TabularPolicy(game, profile))
        print(f"exploitability: {result.total_mbb:.3f} mbb/hand ({result.total_chips:.4f} chips)")
        print(f"  best response vs seat 1: {result.br_values[0]:.4f} chips")
        print(f"  best response vs seat 2: {result.br_values[1]:.4f} chips")
        return EXIT_OK
    policy = ArchiveAveragePolicy(game, archive, weighting=args.weighting)
    match = head_to_head(game, policy, UniformPolicy(), args.hands, seed=args.seed)
    print(f"vs uniform over {match.hands} hands: {match.mean_chips:+.2f} chips/hand "
          f"[{match.ci_low:+.2f}, {match.ci_high:+.2f}]")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    base = {"game": args.game, "algorithm": args.algorithm}
    if args.iterations is not None:
        base["iterations"] = args.iterations
    result = run_ablation(args.suite, base, root=args.output_root, seeds=args.seeds)
    print(format_ablation(result))
    return EXIT_OK


def _cmd_print_config(args) -> int:
    if args.config is not None:
        config = load_config(args.config)
        if args.profile is not None and config.profile != args.profile:
            raise ConfigError("--profile conflicts with the profile set in the config file")
    else:
        overrides = {"game": args.game, "algorithm": args.algorithm}
        if args.profile is not None:
            overrides["profile"] = args.profile
        config = build_config(overrides)
    sys.stdout.write(render_config(config))
    return EXIT_OK


def _cmd_bestresponse(args) -> int:
    game = make_game(args.game)
    if not getattr(game, "enumerable", False):
        raise ConfigError(f"best response needs an enumerable game, not {args.game}")
    archive = load_archive(args.archive)
    profile = archive_average_profile(game, archive, weighting=args.weighting)
    result = exploitability(game, TabularPolicy(game, profile))
    for seat, value in enumerate(result.br_values, start=1):
        print(f"best response vs seat {seat}: {value:.4f} chips/hand")
    print(f"sum: {result.total_chips:.4f} chips ({result.total_mbb:.3f} mbb)")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "print-config": _cmd_print_config,
    "bestresponse": _cmd_bestresponse,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
