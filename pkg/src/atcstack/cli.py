"""Operator-facing command line: train, eval, and compare.

Every flag can also come from a JSON config file (``--config``); explicit
command-line flags win over config values.  Two environment variables are
honoured: ``ATCSTACK_OUTPUT_DIR`` supplies the output directory when
``--out`` is absent, and ``ATCSTACK_WORKERS`` the worker count when
``--workers`` is absent.  Errors go to standard error with a stable
prefix and a non-zero exit code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import evaluate, figures
from .airspace import load_sector
from .ppo import PPOConfig, load_checkpoint, save_checkpoint, train
from .rewards import PRESETS, RewardConfig, RewardWeights, preset_weights
from .scenario import SCENARIO_KINDS

ERROR_PREFIX = "atcstack: error:"


class CliError(Exception):
    pass


def _resolve_out(args) -> Path:
    out = args.out or os.environ.get("ATCSTACK_OUTPUT_DIR")
    if not out:
        raise CliError("no output directory: pass --out or set ATCSTACK_OUTPUT_DIR")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_workers(args, default: int) -> int:
    if args.workers is not None:
        return args.workers
    env_value = os.environ.get("ATCSTACK_WORKERS")
    if env_value:
        try:
            return int(env_value)
        except ValueError:
            raise CliError(f"ATCSTACK_WORKERS is not an integer: {env_value!r}") from None
    return default


def _loaded_sector(args):
    if args.sector is not None and not Path(args.sector).exists():
        raise CliError(f"sector file not found: {args.sector}")
    return load_sector(args.sector)


def _resolve_weights(args) -> tuple[str, RewardWeights]:
    if args.preset == "custom":
        if not args.weights:
            raise CliError("--preset custom requires --weights with a JSON object")
        try:
            doc = json.loads(args.weights)
            return "custom", RewardWeights(**doc)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError(f"bad --weights value: {exc}") from exc
    if args.weights:
        raise CliError("--weights is only valid with --preset custom")
    return args.preset, preset_weights(args.preset)


def _figure_paths(out: Path, stem: str) -> list[Path]:
    return [out / f"{stem}.png", out / f"{stem}.svg"]


# -- train ---------------------------------------------------------------------


def cmd_train(args) -> int:
    out = _resolve_out(args)
    sector = _loaded_sector(args)
    preset_name, weights = _resolve_weights(args)
    config = PPOConfig(
        learning_rate=args.lr,
        gamma=args.gamma,
        entropy_coeff=args.entropy_coeff,
        clip_epsilon=args.clip_epsilon,
        gae_lambda=args.gae_lambda,
        rollout_length=args.rollout_length,
        minibatch_size=args.minibatch_size,
        epochs_per_update=args.epochs,
        value_coeff=args.value_coeff,
        total_steps=args.steps,
        num_workers=_resolve_workers(args, 8),
        seed=args.seed,
        eval_interval_steps=args.eval_interval,
        eval_episodes=args.eval_episodes,
        curriculum=args.curriculum,
        curriculum_phase1_steps=args.phase1_steps,
    )
    log_path = out / "train_log.jsonl"
    checkpoint_path = out / "checkpoint.npz"

    def progress(record: dict) -> None:
        if args.quiet:
            return
        if record["type"] == "eval":
            print(
                f"[eval]  step {record['step']:>9}  success {record.get('success_rate', 0):.2f}  "
                f"mean reward {record.get('mean_reward', float('nan')):.2f}",
                file=sys.stderr,
            )
        elif record.get("episodes", 0) > 0:
            print(
                f"[train] step {record['step']:>9}  phase {record['phase']}  "
                f"reward {record.get('mean_reward', float('nan')):.2f}  "
                f"success {record.get('success_rate', 0):.2f}  ({record['elapsed_s']:.0f}s)",
                file=sys.stderr,
            )

    checkpoint = train(
        sector,
        args.kind,
        preset_name,
        config,
        reward_config=RewardConfig(),
        action_space_kind=None if args.action_space == "auto" else _space_kind(args),
        weights=weights,
        max_steps=args.max_steps,
        log_path=log_path,
        progress=progress,
    )
    save_checkpoint(checkpoint, checkpoint_path)
    if not args.no_figures:
        for fig_path in _figure_paths(out, "training_curves"):
            figures.training_curves(log_path, fig_path)
    print(checkpoint_path)
    return 0


def _space_kind(args) -> str:
    if args.kind == "vertical":
        return "vertical"
    return "lateral_large" if args.action_space == "large" else "lateral_small"


# -- eval ----------------------------------------------------------------------


def cmd_eval(args) -> int:
    out = _resolve_out(args)
    sector = _loaded_sector(args)
    if not Path(args.checkpoint).exists():
        raise CliError(f"checkpoint file not found: {args.checkpoint}")
    checkpoint = load_checkpoint(args.checkpoint)
    if args.kind is not None and args.kind != checkpoint.env_kind:
        raise CliError(
            f"requested scenario kind {args.kind!r} but checkpoint was trained on {checkpoint.env_kind!r}"
        )
    workers = _resolve_workers(args, 1)

    modes = []
    if args.unstacked or not args.stacked:
        modes.append("unstacked")
    if args.stacked:
        modes.append("stacked")

    for mode in modes:
        stats, records = evaluate.run_evaluation(
            checkpoint,
            sector,
            episodes=args.episodes,
            base_seed=args.seed,
            mode=mode,
            workers=workers,
            record_trace=args.trace,
            record_positions=args.render_trajectories > 0,
        )
        evaluate.write_stats(stats, out / f"stats_{mode}.json")
        evaluate.write_episode_rows(records, out / f"episodes_{mode}.csv")
        if args.trace:
            for index, record in enumerate(records):
                evaluate.write_trace(record, out / f"trace_{mode}_ep{index:03d}.csv")
                if mode == "stacked":
                    evaluate.write_macros(record, out / f"macros_{mode}_ep{index:03d}.csv")
        if not args.no_figures:
            for fig_path in _figure_paths(out, f"instructions_{mode}"):
                figures.instruction_histogram(stats, fig_path)
            if stats.min_separations:
                for fig_path in _figure_paths(out, f"separation_{mode}"):
                    figures.separation_figure(stats, fig_path)
            for index in range(min(args.render_trajectories, len(records))):
                for fig_path in _figure_paths(out, f"trajectory_{mode}_ep{index:03d}"):
                    figures.trajectory_figure(sector, records[index], fig_path)
        print(
            f"{mode}: {stats.episodes} episodes, mean instructions "
            f"{stats.mean_instructions:.2f} (std {stats.std_instructions:.2f}), "
            f"success {stats.success_rate:.2f}"
        )
    return 0


# -- compare -------------------------------------------------------------------


def cmd_compare(args) -> int:
    out = _resolve_out(args)
    sector = _loaded_sector(args)
    for path in (args.checkpoint_a, args.checkpoint_b):
        if not Path(path).exists():
            raise CliError(f"checkpoint file not found: {path}")
    checkpoint_a = load_checkpoint(args.checkpoint_a)
    checkpoint_b = load_checkpoint(args.checkpoint_b)
    workers = _resolve_workers(args, 1)
    try:
        report = evaluate.compare_evaluations(
            checkpoint_a,
            checkpoint_b,
            sector,
            episodes=args.episodes,
            base_seed=args.seed,
            mode_a=args.mode_a,
            mode_b=args.mode_b,
            workers=workers,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    (out / "compare.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    evaluate.write_pairing_table(report["pairs"], out / "pairs.csv")
    if not args.no_figures:
        label_a = f"A:{checkpoint_a.preset_name}/{args.mode_a}"
        label_b = f"B:{checkpoint_b.preset_name}/{args.mode_b}"
        for fig_path in _figure_paths(out, "comparison"):
            figures.comparison_figure(report, fig_path, label_a, label_b)
    for side in ("a", "b"):
        block = report[side]
        print(
            f"{side.upper()}: mean instructions {block['instructions']['mean']:.2f}, "
            f"losses of separation {block['losses_of_separation']}, "
            f"success {block['success_rates']['overall']:.2f}"
        )
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atcstack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file whose keys mirror the long flag names")
        p.add_argument("--sector", help="sector geometry file (default: bundled sector)")
        p.add_argument("--out", help="output directory (or ATCSTACK_OUTPUT_DIR)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=None, help="parallelism (or ATCSTACK_WORKERS)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_train = sub.add_parser("train", help="train a policy and write a checkpoint")
    common(p_train)
    p_train.add_argument("--kind", choices=SCENARIO_KINDS, required=True)
    p_train.add_argument("--preset", default="lateral_navigation",
                         choices=[*sorted(PRESETS), "custom"])
    p_train.add_argument("--weights", help="JSON reward weights (with --preset custom)")
    p_train.add_argument("--steps", type=int, default=2_000_000)
    p_train.add_argument("--action-space", choices=["auto", "small", "large"], default="auto")
    p_train.add_argument("--curriculum", action="store_true",
                         help="pre-train without the safety component, then switch")
    p_train.add_argument("--phase1-steps", type=int, default=2_000_000)
    p_train.add_argument("--max-steps", type=int, default=300, help="episode length")
    p_train.add_argument("--lr", type=float, default=1e-4)
    p_train.add_argument("--gamma", type=float, default=0.99)
    p_train.add_argument("--entropy-coeff", type=float, default=0.01)
    p_train.add_argument("--clip-epsilon", type=float, default=0.2)
    p_train.add_argument("--gae-lambda", type=float, default=0.95)
    p_train.add_argument("--rollout-length", type=int, default=2048)
    p_train.add_argument("--minibatch-size", type=int, default=64)
    p_train.add_argument("--epochs", type=int, default=10)
    p_train.add_argument("--value-coeff", type=float, default=0.5)
    p_train.add_argument("--eval-interval", type=int, default=100_000)
    p_train.add_argument("--eval-episodes", type=int, default=20)
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over seeded episodes")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--kind", choices=SCENARIO_KINDS, default=None,
                        help="assert the checkpoint's scenario kind")
    p_eval.add_argument("--episodes", type=int, default=100)
    p_eval.add_argument("--stacked", action="store_true", help="evaluate with action stacking")
    p_eval.add_argument("--unstacked", action="store_true", help="evaluate one primitive per step")
    p_eval.add_argument("--trace", action="store_true", help="write per-step episode traces")
    p_eval.add_argument("--render-trajectories", type=int, default=0, metavar="N",
                        help="render the first N episodes as track plots")
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="paired evaluation of two checkpoints")
    common(p_cmp)
    p_cmp.add_argument("--checkpoint-a", required=True)
    p_cmp.add_argument("--checkpoint-b", required=True)
    p_cmp.add_argument("--mode-a", choices=["stacked", "unstacked"], default="unstacked")
    p_cmp.add_argument("--mode-b", choices=["stacked", "unstacked"], default="unstacked")
    p_cmp.add_argument("--episodes", type=int, default=100)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Seed subparser defaults from --config so explicit flags still win."""
    if "--config" not in argv:
        return
    config_path = argv[argv.index("--config") + 1]
    if not Path(config_path).exists():
        raise CliError(f"config file not found: {config_path}")
    try:
        values = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise CliError("config file must hold a JSON object")
    # Locate the subparser for the requested command.
    command = next((a for a in argv if not a.startswith("-")), None)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction) and command in action.choices:
            action.choices[command].set_defaults(**values)
            return
    raise CliError(f"unknown command {command!r}")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"{ERROR_PREFIX} {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"{ERROR_PREFIX} {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
