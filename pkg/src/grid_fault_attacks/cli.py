"""
Main entry point for grid-fault-attacks.

Subcommands map onto Pipeline stages; ``all`` runs gen-data, extract, train
for every task and evaluate with one master seed. Exit codes: 0 success,
1 runtime failure (including a failed invariant check), 2 usage error,
130 interrupted.
"""

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from grid_fault_attacks import __version__
from grid_fault_attacks.config import (
    RunSettings,
    default_output_root,
    default_threads,
    load_settings,
    validate_settings,
)
from grid_fault_attacks.core import constants
from grid_fault_attacks.core.errors import ConfigurationError, GridFaultError
from grid_fault_attacks.core.models import AttackFamily, AttackGoal, Task
from grid_fault_attacks.pipeline import Pipeline
from grid_fault_attacks.ui.console import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130

SUBCOMMANDS: Tuple[str, ...] = ("gen-data", "extract", "train", "attack", "evaluate", "report", "all")
TASK_CHOICES = [t.value for t in Task] + ["all"]


def epsilon_list(text: str) -> List[float]:
    """Parse ``0.01,0.02`` into a list of non-negative floats."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid epsilon list {text!r}") from None
    if not values or any(not math.isfinite(v) or v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"epsilons must be finite and >= 0: {text!r}")
    return values


def hidden_sizes(text: str) -> Tuple[int, int]:
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid hidden sizes {text!r}") from None
    if len(sizes) != 2 or min(sizes) < 1:
        raise argparse.ArgumentTypeError("--hidden takes two positive widths, e.g. 128,64")
    return sizes


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {value}")
    return value


def thread_count(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        value = 0
    if value == 0 or value < -1:
        raise argparse.ArgumentTypeError(f"--threads takes N >= 1 or -1 (all cores), got {text!r}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a value > 0, got {value}")
    return value


def fraction(text: str) -> float:
    value = positive_float(text)
    if value >= 1:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1), got {value}")
    return value


def non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {value}")
    return value


# Every flag the CLI accepts: name -> (option strings, argparse keyword arguments)
FLAG_REGISTRY: Dict[str, Tuple[Tuple[str, ...], Dict[str, Any]]] = {
    "seed": (("--seed",), dict(type=int, default=None,
                               help=f"master seed for every stage (default: plan file or {constants.DEFAULT_SEED})")),
    "out": (("--out",), dict(type=Path, default=None,
                             help="output root (default: $GRID_FAULT_ATTACKS_OUTPUT or ./runs)")),
    "config": (("--config",), dict(type=Path, default=None, help="YAML experiment plan file")),
    "threads": (("--threads",), dict(type=thread_count, default=None,
                                     help="worker threads, -1 for all cores (default: $GRID_FAULT_ATTACKS_THREADS or -1)")),
    "verbose": (("-v", "--verbose"), dict(action="store_true", help="debug logging")),
    "quiet": (("-q", "--quiet"), dict(action="store_true", help="warnings and errors only")),
    "data": (("--data",), dict(type=Path, default=None, help="dataset directory (default: <out>/data)")),
    "features": (("--features",), dict(type=Path, default=None,
                                       help="features directory (default: <out>/features)")),
    "models": (("--models",), dict(type=Path, default=None, help="checkpoint directory (default: <out>/models)")),
    "format": (("--format",), dict(choices=["npy", "csv"], default="npy", help="dataset file format (default: npy)")),
    "noise_std": (("--noise-std",), dict(type=non_negative_float, default=None,
                                         help=f"waveform noise std in per unit (default: {constants.NOISE_STD})")),
    "test_fraction": (("--test-fraction",), dict(type=fraction, default=None,
                                                 help=f"held-out share (default: {constants.DEFAULT_TEST_FRACTION})")),
    "task": (("--task",), dict(choices=TASK_CHOICES, default=None,
                               help="task to train, attack or evaluate (default: all, or the plan file's tasks)")),
    "epochs": (("--epochs",), dict(type=positive_int, default=None,
                                   help=f"training epochs (default: {constants.DEFAULT_EPOCHS})")),
    "lr": (("--lr",), dict(type=positive_float, default=None,
                           help=f"Adam learning rate (default: {constants.DEFAULT_LEARNING_RATE})")),
    "batch_size": (("--batch-size",), dict(type=positive_int, default=None,
                                           help=f"mini-batch size (default: {constants.DEFAULT_BATCH_SIZE})")),
    "hidden": (("--hidden",), dict(type=hidden_sizes, default=None, help="hidden widths H1,H2 (default: 128,64)")),
    "attack": (("--attack",), dict(choices=[f.value for f in AttackFamily], default=None,
                                   help="attack family (evaluate: restrict the plan to it)")),
    "goal": (("--goal",), dict(choices=[g.value for g in AttackGoal], default="untargeted",
                               help="attack goal (default: untargeted)")),
    "epsilons": (("--epsilons",), dict(type=epsilon_list, default=None,
                                       help="comma-separated l-inf budgets (default: the standard grid)")),
    "clip": (("--clip",), dict(action="store_true", help="clip perturbed features to the training range")),
}

COMMON_FLAGS = ("seed", "out", "config", "threads", "verbose", "quiet")
SUBCOMMAND_FLAGS: Dict[str, Tuple[str, ...]] = {
    "gen-data": ("data", "format", "noise_std"),
    "extract": ("data", "features", "test_fraction"),
    "train": ("features", "models", "task", "epochs", "lr", "batch_size", "hidden"),
    "attack": ("features", "models", "task", "attack", "goal", "epsilons", "clip"),
    "evaluate": ("features", "models", "task", "attack", "epsilons", "clip"),
    "report": (),
    "all": ("format", "noise_std", "test_fraction", "task", "epochs", "lr", "batch_size", "hidden",
            "epsilons", "clip"),
}
SUBCOMMAND_HELP = {
    "gen-data": "generate the 3872-record waveform dataset",
    "extract": "extract 192-dim supervectors and the train/test split",
    "train": "train the classifier for one or all tasks",
    "attack": "run one attack family over the test split",
    "evaluate": "run the full experiment grid and write the report",
    "report": "render the accuracy tables of a written report",
    "all": "gen-data, extract, train every task and evaluate",
}


def registered_flags(subcommand: str) -> List[str]:
    """Option strings a subcommand accepts, per the registry."""
    names = COMMON_FLAGS + SUBCOMMAND_FLAGS[subcommand]
    return [opt for name in names for opt in FLAG_REGISTRY[name][0]]


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subparser per stage, built from FLAG_REGISTRY."""
    parser = argparse.ArgumentParser(
        prog="grid-fault-attacks",
        description="Adversarial attacks against smart-grid fault classifiers",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=SUBCOMMAND_HELP[name], description=SUBCOMMAND_HELP[name])
        for flag in COMMON_FLAGS + SUBCOMMAND_FLAGS[name]:
            options, kwargs = FLAG_REGISTRY[flag]
            sub.add_argument(*options, dest=flag, **kwargs)
    return parser


def _tasks(args: argparse.Namespace) -> List[Task]:
    value = getattr(args, "task", None)
    return list(Task) if value in (None, "all") else [Task.parse(value)]


def build_settings(args: argparse.Namespace) -> RunSettings:
    """Apply flags on top of the plan file (or defaults).

    Raises:
        ConfigurationError: If the combined settings are invalid
    """
    settings = load_settings(args.config)
    if args.seed is not None:
        settings = settings.with_seed(args.seed)

    plan = settings.plan
    if getattr(args, "task", None) is not None:
        plan = replace(plan, tasks=_tasks(args))
    if getattr(args, "epsilons", None) is not None:
        plan = replace(plan, epsilon_grid=list(args.epsilons))
    if getattr(args, "clip", False):
        plan = replace(plan, clip_to_training_range=True)
    if args.command == "evaluate" and args.attack is not None:
        plan = replace(plan, attacks=[a for a in plan.attacks if a.family.value == args.attack])

    train = settings.train
    overrides = {"epochs": getattr(args, "epochs", None), "learning_rate": getattr(args, "lr", None),
                 "batch_size": getattr(args, "batch_size", None), "hidden_sizes": getattr(args, "hidden", None),
                 "test_fraction": getattr(args, "test_fraction", None)}
    train = replace(train, **{k: v for k, v in overrides.items() if v is not None})

    generation = settings.generation
    if getattr(args, "noise_std", None) is not None:
        generation = replace(generation, noise_std=args.noise_std)

    settings = RunSettings(plan=plan, train=train, generation=generation)
    validate_settings(settings)
    return settings


def build_pipeline(args: argparse.Namespace, settings: RunSettings) -> Pipeline:
    threads = args.threads if args.threads is not None else default_threads()
    return Pipeline(
        settings,
        output=args.out or default_output_root(),
        n_jobs=threads,
        data_dir=getattr(args, "data", None),
        features_dir=getattr(args, "features", None),
        models_dir=getattr(args, "models", None),
        data_format=getattr(args, "format", "npy"),
    )


def dispatch(args: argparse.Namespace) -> int:
    """Run the selected stage.

    Returns:
        EXIT_OK on success, EXIT_USAGE for invalid settings, EXIT_FAILURE
        for a runtime failure or a failed invariant check
    """
    try:
        settings = build_settings(args)
        pipeline = build_pipeline(args, settings)
        if args.command == "attack":
            if args.attack is None:
                raise ConfigurationError("attack needs --attack")
            if args.attack == AttackFamily.RANDOM.value and args.goal == AttackGoal.TARGETED.value:
                raise ConfigurationError("random noise has no targeted variant")
            settings.plan.template(AttackFamily(args.attack), AttackGoal(args.goal))
    except ConfigurationError as e:
        logger.error("%s", e)
        return EXIT_USAGE

    try:
        command = args.command
        if command == "gen-data":
            pipeline.gen_data()
        elif command == "extract":
            pipeline.extract()
        elif command == "train":
            for task in settings.plan.tasks:
                pipeline.train(task)
        elif command == "attack":
            family = AttackFamily(args.attack)
            epsilons = args.epsilons or settings.plan.epsilon_grid
            for task in settings.plan.tasks:
                pipeline.attack(task, family, AttackGoal(args.goal), epsilons)
        elif command == "evaluate":
            pipeline.evaluate()
        elif command == "report":
            pipeline.report()
        else:
            pipeline.run_all()
    except GridFaultError as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_FAILURE
    except Exception:
        logger.exception("%s failed with an unexpected error", args.command)
        return EXIT_FAILURE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI.

    Returns:
        Exit code (0 for success, non-zero for errors)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    try:
        return dispatch(args)
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
