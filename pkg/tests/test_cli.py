"""
Unit tests for the command-line surface and console output.
"""

import argparse
import io
import re
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from grid_fault_attacks.cli import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    SUBCOMMANDS,
    build_parser,
    build_settings,
    epsilon_list,
    main,
    registered_flags,
    thread_count,
)
from grid_fault_attacks.core.evaluation import table_frame
from grid_fault_attacks.core.models import AttackFamily, Task
from grid_fault_attacks.ui.console import accuracy_table, emit_result, render, result_line
from tests.fixtures import constructed_report


def subparser(name: str) -> argparse.ArgumentParser:
    parser = build_parser()
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def run_quietly(argv):
    """Run main() with captured stdout and stderr."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class TestParser(unittest.TestCase):
    """Test cases for parser construction and help completeness."""

    def test_help_lists_every_flag(self):
        """Test each subcommand's help documents exactly its registered flags."""
        for name in SUBCOMMANDS:
            sub = subparser(name)
            accepted = {opt for action in sub._actions for opt in action.option_strings} - {"-h", "--help"}
            self.assertEqual(accepted, set(registered_flags(name)), name)
            text = sub.format_help()
            for flag in registered_flags(name):
                self.assertIn(flag, text, f"{name} help lacks {flag}")

    def test_help_exits_zero(self):
        """Test --help on the program and each subcommand exits 0."""
        self.assertEqual(run_quietly(["--help"])[0], EXIT_OK)
        for name in SUBCOMMANDS:
            self.assertEqual(run_quietly([name, "--help"])[0], EXIT_OK)

    def test_version(self):
        """Test --version exits 0."""
        self.assertEqual(run_quietly(["--version"])[0], EXIT_OK)

    def test_usage_errors(self):
        """Test malformed command lines exit 2."""
        for argv in ([], ["bogus"], ["train", "--epochs", "0"], ["train", "--task", "xyz"],
                     ["attack", "--epsilons", "0.1,-1"], ["gen-data", "--threads", "0"],
                     ["train", "--hidden", "8,8,8"], ["report", "--clip"]):
            self.assertEqual(run_quietly(argv)[0], EXIT_USAGE, argv)

    def test_argument_types(self):
        """Test list and thread parsers."""
        self.assertEqual(epsilon_list("0,0.01, 0.04"), [0.0, 0.01, 0.04])
        self.assertEqual(thread_count("-1"), -1)
        with self.assertRaises(argparse.ArgumentTypeError):
            epsilon_list("nan")
        with self.assertRaises(argparse.ArgumentTypeError):
            thread_count("--5")


class TestSettings(unittest.TestCase):
    """Test cases for flag-over-file precedence."""

    def test_flags_override_plan_file(self):
        """Test CLI flags win over the plan file, which wins over defaults."""
        with tempfile.TemporaryDirectory() as tmp:
            plan = Path(tmp) / "plan.yaml"
            plan.write_text("seed: 11\nepsilon_grid: [0.01]\ntrain: {epochs: 9, batch_size: 5}\n")
            args = build_parser().parse_args(["all", "--config", str(plan), "--seed", "3", "--epochs", "2",
                                              "--task", "ftc"])
            settings = build_settings(args)
        self.assertEqual(settings.seed, 3)
        self.assertEqual(settings.train.epochs, 2)
        self.assertEqual(settings.train.batch_size, 5)
        self.assertEqual(settings.plan.epsilon_grid, [0.01])
        self.assertEqual(settings.plan.tasks, [Task.FTC])

    def test_evaluate_attack_filter(self):
        """Test --attack restricts the evaluation plan to one family."""
        args = build_parser().parse_args(["evaluate", "--attack", "bim"])
        settings = build_settings(args)
        self.assertEqual({a.family for a in settings.plan.attacks}, {AttackFamily.BIM})


class TestStageErrors(unittest.TestCase):
    """Test cases for exit codes of failing stages."""

    def test_attack_needs_family(self):
        """Test attack without --attack is a usage error."""
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(run_quietly(["attack", "--out", tmp])[0], EXIT_USAGE)

    def test_random_has_no_targeted_goal(self):
        """Test targeted random noise is a usage error."""
        with tempfile.TemporaryDirectory() as tmp:
            argv = ["attack", "--out", tmp, "--attack", "random", "--goal", "targeted"]
            self.assertEqual(run_quietly(argv)[0], EXIT_USAGE)

    def test_attack_missing_from_plan(self):
        """Test attacking with a family/goal pair absent from the plan file is a usage error."""
        with tempfile.TemporaryDirectory() as tmp:
            plan = Path(tmp) / "plan.yaml"
            plan.write_text("attacks:\n  - {family: fgsm}\n")
            argv = ["attack", "--out", tmp, "--config", str(plan), "--attack", "bim"]
            self.assertEqual(run_quietly(argv)[0], EXIT_USAGE)
            argv = ["attack", "--out", tmp, "--config", str(plan), "--attack", "fgsm", "--goal", "targeted"]
            self.assertEqual(run_quietly(argv)[0], EXIT_USAGE)

    def test_invalid_plan_file(self):
        """Test a plan file with unknown keys is a usage error."""
        with tempfile.TemporaryDirectory() as tmp:
            plan = Path(tmp) / "plan.yaml"
            plan.write_text("epsilon: 0.1\n")
            self.assertEqual(run_quietly(["evaluate", "--out", tmp, "--config", str(plan)])[0], EXIT_USAGE)

    def test_missing_artifacts(self):
        """Test stages without their inputs exit 1."""
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(run_quietly(["extract", "--out", tmp])[0], EXIT_FAILURE)
            self.assertEqual(run_quietly(["evaluate", "--out", tmp])[0], EXIT_FAILURE)
            self.assertEqual(run_quietly(["report", "--out", tmp])[0], EXIT_FAILURE)


class TestConsole(unittest.TestCase):
    """Test cases for RESULT lines."""

    def test_result_line(self):
        """Test stage first, then keys in order with compact floats."""
        line = result_line("train", {"task": "fzc", "test_accuracy": 0.71342, "loss": float("inf")})
        self.assertEqual(line, "RESULT stage=train task=fzc test_accuracy=0.71342 loss=inf")

    def test_emit_result(self):
        """Test RESULT lines go to the given stream."""
        stream = io.StringIO()
        emit_result("extract", stream=stream, supervectors=968)
        self.assertEqual(stream.getvalue(), "RESULT stage=extract supervectors=968\n")

    def test_accuracy_table(self):
        """Test the rendered table names the task, its base accuracy and each attack row."""
        report = constructed_report()
        table = accuracy_table(report, Task.FZC)
        self.assertEqual(len(table.rows), len(table_frame(report, Task.FZC)))
        stream = io.StringIO()
        render(table, stream=stream)
        self.assertEqual(table.title, "FZC accuracy (base 0.7134)")
        self.assertIn("Base", stream.getvalue())


class TestReadme(unittest.TestCase):
    """Test cases for the README."""

    def test_relative_links_resolve(self):
        """Test every relative link in the README names a file in the repository."""
        root = Path(__file__).resolve().parents[1]
        text = (root / "README.md").read_text()
        targets = [t for t in re.findall(r"\]\(([^)\s]+)\)", text) if "://" not in t and not t.startswith("#")]
        for target in targets:
            self.assertTrue((root / target).exists(), target)


if __name__ == "__main__":
    unittest.main()
