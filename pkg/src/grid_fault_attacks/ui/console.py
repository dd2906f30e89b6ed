"""
Terminal output with rich: log handler, RESULT lines and accuracy tables.

Logs go to stderr through RichHandler; stdout carries only RESULT lines and
rendered tables so it stays parseable.
"""

import logging
import math
import sys
from typing import Dict, Optional, TextIO

from rich.console import Console, RenderableType
from rich.logging import RichHandler
from rich.style import Style
from rich.table import Table
from rich.text import Text

from grid_fault_attacks.core.evaluation import (
    EvaluationReport,
    mean_degradation_by_goal,
    table_frame,
)
from grid_fault_attacks.core.models import Task

RESULT_PREFIX = "RESULT"

# Accuracy shading, checked from the top
ACCURACY_STYLES = (
    (0.75, Style(color="bright_green")),
    (0.5, Style(color="yellow")),
    (0.25, Style(color="dark_orange")),
    (0.0, Style(color="bright_red")),
)
HEADER_STYLE = Style(color="bright_blue", bold=True)


def setup_logging(level: int = logging.INFO, stream: Optional[TextIO] = None) -> None:
    """Route the root logger through one RichHandler on stderr."""
    handler = RichHandler(console=Console(file=stream or sys.stderr), show_path=False,
                          rich_tracebacks=level <= logging.DEBUG, markup=False)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)


def format_value(value) -> str:
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6g}"
    return str(value)


def result_line(stage: str, values: Dict[str, object]) -> str:
    """``RESULT stage=<stage> key=value ...`` with keys in insertion order."""
    parts = [f"stage={stage}"] + [f"{k}={format_value(v)}" for k, v in values.items()]
    return f"{RESULT_PREFIX} " + " ".join(parts)


def emit_result(stage: str, stream: Optional[TextIO] = None, **values) -> str:
    """Print one RESULT line to stdout and return it."""
    line = result_line(stage, values)
    print(line, file=stream or sys.stdout, flush=True)
    return line


def accuracy_text(value: Optional[float]) -> Text:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return Text("-")
    style = next(s for threshold, s in ACCURACY_STYLES if value >= threshold)
    return Text(f"{value:.3f}", style=style)


def accuracy_table(report: EvaluationReport, task: Task) -> Table:
    """Base, random noise and per-goal attack accuracies against epsilon for one task."""
    frame = table_frame(report, task)
    untargeted, targeted = mean_degradation_by_goal(report, task)
    table = Table(title=f"{task.value.upper()} accuracy (base {report.base_accuracy[task]:.4f})",
                  caption=f"mean degradation at eps={report.plan.reference_epsilon:g}: "
                          f"untargeted {format_value(untargeted)}%, targeted {format_value(targeted)}%",
                  header_style=HEADER_STYLE)
    for column in frame.columns:
        table.add_column(column, justify="left" if column == "attack" else "right")
    for row in frame.itertuples(index=False):
        table.add_row(Text(row[0]), *[accuracy_text(v) for v in row[1:]])
    return table


def render(renderable: RenderableType, stream: Optional[TextIO] = None) -> None:
    Console(file=stream or sys.stdout).print(renderable)
