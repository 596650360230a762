"""Tab-separated score reports and the merged per-model markdown table."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .evaluator import EvalReport, ScoreRow

__all__ = ["ReportError", "ReportMismatch", "LoadedReport", "format_report", "check_same_tasks",
           "write_report", "read_report", "merge_markdown"]

HEADER = ("task_id", "goal_id", "score", "error")


class ReportError(ValueError):
    pass


class ReportMismatch(ReportError):
    def __init__(self, differences: dict[str, list[str]]):
        self.differences = differences
        lines = [f"{name}: {', '.join(ids)}" for name, ids in differences.items()]
        super().__init__("reports cover different tasks; " + "; ".join(lines))


def _clean(text: str) -> str:
    return " ".join(text.split())


def format_report(report: EvalReport) -> str:
    lines = [f"# model: {report.model_id}", "\t".join(HEADER)]
    for r in report.rows:
        lines.append(f"{r.task_id}\t{r.goal_id}\t{r.score:.4f}\t{_clean(r.error)}")
    lines.append(f"aggregate\t{report.aggregate_percent:.2f}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(format_report(report), encoding="utf-8", newline="\n")


@dataclass(frozen=True)
class LoadedReport:
    model_id: str
    rows: tuple[ScoreRow, ...]
    aggregate_percent: float
    source: str = ""


def read_report(path: str | Path) -> LoadedReport:
    path = Path(path)
    model = path.stem
    rows: list[ScoreRow] = []
    agg = None
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("# model:"):
                model = line.split(":", 1)[1].strip()
            continue
        cols = line.split("\t")
        if tuple(cols) == HEADER:
            continue
        if cols[0] == "aggregate" and len(cols) == 2:
            agg = float(cols[1])
            continue
        if len(cols) not in (3, 4):
            raise ReportError(f"{path}:{lineno}: expected 3 or 4 tab-separated columns")
        try:
            score = float(cols[2])
        except ValueError:
            raise ReportError(f"{path}:{lineno}: bad score {cols[2]!r}") from None
        rows.append(ScoreRow(cols[0], cols[1], score, error=cols[3] if len(cols) == 4 else ""))
    if agg is None:
        raise ReportError(f"{path}: missing aggregate line")
    return LoadedReport(model, tuple(rows), agg, str(path))


def check_same_tasks(reports: Sequence[LoadedReport]) -> None:
    if not reports:
        raise ReportError("no reports given")
    reference = [r.task_id for r in reports[0].rows]
    diffs: dict[str, list[str]] = {}
    for rep in reports[1:]:
        ids = [r.task_id for r in rep.rows]
        if set(ids) != set(reference):
            only_here = sorted(set(ids) - set(reference))
            only_first = sorted(set(reference) - set(ids))
            diffs[rep.source or rep.model_id] = ([f"+{t}" for t in only_here]
                                                 + [f"-{t}" for t in only_first])
    if diffs:
        raise ReportMismatch(diffs)


def merge_markdown(reports: Sequence[LoadedReport]) -> str:
    """Task x model score table; rows follow the first report's order."""
    check_same_tasks(reports)
    by_model = [{r.task_id: r for r in rep.rows} for rep in reports]
    header = ["Task", "Achieve[Goal]"] + [rep.model_id for rep in reports]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    for row in reports[0].rows:
        cells = [row.task_id, row.goal_id] + [f"{m[row.task_id].score:.2f}" for m in by_model]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("| " + " | ".join(["Percent", ""] + [f"{rep.aggregate_percent:.2f}%" for rep in reports]) + " |")
    return "\n".join(lines) + "\n"
