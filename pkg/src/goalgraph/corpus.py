"""Reference programs and the task manifest.

A manifest is an INI file, one section per task, in evaluation order::

    [open-bathroom-window]
    title = Open bathroom window
    goal = OpenedWindowInBathRoom
    references = open-bathroom-window/ref_*.txt

``references`` holds one or more whitespace-separated globs relative to
the manifest's directory.
"""
from __future__ import annotations

import configparser
import re
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .model import StepProgram

__all__ = [
    "ProgramFormatError", "MissingTaskLine", "NoSteps", "MalformedStepLine",
    "StepNumberingWarning", "ManifestError", "TaskDescriptor", "TaskRecord",
    "parse_program_text", "format_program", "canonicalize_step",
    "load_manifest", "load_corpus", "default_manifest_path",
]

_TASK_RE = re.compile(r"^Task:\s*(.*?)\s*$")
_STEP_RE = re.compile(r"^Step\s+(\d+)\s*:\s*(.*?)\s*$")
_GOAL_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ProgramFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line, self.source = line, source
        where = f"{source or '<text>'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)


class MissingTaskLine(ProgramFormatError):
    pass


class NoSteps(ProgramFormatError):
    pass


class MalformedStepLine(ProgramFormatError):
    pass


class StepNumberingWarning(UserWarning):
    pass


class ManifestError(ValueError):
    pass


def parse_program_text(text: str, source: str | None = None) -> StepProgram:
    """Parse ``Task: ...`` followed by ``Step <n>: ...`` lines.

    Steps keep their textual order; gaps or reordering in the numbering
    only produce a :class:`StepNumberingWarning`.
    """
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise MissingTaskLine("empty program", source=source)
    lineno, first = lines[0]
    m = _TASK_RE.match(first.strip())
    if m is None:
        raise MissingTaskLine("first line must be 'Task: <title>'", lineno, source)
    task = m.group(1)
    steps, numbers = [], []
    for lineno, line in lines[1:]:
        sm = _STEP_RE.match(line.strip())
        if sm is None or not sm.group(2):
            raise MalformedStepLine(f"expected 'Step <n>: <action>', got {line.strip()!r}", lineno, source)
        numbers.append(int(sm.group(1)))
        steps.append(sm.group(2))
    if not steps:
        raise NoSteps(f"task {task!r} has no steps", source=source)
    if numbers != list(range(1, len(numbers) + 1)):
        warnings.warn(f"{source or '<text>'}: step numbers {numbers} are not 1..{len(numbers)}",
                      StepNumberingWarning, stacklevel=2)
    return StepProgram(task, tuple(steps))


def format_program(program: StepProgram) -> str:
    return program.to_text()


def canonicalize_step(text: str) -> str:
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class TaskDescriptor:
    task_id: str
    task_title: str
    goal_id: str
    reference_globs: tuple[str, ...]
    base_dir: Path

    def reference_paths(self) -> list[Path]:
        found: dict[Path, None] = {}
        for pattern in self.reference_globs:
            for p in sorted(self.base_dir.glob(pattern)):
                found[p] = None
        return list(found)


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    task_title: str
    goal_id: str
    references: tuple[StepProgram, ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError(f"task {self.task_id} has no reference programs")
        if not _GOAL_ID_RE.match(self.goal_id):
            raise ValueError(f"task {self.task_id}: malformed goal id {self.goal_id!r}")


def default_manifest_path() -> Path:
    return Path(str(resources.files("goalgraph") / "data" / "manifest.ini"))


def load_manifest(path: str | Path) -> list[TaskDescriptor]:
    """Task descriptors in manifest order, without touching reference files."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00defaults")
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    out = []
    for task_id in parser.sections():
        sec = parser[task_id]
        missing = [k for k in ("title", "goal", "references") if not sec.get(k, "").strip()]
        if missing:
            raise ManifestError(f"{path}: task [{task_id}] lacks {', '.join(missing)}")
        goal = sec["goal"].strip()
        if not _GOAL_ID_RE.match(goal):
            raise ManifestError(f"{path}: task [{task_id}] has malformed goal id {goal!r}")
        out.append(TaskDescriptor(task_id, sec["title"].strip(), goal,
                                  tuple(sec["references"].split()), path.parent))
    return out


def load_corpus(path: str | Path) -> list[TaskRecord]:
    records = []
    for desc in load_manifest(path):
        files = desc.reference_paths()
        if not files:
            raise ManifestError(
                f"task [{desc.task_id}]: no reference files match {' '.join(desc.reference_globs)}")
        refs = tuple(parse_program_text(f.read_text(encoding="utf-8"), str(f)) for f in files)
        records.append(TaskRecord(desc.task_id, desc.task_title, desc.goal_id, refs))
    return records
