"""Max-normalized LCS scoring, aggregation, admissibility and step diffs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .corpus import canonicalize_step
from .model import OperationDecl, StepProgram

__all__ = [
    "BothEmpty", "EmptyInputs", "ScoreRow", "EvalReport", "DiffReport",
    "AdmissibilityReport", "lcs_length", "normalized_lcs", "task_score",
    "aggregate", "admissibility_check", "diff_report",
]


class BothEmpty(ValueError):
    pass


class EmptyInputs(ValueError):
    pass


def _lcs_table(a: Sequence, b: Sequence) -> list[list[int]]:
    """``t[i][j]`` = LCS length of ``a[i:]`` and ``b[j:]``."""
    n, m = len(a), len(b)
    t = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = t[i], t[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = max(below[j], row[j + 1])
    return t


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def normalized_lcs(a: Sequence, b: Sequence) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        raise BothEmpty("both sequences are empty")
    return lcs_length(a, b) / longest


Canonicalizer = Callable[[str], str]


def _canon(program: StepProgram | Sequence[str], canon: Canonicalizer) -> tuple[str, ...]:
    steps = program.steps if isinstance(program, StepProgram) else program
    return tuple(canon(s) for s in steps)


@dataclass(frozen=True)
class ScoreRow:
    task_id: str
    goal_id: str
    score: float
    best_reference_index: int = -1
    best_candidate_index: int = -1
    error: str = ""


def task_score(candidates: Sequence[StepProgram | Sequence[str]],
               references: Sequence[StepProgram | Sequence[str]],
               task_id: str = "", goal_id: str = "",
               canon: Canonicalizer = canonicalize_step) -> ScoreRow:
    """Best normalized LCS over all candidate/reference pairs.

    Ties go to the lowest reference index, then the lowest candidate index.
    """
    if not candidates or not references:
        raise EmptyInputs("task_score needs at least one candidate and one reference")
    cands = [_canon(c, canon) for c in candidates]
    refs = [_canon(r, canon) for r in references]
    best = (-1.0, 0, 0)
    for ri, ref in enumerate(refs):
        for ci, cand in enumerate(cands):
            s = normalized_lcs(cand, ref)
            if s > best[0]:
                best = (s, ri, ci)
    return ScoreRow(task_id, goal_id, best[0], best[1], best[2])


def aggregate(rows: Iterable[ScoreRow | float]) -> float:
    """Mean score as a percentage, rounded to two decimals."""
    scores = [r.score if isinstance(r, ScoreRow) else float(r) for r in rows]
    if not scores:
        raise EmptyInputs("aggregate needs at least one row")
    return round(100.0 * sum(scores) / len(scores), 2)


@dataclass(frozen=True)
class EvalReport:
    model_id: str
    rows: tuple[ScoreRow, ...]
    aggregate_percent: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "aggregate_percent", aggregate(self.rows))


@dataclass(frozen=True)
class AdmissibilityReport:
    inadmissible: tuple[tuple[int, str], ...]

    @property
    def ok(self) -> bool:
        return not self.inadmissible


def admissibility_check(program: StepProgram, operations: Iterable[OperationDecl],
                        canon: Canonicalizer = canonicalize_step) -> AdmissibilityReport:
    """Flag steps that match no display name among the agent's ``operations``.

    Indices in the report are 1-based step numbers.
    """
    allowed = {canon(op.display_name) for op in operations}
    bad = tuple((i, s) for i, s in enumerate(program.steps, 1) if canon(s) not in allowed)
    return AdmissibilityReport(bad)


@dataclass(frozen=True)
class DiffReport:
    missing_steps: tuple[str, ...]
    added_steps: tuple[str, ...]
    lcs: int


def diff_report(candidate: StepProgram | Sequence[str], reference: StepProgram | Sequence[str],
                canon: Canonicalizer = canonicalize_step) -> DiffReport:
    """Steps missing from / added to ``candidate`` relative to ``reference``.

    Walks one LCS alignment, matching as early as possible; on a tie it
    drops the candidate step before the reference step.
    """
    cand_raw = candidate.steps if isinstance(candidate, StepProgram) else tuple(candidate)
    ref_raw = reference.steps if isinstance(reference, StepProgram) else tuple(reference)
    a = [canon(s) for s in cand_raw]
    b = [canon(s) for s in ref_raw]
    t = _lcs_table(a, b)
    added, missing = [], []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            i += 1
            j += 1
        elif t[i + 1][j] >= t[i][j + 1]:
            added.append(cand_raw[i])
            i += 1
        else:
            missing.append(ref_raw[j])
            j += 1
    added.extend(cand_raw[i:])
    missing.extend(ref_raw[j:])
    return DiffReport(tuple(missing), tuple(added), t[0][0])
