"""Goal refinement graphs: declarations, validation, lowering to step programs."""
from __future__ import annotations

import enum
import graphlib
import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

__all__ = [
    "OperationCategory", "GoalKind", "SoftGoalType", "Combinator",
    "VertexType", "EdgeType", "GoalCategory",
    "Span", "OperationDecl", "OperationListDecl", "AgentDecl",
    "PerformanceLink", "Refinement", "Goal", "GoalGraph", "StepProgram",
    "Violation", "ValidationReport", "validate_graph",
    "LoweringMode", "LoweringError", "NonLeafSubgoal", "EmptyProgram",
    "InvalidGraph", "SharedSubgoal", "VariantCapExceeded",
    "lower_to_steps", "enumerate_variants", "count_variants", "render_tree",
    "check_goal_name", "NameWarning",
]


class OperationCategory(enum.Enum):
    ENVIRONMENT = "ENVIRONMENT_OPERATION"
    SOFTWARE_TO_BE = "SOFTWARE_TO_BE_OPERATION"


class GoalKind(enum.Enum):
    ACHIEVE = "AchieveGoal"
    CEASE = "CeaseGoal"
    MAINTAIN = "MaintainGoal"
    AVOID = "AvoidGoal"
    SOFT = "SoftGoal"

    @property
    def label(self) -> str:
        return self.value[: -len("Goal")]


class SoftGoalType(enum.Enum):
    IMPROVE = "IMPROVE"
    INCREASE = "INCREASE"
    MAXIMIZE = "MAXIMIZE"
    REDUCE = "REDUCE"
    MINIMIZE = "MINIMIZE"


class Combinator(enum.Enum):
    AND = "AND_REFINEMENT"
    OR = "OR_REFINEMENT"


# Schema members carried for completeness; nothing in this package acts on them.
class VertexType(enum.Enum):
    GOAL = "NODE_TYPE_GOAL"
    REFINEMENT = "NODE_TYPE_REFINEMENT"
    OBSTACLE = "NODE_TYPE_OBSTACLE"
    AGENT = "NODE_TYPE_AGENT"
    OPERATION = "NODE_TYPE_OPERATION"


class EdgeType(enum.Enum):
    REFINEMENT = "REFINEMENT"
    RESPONSIBILITY = "RESPONSIBILITY"
    PERFORMANCE = "PERFORMANCE"


class GoalCategory(enum.Enum):
    SATISFACTION = "SATISFACTION"
    INFORMATION = "INFORMATION"
    STIMULUS_RESPONSE = "STIMULUS_RESPONSE"
    ACCURACY = "ACCURACY"
    QOS_SAFETY = "QOS_SAFETY"
    QOS_SECURITY_CONFIDENTIALITY = "QOS_SECURITY_CONFIDENTIALITY"
    QOS_SECURITY_INTEGRITY = "QOS_SECURITY_INTEGRITY"
    QOS_SECURITY_AVAILABILITY = "QOS_SECURITY_AVAILABILITY"
    QOS_PERFORMANCE_TIME = "QOS_PERFORMANCE_TIME"
    QOS_PERFORMANCE_SPACE = "QOS_PERFORMANCE_SPACE"


@dataclass(frozen=True)
class Span:
    """Source location of a declaration. Offsets are character offsets."""

    start: int
    end: int
    line: int
    column: int
    source: str | None = None

    def __str__(self) -> str:
        where = self.source or "<input>"
        return f"{where}:{self.line}:{self.column}"


@dataclass(frozen=True)
class OperationDecl:
    id: str
    display_name: str
    category: OperationCategory = OperationCategory.ENVIRONMENT
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class OperationListDecl:
    """``list<Operation> name = {...};`` -- a named, ordered set of operation ids."""

    id: str
    members: tuple[str, ...]
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AgentDecl:
    """An agent; ``performs`` names the operation list it can execute."""

    id: str
    display_name: str
    performs: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PerformanceLink:
    agent: str
    operation: str


@dataclass(frozen=True)
class Refinement:
    combinator: Combinator
    complete: bool
    subgoals: tuple[str, ...]


@dataclass(frozen=True)
class Goal:
    """A goal is a leaf (``performs`` non-empty) or refined (``disjunctions`` non-empty).

    Both empty is representable so that the validator can report it.
    """

    id: str
    display_name: str
    kind: GoalKind = GoalKind.ACHIEVE
    performs: tuple[PerformanceLink, ...] = ()
    disjunctions: tuple[Refinement, ...] = ()
    soft_type: SoftGoalType | None = None
    span: Span | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.performs and self.disjunctions:
            raise ValueError(f"goal {self.id} has both performance links and refinements")
        if (self.kind is GoalKind.SOFT) != (self.soft_type is not None):
            raise ValueError(f"goal {self.id}: soft_type must be given exactly for SoftGoal")

    @property
    def is_leaf(self) -> bool:
        return not self.disjunctions


Declaration = OperationDecl | OperationListDecl | AgentDecl | Goal


@dataclass(frozen=True)
class StepProgram:
    task: str
    steps: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def to_text(self) -> str:
        lines = [f"Task: {self.task}"]
        lines += [f"Step {i}: {s}" for i, s in enumerate(self.steps, 1)]
        return "\n".join(lines) + "\n"


class GoalGraph:
    """Id-indexed, immutable view over a set of declarations.

    Namespaces are per declaration kind. Duplicates raise ``ValueError``;
    the parser reports them with source positions before getting here.
    """

    def __init__(self, declarations: Iterable[Declaration] = ()):
        declarations = tuple(declarations)
        ops: dict[str, OperationDecl] = {}
        lists: dict[str, OperationListDecl] = {}
        agents: dict[str, AgentDecl] = {}
        goals: dict[str, Goal] = {}
        order: list[str] = []
        for decl in declarations:
            table = {OperationDecl: ops, OperationListDecl: lists,
                     AgentDecl: agents, Goal: goals}[type(decl)]
            if decl.id in table:
                raise ValueError(f"duplicate {type(decl).__name__} id {decl.id!r}")
            table[decl.id] = decl
            order.append(decl.id)
        self._ops = ops
        self._lists = lists
        self._agents = agents
        self._goals = goals
        self._decls = declarations
        self._order = tuple(order)

    @property
    def operations(self) -> Mapping[str, OperationDecl]:
        return self._ops

    @property
    def operation_lists(self) -> Mapping[str, OperationListDecl]:
        return self._lists

    @property
    def agents(self) -> Mapping[str, AgentDecl]:
        return self._agents

    @property
    def goals(self) -> Mapping[str, Goal]:
        return self._goals

    @property
    def declaration_order(self) -> tuple[str, ...]:
        return self._order

    @property
    def declarations(self) -> tuple[Declaration, ...]:
        return self._decls

    def performable(self, agent_id: str) -> tuple[OperationDecl, ...]:
        """Resolved operations an agent can perform; unknown ids are skipped."""
        agent = self._agents.get(agent_id)
        if agent is None or agent.performs not in self._lists:
            return ()
        members = self._lists[agent.performs].members
        return tuple(self._ops[m] for m in members if m in self._ops)

    def with_declarations(self, extra: Iterable[Declaration]) -> "GoalGraph":
        return GoalGraph(list(self._decls) + list(extra))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GoalGraph):
            return NotImplemented
        return (self._ops == other._ops and self._lists == other._lists
                and self._agents == other._agents and self._goals == other._goals)

    def __hash__(self) -> int:
        return hash(self._order)

    def __repr__(self) -> str:
        return (f"GoalGraph(operations={len(self._ops)}, agents={len(self._agents)}, "
                f"goals={len(self._goals)})")


# --------------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str = ""
    span: Span | None = None

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        extra = f" ({self.detail})" if self.detail else ""
        return f"{where}{self.kind}: {self.subject}{extra}"

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "subject": self.subject, "detail": self.detail}
        if self.span is not None:
            out.update(file=self.span.source, line=self.span.line, column=self.span.column)
        return out


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    order: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


def _reachable(g: GoalGraph, root: str) -> list[str]:
    seen: dict[str, None] = {}
    stack = [root]
    while stack:
        gid = stack.pop()
        if gid in seen or gid not in g.goals:
            continue
        seen[gid] = None
        for ref in reversed(g.goals[gid].disjunctions):
            stack.extend(reversed(ref.subgoals))
    return list(seen)


def validate_graph(g: GoalGraph, root: str | None = None) -> ValidationReport:
    """Check every structural invariant of ``g``.

    With ``root`` given, only goals reachable from it (and the agents and
    operations they use) are checked. On success ``order`` lists the checked
    goals with subgoals before the goals refining them.
    """
    out: list[Violation] = []
    if root is None:
        goal_ids = list(g.goals)
        agent_ids = list(g.agents)
        list_ids = list(g.operation_lists)
    else:
        if root not in g.goals:
            return ValidationReport((Violation("UnresolvedReference", root, "root goal"),))
        goal_ids = _reachable(g, root)
        agent_ids = sorted({link.agent for gid in goal_ids for link in g.goals[gid].performs
                            if link.agent in g.agents})
        list_ids = [g.agents[a].performs for a in agent_ids if g.agents[a].performs in g.operation_lists]

    for lid in list_ids:
        decl = g.operation_lists[lid]
        for m in decl.members:
            if m not in g.operations:
                out.append(Violation("UnresolvedReference", m, f"member of operation list {lid}", decl.span))
    for aid in agent_ids:
        agent = g.agents[aid]
        if agent.performs not in g.operation_lists:
            out.append(Violation("UnresolvedReference", agent.performs,
                                 f"operation list of agent {aid}", agent.span))

    sorter: graphlib.TopologicalSorter[str] = graphlib.TopologicalSorter()
    for gid in goal_ids:
        goal = g.goals[gid]
        sorter.add(gid)
        if not goal.performs and not goal.disjunctions:
            out.append(Violation("EmptyLeaf", gid, "no performance links or refinements", goal.span))
        for ref in goal.disjunctions:
            if not ref.subgoals:
                out.append(Violation("EmptyRefinement", gid, "refinement subgoals is empty", goal.span))
            elif ref.combinator is Combinator.OR and len(ref.subgoals) != 1:
                out.append(Violation("OrArityViolation", gid, f"arity={len(ref.subgoals)}", goal.span))
            for sub in ref.subgoals:
                if sub in g.goals:
                    sorter.add(gid, sub)
                else:
                    out.append(Violation("UnresolvedReference", sub, f"subgoal of {gid}", goal.span))
        for link in goal.performs:
            unresolved = False
            if link.agent not in g.agents:
                out.append(Violation("UnresolvedReference", link.agent, f"agent in {gid}", goal.span))
                unresolved = True
            if link.operation not in g.operations:
                out.append(Violation("UnresolvedReference", link.operation, f"operation in {gid}", goal.span))
                unresolved = True
            if unresolved:
                continue
            agent = g.agents[link.agent]
            members = g.operation_lists.get(agent.performs)
            if members is not None and link.operation not in members.members:
                out.append(Violation("OperationNotPerformable", gid,
                                     f"{link.agent} cannot perform {link.operation}", goal.span))
    try:
        order = tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        out.append(Violation("CycleDetected", " -> ".join(cycle), f"{len(cycle) - 1} goals on cycle"))
        order = ()
    if out:
        return ValidationReport(tuple(out))
    return ValidationReport((), order)


# --------------------------------------------------------------------------- lowering


class LoweringMode(enum.Enum):
    FAITHFUL = "faithful"
    RECURSIVE = "recursive"


class LoweringError(Exception):
    pass


class InvalidGraph(LoweringError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


class NonLeafSubgoal(LoweringError):
    def __init__(self, goal_id: str):
        self.goal_id = goal_id
        super().__init__(f"subgoal {goal_id} has no performance links")


class EmptyProgram(LoweringError):
    pass


class SharedSubgoal(LoweringError):
    def __init__(self, goal_id: str):
        self.goal_id = goal_id
        super().__init__(f"goal {goal_id} is reachable through more than one refinement")


class VariantCapExceeded(LoweringError):
    def __init__(self, count: int, cap: int):
        self.count, self.cap = count, cap
        super().__init__(f"{count} variants exceed the cap of {cap}")


def _require_valid(g: GoalGraph, root: str) -> None:
    report = validate_graph(g, root)
    if not report.ok:
        raise InvalidGraph(report)


def _step(g: GoalGraph, goal: Goal) -> str:
    return g.operations[goal.performs[0].operation].display_name


def lower_to_steps(g: GoalGraph, root: str,
                   mode: LoweringMode = LoweringMode.RECURSIVE,
                   task: str | None = None) -> StepProgram:
    """Turn the refinement graph under ``root`` into an ordered step program.

    FAITHFUL walks every disjunction of the root and emits the first
    performance link of each direct subgoal, failing on nested subgoals.
    RECURSIVE descends depth-first through the first disjunction of every
    refined goal and emits one step per leaf.
    """
    _require_valid(g, root)
    goal = g.goals[root]
    steps: list[str] = []
    if mode is LoweringMode.FAITHFUL:
        for ref in goal.disjunctions:
            for sub in ref.subgoals:
                child = g.goals[sub]
                if not child.performs:
                    raise NonLeafSubgoal(sub)
                steps.append(_step(g, child))
    else:
        stack = [root]
        while stack:
            current = g.goals[stack.pop()]
            if current.is_leaf:
                steps.append(_step(g, current))
            else:
                stack.extend(reversed(current.disjunctions[0].subgoals))
    if not steps:
        raise EmptyProgram(f"goal {root} lowers to zero steps")
    return StepProgram(task if task is not None else goal.display_name, tuple(steps))


def _check_tree(g: GoalGraph, root: str) -> None:
    seen = {root}
    stack = [root]
    while stack:
        for ref in g.goals[stack.pop()].disjunctions:
            for sub in ref.subgoals:
                if sub in seen:
                    raise SharedSubgoal(sub)
                seen.add(sub)
                stack.append(sub)


def count_variants(g: GoalGraph, root: str) -> int:
    """Number of distinct choice paths under ``root`` (sum over alternatives, product over conjuncts)."""
    goal = g.goals[root]
    if goal.is_leaf:
        return 1
    total = 0
    for ref in goal.disjunctions:
        n = 1
        for sub in ref.subgoals:
            n *= count_variants(g, sub)
        total += n
    return total


def _expand(g: GoalGraph, gid: str) -> Iterator[tuple[str, ...]]:
    goal = g.goals[gid]
    if goal.is_leaf:
        yield (_step(g, goal),)
        return
    for ref in goal.disjunctions:
        for parts in itertools.product(*(list(_expand(g, s)) for s in ref.subgoals)):
            yield tuple(itertools.chain.from_iterable(parts))


def enumerate_variants(g: GoalGraph, root: str, cap: int = 256,
                       task: str | None = None) -> list[StepProgram]:
    """All step programs obtainable by picking one disjunction per refined goal.

    Variants come out in lexicographic order of the choice indices, with
    choice points ordered depth-first left-to-right. Only choices that are
    actually reached count, so no two variants share a choice path.
    """
    _require_valid(g, root)
    _check_tree(g, root)
    n = count_variants(g, root)
    if n > cap:
        raise VariantCapExceeded(n, cap)
    title = task if task is not None else g.goals[root].display_name
    return [StepProgram(title, steps) for steps in _expand(g, root)]


# --------------------------------------------------------------------------- rendering


def _goal_label(goal: Goal) -> str:
    if goal.kind is GoalKind.SOFT:
        return f"Soft:{goal.soft_type.value.title()}[{goal.display_name}]"
    return f"{goal.kind.label}[{goal.display_name}]"


def render_tree(g: GoalGraph, root: str, indent: str = "  ") -> str:
    """Indented text rendering of the refinement tree under ``root``."""
    lines: list[str] = []

    def visit(gid: str, depth: int, path: frozenset[str]) -> None:
        pad = indent * depth
        goal = g.goals.get(gid)
        if goal is None:
            lines.append(f"{pad}<unresolved> {gid}")
            return
        if gid in path:
            lines.append(f"{pad}<cycle> {_goal_label(goal)}")
            return
        lines.append(pad + _goal_label(goal))
        for ref in goal.disjunctions:
            status = "complete" if ref.complete else "incomplete"
            lines.append(f"{pad}{indent}{ref.combinator.name}({status})")
            for sub in ref.subgoals:
                visit(sub, depth + 2, path | {gid})
        for link in goal.performs:
            agent = g.agents.get(link.agent)
            op = g.operations.get(link.operation)
            agent_s = f"<{agent.display_name}>" if agent else f"<unresolved {link.agent}>"
            op_s = f"({op.display_name})" if op else f"(<unresolved> {link.operation})"
            lines.append(f"{pad}{indent}performs {agent_s}::{op_s}")

    visit(root, 0, frozenset())
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- naming


class NameWarning(str, enum.Enum):
    NOT_PASCAL_CASE = "NotPascalCase"
    NOT_PAST_PARTICIPLE = "NotPastParticiple"


IRREGULAR_PARTICIPLES = frozenset({
    "Sat", "Slept", "Took", "Taken", "Went", "Gone", "Drank", "Drunk", "Found",
    "Grabbed", "Lay", "Lain", "Held", "Put", "Set", "Made", "Got", "Gotten",
    "Done", "Ran", "Run", "Brought", "Bought", "Left", "Kept", "Hung", "Shut",
    "Ate", "Eaten", "Read", "Fed", "Built", "Sent", "Spent", "Stood", "Swept",
    "Wrote", "Written", "Hidden", "Cut", "Lit", "Won", "Woken", "Thrown",
    "Drawn", "Shown", "Seen", "Given", "Worn", "Torn", "Fallen", "Began",
    "Begun", "Said", "Told", "Sold", "Sought", "Caught", "Taught", "Thought",
    "Fought", "Dug", "Hit", "Hurt", "Let", "Met", "Paid", "Laid", "Lost",
    "Meant", "Sung", "Swum", "Rung", "Drove", "Driven", "Rode", "Ridden",
    "Broke", "Broken", "Chose", "Chosen", "Froze", "Frozen", "Spoken",
    "Stolen", "Woke", "Wound", "Bound", "Ground", "Shot", "Slid", "Spun",
    "Stuck", "Struck", "Swung", "Understood", "Withdrawn", "Knelt",
    "Leant", "Leapt", "Learnt", "Spilt", "Spelt", "Dealt", "Dreamt", "Felt",
    "Heard", "Led", "Fled", "Bled", "Bent", "Lent", "Rebuilt", "Reset",
    "Upset", "Wet", "Quit", "Shed", "Split", "Spread", "Burst", "Cast",
})

_PASCAL = re.compile(r"^[A-Z][A-Za-z0-9]*$")
_FIRST_TOKEN = re.compile(r"^[A-Za-z][a-z]*")


def check_goal_name(name: str) -> list[NameWarning]:
    """Style warnings for an achievement goal name; never raises."""
    warnings: list[NameWarning] = []
    if not _PASCAL.match(name):
        warnings.append(NameWarning.NOT_PASCAL_CASE)
    m = _FIRST_TOKEN.match(name)
    first = m.group(0) if m else ""
    first_cap = first[:1].upper() + first[1:]
    if not (first.endswith("ed") and len(first) > 2) and first_cap not in IRREGULAR_PARTICIPLES:
        warnings.append(NameWarning.NOT_PAST_PARTICIPLE)
    return warnings
