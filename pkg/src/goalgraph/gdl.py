"""Tokenizer, recursive-descent parser and printer for goal-graph declarations.

Grammar::

    file   := { decl }
    decl   := op | oplist | agent | goal
    op     := "Operation" ID "(" STR "," CATEGORY ")" ";"
    oplist := "list" "<" "Operation" ">" ID "=" "{" ID {"," ID} [","] "}" ";"
    agent  := "Agent" ID "(" STR "," ID ")" ";"
    goal   := KIND ID "(" [SOFTTYPE ","] STR "," body ")" ";"
    body   := "{" perf {"," perf} [","] "}" | "{" refn {"," refn} [","] "}"
    perf   := "PerformanceLink" "(" ID "," ID ")"
    refn   := "Refinement" "(" COMBINATOR "," COMPLETENESS "," "{" [ID {"," ID} [","]] "}" ")"

Empty bodies and empty subgoal lists are accepted here so that the
validator can report them as graph violations.
"""
from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .model import (
    AgentDecl, Combinator, Declaration, Goal, GoalGraph, GoalKind,
    OperationCategory, OperationDecl, OperationListDecl, PerformanceLink,
    Refinement, SoftGoalType, Span,
)

__all__ = [
    "TokenKind", "Token", "GDLError", "LexError", "UnterminatedString",
    "IllegalCharacter", "GDLSyntaxError", "DuplicateId", "NoCodeFound",
    "UnresolvedReference", "GoalNameMismatch", "DeclSet",
    "ContinuationContext", "normalize_quotes", "tokenize",
    "parse_declarations", "merge", "sanitize_response", "parse_completion",
    "print_declarations", "print_declaration",
]


class TokenKind(enum.Enum):
    IDENT = "Ident"
    STRING = "String"
    PUNCT = "Punct"
    BOOL = "BoolLit"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int
    end: int

    @property
    def value(self) -> str:
        """Decoded string literal, or the raw text for other kinds."""
        if self.kind is TokenKind.STRING:
            return re.sub(r"\\(.)", r"\1", self.text[1:-1], flags=re.S)
        return self.text


class GDLError(Exception):
    def __init__(self, message: str, span: Span | None = None):
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


class LexError(GDLError):
    pass


class UnterminatedString(LexError):
    pass


class IllegalCharacter(LexError):
    pass


class GDLSyntaxError(GDLError):
    def __init__(self, span: Span, expected: Iterable[str], found: str):
        self.expected = tuple(sorted(set(expected)))
        self.found = found
        super().__init__(f"expected {' | '.join(self.expected)}, found {found!r}", span)


class DuplicateId(GDLError):
    def __init__(self, ident: str, span: Span | None = None):
        self.ident = ident
        super().__init__(f"duplicate id {ident!r}", span)


class NoCodeFound(GDLError):
    pass


class UnresolvedReference(GDLError):
    def __init__(self, ids: Iterable[str]):
        self.ids = list(ids)
        super().__init__("unresolved identifiers: " + ", ".join(self.ids))


class GoalNameMismatch(UserWarning):
    """Completed goal's display string differs from the id in the partial statement."""


_QUOTES = str.maketrans({
    "“": '"', "”": '"', "„": '"', "‟": '"', "″": '"',
    "‘": "'", "’": "'", "‚": "'", "‛": "'",
})


def normalize_quotes(text: str) -> str:
    return text.translate(_QUOTES)


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<unterminated>"(?:[^"\\\n]|\\.)*)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(){}<>,;=])
""", re.VERBOSE)


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    column = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, column


def _span(text: str, start: int, end: int, source: str | None) -> Span:
    line, column = _position(text, start)
    return Span(start, end, line, column, source)


def tokenize(text: str, source: str | None = None) -> list[Token]:
    """Split ``text`` into tokens, dropping whitespace and ``//`` comments.

    Typographic double quotes are mapped to ``"`` first; the mapping is
    one character for one, so offsets still index the original text.
    """
    text = normalize_quotes(text)
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise IllegalCharacter(f"illegal character {text[pos]!r}", _span(text, pos, pos + 1, source))
        kind = m.lastgroup
        if kind == "unterminated":
            raise UnterminatedString("unterminated string literal", _span(text, pos, m.end(), source))
        if kind == "string":
            tokens.append(Token(TokenKind.STRING, m.group(), pos, m.end()))
        elif kind == "word":
            word = m.group()
            tk = TokenKind.BOOL if word in ("true", "false") else TokenKind.IDENT
            tokens.append(Token(tk, word, pos, m.end()))
        elif kind == "punct":
            tokens.append(Token(TokenKind.PUNCT, m.group(), pos, m.end()))
        pos = m.end()
    return tokens


# --------------------------------------------------------------------------- parser

_KINDS = {k.value: k for k in GoalKind}
_CATEGORIES = {c.value: c for c in OperationCategory}
_COMBINATORS = {c.value: c for c in Combinator}
_COMPLETENESS = {"COMPLETE_REFINEMENT": True, "INCOMPLETE_REFINEMENT": False,
                 "true": True, "false": False}
_SOFT_TYPES = {s.value: s for s in SoftGoalType}


@dataclass(frozen=True)
class DeclSet:
    """Declarations in source order. Equality ignores source spans."""

    declarations: tuple[Declaration, ...] = ()

    def __iter__(self) -> Iterator[Declaration]:
        return iter(self.declarations)

    def __len__(self) -> int:
        return len(self.declarations)

    def of_type(self, cls: type) -> list:
        return [d for d in self.declarations if isinstance(d, cls)]

    def to_graph(self) -> GoalGraph:
        return GoalGraph(self.declarations)


class _Parser:
    def __init__(self, text: str, source: str | None):
        self.text = normalize_quotes(text)
        self.source = source
        self.tokens = tokenize(self.text, source)
        self.i = 0

    # token helpers
    def peek(self, ahead: int = 0) -> Token | None:
        j = self.i + ahead
        return self.tokens[j] if j < len(self.tokens) else None

    def span_at(self, tok: Token | None) -> Span:
        if tok is None:
            n = len(self.text)
            return _span(self.text, n, n, self.source)
        return _span(self.text, tok.start, tok.end, self.source)

    def fail(self, expected: Iterable[str]) -> GDLSyntaxError:
        tok = self.peek()
        return GDLSyntaxError(self.span_at(tok), expected, tok.text if tok else "<end of input>")

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind is not TokenKind.STRING and tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail([text])
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok is None or tok.kind is not TokenKind.IDENT:
            raise self.fail([what])
        self.i += 1
        return tok.text

    def string(self) -> str:
        tok = self.peek()
        if tok is None or tok.kind is not TokenKind.STRING:
            raise self.fail(["string literal"])
        self.i += 1
        return tok.value

    def choice(self, table: dict, what: Iterable[str] | None = None):
        tok = self.peek()
        if tok is None or tok.kind is TokenKind.STRING or tok.text not in table:
            raise self.fail(what or table.keys())
        self.i += 1
        return table[tok.text]

    def comma_separated(self, item, close: str) -> list:
        """Items separated by commas up to ``close``; trailing comma allowed."""
        out = []
        while not self.at(close):
            out.append(item())
            if not self.at(","):
                break
            self.expect(",")
        self.expect(close)
        return out

    # grammar
    def file(self) -> list[Declaration]:
        decls = []
        while self.peek() is not None:
            decls.append(self.decl())
        return decls

    def decl(self) -> Declaration:
        tok = self.peek()
        start = tok.start
        if self.at("Operation"):
            decl = self.operation()
        elif self.at("list"):
            decl = self.operation_list()
        elif self.at("Agent"):
            decl = self.agent()
        elif tok.kind is TokenKind.IDENT and tok.text in _KINDS:
            decl = self.goal()
        else:
            raise self.fail(["Operation", "list", "Agent", *_KINDS])
        span = _span(self.text, start, self.tokens[self.i - 1].end, self.source)
        object.__setattr__(decl, "span", span)
        return decl

    def operation(self) -> OperationDecl:
        self.expect("Operation")
        name = self.ident()
        self.expect("(")
        display = self.string()
        self.expect(",")
        category = self.choice(_CATEGORIES)
        self.expect(")")
        self.expect(";")
        return OperationDecl(name, display, category)

    def operation_list(self) -> OperationListDecl:
        self.expect("list")
        self.expect("<")
        self.expect("Operation")
        self.expect(">")
        name = self.ident()
        self.expect("=")
        self.expect("{")
        members = self.comma_separated(self.ident, "}")
        if not members:
            raise self.fail(["identifier"])
        self.expect(";")
        return OperationListDecl(name, tuple(members))

    def agent(self) -> AgentDecl:
        self.expect("Agent")
        name = self.ident()
        self.expect("(")
        display = self.string()
        self.expect(",")
        performs = self.ident("operation list")
        self.expect(")")
        self.expect(";")
        return AgentDecl(name, display, performs)

    def goal(self) -> Goal:
        kind = self.choice(_KINDS)
        name = self.ident()
        self.expect("(")
        soft_type = None
        if kind is GoalKind.SOFT:
            soft_type = self.choice(_SOFT_TYPES)
            self.expect(",")
        display = self.string()
        self.expect(",")
        performs, disjunctions = self.body()
        self.expect(")")
        self.expect(";")
        return Goal(name, display, kind, tuple(performs), tuple(disjunctions), soft_type)

    def body(self) -> tuple[list[PerformanceLink], list[Refinement]]:
        self.expect("{")
        if self.at("PerformanceLink"):
            return self.comma_separated(self.performance_link, "}"), []
        if self.at("Refinement"):
            return [], self.comma_separated(self.refinement, "}")
        if self.at("}"):
            self.expect("}")
            return [], []
        raise self.fail(["PerformanceLink", "Refinement", "}"])

    def performance_link(self) -> PerformanceLink:
        self.expect("PerformanceLink")
        self.expect("(")
        agent = self.ident("agent")
        self.expect(",")
        op = self.ident("operation")
        self.expect(")")
        return PerformanceLink(agent, op)

    def refinement(self) -> Refinement:
        self.expect("Refinement")
        self.expect("(")
        combinator = self.choice(_COMBINATORS)
        self.expect(",")
        complete = self.choice(_COMPLETENESS)
        self.expect(",")
        self.expect("{")
        subgoals = self.comma_separated(self.ident, "}")
        self.expect(")")
        return Refinement(combinator, complete, tuple(subgoals))


def _check_duplicates(decls: Iterable[Declaration]) -> None:
    seen: dict[tuple[type, str], Declaration] = {}
    for d in decls:
        key = (type(d), d.id)
        if key in seen:
            raise DuplicateId(d.id, d.span)
        seen[key] = d


def parse_declarations(text: str, source: str | None = None) -> DeclSet:
    """Parse declaration text into a :class:`DeclSet`; references stay unresolved."""
    decls = _Parser(text, source).file()
    _check_duplicates(decls)
    return DeclSet(tuple(decls))


def merge(*sets: DeclSet) -> DeclSet:
    decls = tuple(d for s in sets for d in s)
    _check_duplicates(decls)
    return DeclSet(decls)


# --------------------------------------------------------------------------- printer


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def print_declaration(d: Declaration) -> str:
    if isinstance(d, OperationDecl):
        return f"Operation {d.id}({_quote(d.display_name)}, {d.category.value});"
    if isinstance(d, OperationListDecl):
        members = ",\n".join(f"    {m}" for m in d.members)
        return f"list<Operation> {d.id} = {{\n{members}\n}};"
    if isinstance(d, AgentDecl):
        return f"Agent {d.id}({_quote(d.display_name)}, {d.performs});"
    head = f"{d.kind.value} {d.id}("
    soft = f"{d.soft_type.value}, " if d.soft_type is not None else ""
    if d.performs or not d.disjunctions:
        links = ", ".join(f"PerformanceLink({p.agent}, {p.operation})" for p in d.performs)
        body = f"{{ {links} }}" if links else "{}"
        return f"{head}{soft}{_quote(d.display_name)}, {body});"
    return head + "\n" + _refined_body(d, soft)


def _refined_body(d: Goal, soft: str) -> str:
    parts = []
    for ref in d.disjunctions:
        completeness = "COMPLETE_REFINEMENT" if ref.complete else "INCOMPLETE_REFINEMENT"
        subgoals = ",\n".join(f"        {s}" for s in ref.subgoals)
        inner = f"\n{subgoals}\n      " if subgoals else ""
        parts.append(
            "    Refinement(\n"
            f"      {ref.combinator.value},\n"
            f"      {completeness},\n"
            f"      {{{inner}}}\n"
            "    )"
        )
    refinements = ",\n".join(parts)
    return f"  {soft}{_quote(d.display_name)},\n  {{\n{refinements}\n  }}\n);"


def print_declarations(d: DeclSet | GoalGraph | Iterable[Declaration]) -> str:
    """Canonical text for declarations, one statement per declaration."""
    decls = d.declarations if isinstance(d, (DeclSet, GoalGraph)) else tuple(d)
    if not decls:
        return ""
    return "\n".join(print_declaration(x) for x in decls) + "\n"


# --------------------------------------------------------------------------- completions

_PREFIX_RE = re.compile(
    r"^\s*(?P<kind>AchieveGoal|CeaseGoal|MaintainGoal|AvoidGoal|SoftGoal)\s+(?P<id>[A-Za-z_]\w*)\s*\(\s*$")
_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)(?:```|\Z)", re.S)
_BODY_START_RE = re.compile(
    r'^[ \t]*(?:"|\{|(?:IMPROVE|INCREASE|MAXIMIZE|REDUCE|MINIMIZE)\s*,)', re.M)


@dataclass(frozen=True)
class ContinuationContext:
    """A partial statement such as ``AchieveGoal X(`` plus the declarations it may use."""

    prefix: str
    base: DeclSet = field(default_factory=DeclSet)

    def __post_init__(self) -> None:
        if not _PREFIX_RE.match(self.prefix):
            raise ValueError(f"not the head of a goal declaration: {self.prefix!r}")

    @property
    def goal_id(self) -> str:
        return _PREFIX_RE.match(self.prefix).group("id")

    @property
    def kind(self) -> str:
        return _PREFIX_RE.match(self.prefix).group("kind")


def _close_offset(text: str, start: int) -> int | None:
    """Offset just past the ``)`` closing an already-open paren (and a following ``;``)."""
    depth = 0
    i = start
    while i < len(text):
        c = text[i]
        if c == '"':
            i += 1
            while i < len(text) and text[i] != '"':
                i += 2 if text[i] == "\\" else 1
        elif c == "/" and text.startswith("//", i):
            nl = text.find("\n", i)
            i = len(text) if nl < 0 else nl
            continue
        elif c in "({":
            depth += 1
        elif c in ")}":
            if depth == 0:
                j = i + 1
                m = re.match(r"\s*;", text[j:])
                return j + m.end() if m else j
            depth -= 1
        i += 1
    return None


def sanitize_response(text: str, goal_id: str | None = None) -> str:
    """Extract the completion body from a raw model response.

    Removes markdown fences, a restated ``<Kind> <goal_id>(`` head, prose
    before the body and anything after the statement closes.
    """
    text = normalize_quotes(text).replace("\r\n", "\n")
    fenced = _FENCE_RE.search(text)
    if fenced:
        text = fenced.group(1)
    ident = re.escape(goal_id) if goal_id else r"[A-Za-z_]\w*"
    restated = re.search(
        rf"\b(?:AchieveGoal|CeaseGoal|MaintainGoal|AvoidGoal|SoftGoal)\s+{ident}\s*\(", text)
    start = _BODY_START_RE.search(text)
    # a head restated after the body has begun belongs to a later declaration
    if restated and (start is None or restated.start() < start.start()):
        text = text[restated.end():]
    elif start is not None:
        text = text[start.start():]
    else:
        raise NoCodeFound("no declaration body in response")
    if "{" not in text and "(" not in text:
        raise NoCodeFound("no declaration body in response")
    end = _close_offset(text, 0)
    if end is not None:
        text = text[:end]
    return text.strip("\n") + "\n"


def _unresolved(goal: Goal, graph: GoalGraph) -> list[str]:
    missing: dict[str, None] = {}
    for ref in goal.disjunctions:
        for sub in ref.subgoals:
            if sub not in graph.goals and sub != goal.id:
                missing[sub] = None
    for link in goal.performs:
        if link.agent not in graph.agents:
            missing[link.agent] = None
        if link.operation not in graph.operations:
            missing[link.operation] = None
    return list(missing)


def parse_completion(ctx: ContinuationContext, completion: str) -> GoalGraph:
    """Parse ``ctx.prefix`` + the sanitized completion and merge it into ``ctx.base``.

    Raises :class:`UnresolvedReference` listing every identifier the new
    goal uses that ``ctx.base`` does not declare.
    """
    body = sanitize_response(completion, ctx.goal_id)
    parsed = parse_declarations(ctx.prefix.strip() + "\n" + body, source="<completion>")
    goals = parsed.of_type(Goal)
    if len(parsed) != 1 or len(goals) != 1:
        raise GDLError(f"completion must form exactly one goal declaration, got {len(parsed)}")
    goal = goals[0]
    if goal.display_name != goal.id:
        warnings.warn(f"goal {goal.id} completed with display name {goal.display_name!r}",
                      GoalNameMismatch, stacklevel=2)
    merged = merge(ctx.base, parsed)
    graph = merged.to_graph()
    missing = _unresolved(goal, graph)
    if missing:
        raise UnresolvedReference(missing)
    return graph
