"""Prompt assembly: schema, operations, agent, leaf goals, demonstration, partial statement."""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .gdl import ContinuationContext, DeclSet, merge, parse_declarations
from .model import GoalKind, NameWarning, check_goal_name

__all__ = [
    "SYSTEM_PROMPT", "ASSET_FILES", "PromptAssets", "PromptBundle",
    "MalformedGoalId", "build_prompt", "partial_statement", "check_goal_name",
    "NameWarning",
]

SYSTEM_PROMPT = "Output the next C++ line"

ASSET_FILES = {
    "schema_text": "schema.gdl.txt",
    "operations_text": "operations.gdl",
    "agent_text": "agent.gdl",
    "leaf_goals_text": "leaf_goals.gdl",
    "demonstration_text": "demonstration.gdl",
}

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class MalformedGoalId(ValueError):
    pass


@dataclass(frozen=True)
class PromptAssets:
    schema_text: str
    operations_text: str
    agent_text: str
    leaf_goals_text: str
    demonstration_text: str = ""
    system_prompt: str = SYSTEM_PROMPT

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "PromptAssets":
        """Read assets from ``directory``, or the copies shipped with the package."""
        if directory is None:
            root = resources.files("goalgraph") / "assets"
            read = lambda name: (root / name).read_text(encoding="utf-8")  # noqa: E731
        else:
            root_path = Path(directory)
            read = lambda name: (root_path / name).read_text(encoding="utf-8")  # noqa: E731
        return cls(**{field: read(name) for field, name in ASSET_FILES.items()})

    def without_demonstration(self) -> "PromptAssets":
        return replace(self, demonstration_text="")

    def declarations(self, include_demonstration: bool = True) -> DeclSet:
        """Everything a completion may reference, parsed (the schema stays opaque)."""
        parts = [
            parse_declarations(self.operations_text, ASSET_FILES["operations_text"]),
            parse_declarations(self.agent_text, ASSET_FILES["agent_text"]),
            parse_declarations(self.leaf_goals_text, ASSET_FILES["leaf_goals_text"]),
        ]
        if include_demonstration and self.demonstration_text.strip():
            parts.append(parse_declarations(self.demonstration_text, ASSET_FILES["demonstration_text"]))
        return merge(*parts)


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    goal_id: str

    def context(self, base: DeclSet) -> ContinuationContext:
        return ContinuationContext(partial_statement(self.goal_id), base)


def partial_statement(goal_id: str, kind: GoalKind = GoalKind.ACHIEVE) -> str:
    return f"{kind.value} {goal_id}("


def build_prompt(assets: PromptAssets, goal_id: str) -> PromptBundle:
    if not _IDENT.match(goal_id or ""):
        raise MalformedGoalId(f"not an identifier: {goal_id!r}")
    sections = [
        assets.schema_text,
        assets.operations_text,
        assets.agent_text,
        assets.leaf_goals_text,
        assets.demonstration_text,
        partial_statement(goal_id),
    ]
    user = "\n\n".join(s.strip("\n") for s in sections if s.strip())
    return PromptBundle(assets.system_prompt, user, goal_id)
