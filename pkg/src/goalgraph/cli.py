"""Command line entry point: validate, lower, prompt, run, report.

Exit codes: 0 success, 1 domain violation, 2 I/O or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import ManifestError, ProgramFormatError, TaskRecord, load_corpus
from .evaluator import EvalReport, ScoreRow, diff_report, task_score
from .gdl import (ContinuationContext, DeclSet, GDLError, merge, parse_completion,
                  parse_declarations)
from .llm import (DEFAULT_ENDPOINT, GatewayError, Gateway, MissingCredentials,
                  Mode, ModelConfig)
from .model import (LoweringError, LoweringMode, StepProgram, enumerate_variants,
                    lower_to_steps, render_tree, validate_graph)
from .prompt import MalformedGoalId, PromptAssets, build_prompt, partial_statement
from .report import ReportError, format_report, merge_markdown, read_report

log = logging.getLogger("goalgraph")

EXIT_OK, EXIT_VIOLATION, EXIT_IO = 0, 1, 2


class ConfigError(Exception):
    pass


def _diag(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"kind": kind, "message": message, **extra}) + "\n")


def _load_decls(paths: Sequence[str], with_assets: bool, assets_dir: str | None) -> DeclSet:
    sets = []
    if with_assets:
        sets.append(PromptAssets.load(assets_dir).declarations())
    for p in paths:
        text = Path(p).read_text(encoding="utf-8")
        sets.append(parse_declarations(text, source=p))
    return merge(*sets)


def _gdl_failure(exc: GDLError) -> int:
    extra = {}
    if exc.span is not None:
        extra = {"file": exc.span.source, "line": exc.span.line, "column": exc.span.column}
    _diag(type(exc).__name__, str(exc), **extra)
    return EXIT_VIOLATION


# --------------------------------------------------------------------------- validate / lower


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        decls = _load_decls(args.files, args.with_assets, args.assets)
    except OSError as exc:
        _diag("IOError", str(exc))
        return EXIT_IO
    except GDLError as exc:
        return _gdl_failure(exc)
    report = validate_graph(decls.to_graph(), args.root)
    for v in report.violations:
        sys.stderr.write(json.dumps(v.as_dict()) + "\n")
    if report.ok:
        g = decls.to_graph()
        print(f"ok: {len(g.operations)} operations, {len(g.agents)} agents, {len(g.goals)} goals")
        return EXIT_OK
    return EXIT_VIOLATION


def cmd_lower(args: argparse.Namespace) -> int:
    try:
        decls = _load_decls(args.files, args.with_assets, args.assets)
    except OSError as exc:
        _diag("IOError", str(exc))
        return EXIT_IO
    except GDLError as exc:
        return _gdl_failure(exc)
    g = decls.to_graph()
    if args.tree:
        if args.root not in g.goals:
            _diag("UnresolvedReference", f"unknown root goal {args.root}")
            return EXIT_VIOLATION
        sys.stdout.write(render_tree(g, args.root))
        return EXIT_OK
    report = validate_graph(g, args.root)
    if not report.ok:
        for v in report.violations:
            sys.stderr.write(json.dumps(v.as_dict()) + "\n")
        return EXIT_VIOLATION
    try:
        if args.variants:
            programs = enumerate_variants(g, args.root, cap=args.cap, task=args.task)
        else:
            programs = [lower_to_steps(g, args.root, LoweringMode(args.mode), task=args.task)]
    except LoweringError as exc:
        _diag(type(exc).__name__, str(exc))
        return EXIT_VIOLATION
    sys.stdout.write("\n".join(p.to_text() for p in programs))
    return EXIT_OK


def cmd_prompt(args: argparse.Namespace) -> int:
    try:
        assets = PromptAssets.load(args.assets)
    except OSError as exc:
        _diag("IOError", str(exc))
        return EXIT_IO
    if args.no_demonstration:
        assets = assets.without_demonstration()
    try:
        bundle = build_prompt(assets, args.goal)
    except MalformedGoalId as exc:
        _diag("MalformedGoalId", str(exc))
        return EXIT_VIOLATION
    if args.json:
        print(json.dumps({"system": bundle.system, "user": bundle.user}, ensure_ascii=False))
    else:
        sys.stdout.write(bundle.user + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------- run


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    assets_dir: Path | None
    cassette: Path | None
    mode: Mode
    model: ModelConfig
    output: Path | None
    lowering: LoweringMode = LoweringMode.RECURSIVE
    variants: bool = False
    variant_cap: int = 256
    samples: int = 1
    parallel: int = 4
    demonstration: bool = True

    def __post_init__(self) -> None:
        if self.mode is Mode.REPLAY and self.cassette is None:
            raise ConfigError("replay mode requires --cassette")
        if self.mode is Mode.RECORD and self.cassette is None:
            raise ConfigError("record mode requires --cassette")
        if self.samples < 1 or self.parallel < 1:
            raise ConfigError("--samples and --parallel must be at least 1")


@dataclass(frozen=True)
class TaskOutcome:
    row: ScoreRow
    candidate: StepProgram | None = None


def _evaluate_task(rec: TaskRecord, cfg: RunConfig, assets: PromptAssets,
                   base: DeclSet, gateway: Gateway) -> TaskOutcome:
    try:
        bundle = build_prompt(assets, rec.goal_id)
        ctx = ContinuationContext(partial_statement(rec.goal_id), base)
        candidates: list[StepProgram] = []
        for sample in range(cfg.samples):
            completion = gateway.complete(bundle, sample=sample)
            graph = parse_completion(ctx, completion.text)
            if cfg.variants:
                candidates += enumerate_variants(graph, rec.goal_id, cap=cfg.variant_cap,
                                                 task=rec.task_title)
            else:
                candidates.append(lower_to_steps(graph, rec.goal_id, cfg.lowering,
                                                 task=rec.task_title))
        row = task_score(candidates, rec.references, rec.task_id, rec.goal_id)
        return TaskOutcome(row, candidates[row.best_candidate_index])
    except (GatewayError, GDLError, LoweringError, MalformedGoalId) as exc:
        log.info("task %s failed: %s", rec.task_id, exc)
        return TaskOutcome(ScoreRow(rec.task_id, rec.goal_id, 0.0,
                                    error=f"{type(exc).__name__}: {exc}"))


def run_pipeline(cfg: RunConfig) -> tuple[EvalReport, list[TaskOutcome], list[TaskRecord]]:
    records = load_corpus(cfg.manifest)
    assets = PromptAssets.load(cfg.assets_dir)
    if not cfg.demonstration:
        assets = assets.without_demonstration()
    base = assets.declarations()
    gateway = Gateway(cfg.model, cfg.mode, cfg.cassette)
    with gateway, ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
        outcomes = list(pool.map(lambda r: _evaluate_task(r, cfg, assets, base, gateway), records))
    report = EvalReport(cfg.model.model_id, tuple(o.row for o in outcomes))
    return report, outcomes, records


def _details(outcomes: Sequence[TaskOutcome], records: Sequence[TaskRecord]) -> str:
    lines = []
    for out, rec in zip(outcomes, records):
        entry = {"task_id": rec.task_id, "goal_id": rec.goal_id, "score": round(out.row.score, 4),
                 "error": out.row.error}
        if out.candidate is not None:
            ref = rec.references[out.row.best_reference_index]
            diff = diff_report(out.candidate, ref)
            entry.update(program=list(out.candidate.steps), reference=list(ref.steps),
                         missing=list(diff.missing_steps), added=list(diff.added_steps))
        lines.append(json.dumps(entry, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = RunConfig(
            manifest=Path(args.manifest),
            assets_dir=Path(args.assets) if args.assets else None,
            cassette=Path(args.cassette) if args.cassette else None,
            mode=Mode(args.mode),
            model=ModelConfig(model_id=args.model, temperature=args.temperature,
                              max_output_tokens=args.max_tokens, endpoint=args.endpoint,
                              timeout=args.timeout, retries=args.retries),
            output=Path(args.out) if args.out else None,
            lowering=LoweringMode(args.lowering),
            variants=args.variants,
            variant_cap=args.cap,
            samples=args.samples,
            parallel=args.parallel,
            demonstration=not args.no_demonstration,
        )
        report, outcomes, records = run_pipeline(cfg)
    except (ConfigError, MissingCredentials, ManifestError, ProgramFormatError,
            FileNotFoundError, ValueError, GDLError) as exc:
        _diag(type(exc).__name__, str(exc))
        return EXIT_IO
    text = format_report(report)
    if cfg.output:
        cfg.output.parent.mkdir(parents=True, exist_ok=True)
        cfg.output.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    if args.details:
        Path(args.details).write_text(_details(outcomes, records), encoding="utf-8", newline="\n")
    if args.figure:
        from .plotting import plot_scores
        from .report import LoadedReport
        plot_scores([LoadedReport(report.model_id, report.rows, report.aggregate_percent)],
                    args.figure)
    return EXIT_OK


# --------------------------------------------------------------------------- report


def cmd_report(args: argparse.Namespace) -> int:
    try:
        reports = [read_report(p) for p in args.reports]
        table = merge_markdown(reports)
    except OSError as exc:
        _diag("IOError", str(exc))
        return EXIT_IO
    except ReportError as exc:
        _diag(type(exc).__name__, str(exc))
        return EXIT_VIOLATION
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(table)
    if args.figure:
        from .plotting import plot_scores
        plot_scores(reports, args.figure)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="goalgraph", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def graph_inputs(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("files", nargs="*", help="declaration files to merge")
        sp.add_argument("--with-assets", action="store_true",
                        help="prepend the operations, agent, leaf goals and demonstration assets")
        sp.add_argument("--assets", help="asset directory (default: shipped copies)")

    sp = sub.add_parser("validate", help="parse declaration files and check graph invariants")
    graph_inputs(sp)
    sp.add_argument("--root", help="only check goals reachable from this goal")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("lower", help="print the step program for a root goal")
    graph_inputs(sp)
    sp.add_argument("--root", required=True)
    sp.add_argument("--mode", choices=[m.value for m in LoweringMode], default="recursive")
    sp.add_argument("--variants", action="store_true", help="print every OR-alternative program")
    sp.add_argument("--cap", type=int, default=256, help="maximum number of variants")
    sp.add_argument("--task", help="task title (default: the goal's display name)")
    sp.add_argument("--tree", action="store_true", help="print the refinement tree instead")
    sp.set_defaults(func=cmd_lower)

    sp = sub.add_parser("prompt", help="print the prompt for a goal")
    sp.add_argument("--goal", required=True)
    sp.add_argument("--assets")
    sp.add_argument("--no-demonstration", action="store_true")
    sp.add_argument("--json", action="store_true", help="print system and user messages as JSON")
    sp.set_defaults(func=cmd_prompt)

    sp = sub.add_parser("run", help="generate, lower and score every task in a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--model", default="gpt-4-0613")
    sp.add_argument("--mode", choices=[m.value for m in Mode], default="replay")
    sp.add_argument("--cassette")
    sp.add_argument("--out", help="report path (default: stdout)")
    sp.add_argument("--details", help="write per-task programs and step diffs as JSON lines")
    sp.add_argument("--figure", help="also render a score chart to this path")
    sp.add_argument("--assets")
    sp.add_argument("--no-demonstration", action="store_true")
    sp.add_argument("--lowering", choices=[m.value for m in LoweringMode], default="recursive")
    sp.add_argument("--variants", action="store_true")
    sp.add_argument("--cap", type=int, default=256)
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--temperature", type=float, default=0.0)
    sp.add_argument("--max-tokens", type=int, default=1024)
    sp.add_argument("--endpoint", default=DEFAULT_ENDPOINT)
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.add_argument("--retries", type=int, default=4)
    sp.add_argument("--parallel", type=int, default=4)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="merge per-model reports into one markdown table")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out")
    sp.add_argument("--figure", help="also render a grouped bar chart to this path")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
