from __future__ import annotations

import json

import pytest

from goalgraph.cli import main
from goalgraph.evaluator import EvalReport, ScoreRow
from goalgraph.llm import API_KEY_ENV
from goalgraph.report import (ReportError, ReportMismatch, format_report, merge_markdown,
                              read_report, write_report)

CLEAN = """\
Operation walk("Walk to kitchen", ENVIRONMENT_OPERATION);
Operation grab("Grab cup", ENVIRONMENT_OPERATION);
list<Operation> botOps = {walk, grab};
Agent bot("Bot", botOps);
AchieveGoal walked("Walked", { PerformanceLink(bot, walk) });
AchieveGoal grabbed("Grabbed", { PerformanceLink(bot, grab) });
AchieveGoal fetched("Fetched", {
  Refinement(AND_REFINEMENT, COMPLETE_REFINEMENT, {walked, grabbed})
});
"""

CHOICE = CLEAN + """\
AchieveGoal walkedAgain("WalkedAgain", { PerformanceLink(bot, walk) });
AchieveGoal either("Either", {
  Refinement(OR_REFINEMENT, COMPLETE_REFINEMENT, {walkedAgain}),
  Refinement(AND_REFINEMENT, COMPLETE_REFINEMENT, {walked, grabbed})
});
"""


@pytest.fixture
def clean_file(tmp_path):
    path = tmp_path / "clean.gdl"
    path.write_text(CLEAN)
    return path


def _stderr_json(err: str) -> list[dict]:
    return [json.loads(line) for line in err.splitlines() if line.strip()]


class TestValidate:
    def test_clean(self, clean_file, capsys):
        assert main(["validate", str(clean_file)]) == 0
        assert "3 goals" in capsys.readouterr().out

    def test_empty_refinement(self, tmp_path, capsys):
        path = tmp_path / "bad.gdl"
        path.write_text(CLEAN + 'AchieveGoal hollow("H", { Refinement(AND_REFINEMENT, true, {}) });\n')
        assert main(["validate", str(path)]) == 1
        (diag,) = _stderr_json(capsys.readouterr().err)
        assert diag["kind"] == "EmptyRefinement" and diag["subject"] == "hollow"

    def test_syntax_error_has_location(self, tmp_path, capsys):
        path = tmp_path / "bad.gdl"
        path.write_text('Operation x("X" ENVIRONMENT_OPERATION);\n')
        assert main(["validate", str(path)]) == 1
        (diag,) = _stderr_json(capsys.readouterr().err)
        assert (diag["kind"], diag["line"], diag["file"]) == ("GDLSyntaxError", 1, str(path))

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.gdl")]) == 2
        assert _stderr_json(capsys.readouterr().err)[0]["kind"] == "IOError"

    def test_assets_with_known_gaps(self, capsys):
        assert main(["validate", "--with-assets"]) == 1
        diags = _stderr_json(capsys.readouterr().err)
        assert {d["kind"] for d in diags} == {"OperationNotPerformable"}
        assert len(diags) == 3

    def test_assets_restricted_to_demo_root(self, capsys):
        assert main(["validate", "--with-assets", "--root", "TurnedOffFloorLampInHomeOffice"]) == 0


class TestLower:
    def test_program(self, clean_file, capsys):
        assert main(["lower", str(clean_file), "--root", "fetched"]) == 0
        assert capsys.readouterr().out == "Task: Fetched\nStep 1: Walk to kitchen\nStep 2: Grab cup\n"

    def test_variants(self, tmp_path, capsys):
        path = tmp_path / "c.gdl"
        path.write_text(CHOICE)
        assert main(["lower", str(path), "--root", "either", "--variants", "--task", "T"]) == 0
        out = capsys.readouterr().out
        assert out.count("Task: T") == 2

    def test_variant_cap(self, tmp_path, capsys):
        path = tmp_path / "c.gdl"
        path.write_text(CHOICE)
        assert main(["lower", str(path), "--root", "either", "--variants", "--cap", "1"]) == 1
        assert _stderr_json(capsys.readouterr().err)[0]["kind"] == "VariantCapExceeded"

    def test_tree(self, clean_file, capsys):
        assert main(["lower", str(clean_file), "--root", "fetched", "--tree"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "Achieve[Fetched]"
        assert "Walk to kitchen" in out

    def test_demo_from_assets(self, capsys):
        assert main(["lower", "--with-assets", "--root", "TurnedOffFloorLampInHomeOffice"]) == 0
        assert capsys.readouterr().out.splitlines()[-1] == "Step 4: Switch off floor lamp"

    def test_unknown_root(self, clean_file, capsys):
        assert main(["lower", str(clean_file), "--root", "ghost"]) == 1


class TestPrompt:
    def test_text(self, capsys):
        assert main(["prompt", "--goal", "SatOnToilet"]) == 0
        assert capsys.readouterr().out.endswith("AchieveGoal SatOnToilet(\n")

    def test_json(self, capsys):
        assert main(["prompt", "--goal", "SatOnToilet", "--json"]) == 0
        obj = json.loads(capsys.readouterr().out)
        assert obj["system"] == "Output the next C++ line"

    def test_malformed(self, capsys):
        assert main(["prompt", "--goal", "not valid"]) == 1


class TestRun:
    def _args(self, fixtures_dir, *extra):
        return ["run", "--manifest", str(fixtures_dir / "corpus" / "manifest.ini"),
                "--cassette", str(fixtures_dir / "cassette.jsonl"), *extra]

    def test_replay_matches_golden(self, fixtures_dir, tmp_path):
        out = tmp_path / "r.tsv"
        assert main(self._args(fixtures_dir, "--out", str(out))) == 0
        assert out.read_bytes() == (fixtures_dir / "golden_report.tsv").read_bytes()

    def test_stdout_and_details(self, fixtures_dir, tmp_path, capsys):
        details = tmp_path / "d.jsonl"
        assert main(self._args(fixtures_dir, "--details", str(details), "--parallel", "1")) == 0
        assert capsys.readouterr().out.endswith("aggregate\t55.00\n")
        entries = [json.loads(x) for x in details.read_text().splitlines()]
        lamp = entries[2]
        assert lamp["task_id"] == "turn-off-light-bedroom"
        assert lamp["added"] or lamp["missing"]
        assert "program" not in entries[3] and entries[3]["error"].startswith("UnresolvedReference")

    def test_figure(self, fixtures_dir, tmp_path):
        fig = tmp_path / "scores.png"
        assert main(self._args(fixtures_dir, "--out", str(tmp_path / "r.tsv"), "--figure", str(fig))) == 0
        assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_live_without_key(self, fixtures_dir, monkeypatch, capsys):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        assert main(self._args(fixtures_dir, "--mode", "live")) == 2
        assert _stderr_json(capsys.readouterr().err)[0]["kind"] == "MissingCredentials"

    def test_replay_without_cassette(self, fixtures_dir, capsys):
        args = ["run", "--manifest", str(fixtures_dir / "corpus" / "manifest.ini")]
        assert main(args) == 2

    def test_missing_manifest(self, tmp_path, fixtures_dir):
        assert main(["run", "--manifest", str(tmp_path / "m.ini"),
                     "--cassette", str(fixtures_dir / "cassette.jsonl")]) == 2

    def test_other_model_misses_everything(self, fixtures_dir, tmp_path):
        out = tmp_path / "r.tsv"
        assert main(self._args(fixtures_dir, "--model", "gpt-3.5-turbo-1106", "--out", str(out))) == 0
        rep = read_report(out)
        assert rep.aggregate_percent == 0.0
        assert all(r.error.startswith("CassetteMiss") for r in rep.rows)


def _report(model, scores, tasks=("a", "b", "c")):
    return EvalReport(model, tuple(ScoreRow(t, t.upper(), s) for t, s in zip(tasks, scores)))


class TestReport:
    def test_format_and_read_round_trip(self, tmp_path):
        rep = EvalReport("m", (ScoreRow("a", "A", 0.5), ScoreRow("b", "B", 0.0, error="Boom:\tx\ny")))
        path = tmp_path / "m.tsv"
        write_report(rep, path)
        loaded = read_report(path)
        assert loaded.model_id == "m"
        assert [r.score for r in loaded.rows] == [0.5, 0.0]
        assert loaded.rows[1].error == "Boom: x y"
        assert loaded.aggregate_percent == 25.0

    def test_merge_three(self, tmp_path, capsys):
        paths = []
        for name, scores in [("x", (1, 1, 1)), ("y", (1, 0.5, 0)), ("z", (0, 0, 0.25))]:
            p = tmp_path / f"{name}.tsv"
            write_report(_report(name, scores), p)
            paths.append(str(p))
        out = tmp_path / "table.md"
        fig = tmp_path / "fig.png"
        assert main(["report", *paths, "--out", str(out), "--figure", str(fig)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "| Task | Achieve[Goal] | x | y | z |"
        assert lines[2] == "| a | A | 1.00 | 1.00 | 0.00 |"
        assert lines[-1] == "| Percent |  | 100.00% | 50.00% | 8.33% |"
        assert fig.stat().st_size > 0

    def test_single_report_passthrough(self, tmp_path, capsys):
        p = tmp_path / "x.tsv"
        write_report(_report("x", (1, 0.5, 0)), p)
        assert main(["report", str(p)]) == 0
        assert "| Percent |  | 50.00% |" in capsys.readouterr().out

    def test_disjoint_tasks(self, tmp_path, capsys):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_report(_report("a", (1, 1)), a)
        write_report(_report("b", (1, 1), tasks=("a", "q")), b)
        assert main(["report", str(a), str(b)]) == 1
        assert "+q" in capsys.readouterr().err

    def test_mismatch_details(self, tmp_path):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_report(_report("a", (1, 1)), a)
        write_report(_report("b", (1,)), b)
        with pytest.raises(ReportMismatch) as err:
            merge_markdown([read_report(a), read_report(b)])
        assert list(err.value.differences.values()) == [["-b"]]

    def test_bad_report(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text("a\tA\tnope\naggregate\t1\n")
        with pytest.raises(ReportError, match="bad score"):
            read_report(p)
        p.write_text("a\tA\t1.0\n")
        with pytest.raises(ReportError, match="aggregate"):
            read_report(p)

    def test_missing_report_file(self, tmp_path):
        assert main(["report", str(tmp_path / "none.tsv")]) == 2

    def test_golden_parses(self, fixtures_dir):
        rep = read_report(fixtures_dir / "golden_report.tsv")
        assert rep.model_id == "gpt-4-0613" and rep.aggregate_percent == 55.0
        assert format_report(EvalReport(rep.model_id, rep.rows)) == \
            (fixtures_dir / "golden_report.tsv").read_text()
