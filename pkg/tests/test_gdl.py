from __future__ import annotations

import re
import warnings

import pytest
from hypothesis import given, settings

from goalgraph.gdl import (ContinuationContext, DeclSet, DuplicateId, GDLSyntaxError,
                           GoalNameMismatch, IllegalCharacter, NoCodeFound, TokenKind,
                           UnresolvedReference, UnterminatedString, merge, parse_completion,
                           parse_declarations, print_declarations, sanitize_response, tokenize)
from goalgraph.model import (Combinator, Goal, GoalKind, LoweringMode, OperationCategory,
                             OperationDecl, OperationListDecl, SoftGoalType, lower_to_steps,
                             validate_graph)
from strategies import decl_sets, valid_graphs

K = TokenKind


class TestTokenize:
    def test_operation_statement(self):
        toks = tokenize('Operation findCup("Find cup", ENVIRONMENT_OPERATION);')
        assert [t.kind for t in toks] == [K.IDENT, K.IDENT, K.PUNCT, K.STRING, K.PUNCT,
                                          K.IDENT, K.PUNCT, K.PUNCT]
        assert toks[3].value == "Find cup"

    def test_empty(self):
        assert tokenize("") == []

    def test_unterminated(self):
        with pytest.raises(UnterminatedString):
            tokenize('"unclosed')

    def test_illegal(self):
        with pytest.raises(IllegalCharacter) as err:
            tokenize("Operation x@")
        assert err.value.span.column == 12

    def test_comments_and_escapes(self):
        toks = tokenize('// note\nAgent a("say \\"hi\\"", ops); // trailing')
        assert toks[0].text == "Agent"
        assert toks[3].value == 'say "hi"'

    def test_booleans(self):
        assert [t.kind for t in tokenize("true false truth")] == [K.BOOL, K.BOOL, K.IDENT]

    def test_smart_quotes(self):
        toks = tokenize("x(“Find cup”)")
        assert toks[2].kind is K.STRING and toks[2].value == "Find cup"

    @pytest.mark.parametrize("name", ["operations.gdl", "leaf_goals.gdl", "agent.gdl",
                                      "demonstration.gdl"])
    def test_spans_cover_all_significant_text(self, assets, name):
        text = {"operations.gdl": assets.operations_text, "leaf_goals.gdl": assets.leaf_goals_text,
                "agent.gdl": assets.agent_text, "demonstration.gdl": assets.demonstration_text}[name]
        toks = tokenize(text)
        assert all(a.end <= b.start for a, b in zip(toks, toks[1:]))
        rest = list(text)
        for t in toks:
            assert text[t.start:t.end] == t.text
            rest[t.start:t.end] = " " * (t.end - t.start)
        leftover = re.sub(r"//[^\n]*", "", "".join(rest))
        assert leftover.strip() == ""


class TestParse:
    def test_operation_assets(self, assets):
        d = parse_declarations(assets.operations_text)
        ops = d.of_type(OperationDecl)
        lists = d.of_type(OperationListDecl)
        assert len(ops) == 74
        assert [x.id for x in lists] == ["virtualPersonOperations"]
        assert len(lists[0].members) == 71
        assert ops[0] == OperationDecl("findCup", "Find cup", OperationCategory.ENVIRONMENT)

    def test_leaf_goal_assets(self, assets):
        goals = parse_declarations(assets.leaf_goals_text).of_type(Goal)
        assert len(goals) == 76
        drink = {g.id: g for g in goals}["getSomethingToDrink"]
        assert drink.disjunctions[0].combinator is Combinator.OR
        assert drink.disjunctions[0].complete is True

    def test_demonstration(self, assets):
        (goal,) = parse_declarations(assets.demonstration_text)
        assert goal.kind is GoalKind.ACHIEVE
        (ref,) = goal.disjunctions
        assert ref.combinator is Combinator.AND and ref.complete
        assert len(ref.subgoals) == 4

    def test_corpus_resolves(self, asset_graph):
        report = validate_graph(asset_graph)
        assert "UnresolvedReference" not in report.kinds()

    def test_late_binding(self):
        (goal,) = parse_declarations('AchieveGoal g("G", { Refinement(AND_REFINEMENT, true, {a}) });')
        assert goal.disjunctions[0].subgoals == ("a",)

    def test_soft_goal(self):
        (goal,) = parse_declarations(
            'SoftGoal comfy(IMPROVE, "Comfy", { PerformanceLink(bot, sit) });')
        assert goal.soft_type is SoftGoalType.IMPROVE

    def test_trailing_commas(self):
        (goal,) = parse_declarations(
            'AchieveGoal g("G", { Refinement(AND_REFINEMENT, false, {a, b,}), });')
        assert goal.disjunctions[0].subgoals == ("a", "b")
        assert goal.disjunctions[0].complete is False

    def test_empty_refinement_parses(self):
        (goal,) = parse_declarations('AchieveGoal g("G", { Refinement(AND_REFINEMENT, true, {}) });')
        assert goal.disjunctions[0].subgoals == ()

    def test_duplicate(self):
        with pytest.raises(DuplicateId) as err:
            parse_declarations('Operation a("A", ENVIRONMENT_OPERATION);\n'
                               'Operation a("B", ENVIRONMENT_OPERATION);')
        assert err.value.span.line == 2

    def test_syntax_error_reports_expected(self):
        with pytest.raises(GDLSyntaxError) as err:
            parse_declarations('AchieveGoal g("G", { Refinement(XOR_REFINEMENT, true, {a}) });')
        assert "AND_REFINEMENT" in err.value.expected
        assert err.value.found == "XOR_REFINEMENT"

    def test_spans_point_at_source(self, assets):
        d = parse_declarations(assets.leaf_goals_text, "leaf_goals.gdl")
        first = d.declarations[0]
        assert (first.span.source, first.span.line) == ("leaf_goals.gdl", 3)

    def test_merge_detects_cross_file_duplicates(self, assets):
        ops = parse_declarations(assets.operations_text)
        with pytest.raises(DuplicateId):
            merge(ops, ops)

    def test_determinism(self, assets):
        a = print_declarations(parse_declarations(assets.leaf_goals_text))
        b = print_declarations(parse_declarations(assets.leaf_goals_text))
        assert a == b


class TestPrint:
    def test_operation(self):
        text = print_declarations([OperationDecl("findCup", "Find cup")])
        assert text == 'Operation findCup("Find cup", ENVIRONMENT_OPERATION);\n'

    def test_empty(self):
        assert print_declarations(DeclSet()) == ""

    def test_demonstration_is_reproduced_byte_for_byte(self, assets):
        assert print_declarations(parse_declarations(assets.demonstration_text)) == assets.demonstration_text

    def test_assets_round_trip(self, base_decls):
        assert parse_declarations(print_declarations(base_decls)) == base_decls

    @settings(max_examples=200, deadline=None)
    @given(decl_sets())
    def test_round_trip(self, d):
        text = print_declarations(d)
        assert parse_declarations(text) == d
        assert print_declarations(parse_declarations(text)) == text


class TestSanitize:
    def test_fenced_reply(self, lamp_reply):
        wrapped = "```cpp\n" + lamp_reply + "```\n"
        assert sanitize_response(wrapped) == lamp_reply

    def test_prose_around(self, lamp_reply):
        raw = "Sure! Here is the completion:\n\n" + lamp_reply + "\nLet me know if you need more."
        assert sanitize_response(raw) == lamp_reply

    def test_restated_prefix(self, lamp_prefix, lamp_reply):
        raw = lamp_prefix + lamp_reply
        body = sanitize_response(raw, "TurnedOnFloorLampInHomeOffice")
        assert "AchieveGoal" not in body
        assert body.strip() == lamp_reply.strip()

    def test_prose_only(self):
        with pytest.raises(NoCodeFound):
            sanitize_response("I cannot help with that request.")

    def test_cuts_after_statement(self):
        body = sanitize_response('"X", { PerformanceLink(a, b) });\nAchieveGoal other("O", {});')
        assert body == '"X", { PerformanceLink(a, b) });\n'


class TestCompletion:
    GOAL = "TurnedOnFloorLampInHomeOffice"

    def test_partial_statement_plus_reply(self, base_decls, lamp_prefix, lamp_reply):
        g = parse_completion(ContinuationContext(lamp_prefix, base_decls), lamp_reply)
        root = g.goals[self.GOAL]
        assert len(root.disjunctions[0].subgoals) == 4
        assert root.disjunctions[0].subgoals[-1] == "switchedOnFloorLampInHomeOffice"
        assert lower_to_steps(g, self.GOAL).steps[-1] == "Switch on floor lamp"

    def test_hallucinated_id(self, base_decls, lamp_prefix, lamp_reply):
        bad = lamp_reply.replace("foundFloorLampInHomeOffice", "foundLavaLamp")
        with pytest.raises(UnresolvedReference) as err:
            parse_completion(ContinuationContext(lamp_prefix, base_decls), bad)
        assert err.value.ids == ["foundLavaLamp"]

    def test_lists_every_unknown_id(self, base_decls):
        ctx = ContinuationContext("AchieveGoal X(", base_decls)
        with pytest.raises(UnresolvedReference) as err:
            parse_completion(ctx, '"X", { Refinement(AND_REFINEMENT, true, {p, foundCup, q}) });')
        assert err.value.ids == ["p", "q"]

    def test_printed_goal_round_trips(self, base_decls):
        expected = Goal(self.GOAL, self.GOAL, disjunctions=(
            parse_declarations(
                'AchieveGoal t("t", { Refinement(AND_REFINEMENT, COMPLETE_REFINEMENT, '
                '{walkedToHomeOffice, switchedOnFloorLampInHomeOffice}) });').declarations[0].disjunctions))
        printed = print_declarations([expected])
        prefix = f"AchieveGoal {self.GOAL}("
        assert printed.startswith(prefix)
        g = parse_completion(ContinuationContext(prefix, base_decls), printed[len(prefix):])
        assert g.goals[self.GOAL] == expected
        assert g == base_decls.to_graph().with_declarations([expected])

    @pytest.mark.filterwarnings("ignore::goalgraph.gdl.GoalNameMismatch")
    @settings(max_examples=50, deadline=None)
    @given(valid_graphs())
    def test_continuation_identity(self, g):
        refined = [x for x in g.goals.values() if x.disjunctions]
        base = DeclSet(tuple(d for d in g.declarations if d not in refined))
        for goal in refined:
            prefix = f"AchieveGoal {goal.id}("
            others = DeclSet(tuple(d for d in g.declarations if d is not goal))
            printed = print_declarations([goal])
            rebuilt = parse_completion(ContinuationContext(prefix, others), printed[len(prefix):])
            assert rebuilt.goals[goal.id] == goal
        assert len(base) + len(refined) == len(g.declarations)

    def test_name_mismatch_warns(self, base_decls):
        ctx = ContinuationContext("AchieveGoal X(", base_decls)
        with pytest.warns(GoalNameMismatch):
            parse_completion(ctx, '"Y", { Refinement(AND_REFINEMENT, true, {foundCup}) });')

    def test_no_warning_when_names_match(self, base_decls, lamp_prefix, lamp_reply):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            parse_completion(ContinuationContext(lamp_prefix, base_decls), lamp_reply)

    def test_faithful_mode_on_completion(self, base_decls, lamp_prefix, lamp_reply):
        g = parse_completion(ContinuationContext(lamp_prefix, base_decls), lamp_reply)
        assert lower_to_steps(g, self.GOAL, LoweringMode.FAITHFUL) == lower_to_steps(g, self.GOAL)

    def test_bad_prefix(self):
        with pytest.raises(ValueError):
            ContinuationContext("Operation x(")
