import json
from pathlib import Path

import pytest

from hirpf.datagen import ScriptedClient
from hirpf.evalbench import (
    MissingItemsError,
    Question,
    ScaleSession,
    SituationEpisode,
    ScriptedAgent,
    accuracy_report,
    compute_accuracy,
    constant_agent,
    cue_agent,
    default_grid,
    load_scenarios,
    majority_detect,
    median_verdict,
    mock_eval_client,
    parse_breach,
    parse_likert,
    personality_items,
    profession_items,
    profession_report,
    profile_agent,
    run_debate,
    run_questionnaire,
    run_scale,
    run_scale_item,
    run_situation_episode,
    run_situation_test,
    score_profession,
    score_trait,
    trait_report,
    write_report,
)
from hirpf.evalbench.social import TRUNCATED
from hirpf.identity import IdentityRegistry, activate

GOLDEN = Path(__file__).parent / "golden"
REG = IdentityRegistry()


def golden(name):
    return json.loads((GOLDEN / name).read_text())


def sessions_from(rows, bank):
    return [ScaleSession(bank[r["item"]], [], r["verdicts"], median_verdict(r["verdicts"])) for r in rows]


def episodes_from(rows):
    return [SituationEpisode(r["assigned"], r["scenario_id"], breach=r["breach"], verdicts=r["verdicts"],
                             detected=majority_detect(r["verdicts"])) for r in rows]


# --- item banks ------------------------------------------------------------------

def test_item_banks():
    pb, qb = personality_items(), profession_items()
    assert len(pb) == 100 and len(qb) == 60
    for bank in (pb, qb):
        for d in bank.dimensions():
            keys = [i.key for i in bank.for_dimension(d)]
            assert len(keys) == 20 and keys.count("positive") == 10
    assert pb["extraversion-n01"].reverse(2) == 4 and pb["extraversion-p01"].reverse(2) == 2
    assert len(load_scenarios()) == 8 and [s.id for s in load_scenarios()] == list(range(1, 9))


# --- parsing ---------------------------------------------------------------------

@pytest.mark.parametrize("raw,score", [("4", 4), ("Rating: 2/5", 2), ("I'd say 5.", 5), ("score 1 of 5", 1)])
def test_parse_likert(raw, score):
    assert parse_likert(raw) == score


@pytest.mark.parametrize("raw", ["none", "10", "six", "0"])
def test_parse_likert_rejects(raw):
    with pytest.raises(ValueError):
        parse_likert(raw)


def test_median_verdict():
    assert median_verdict([5, 1, 4, 2, 4]) == 4
    with pytest.raises(ValueError):
        median_verdict([1, 2])


@pytest.mark.parametrize("raw,breach", [('{"breach": true, "reason": "x"}', True), ('ok {"breach": false}', False),
                                        ("Yes, it says so.", True), ("no.", False)])
def test_parse_breach(raw, breach):
    assert parse_breach(raw)[0] is breach


def test_parse_breach_rejects():
    with pytest.raises(ValueError):
        parse_breach("maybe")


def test_majority_detect():
    vs = [["a", "b"], ["a"], ["a", "a"], ["b", "c"], ["b"]]
    assert majority_detect(vs) == ["a", "b"]
    assert majority_detect(vs, threshold=4) == []


# --- scale scoring against golden files -----------------------------------------------

def test_trait_golden():
    g = golden("scale_trait_extraversion.json")
    bank = personality_items()
    ss = sessions_from(g["sessions"], bank)
    assert [s.final for s in ss] == g["expected"]["finals"]
    score = score_trait(ss, bank)
    assert score.mean == pytest.approx(g["expected"]["mean"], abs=1e-12)
    assert score.magnitude == pytest.approx(g["expected"]["magnitude"], abs=1e-12)
    assert score.n_items == 20


def test_profession_golden():
    g = golden("scale_profession.json")
    bank = profession_items()
    m = score_profession({a: sessions_from(rows, bank) for a, rows in g["sessions"].items()}, bank)
    for agent, row in g["expected"]["means"].items():
        for d, v in row.items():
            assert m.means[agent][d] == pytest.approx(v, abs=1e-12), (agent, d)
    assert all(v["discriminates"] for v in m.own_vs_off().values())


def test_all_agree_on_positive_items_saturates():
    bank = personality_items()
    ss = [ScaleSession(i, [], [5] * 5 if i.key == "positive" else [1] * 5, 5 if i.key == "positive" else 1)
          for i in bank.for_dimension("openness")]
    score = score_trait(ss, bank)
    assert score.mean == 5.0 and score.magnitude == 2.0


def test_missing_items_refuse_to_score():
    bank = personality_items()
    ss = sessions_from([{"item": i.id, "verdicts": [3] * 5} for i in bank.for_dimension("openness")[:-1]], bank)
    with pytest.raises(MissingItemsError) as exc:
        score_trait(ss, bank)
    assert exc.value.missing == ["openness-n10"]
    with pytest.raises(MissingItemsError):
        score_trait(ss)


# --- situation accuracy against the hand-tallied fixture -----------------------------

def test_accuracy_fixture():
    g = golden("accuracy_fixture.json")
    eps = episodes_from(g["episodes"])
    assert [e.detected for e in eps] == g["expected"]["detected"]
    rep = compute_accuracy(eps)
    assert rep.per_dimension == pytest.approx(g["expected"]["per_dimension"])
    assert rep.overall == pytest.approx(g["expected"]["overall"])
    assert {str(k): v for k, v in rep.by_identity_count.items()} == g["expected"]["by_identity_count"]
    assert rep.n_breach == g["expected"]["n_breach"]


def test_invalid_episodes_are_excluded():
    eps = episodes_from(golden("accuracy_fixture.json")["episodes"])
    bad = SituationEpisode(["doctor"], 5, valid=False, invalid_reason="backend down")
    rep = compute_accuracy(eps + [bad])
    assert rep.overall == pytest.approx(4 / 6) and rep.n_invalid == 1 and rep.n_episodes == 5
    with pytest.raises(ValueError):
        compute_accuracy([])


def test_default_grid():
    grid = default_grid()
    assert len(grid) == 13 + 30 and grid[0] == ["high-agreeableness"] and grid[-1] == ["low-openness", "programmer"]


# --- runs with the offline mocks ------------------------------------------------------

def test_scale_item_run_with_mock():
    bank = personality_items()
    judge = mock_eval_client()
    agent = profile_agent({"extraversion": "high"}, bank)
    s = run_scale_item(bank["extraversion-n03"], agent, judge)
    assert len(s.transcript) == 6 and s.verdicts == [1] * 5 and s.final == 1
    ss = run_scale(bank.for_dimension("extraversion"), agent, judge, parallelism=4)
    assert score_trait(ss, bank).magnitude == 2.0


def test_unparseable_judge_is_neutral_and_flagged():
    bank = personality_items()
    s = run_scale_item(bank["openness-p01"], constant_agent("hm"), ScriptedClient(["what?"]), repetitions=3)
    assert s.verdicts == [3, 3, 3] and len(s.flags) == 3


def test_situation_episode_with_mocks():
    client = mock_eval_client()
    scen = load_scenarios()[0]
    ep = run_situation_episode(["low-agreeableness", "doctor"], scen, cue_agent(["low-agreeableness", "doctor"]),
                               client, client)
    assert ep.valid and not ep.breach and len(ep.transcript) == 8
    assert ep.detected == ["doctor", "low-agreeableness"]
    leak = run_situation_episode(["doctor"], scen, cue_agent(["doctor"], breach=True), client, client)
    assert leak.breach and compute_accuracy([leak]).overall == 0.0


def test_unreadable_breach_invalidates_episode():
    client = mock_eval_client()
    judge = ScriptedClient(["perhaps"])
    ep = run_situation_episode(["doctor"], load_scenarios()[1], cue_agent(["doctor"]), client, judge)
    assert not ep.valid and "no usable verdict" in ep.invalid_reason


def test_situation_grid_parallel_matches_serial():
    client = mock_eval_client(seed=2)
    grid, scen = [["doctor"], ["high-openness", "artist"]], load_scenarios()[:2]
    a = run_situation_test(grid, scen, lambda act: cue_agent(act.keys), client, client)
    b = run_situation_test(grid, scen, lambda act: cue_agent(act.keys), client, client, parallelism=3)
    assert [e.to_dict() for e in a] == [e.to_dict() for e in b]
    assert compute_accuracy(a).overall == 1.0


# --- social simulation --------------------------------------------------------------------

def test_questionnaire_codes_and_keeps_errors():
    pop = [activate(REG, ["doctor"]), activate(REG, ["artist"])]
    qs = [Question("q1", "Do you like rain?", ("yes", "no"))]

    def factory(act):
        if act.keys == ["artist"]:
            return ScriptedAgent(lambda s, t: (_ for _ in ()).throw(RuntimeError("boom")))
        return constant_agent("Yes, I love it.")

    table = run_questionnaire(pop, qs, factory, mock_eval_client())
    assert table.cells[("doctor", "q1")].code == "yes"
    assert "boom" in table.cells[("artist", "q1")].error
    assert table.category_counts() == {"q1": {"yes": 1}}
    with pytest.raises(ValueError):
        run_questionnaire([], qs, factory)


def test_debate_round_robin_and_truncation():
    pop = [activate(REG, ["doctor"]), activate(REG, ["artist"])]
    seen = []

    def factory(act):
        def fn(s, t):
            seen.append(len(t))
            return f"{act.signature} speaks"
        return ScriptedAgent(fn)

    turns = run_debate(pop, "cities", 2, factory)
    assert [t.speaker for t in turns] == ["doctor", "artist"] * 2 and seen == [1, 2, 3, 4]
    calls = []

    def flaky(act):
        def fn(s, t):
            calls.append(1)
            if len(calls) == 3:
                raise RuntimeError("down")
            return "x"
        return ScriptedAgent(fn)

    cut = run_debate(pop, "cities", 3, flaky)
    assert len(cut) == 3 and cut[-1].speaker == TRUNCATED
    with pytest.raises(ValueError):
        run_debate(pop[:1], "x", 1, factory)


# --- reports --------------------------------------------------------------------------------

def test_reports_render(tmp_path):
    rep = compute_accuracy(episodes_from(golden("accuracy_fixture.json")["episodes"]))
    data, text = accuracy_report(rep)
    assert "66.67" in text and "# identities" in text and data["by_identity_count"] == {"1": 0.5, "2": 0.75}
    bank = personality_items()
    ss = sessions_from(golden("scale_trait_extraversion.json")["sessions"], bank)
    data, text = trait_report({"agent": [score_trait(ss, bank)]})
    assert "2.90 (0.10)" in text
    g = golden("scale_profession.json")
    m = score_profession({a: sessions_from(r, profession_items()) for a, r in g["sessions"].items()},
                         profession_items())
    data, text = profession_report(m)
    assert "4.45" in text
    jp, tp = write_report(tmp_path, "r", data, text)
    assert json.loads(jp.read_text())["means"]["artist"]["artist"] == 4.45
