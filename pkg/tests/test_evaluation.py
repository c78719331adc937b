import dataclasses
import json

import numpy as np
import pytest

from adrplan import env, evaluation, mcts, policy
from adrplan.evaluation import CaseResult, Scenario

FAST_MCTS = mcts.MctsConfig(simulations_per_step=20)


def case(visited, scenario="nominal", planner="random", seed=0, refuels=0):
    return CaseResult(scenario, planner, seed, visited, refuels, 0.5, visited - 0.5 * refuels, 0.1, 0.01)


def test_scenario_presets():
    s = evaluation.SCENARIOS
    assert (s["nominal"].dv_max, s["nominal"].mission_days) == (3.0, 7.0)
    assert (s["time_limited"].dv_max, s["time_limited"].mission_days) == (3.0, 3.0)
    assert (s["dv_limited"].dv_max, s["dv_limited"].mission_days) == (1.0, 7.0)
    assert s["nominal"].n_cases == 100
    assert evaluation.get_scenario("dv", 5) == dataclasses.replace(s["dv_limited"], n_cases=5)
    with pytest.raises(ValueError, match="unknown scenario"):
        evaluation.get_scenario("bogus")
    with pytest.raises(ValueError):
        Scenario("x", 1.0, 1.0, n_cases=0)


def test_scenario_seed_ranges_are_disjoint():
    bases = [evaluation.scenario_base_seed(s, 7) for s in evaluation.SCENARIOS.values()]
    assert bases == [7, 1_000_007, 2_000_007]


def test_random_case_respects_bounds():
    nominal = evaluation.SCENARIOS["nominal"]
    r = evaluation.run_case(evaluation.RandomPlanner(), nominal, 3, env.nominal_config())
    assert 0 <= r.debris_visited <= 50
    assert r.episode_return == r.debris_visited - 0.5 * r.refuels
    assert r.wall_time_s >= 0 and r.dv_used_kms >= 0


def test_mcts_case_is_reproducible():
    scenario = evaluation.get_scenario("nominal", 1)
    planner = evaluation.MctsPlanner(FAST_MCTS)
    a = evaluation.run_case(planner, scenario, 11)
    b = evaluation.run_case(planner, scenario, 11)
    strip = lambda r: dataclasses.replace(r, wall_time_s=0.0, mean_decision_latency_s=0.0)
    assert strip(a) == strip(b)


def test_dv_limited_spend_per_refuel_cycle():
    scenario = evaluation.get_scenario("dv", 1)
    for seed in range(5):
        state = env.reset(scenario.mission_config(env.desk_config()), seed)
        rng = np.random.default_rng(seed)
        spent = 0.0
        while not env.is_terminal(state)[0]:
            a = int(rng.choice(np.flatnonzero(state.mask)))
            result = env.step(state, a)
            spent = 0.0 if a == state.refuel_action else spent + result.dv_spent
            assert spent <= 1.0 + 1e-12
            state = result.state


def test_run_scenario_seeds_and_counts():
    one = evaluation.run_scenario(evaluation.RandomPlanner(), evaluation.get_scenario("nominal", 1), 5)
    assert len(one) == 1 and one[0].seed == 5
    many = evaluation.run_scenario(evaluation.RandomPlanner(), evaluation.get_scenario("time", 100), 0)
    assert [r.seed for r in many] == list(range(100))


def test_parallel_matches_sequential():
    scenario = evaluation.get_scenario("dv", 4)
    seq = evaluation.run_scenario(evaluation.RandomPlanner(), scenario, 20, jobs=1)
    par = evaluation.run_scenario(evaluation.RandomPlanner(), scenario, 20, jobs=2)
    assert evaluation.deterministic_csv(seq) == evaluation.deterministic_csv(par)


def test_ppo_planner_rejects_wrong_field_size(tmp_path):
    params = policy.PolicyParams.init(env.observation_size(4), 5, 8)
    path = tmp_path / "p.json"
    policy.save_checkpoint(params, policy.PpoConfig(hidden=8), path)
    planner = evaluation.make_planner(f"ppo:{path}")
    assert planner.name == "ppo:p"
    with pytest.raises(ValueError, match="debris"):
        evaluation.run_case(planner, evaluation.get_scenario("nominal", 1), 0)
    small = env.desk_config(n_debris=4)
    r = evaluation.run_case(planner, evaluation.get_scenario("nominal", 1), 0, small)
    assert 0 <= r.debris_visited <= 4


def test_make_planner_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        evaluation.make_planner(f"ppo:{tmp_path / 'missing.json'}")
    with pytest.raises(ValueError, match="unknown planner"):
        evaluation.make_planner("greedy")


def test_summarize_examples():
    s = evaluation.summarize([case(5)])
    assert (s.min, s.max, s.mean, s.std) == (5, 5, 5, 0)
    s = evaluation.summarize([case(2), case(4)])
    assert (s.min, s.max, s.mean, s.std) == (2, 4, 3.0, 1.0)
    assert s.display() == "2.0  4.0  3.0 ± 1.0"
    with pytest.raises(ValueError):
        evaluation.summarize([])


def test_summary_is_permutation_invariant():
    rng = np.random.default_rng(0)
    results = [case(int(v)) for v in rng.integers(0, 10, 50)]
    ref = evaluation.summarize(results)
    for _ in range(5):
        perm = [results[i] for i in rng.permutation(len(results))]
        assert evaluation.summarize(perm) == ref


def test_summary_table_layout():
    text = evaluation.format_summary_table([evaluation.summarize([case(2), case(4)])])
    assert "population" in text
    header = text.splitlines()[1].split()
    assert header[-5:] == ["min", "max", "avg", "±", "std"]


def test_timing_report():
    single = [case(3)]
    row, = evaluation.timing_report(single)
    assert (row.mean_wall_time_s, row.max_wall_time_s, row.mean_decision_latency_s) == (0.1, 0.1, 0.01)
    mixed = [case(1, s, p) for s in ("nominal", "dv_limited") for p in ("random", "mcts")]
    assert len(evaluation.timing_report(mixed)) == 4
    with pytest.raises(ValueError):
        evaluation.timing_report([])


def test_csv_round_trip(tmp_path):
    results = evaluation.run_scenario(evaluation.RandomPlanner(), evaluation.get_scenario("nominal", 3), 0)
    path = tmp_path / "r.csv"
    evaluation.write_csv(results, path)
    assert path.read_text().splitlines()[0] == ",".join(evaluation.CSV_COLUMNS)
    assert evaluation.read_csv(path) == results


def test_empty_csv_is_header_only(tmp_path):
    path = tmp_path / "e.csv"
    evaluation.write_csv([], path)
    assert path.read_text() == ",".join(evaluation.CSV_COLUMNS) + "\n"


def test_json_round_trip_and_histograms(tmp_path):
    results = evaluation.run_scenario(evaluation.RandomPlanner(), evaluation.get_scenario("dv", 6), 0)
    path = tmp_path / "r.json"
    evaluation.write_json(results, path)
    assert evaluation.read_json(path) == results
    doc = json.loads(path.read_text())
    assert sum(doc["histograms"]["dv_limited"]["random"].values()) == 6
    assert doc["summary"][0]["n"] == 6
    assert "population" in doc["std"]


def test_episode_return_identity_over_planners():
    scenario = evaluation.get_scenario("dv", 3)
    for planner in (evaluation.RandomPlanner(), evaluation.MctsPlanner(FAST_MCTS)):
        for r in evaluation.run_scenario(planner, scenario, 40):
            assert r.episode_return == r.debris_visited - 0.5 * r.refuels
