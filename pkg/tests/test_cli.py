import json
import subprocess
import sys

from adrplan import cli, env, evaluation, policy


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_debris(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "gen-debris", "--seed", "7", "--n", "50", "--out", str(a))[0] == 0
    run(capsys, "gen-debris", "--seed", "7", "--n", "50", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    field = env.load_debris(a)
    assert len(field) == 50
    assert all(700 <= d.elements.altitude <= 800 for d in field)
    empty = tmp_path / "e.json"
    run(capsys, "gen-debris", "--n", "0", "--out", str(empty))
    assert json.loads(empty.read_text()) == []


def test_train_zero_steps_writes_initial_checkpoint(tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--steps", "0", "--seed", "3", "--out", str(tmp_path), "--quiet")
    assert code == 0
    params, cfg = policy.load_checkpoint(tmp_path / "policy.json")
    assert cfg.total_timesteps == 0 and cfg.seed == 3
    mission = env.desk_config()
    e = env.DebrisEnv(mission)
    expected, _ = policy.train(lambda: env.DebrisEnv(mission), cfg)
    for name, arr in expected.arrays().items():
        assert (getattr(params, name) == arr).all()
    assert e.obs_size == params.obs_size
    assert (tmp_path / "train_log.csv").read_text().strip() == ",".join(policy.LOG_COLUMNS)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["command"][:2] == ["adrplan", "train"]
    assert manifest["config"]["randomization"] is None


def test_train_randomized_manifest_and_reproducible_bytes(tmp_path, capsys):
    args = ["train", "--mode", "randomized", "--steps", "64", "--seed", "1", "--quiet"]
    cfg = tmp_path / "small.cfg"
    cfg.write_text("hidden = 8\nbatch_size = 32\nminibatch_size = 16\nepochs_per_update = 1\n")
    for name in ("a", "b"):
        assert run(capsys, *args, "--config", str(cfg), "--out", str(tmp_path / name))[0] == 0
    assert (tmp_path / "a" / "policy.json").read_bytes() == (tmp_path / "b" / "policy.json").read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["randomization"] == {"dv_max_kms": [1.0, 3.5], "mission_days": [1.0, 7.0]}
    assert manifest["config"]["ppo"]["hidden"] == 8
    assert manifest["outputs"][0].endswith("policy.json")


def test_config_precedence_and_env_var(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("seed = 9\nn_debris = 3\n")
    monkeypatch.setenv(cli.CONFIG_ENV_VAR, str(cfg))
    run(capsys, "train", "--steps", "0", "--out", str(tmp_path / "x"), "--quiet")
    manifest = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["config"]["mission"]["n_debris"] == 3
    run(capsys, "train", "--steps", "0", "--seed", "2", "--out", str(tmp_path / "y"), "--quiet")
    assert json.loads((tmp_path / "y" / "manifest.json").read_text())["seed"] == 2


def test_unknown_config_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("dv_max_kms = 2\nwarp_factor = 9\n")
    code, _, err = run(capsys, "train", "--steps", "0", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert "warp_factor" in err and len(err.strip().splitlines()) == 1


def test_evaluate_all_scenarios(tmp_path, capsys):
    code, out, _ = run(capsys, "evaluate", "--planner", "random", "--scenario", "all", "--cases", "2",
                       "--out-dir", str(tmp_path))
    assert code == 0
    results = evaluation.read_csv(tmp_path / "results.csv")
    assert len(results) == 6
    assert {r.scenario for r in results} == set(evaluation.SCENARIOS)
    for name in ("results.json", "summary.txt", "timing.txt", "timing.json", "manifest.json"):
        assert (tmp_path / name).exists()
    assert "population" in out


def test_evaluate_single_mcts_case(tmp_path, capsys):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text("simulations_per_step = 10\n")
    run(capsys, "evaluate", "--planner", "mcts", "--scenario", "nominal", "--cases", "1",
        "--config", str(cfg), "--out-dir", str(tmp_path))
    summary, = json.loads((tmp_path / "results.json").read_text())["summary"]
    assert summary["min"] == summary["max"]


def test_evaluate_default_cases():
    args = cli.build_parser().parse_args(["evaluate", "--planner", "random", "--out-dir", "x"])
    assert args.cases == 100 and args.jobs == 1


def test_evaluate_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "evaluate", "--planner", "random", "--scenario", "dv", "--cases", "5", "--seed", "4",
            "--out-dir", str(tmp_path / name))
    a = evaluation.read_csv(tmp_path / "a" / "results.csv")
    b = evaluation.read_csv(tmp_path / "b" / "results.csv")
    assert evaluation.deterministic_csv(a) == evaluation.deterministic_csv(b)


def test_evaluate_errors(tmp_path, capsys):
    code, _, err = run(capsys, "evaluate", "--planner", "nope", "--out-dir", str(tmp_path))
    assert code == 1 and "unknown planner" in err
    code, _, err = run(capsys, "evaluate", "--planner", f"ppo:{tmp_path / 'none.json'}", "--out-dir", str(tmp_path))
    assert code == 1 and "checkpoint not found" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, err = run(capsys, "evaluate", "--planner", f"ppo:{bad}", "--out-dir", str(tmp_path))
    assert code == 1 and len(err.strip().splitlines()) == 1


def test_plan_horizon_one(capsys):
    code, out, _ = run(capsys, "plan", "--seed", "3", "--planner", "random", "--horizon", "1")
    assert code == 0
    assert sum(line.startswith("step ") for line in out.splitlines()) == 1
    assert "horizon reached" in out


def test_plan_terminal_state_prints_reason(tmp_path, capsys):
    state = env.reset(env.desk_config(), 0)
    doc = env.state_to_dict(state)
    doc["remaining_dv_kms"] = 0.0
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "plan", "--state", str(path), "--planner", "random")
    assert code == 0
    assert not any(line.startswith("step ") for line in out.splitlines())
    assert "terminated: fuel_exhausted" in out


def test_plan_trace_dv_stays_within_budget(capsys):
    code, out, _ = run(capsys, "plan", "--seed", "5", "--planner", "random")
    spent = [float(line.split("dv since refuel ")[1].split()[0]) for line in out.splitlines() if line.startswith("step ")]
    assert spent and max(spent) <= env.desk_config().dv_max


def test_bad_flags_exit_two_with_one_line():
    proc = subprocess.run([sys.executable, "-m", "adrplan.cli", "evaluate", "--cases", "0", "--planner", "random",
                           "--out-dir", "x"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert len(proc.stderr.strip().splitlines()) == 1


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "adrplan.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "evaluate" in proc.stdout
