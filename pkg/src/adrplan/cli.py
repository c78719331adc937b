"""Command-line entry point: ``adrplan {gen-debris,train,evaluate,plan}``.

Config precedence is flags, then the config file (``--config`` or the
``ADR_PLANNER_CONFIG`` environment variable), then the built-in preset.
Each command takes one ``--seed``. Training expands it into independent
streams with ``numpy.random.SeedSequence(seed).spawn``. Evaluation gives
scenario ``k`` the seeds ``seed + k * 1_000_000 + i``, one per case ``i``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, env, evaluation, mcts, policy

CONFIG_ENV_VAR = "ADR_PLANNER_CONFIG"
PRESETS = ("desk", "full")
PPO_KEYS = {"learning_rate": float, "hidden": int, "batch_size": int, "minibatch_size": int,
            "epochs_per_update": int, "entropy_coef": float, "total_timesteps": int}
MCTS_KEYS = {"simulations_per_step": int, "c_uct": float, "rollout_depth": int}
EXTRA_KEYS = {"preset": str, **PPO_KEYS, **MCTS_KEYS}


@dataclass
class RunManifest:
    command: list[str]
    config: dict
    seed: int | None
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def write(self, path) -> None:
        """Write atomically: a temp file in the target directory, then rename."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


# -- configuration ------------------------------------------------------------

def load_config_values(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    values = env.load_scenario_file(path, EXTRA_KEYS)
    if values.get("preset", "desk") not in PRESETS:
        raise ValueError(f"unknown preset {values['preset']!r}; expected one of {PRESETS}")
    return values


def mission_config(values: dict) -> env.MissionConfig:
    base = env.nominal_config() if values.get("preset") == "full" else env.desk_config()
    return env.apply_scenario_values(base, values)


def ppo_config(values: dict, mode: str, steps: int | None, seed: int) -> policy.PpoConfig:
    base = policy.FULL_NOMINAL if values.get("preset") == "full" else policy.DESK_NOMINAL
    changes = {k: values[k] for k in PPO_KEYS if k in values}
    if steps is not None:
        changes["total_timesteps"] = steps
    return dataclasses.replace(base, domain_randomized=(mode == "randomized"), seed=seed, **changes)


def mcts_config(values: dict, seed: int) -> mcts.MctsConfig:
    return mcts.MctsConfig(seed=seed, **{k: values[k] for k in MCTS_KEYS if k in values})


def _command(args) -> list[str]:
    return ["adrplan", *(args.argv if args.argv is not None else sys.argv[1:])]


def _seed(args, values) -> int:
    return args.seed if args.seed is not None else int(values.get("seed", 0))


def _snapshot(mission: env.MissionConfig, **extra) -> dict:
    doc = {"mission": json.loads(json.dumps(dataclasses.asdict(mission)))}
    doc.update({k: dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v for k, v in extra.items()})
    return doc


# -- commands -----------------------------------------------------------------

def cmd_gen_debris(args) -> int:
    field_ = env.generate_debris_field(args.seed, args.n)
    env.save_debris(field_, args.out)
    print(f"wrote {args.n} debris to {args.out}")
    return 0


def cmd_train(args) -> int:
    started = _now()
    values = load_config_values(args.config)
    seed = _seed(args, values)
    mission = mission_config(values)
    config = ppo_config(values, args.mode, args.steps, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def log(row):
        if not args.quiet:
            print(f"update {row['update']:>4}  steps {row['steps']:>8}  mean return {row['mean_return']:.3f}",
                  flush=True)

    params, rows = policy.train(lambda: env.DebrisEnv(mission), config, log)
    ckpt, log_path = out / "policy.json", out / "train_log.csv"
    randomization = None
    if config.domain_randomized:
        randomization = {"dv_max_kms": list(env.RANDOMIZED_DV_RANGE), "mission_days": list(env.RANDOMIZED_DAYS_RANGE)}
    policy.save_checkpoint(params, config, ckpt, extra={"mission": _snapshot(mission)["mission"]})
    policy.write_training_log(rows, log_path)
    RunManifest(
        command=_command(args),
        config=_snapshot(mission, ppo=config, randomization=randomization, mode=args.mode),
        seed=seed, started=started, finished=_now(), outputs=[str(ckpt), str(log_path)],
    ).write(out / "manifest.json")
    print(f"wrote {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    started = _now()
    values = load_config_values(args.config)
    seed = _seed(args, values)
    mission = mission_config(values)
    names = list(evaluation.SCENARIOS) if args.scenario == "all" else [args.scenario]
    scenarios = [evaluation.get_scenario(n, args.cases) for n in names]
    planner = evaluation.make_planner(args.planner, mcts_config(values, seed))
    results = []
    for scenario in scenarios:
        base_seed = evaluation.scenario_base_seed(scenario, seed)
        results += evaluation.run_scenario(planner, scenario, base_seed, mission, jobs=args.jobs)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = evaluation.summarize_all(results)
    timing = evaluation.timing_report(results)
    paths = {name: out / name for name in ("results.csv", "results.json", "summary.txt", "timing.txt", "timing.json")}
    evaluation.write_csv(results, paths["results.csv"])
    evaluation.write_json(results, paths["results.json"], summaries)
    paths["summary.txt"].write_text(evaluation.format_summary_table(summaries))
    paths["timing.txt"].write_text(evaluation.format_timing_table(timing))
    evaluation.write_timing_json(timing, paths["timing.json"])
    RunManifest(
        command=_command(args),
        config=_snapshot(mission, planner=args.planner, scenarios=[dataclasses.asdict(s) for s in scenarios],
                         mcts=mcts_config(values, seed), jobs=args.jobs),
        seed=seed, started=started, finished=_now(), outputs=[str(p) for p in paths.values()],
    ).write(out / "manifest.json")
    sys.stdout.write(evaluation.format_summary_table(summaries))
    return 0


def _describe_action(state: env.MissionState, action: int) -> str:
    if action == state.refuel_action:
        return "refuel"
    return f"debris {state.debris[action].id}"


def cmd_plan(args) -> int:
    values = load_config_values(args.config)
    seed = _seed(args, values)
    mission = mission_config(values)
    if args.state:
        state = env.state_from_dict(json.loads(Path(args.state).read_text()), mission)
    else:
        state = env.reset(mission, seed)
    planner = evaluation.make_planner(args.planner, mcts_config(values, seed))
    planner.reset(seed)
    total = dv_since_refuel = 0.0
    steps = 0
    while not env.is_terminal(state)[0] and (args.horizon is None or steps < args.horizon):
        t0 = time.perf_counter()
        action = planner.act(state)
        latency = time.perf_counter() - t0
        plan = env.action_cost(state, action)
        result = env.step(state, action)
        total += result.reward
        dv_since_refuel = 0.0 if action == state.refuel_action else dv_since_refuel + result.dv_spent
        steps += 1
        print(f"step {steps}: {_describe_action(state, action)}  dv {result.dv_spent:.4f} km/s  "
              f"time {result.time_spent / 3600:.2f} h  reward {result.reward:+.1f}  cumulative {total:+.1f}  "
              f"dv since refuel {dv_since_refuel:.4f} km/s  decided in {latency:.3f} s")
        for label, dv, dur in plan.legs:
            print(f"    {label:<16} dv {dv:.5f} km/s  {dur / 3600:8.3f} h")
        state = result.state
    done, reason = env.is_terminal(state)
    status = f"terminated: {reason}" if done else "horizon reached"
    print(f"{status}; visited {state.visited_count}, refuels {state.refuel_count}, return {total:+.1f}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adrplan", description="Active debris removal mission planning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-debris", help="sample a debris field to JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_debris)

    p = sub.add_parser("train", help="train a masked PPO policy")
    p.add_argument("--mode", choices=("nominal", "randomized"), default="nominal")
    p.add_argument("--steps", type=int, help="total environment steps (overrides the preset)")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help=f"key = value config file (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run a planner over scenario case batteries")
    p.add_argument("--planner", required=True, help="random, mcts or ppo:<checkpoint>")
    p.add_argument("--scenario", choices=("nominal", "time", "dv", "all"), default="all")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plan", help="print one episode's action trace")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--state", help="state JSON (or a bare debris array)")
    src.add_argument("--seed", type=int)
    p.add_argument("--planner", default="mcts")
    p.add_argument("--horizon", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    if getattr(args, "cases", 1) < 1:
        parser.error("--cases must be >= 1")
    if getattr(args, "n", 0) < 0:
        parser.error("--n must be >= 0")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"adrplan {args.command}: error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
