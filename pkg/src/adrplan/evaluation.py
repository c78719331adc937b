"""Scenario harness: run planners over seeded case batteries and export statistics.

Planners share a tiny interface: ``reset(seed)`` before each episode and
``act(state) -> action`` per decision. Cases are independent, so a scenario
can be fanned out over worker processes and merged back in seed order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import statistics
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import env, mcts, policy
from .env import MissionConfig, MissionState

CSV_COLUMNS = (
    "scenario", "planner", "seed", "debris_visited", "refuels", "dv_used_kms",
    "episode_return", "wall_time_s", "mean_decision_latency_s",
)
TIMING_COLUMNS = ("wall_time_s", "mean_decision_latency_s")
STD_NOTE = "std is the population standard deviation over cases"
# scenarios draw seeds from disjoint ranges so fields never repeat across scenarios
SCENARIO_SEED_STRIDE = 1_000_000


@dataclass(frozen=True)
class Scenario:
    name: str
    dv_max: float
    mission_days: float
    n_cases: int = 100

    def __post_init__(self):
        if self.n_cases < 1:
            raise ValueError("a scenario needs at least one case")

    def mission_config(self, base: MissionConfig) -> MissionConfig:
        return base.with_budget(self.dv_max, self.mission_days)


SCENARIOS = {
    "nominal": Scenario("nominal", 3.0, 7.0),
    "time_limited": Scenario("time_limited", 3.0, 3.0),
    "dv_limited": Scenario("dv_limited", 1.0, 7.0),
}
SCENARIO_ALIASES = {"nominal": "nominal", "time": "time_limited", "dv": "dv_limited"}


def get_scenario(name: str, n_cases: int | None = None) -> Scenario:
    """Look up a scenario by full name or short alias (``nominal``, ``time``, ``dv``)."""
    key = SCENARIO_ALIASES.get(name, name)
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIO_ALIASES)} or 'all'")
    scenario = SCENARIOS[key]
    return scenario if n_cases is None else dataclasses.replace(scenario, n_cases=n_cases)


def scenario_base_seed(scenario: Scenario, seed: int) -> int:
    return seed + list(SCENARIOS).index(scenario.name) * SCENARIO_SEED_STRIDE


@dataclass(frozen=True)
class CaseResult:
    scenario: str
    planner: str
    seed: int
    debris_visited: int
    refuels: int
    dv_used_kms: float
    episode_return: float
    wall_time_s: float
    mean_decision_latency_s: float


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    planner: str
    n: int
    min: float
    max: float
    mean: float
    std: float

    def display(self) -> str:
        return f"{self.min:.1f}  {self.max:.1f}  {self.mean:.1f} ± {self.std:.1f}"


@dataclass(frozen=True)
class TimingRow:
    scenario: str
    planner: str
    n: int
    mean_wall_time_s: float
    max_wall_time_s: float
    mean_decision_latency_s: float
    max_decision_latency_s: float


# -- planners ---------------------------------------------------------------

@dataclass
class RandomPlanner:
    """Uniform choice over the valid actions."""

    name: str = "random"
    _rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def act(self, state: MissionState) -> int:
        return int(self._rng.choice(np.flatnonzero(state.mask)))


@dataclass
class MctsPlanner:
    """UCT search with a fresh, seed-derived RNG stream per decision."""

    config: mcts.MctsConfig = field(default_factory=mcts.MctsConfig)
    name: str = "mcts"
    _seed: int = 0
    _decision: int = 0

    def reset(self, seed: int) -> None:
        self._seed, self._decision = seed, 0

    def act(self, state: MissionState) -> int:
        seed = self.config.seed * 1_000_003 + self._seed * 1_009 + self._decision
        self._decision += 1
        return mcts.plan(state, dataclasses.replace(self.config, seed=seed))


@dataclass
class PpoPlanner:
    """Greedy (argmax) action of a trained masked policy."""

    params: policy.PolicyParams
    name: str = "ppo"

    def reset(self, seed: int) -> None:
        pass

    def act(self, state: MissionState) -> int:
        return policy.act(self.params, env.observe(state), state.mask, deterministic=True)


def make_planner(token: str, mcts_config: mcts.MctsConfig | None = None):
    """Build a planner from ``random``, ``mcts`` or ``ppo:<checkpoint path>``."""
    if token == "random":
        return RandomPlanner()
    if token == "mcts":
        return MctsPlanner(mcts_config or mcts.MctsConfig())
    if token.startswith("ppo:"):
        path = Path(token[4:])
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        params, _ = policy.load_checkpoint(path)
        return PpoPlanner(params, name=f"ppo:{path.stem}")
    raise ValueError(f"unknown planner {token!r}; expected random, mcts or ppo:<path>")


# -- running ----------------------------------------------------------------

def run_case(planner, scenario: Scenario, seed: int, base: MissionConfig | None = None) -> CaseResult:
    """Play one seeded mission to termination and record its metrics."""
    config = scenario.mission_config(base or env.desk_config())
    start = time.perf_counter()
    state = env.reset(config, seed)
    if isinstance(planner, PpoPlanner) and planner.params.obs_size != env.observation_size(config.n_debris):
        raise ValueError(f"planner {planner.name} expects {planner.params.n_actions - 1} debris, "
                         f"scenario has {config.n_debris}")
    planner.reset(seed)
    latencies = []
    dv_used = 0.0
    while not env.is_terminal(state)[0]:
        t0 = time.perf_counter()
        action = planner.act(state)
        latencies.append(time.perf_counter() - t0)
        result = env.step(state, action)
        dv_used += result.dv_spent
        state = result.state
    wall = time.perf_counter() - start
    return CaseResult(
        scenario=scenario.name, planner=planner.name, seed=seed,
        debris_visited=state.visited_count, refuels=state.refuel_count, dv_used_kms=dv_used,
        episode_return=env.episode_return(state.visited_count, state.refuel_count, config),
        wall_time_s=wall, mean_decision_latency_s=statistics.fmean(latencies) if latencies else 0.0,
    )


def _run_case_args(args):
    return run_case(*args)


def run_scenario(planner, scenario: Scenario, base_seed: int, base: MissionConfig | None = None,
                 jobs: int = 1) -> list[CaseResult]:
    """Run case ``i`` with seed ``base_seed + i``; results come back in seed order."""
    work = [(planner, scenario, base_seed + i, base) for i in range(scenario.n_cases)]
    if jobs <= 1:
        return [run_case(*args) for args in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_case_args, work))


# -- statistics ---------------------------------------------------------------

def _groups(results):
    groups: dict[tuple[str, str], list[CaseResult]] = {}
    for r in results:
        groups.setdefault((r.scenario, r.planner), []).append(r)
    order = {name: i for i, name in enumerate(SCENARIOS)}
    return sorted(groups.items(), key=lambda kv: (order.get(kv[0][0], len(order)), kv[0]))


def summarize(results) -> SummaryRow:
    """Min, max, mean and population std of debris visited for one planner/scenario."""
    results = list(results)
    if not results:
        raise ValueError("cannot summarize an empty result list")
    visits = [r.debris_visited for r in results]
    return SummaryRow(
        scenario=results[0].scenario, planner=results[0].planner, n=len(visits),
        min=float(min(visits)), max=float(max(visits)),
        mean=statistics.fmean(visits), std=statistics.pstdev(visits),
    )


def summarize_all(results) -> list[SummaryRow]:
    return [summarize(group) for _, group in _groups(results)]


def timing_report(results) -> list[TimingRow]:
    """Wall time and decision latency aggregated per scenario and planner."""
    results = list(results)
    if not results:
        raise ValueError("cannot build a timing report from no results")
    rows = []
    for (scenario, planner), group in _groups(results):
        walls = [r.wall_time_s for r in group]
        lats = [r.mean_decision_latency_s for r in group]
        rows.append(TimingRow(scenario, planner, len(group), statistics.fmean(walls), max(walls),
                              statistics.fmean(lats), max(lats)))
    return rows


def histograms(results) -> dict[str, dict[str, dict[int, int]]]:
    """Counts of debris_visited per scenario and planner."""
    out: dict[str, dict[str, dict[int, int]]] = {}
    for (scenario, planner), group in _groups(results):
        counts = Counter(r.debris_visited for r in group)
        out.setdefault(scenario, {})[planner] = dict(sorted(counts.items()))
    return out


def format_summary_table(rows: list[SummaryRow]) -> str:
    lines = [f"# {STD_NOTE}", f"{'scenario':<14}{'planner':<24}{'n':>5}{'min':>7}{'max':>7}  avg ± std"]
    for r in rows:
        lines.append(f"{r.scenario:<14}{r.planner:<24}{r.n:>5}{r.min:>7.1f}{r.max:>7.1f}  {r.mean:.1f} ± {r.std:.1f}")
    return "\n".join(lines) + "\n"


def format_timing_table(rows: list[TimingRow]) -> str:
    lines = [f"{'scenario':<14}{'planner':<24}{'n':>5}{'wall mean s':>13}{'wall max s':>12}"
             f"{'decision mean s':>17}{'decision max s':>16}"]
    for r in rows:
        lines.append(f"{r.scenario:<14}{r.planner:<24}{r.n:>5}{r.mean_wall_time_s:>13.4f}{r.max_wall_time_s:>12.4f}"
                     f"{r.mean_decision_latency_s:>17.6f}{r.max_decision_latency_s:>16.6f}")
    return "\n".join(lines) + "\n"


# -- export -------------------------------------------------------------------

def results_to_csv(results, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in results:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in columns)])
    return buf.getvalue()


def write_csv(results, path) -> None:
    Path(path).write_text(results_to_csv(results))


def read_csv(path) -> list[CaseResult]:
    types = {f.name: f.type for f in dataclasses.fields(CaseResult)}
    casts = {"str": str, "int": int, "float": float}
    with open(path, newline="") as fh:
        return [CaseResult(**{k: casts[types[k]](v) for k, v in row.items()}) for row in csv.DictReader(fh)]


def deterministic_csv(results) -> str:
    """CSV text without the timing columns, for reproducibility comparisons."""
    return results_to_csv(results, tuple(c for c in CSV_COLUMNS if c not in TIMING_COLUMNS))


def write_json(results, path, summaries: list[SummaryRow] | None = None) -> None:
    results = list(results)
    doc = {
        "columns": list(CSV_COLUMNS),
        "std": STD_NOTE,
        "cases": [dataclasses.asdict(r) for r in results],
        "summary": [dataclasses.asdict(s) for s in (summaries if summaries is not None else
                                                    (summarize_all(results) if results else []))],
        "histograms": {s: {p: {str(k): v for k, v in h.items()} for p, h in by.items()}
                       for s, by in histograms(results).items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_json(path) -> list[CaseResult]:
    return [CaseResult(**case) for case in json.loads(Path(path).read_text())["cases"]]


def write_timing_json(rows: list[TimingRow], path) -> None:
    Path(path).write_text(json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n")
