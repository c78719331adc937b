"""Masked multi-debris rendezvous environment.

States are immutable: :func:`step` returns a fresh :class:`MissionState` and
never touches its input. Actions are integer indices, ``0..n_debris-1`` for a
rendezvous with that debris object and ``n_debris`` for a refuel trip to the
station.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import astro
from .astro import OrbitalElements, TransferPlan

DAY = 86400.0
ALTITUDE_BAND = (700.0, 800.0)  # km
INCLINATION_BAND = (94.0, 98.0)  # deg
RANDOMIZED_DV_RANGE = (1.0, 3.5)  # km/s
RANDOMIZED_DAYS_RANGE = (1.0, 7.0)

# Observation scales; budgets are expressed against the nominal mission so a
# policy can tell a 1 km/s tank from a 3 km/s one.
OBS_DV_SCALE = 3.0
OBS_TIME_SCALE = 7 * DAY


class MaskedActionError(ValueError):
    """Raised when stepping an action the feasibility mask rules out."""


def default_station_orbit() -> OrbitalElements:
    """Refueling station and chaser start: 700 km, 96 deg, circular."""
    return OrbitalElements(astro.R_EARTH + 700.0, 0.0, 96.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class MissionConfig:
    dv_max: float = 3.0  # km/s
    mission_duration: float = 7 * DAY  # s
    n_debris: int = 50
    station_orbit: OrbitalElements = field(default_factory=default_station_orbit)
    chaser_start: OrbitalElements = field(default_factory=default_station_orbit)
    refuel_service_time: float = 2 * 3600.0  # s
    reward_rendezvous: float = 1.0
    penalty_refuel: float = -0.5
    coelliptic_offset: float = astro.DEFAULT_COELLIPTIC_OFFSET  # km
    approach_fraction: float = astro.DEFAULT_APPROACH_FRACTION
    # debris RAAN is drawn from station.raan +/- raan_spread/2; 360 is the full circle
    raan_spread: float = 360.0

    def __post_init__(self):
        if not self.dv_max > 0:
            raise ValueError(f"dv_max must be positive, got {self.dv_max}")
        if not self.mission_duration > 0:
            raise ValueError(f"mission_duration must be positive, got {self.mission_duration}")
        if self.n_debris < 1:
            raise ValueError(f"n_debris must be at least 1, got {self.n_debris}")
        if not 0.0 <= self.raan_spread <= 360.0:
            raise ValueError(f"raan_spread must lie in [0, 360], got {self.raan_spread}")

    @property
    def n_actions(self) -> int:
        return self.n_debris + 1

    @property
    def mission_days(self) -> float:
        return self.mission_duration / DAY

    def with_budget(self, dv_max: float | None = None, mission_days: float | None = None) -> "MissionConfig":
        changes = {}
        if dv_max is not None:
            changes["dv_max"] = float(dv_max)
        if mission_days is not None:
            changes["mission_duration"] = float(mission_days) * DAY
        return dataclasses.replace(self, **changes)


def nominal_config(**overrides) -> MissionConfig:
    """Full-scale nominal mission: 50 debris, 3 km/s, 7 days."""
    return MissionConfig(**overrides)


def desk_config(**overrides) -> MissionConfig:
    """Desk-scale mission used by tests and the acceptance harness.

    Ten debris in a RAAN band around the station plane with a wider
    co-elliptic offset, so budgets and mission time both bind within a
    handful of transfers.
    """
    params = dict(n_debris=10, raan_spread=DESK_RAAN_SPREAD, coelliptic_offset=DESK_COELLIPTIC_OFFSET)
    params.update(overrides)
    return MissionConfig(**params)


DESK_RAAN_SPREAD = 5.0
DESK_COELLIPTIC_OFFSET = 80.0


@dataclass(frozen=True)
class Debris:
    id: int
    elements: OrbitalElements
    visited: bool = False


def generate_debris_field(seed: int, n: int, *, raan_center: float = 0.0, raan_spread: float = 360.0) -> tuple[Debris, ...]:
    """Sample ``n`` near-circular debris orbits, deterministic in ``seed``.

    Altitude is uniform in 700-800 km, inclination in 94-98 deg, eccentricity
    in [0, 0.01); argument of perigee and anomaly cover the full circle.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    rng = np.random.default_rng(seed)
    alt = rng.uniform(*ALTITUDE_BAND, size=n)
    inc = rng.uniform(*INCLINATION_BAND, size=n)
    ecc = rng.uniform(0.0, astro.MAX_ECC, size=n)
    if raan_spread >= 360.0:
        raan = rng.uniform(0.0, 360.0, size=n)
    else:
        raan = raan_center + rng.uniform(-raan_spread / 2, raan_spread / 2, size=n)
    argp = rng.uniform(0.0, 360.0, size=n)
    anomaly = rng.uniform(0.0, 360.0, size=n)
    return tuple(
        Debris(i, OrbitalElements(astro.R_EARTH + float(alt[i]), float(ecc[i]), float(inc[i]),
                                  float(raan[i]), float(argp[i]), float(anomaly[i])))
        for i in range(n)
    )


@dataclass(frozen=True)
class MissionState:
    chaser: OrbitalElements
    remaining_dv: float
    elapsed_time: float
    debris: tuple[Debris, ...]
    visited_count: int
    refuel_count: int
    at_station: bool
    config: MissionConfig

    @property
    def n_debris(self) -> int:
        return len(self.debris)

    @property
    def refuel_action(self) -> int:
        return len(self.debris)

    @cached_property
    def plans(self) -> tuple[TransferPlan | None, ...]:
        """Transfer plan for every action; ``None`` for visited debris."""
        out = [None if d.visited else _rendezvous_plan(self, d.elements) for d in self.debris]
        out.append(_refuel_plan(self))
        return tuple(out)

    @cached_property
    def mask(self) -> np.ndarray:
        mask = np.zeros(len(self.debris) + 1, dtype=bool)
        budget_t = self.config.mission_duration - self.elapsed_time
        for i, plan in enumerate(self.plans):
            if plan is None:
                continue
            if i == len(self.debris) and self.visited_count < 1:
                continue
            mask[i] = plan.total_dv <= self.remaining_dv and plan.total_time <= budget_t
        mask.flags.writeable = False
        return mask


@dataclass(frozen=True)
class StepResult:
    state: MissionState
    reward: float
    terminated: bool
    reason: str
    dv_spent: float
    time_spent: float


def _rendezvous_plan(state: MissionState, target: OrbitalElements) -> TransferPlan:
    cfg = state.config
    return astro.coelliptic_rendezvous_plan(
        state.chaser, target, state.elapsed_time,
        offset=cfg.coelliptic_offset, approach_fraction=cfg.approach_fraction,
    )


def _refuel_plan(state: MissionState) -> TransferPlan:
    plan = _rendezvous_plan(state, state.config.station_orbit)
    return plan.extended("refuel-service", 0.0, state.config.refuel_service_time)


def reset(config: MissionConfig, seed: int, debris: tuple[Debris, ...] | None = None) -> MissionState:
    """Fresh mission: chaser docked at the station, full tank, new debris field.

    ``debris`` overrides the seeded field (e.g. one loaded from a file).
    """
    if debris is None:
        debris = generate_debris_field(seed, config.n_debris, raan_center=config.station_orbit.raan,
                                       raan_spread=config.raan_spread)
    else:
        debris = tuple(dataclasses.replace(d, visited=False) for d in debris)
        if len(debris) != config.n_debris:
            config = dataclasses.replace(config, n_debris=len(debris))
    return MissionState(
        chaser=config.chaser_start,
        remaining_dv=config.dv_max,
        elapsed_time=0.0,
        debris=debris,
        visited_count=0,
        refuel_count=0,
        at_station=True,
        config=config,
    )


def _check_action(state: MissionState, action: int) -> int:
    action = int(action)
    if not 0 <= action <= state.n_debris:
        raise IndexError(f"action {action} outside [0, {state.n_debris}]")
    return action


def action_cost(state: MissionState, action: int) -> TransferPlan:
    """Deterministic transfer plan for ``action``; visited debris are priced too."""
    action = _check_action(state, action)
    if action == state.refuel_action:
        return state.plans[action]
    plan = state.plans[action]
    return plan if plan is not None else _rendezvous_plan(state, state.debris[action].elements)


def valid_action_mask(state: MissionState) -> np.ndarray:
    """Boolean feasibility mask of length ``n_debris + 1`` (refuel last)."""
    return state.mask.copy()


def step(state: MissionState, action: int) -> StepResult:
    """Apply a feasible action and return the successor state."""
    action = _check_action(state, action)
    if not state.mask[action]:
        raise MaskedActionError(f"masked action {action}")
    plan = state.plans[action]
    dv, dt = plan.total_dv, plan.total_time
    cfg = state.config
    elapsed = min(state.elapsed_time + dt, cfg.mission_duration)
    if action == state.refuel_action:
        new = MissionState(
            chaser=cfg.station_orbit,
            remaining_dv=cfg.dv_max,
            elapsed_time=elapsed,
            debris=state.debris,
            visited_count=state.visited_count,
            refuel_count=state.refuel_count + 1,
            at_station=True,
            config=cfg,
        )
        reward = cfg.penalty_refuel
    else:
        target = state.debris[action]
        debris = state.debris[:action] + (dataclasses.replace(target, visited=True),) + state.debris[action + 1:]
        new = MissionState(
            chaser=target.elements,
            remaining_dv=max(state.remaining_dv - dv, 0.0),
            elapsed_time=elapsed,
            debris=debris,
            visited_count=state.visited_count + 1,
            refuel_count=state.refuel_count,
            at_station=False,
            config=cfg,
        )
        reward = cfg.reward_rendezvous
    terminated, reason = is_terminal(new)
    return StepResult(new, reward, terminated, reason, dv, dt)


def is_terminal(state: MissionState) -> tuple[bool, str]:
    """Termination flag and the first matching reason."""
    if state.visited_count >= state.n_debris:
        return True, "all_visited"
    if state.elapsed_time >= state.config.mission_duration:
        return True, "time_exhausted"
    if state.remaining_dv <= 0.0:
        return True, "fuel_exhausted"
    if not state.mask.any():
        return True, "no_feasible_action"
    return False, "none"


def clone_state(state: MissionState) -> MissionState:
    """Independent copy of ``state``.

    Every component is immutable, so a field-wise copy is already deep; the
    cached plans are carried over to avoid recomputing them.
    """
    copy = dataclasses.replace(state)
    for name in ("plans", "mask"):
        if name in state.__dict__:
            copy.__dict__[name] = state.__dict__[name]
    return copy


def observation_size(n_debris: int) -> int:
    return 9 + 5 * n_debris


def observe(state: MissionState) -> np.ndarray:
    """Flat float vector of length ``9 + 5 * n_debris``.

    Layout: six normalized chaser elements, remaining dv and remaining time
    (against the nominal 3 km/s / 7 day mission), the docked flag, then per
    debris (d_sma/100 km, d_inc/4 deg, d_raan/360 deg, phase gap/360 deg,
    visited).
    """
    c = state.chaser
    t = state.elapsed_time
    obs = np.empty(observation_size(state.n_debris))
    obs[0] = (c.altitude - 750.0) / 50.0
    obs[1] = c.ecc / astro.MAX_ECC
    obs[2] = (c.inc - 96.0) / 2.0
    obs[3] = c.raan / 360.0
    obs[4] = c.argp / 360.0
    obs[5] = astro.true_anomaly_at(c, t) / 360.0
    obs[6] = state.remaining_dv / OBS_DV_SCALE
    obs[7] = (state.config.mission_duration - t) / OBS_TIME_SCALE
    obs[8] = float(state.at_station)
    block = obs[9:].reshape(-1, 5)
    for i, d in enumerate(state.debris):
        e = d.elements
        block[i, 0] = (e.sma - c.sma) / 100.0
        block[i, 1] = (e.inc - c.inc) / 4.0
        block[i, 2] = ((e.raan - c.raan + 180.0) % 360.0 - 180.0) / 360.0
        block[i, 3] = astro.phase_gap(c, e, t) / 360.0
        block[i, 4] = float(d.visited)
    return obs


def randomize_mission_config(rng: np.random.Generator, base: MissionConfig | None = None) -> MissionConfig:
    """Domain-randomized budgets: dv_max ~ U[1, 3.5] km/s, duration ~ U[1, 7] days."""
    base = base if base is not None else nominal_config()
    dv_max = rng.uniform(*RANDOMIZED_DV_RANGE)
    days = rng.uniform(*RANDOMIZED_DAYS_RANGE)
    return base.with_budget(dv_max=dv_max, mission_days=days)


class DebrisEnv:
    """Stateful wrapper with a reset/step interface for training loops."""

    def __init__(self, config: MissionConfig):
        self.base_config = config
        self.state: MissionState | None = None

    @property
    def n_actions(self) -> int:
        return self.base_config.n_actions

    @property
    def obs_size(self) -> int:
        return observation_size(self.base_config.n_debris)

    def reset(self, seed: int, config: MissionConfig | None = None) -> np.ndarray:
        self.state = reset(config or self.base_config, seed)
        return observe(self.state)

    def valid_action_mask(self) -> np.ndarray:
        return valid_action_mask(self.state)

    def step(self, action: int) -> tuple[np.ndarray, float, bool, dict]:
        result = step(self.state, action)
        self.state = result.state
        info = {"reason": result.reason, "dv_spent": result.dv_spent, "time_spent": result.time_spent}
        return observe(result.state), result.reward, result.terminated, info


# -- file formats -----------------------------------------------------------

def debris_to_records(debris) -> list[dict]:
    return [{"id": d.id, **_elements_record(d.elements)} for d in debris]


def save_debris(debris, path) -> None:
    Path(path).write_text(json.dumps(debris_to_records(debris), indent=1) + "\n")


def load_debris(path) -> tuple[Debris, ...]:
    records = json.loads(Path(path).read_text())
    if not isinstance(records, list):
        raise ValueError(f"{path}: expected a JSON array of debris records")
    return tuple(Debris(int(r["id"]), _elements_from_record(r)) for r in records)


def _elements_record(e: OrbitalElements) -> dict:
    return {"sma_km": e.sma, "ecc": e.ecc, "inc_deg": e.inc, "raan_deg": e.raan,
            "argp_deg": e.argp, "anomaly_deg": e.anomaly}


def _elements_from_record(r: dict) -> OrbitalElements:
    return OrbitalElements(r["sma_km"], r["ecc"], r["inc_deg"], r["raan_deg"], r["argp_deg"], r["anomaly_deg"])


def state_to_dict(state: MissionState) -> dict:
    """JSON-ready snapshot of a mission state (the config travels separately)."""
    debris = debris_to_records(state.debris)
    for record, d in zip(debris, state.debris):
        record["visited"] = d.visited
    return {"chaser": _elements_record(state.chaser), "remaining_dv_kms": state.remaining_dv,
            "elapsed_time_s": state.elapsed_time, "refuel_count": state.refuel_count,
            "at_station": state.at_station, "debris": debris}


def state_from_dict(doc, config: MissionConfig) -> MissionState:
    """Rebuild a state from ``state_to_dict`` output or a bare debris array.

    A bare array gives a fresh mission over those debris.
    """
    if isinstance(doc, list):
        doc = {"debris": doc}
    debris = tuple(Debris(int(r["id"]), _elements_from_record(r), bool(r.get("visited", False)))
                   for r in doc["debris"])
    config = dataclasses.replace(config, n_debris=len(debris))
    fresh = reset(config, 0, debris)
    state = dataclasses.replace(
        fresh,
        chaser=_elements_from_record(doc["chaser"]) if "chaser" in doc else fresh.chaser,
        remaining_dv=float(doc.get("remaining_dv_kms", config.dv_max)),
        elapsed_time=float(doc.get("elapsed_time_s", 0.0)),
        debris=debris,
        visited_count=sum(d.visited for d in debris),
        refuel_count=int(doc.get("refuel_count", 0)),
        at_station=bool(doc.get("at_station", True)),
    )
    if not 0.0 <= state.remaining_dv <= config.dv_max:
        raise ValueError(f"remaining_dv_kms {state.remaining_dv} outside [0, {config.dv_max}]")
    if not 0.0 <= state.elapsed_time <= config.mission_duration:
        raise ValueError(f"elapsed_time_s {state.elapsed_time} outside the mission duration")
    return state


SCENARIO_KEYS = ("dv_max_kms", "mission_days", "n_debris", "refuel_service_time_s", "seed")


def parse_scenario_text(text: str, extra_keys: dict | None = None) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment. Unknown keys are rejected.

    Args:
        text: File contents.
        extra_keys: Optional mapping of additional accepted keys to the
            callable that converts their values.
    """
    extra_keys = extra_keys or {}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        if key in extra_keys:
            values[key] = extra_keys[key](value)
        elif key in SCENARIO_KEYS:
            values[key] = int(value) if key in ("n_debris", "seed") else float(value)
        else:
            raise ValueError(f"unknown config key {key!r} (line {lineno})")
    return values


def load_scenario_file(path, extra_keys: dict | None = None) -> dict:
    return parse_scenario_text(Path(path).read_text(), extra_keys)


def apply_scenario_values(config: MissionConfig, values: dict) -> MissionConfig:
    changes = {}
    if "dv_max_kms" in values:
        changes["dv_max"] = float(values["dv_max_kms"])
    if "mission_days" in values:
        changes["mission_duration"] = float(values["mission_days"]) * DAY
    if "n_debris" in values:
        changes["n_debris"] = int(values["n_debris"])
    if "refuel_service_time_s" in values:
        changes["refuel_service_time"] = float(values["refuel_service_time_s"])
    return dataclasses.replace(config, **changes)


def format_scenario_text(config: MissionConfig, seed: int | None = None) -> str:
    lines = [
        f"dv_max_kms = {config.dv_max!r}",
        f"mission_days = {config.mission_days!r}",
        f"n_debris = {config.n_debris}",
        f"refuel_service_time_s = {config.refuel_service_time!r}",
    ]
    if seed is not None:
        lines.append(f"seed = {seed}")
    return "\n".join(lines) + "\n"


def episode_return(visits: int, refuels: int, config: MissionConfig) -> float:
    return visits * config.reward_rendezvous + refuels * config.penalty_refuel

