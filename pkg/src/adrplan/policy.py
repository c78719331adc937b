"""Masked PPO from scratch: numpy MLP, analytic gradients, GAE, Adam.

The network is a shared two-layer tanh trunk with a policy head producing
one logit per action and a scalar value head. Infeasible actions are pushed
down by a large additive offset before normalization, so their probability
is exactly zero and they contribute no gradient.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import env as envmod

MASK_OFFSET = 1e9
CHECKPOINT_FORMAT = "adrplan-policy"
CHECKPOINT_VERSION = 1
LAYER_NAMES = ("w1", "b1", "w2", "b2", "wp", "bp", "wv", "bv")
LOG_COLUMNS = ("update", "steps", "mean_return", "mean_length", "policy_loss", "value_loss", "entropy", "seconds")


class EmptyMaskError(ValueError):
    """Raised when a mask leaves no valid action."""


@dataclass(frozen=True)
class PpoConfig:
    learning_rate: float = 3e-5
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    batch_size: int = 2048
    minibatch_size: int = 256
    epochs_per_update: int = 10
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    hidden: int = 256
    total_timesteps: int = 1_000_000
    domain_randomized: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.batch_size < 1 or self.minibatch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.total_timesteps < 0:
            raise ValueError("total_timesteps must be >= 0")


FULL_NOMINAL = PpoConfig(batch_size=2048, total_timesteps=1_000_000)
FULL_RANDOMIZED = dataclasses.replace(FULL_NOMINAL, total_timesteps=5_500_000, domain_randomized=True)
# alternative full-scale learning rate; both values are kept as presets
LOW_LEARNING_RATE = 5e-6
DESK_NOMINAL = PpoConfig(learning_rate=3e-4, hidden=64, total_timesteps=100_000)
DESK_RANDOMIZED = dataclasses.replace(DESK_NOMINAL, domain_randomized=True)


@dataclass
class PolicyParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wp: np.ndarray
    bp: np.ndarray
    wv: np.ndarray
    bv: np.ndarray

    @classmethod
    def init(cls, obs_size: int, n_actions: int, hidden: int = 256, rng: np.random.Generator | None = None) -> "PolicyParams":
        """Orthogonal init, gain sqrt(2) on the trunk, 0.01 on the policy head, 1 on the value head."""
        rng = rng if rng is not None else np.random.default_rng(0)

        def ortho(rows, cols, gain):
            a = rng.standard_normal((max(rows, cols), min(rows, cols)))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            q = q if rows >= cols else q.T
            return gain * q[:rows, :cols]

        return cls(
            w1=ortho(obs_size, hidden, math.sqrt(2)), b1=np.zeros(hidden),
            w2=ortho(hidden, hidden, math.sqrt(2)), b2=np.zeros(hidden),
            wp=ortho(hidden, n_actions, 0.01), bp=np.zeros(n_actions),
            wv=ortho(hidden, 1, 1.0)[:, 0], bv=np.zeros(()),
        )

    @classmethod
    def zeros(cls, obs_size: int, n_actions: int, hidden: int) -> "PolicyParams":
        return cls(np.zeros((obs_size, hidden)), np.zeros(hidden), np.zeros((hidden, hidden)), np.zeros(hidden),
                   np.zeros((hidden, n_actions)), np.zeros(n_actions), np.zeros(hidden), np.zeros(()))

    @property
    def obs_size(self) -> int:
        return self.w1.shape[0]

    @property
    def n_actions(self) -> int:
        return self.wp.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LAYER_NAMES}

    def copy(self) -> "PolicyParams":
        return PolicyParams(**{k: v.copy() for k, v in self.arrays().items()})

    def validate(self) -> None:
        obs, hid, act = self.obs_size, self.hidden, self.n_actions
        expected = {"w1": (obs, hid), "b1": (hid,), "w2": (hid, hid), "b2": (hid,),
                    "wp": (hid, act), "bp": (act,), "wv": (hid,), "bv": ()}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"layer {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layer {name} has non-finite entries")


def _trunk(params: PolicyParams, obs: np.ndarray):
    h1 = np.tanh(obs @ params.w1 + params.b1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    return h1, h2


def forward(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and value for one observation or a batch of them."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != params.obs_size:
        raise ValueError(f"observation length {obs.shape[-1]} does not match network input {params.obs_size}")
    _, h2 = _trunk(params, obs)
    return h2 @ params.wp + params.bp, h2 @ params.wv + params.bv


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities restricted to ``mask``; masked entries get probability 0."""
    logits = np.asarray(logits, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise EmptyMaskError("empty mask: no valid action")
    z = logits - MASK_OFFSET * ~mask
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_action(log_probs: np.ndarray, rng: np.random.Generator | None = None,
                  deterministic: bool = False) -> tuple[int, float]:
    """Draw an action from a masked distribution, or take its argmax (lowest index on ties)."""
    if deterministic:
        a = int(np.argmax(log_probs))
        return a, float(log_probs[a])
    probs = np.exp(log_probs)
    cdf = np.cumsum(probs)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if a >= len(probs) or probs[a] == 0.0:
        a = int(np.flatnonzero(probs)[-1])
    return a, float(log_probs[a])


def act(params: PolicyParams, obs: np.ndarray, mask: np.ndarray, deterministic: bool = True,
        rng: np.random.Generator | None = None) -> int:
    logits, _ = forward(params, obs)
    return sample_action(masked_log_softmax(logits, mask), rng, deterministic)[0]


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Generalized advantage estimates and return targets.

    ``dones[t]`` marks that step t ended its episode; ``last_value`` bootstraps
    the step after the final one when that step did not end an episode.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = len(rewards)
    advantages = np.zeros(n)
    next_adv = 0.0
    next_value = last_value
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        advantages[t] = next_adv
        next_value = values[t]
    return advantages, advantages + values


def clipped_surrogate_loss(ratio, advantage, eps: float):
    """Per-sample -min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    return -np.minimum(ratio * advantage, np.clip(ratio, 1 - eps, 1 + eps) * advantage)


@dataclass
class Batch:
    obs: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def take(self, idx) -> "Batch":
        return Batch(*(getattr(self, f.name)[idx] for f in dataclasses.fields(self)))


def loss_and_grad(params: PolicyParams, batch: Batch, config: PpoConfig):
    """Total PPO loss on ``batch`` and its analytic gradient.

    Returns (loss, grads, stats) where grads is a PolicyParams of the same
    shapes and stats holds the three loss components.
    """
    n = len(batch.actions)
    rows = np.arange(n)
    h1, h2 = _trunk(params, batch.obs)
    logits = h2 @ params.wp + params.bp
    values = h2 @ params.wv + params.bv
    logp = masked_log_softmax(logits, batch.masks)
    probs = np.exp(logp)

    logp_a = logp[rows, batch.actions]
    ratio = np.exp(logp_a - batch.old_log_probs)
    adv = batch.advantages
    eps = config.clip_epsilon
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * adv
    policy_loss = float(np.mean(-np.minimum(unclipped, clipped)))
    entropy_each = -np.sum(np.where(batch.masks, probs * logp, 0.0), axis=1)
    entropy = float(np.mean(entropy_each))
    value_err = values - batch.returns
    value_loss = float(np.mean(value_err**2))
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite loss (policy={policy_loss}, value={value_loss}, entropy={entropy})")

    # d loss / d logp(a_t): only samples where the unclipped term is the minimum carry gradient
    active = unclipped <= clipped
    g_logp = np.where(active, -ratio * adv, 0.0) / n
    d_logits = -g_logp[:, None] * probs
    d_logits[rows, batch.actions] += g_logp
    # entropy: dH/dz_j = -p_j (log p_j + H)
    safe_logp = np.where(batch.masks, logp, 0.0)
    d_logits += (config.entropy_coef / n) * probs * (safe_logp + entropy_each[:, None])
    d_values = (2.0 * config.value_coef / n) * value_err

    d_h2 = d_logits @ params.wp.T + np.outer(d_values, params.wv)
    d_z2 = d_h2 * (1.0 - h2**2)
    d_h1 = d_z2 @ params.w2.T
    d_z1 = d_h1 * (1.0 - h1**2)
    grads = PolicyParams(
        w1=batch.obs.T @ d_z1, b1=d_z1.sum(axis=0),
        w2=h1.T @ d_z2, b2=d_z2.sum(axis=0),
        wp=h2.T @ d_logits, bp=d_logits.sum(axis=0),
        wv=h2.T @ d_values, bv=np.asarray(d_values.sum()),
    )
    stats = {"policy_loss": policy_loss, "value_loss": value_loss, "entropy": entropy}
    return loss, grads, stats


def total_loss(params: PolicyParams, batch: Batch, config: PpoConfig) -> float:
    return loss_and_grad(params, batch, config)[0]


class Adam:
    def __init__(self, params: PolicyParams, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: PolicyParams, grads: PolicyParams) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for name, g in grads.arrays().items():
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            getattr(params, name)[...] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _clip_grads(grads: PolicyParams, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays().values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for name, g in grads.arrays().items():
            setattr(grads, name, g * scale)
    return norm


@dataclass
class RolloutBuffer:
    obs: list
    masks: list
    actions: list
    log_probs: list
    rewards: list
    values: list
    dones: list
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @classmethod
    def empty(cls) -> "RolloutBuffer":
        return cls([], [], [], [], [], [], [])

    def __len__(self) -> int:
        return len(self.actions)

    def add(self, obs, mask, action, log_prob, reward, value, done) -> None:
        self.obs.append(obs)
        self.masks.append(mask)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)

    def finish(self, gamma: float, lam: float, last_value: float) -> None:
        self.advantages, self.returns = compute_gae(self.rewards, self.values, self.dones, gamma, lam, last_value)

    def to_batch(self, normalize: bool = True) -> Batch:
        if self.advantages is None:
            raise ValueError("call finish() before building a batch")
        adv = self.advantages
        if normalize and len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        return Batch(np.asarray(self.obs), np.asarray(self.masks, dtype=bool), np.asarray(self.actions),
                     np.asarray(self.log_probs), adv, np.asarray(self.returns))


def update(params: PolicyParams, buffer: RolloutBuffer, config: PpoConfig, optimizer: Adam,
           rng: np.random.Generator) -> dict:
    """Several epochs of minibatch Adam steps on the clipped PPO objective; mutates ``params``."""
    batch = buffer.to_batch()
    n = len(batch.actions)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    count = 0
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            mb = batch.take(order[start:start + config.minibatch_size])
            _, grads, stats = loss_and_grad(params, mb, config)
            _clip_grads(grads, config.max_grad_norm)
            optimizer.step(params, grads)
            for k in sums:
                sums[k] += stats[k]
            count += 1
    return {k: v / max(count, 1) for k, v in sums.items()}


def train(env_factory: Callable[[], "envmod.DebrisEnv"], config: PpoConfig,
          log: Callable[[dict], None] | None = None) -> tuple[PolicyParams, list[dict]]:
    """Collect on-policy batches and run PPO updates until ``total_timesteps``.

    With ``domain_randomized`` every episode draws fresh budgets around the
    environment's base config. Deterministic given ``config.seed``.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(4)
    init_rng, episode_rng, action_rng, update_rng = (np.random.default_rng(s) for s in seeds)
    environment = env_factory()
    params = PolicyParams.init(environment.obs_size, environment.n_actions, config.hidden, init_rng)
    optimizer = Adam(params, config.learning_rate)
    report: list[dict] = []

    def new_episode():
        # missions that start with nothing feasible carry no learning signal
        for _ in range(1000):
            cfg = None
            if config.domain_randomized:
                cfg = envmod.randomize_mission_config(episode_rng, environment.base_config)
            obs = environment.reset(int(episode_rng.integers(2**31)), cfg)
            if not envmod.is_terminal(environment.state)[0]:
                return obs
        raise RuntimeError("could not draw a mission with any feasible action")

    obs = new_episode() if config.total_timesteps > 0 else None
    ep_return, ep_len = 0.0, 0
    steps = 0
    update_idx = 0
    while steps < config.total_timesteps:
        t0 = time.perf_counter()
        buffer = RolloutBuffer.empty()
        finished_returns, finished_lengths = [], []
        n_collect = min(config.batch_size, config.total_timesteps - steps)
        for _ in range(n_collect):
            mask = environment.valid_action_mask()
            logits, value = forward(params, obs)
            action, logp = sample_action(masked_log_softmax(logits, mask), action_rng)
            next_obs, reward, done, _ = environment.step(action)
            buffer.add(obs, mask, action, logp, reward, float(value), done)
            ep_return += reward
            ep_len += 1
            if done:
                finished_returns.append(ep_return)
                finished_lengths.append(ep_len)
                ep_return, ep_len = 0.0, 0
                obs = new_episode()
            else:
                obs = next_obs
        steps += n_collect
        last_value = 0.0 if buffer.dones[-1] else float(forward(params, obs)[1])
        buffer.finish(config.gamma, config.gae_lambda, last_value)
        stats = update(params, buffer, config, optimizer, update_rng)
        update_idx += 1
        row = {
            "update": update_idx,
            "steps": steps,
            "mean_return": float(np.mean(finished_returns)) if finished_returns else float("nan"),
            "mean_length": float(np.mean(finished_lengths)) if finished_lengths else float("nan"),
            **stats,
            "seconds": time.perf_counter() - t0,
        }
        report.append(row)
        if log is not None:
            log(row)
    return params, report


def evaluate_policy(params: PolicyParams, config: envmod.MissionConfig, seeds, deterministic: bool = True) -> list[float]:
    """Episode returns of the greedy policy on freshly seeded missions."""
    returns = []
    for seed in seeds:
        state = envmod.reset(config, int(seed))
        total = 0.0
        while not envmod.is_terminal(state)[0]:
            a = act(params, envmod.observe(state), state.mask, deterministic)
            result = envmod.step(state, a)
            total += result.reward
            state = result.state
        returns.append(total)
    return returns


# -- persistence ------------------------------------------------------------

def save_checkpoint(params: PolicyParams, config: PpoConfig, path, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "obs_size": params.obs_size,
        "n_actions": params.n_actions,
        "hidden": params.hidden,
        "config": dataclasses.asdict(config),
        "layers": [
            {"name": name, "shape": list(arr.shape), "data": np.ravel(arr).tolist()}
            for name, arr in params.arrays().items()
        ],
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path, obs_size: int | None = None, n_actions: int | None = None) -> tuple[PolicyParams, PpoConfig]:
    """Read a checkpoint, rejecting unknown formats and shape mismatches."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a policy checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    layers = {}
    for layer in doc["layers"]:
        shape = tuple(layer["shape"])
        data = np.asarray(layer["data"], dtype=float)
        if data.size != math.prod(shape):
            raise ValueError(f"{path}: layer {layer['name']} holds {data.size} values for shape {shape}")
        layers[layer["name"]] = data.reshape(shape)
    missing = set(LAYER_NAMES) - set(layers)
    if missing:
        raise ValueError(f"{path}: missing layers {sorted(missing)}")
    params = PolicyParams(**{name: layers[name] for name in LAYER_NAMES})
    params.validate()
    if obs_size is not None and params.obs_size != obs_size:
        raise ValueError(f"{path}: checkpoint expects observations of length {params.obs_size}, got {obs_size}")
    if n_actions is not None and params.n_actions != n_actions:
        raise ValueError(f"{path}: checkpoint has {params.n_actions} actions, environment has {n_actions}")
    return params, PpoConfig(**doc["config"])


def write_training_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in LOG_COLUMNS})
