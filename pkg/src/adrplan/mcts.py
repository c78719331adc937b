"""Plain UCT Monte Carlo tree search over the masked mission environment.

Rollouts are uniform over feasible actions, undiscounted, and cut off at a
fixed depth with no value bootstrap. The tree is rebuilt for every decision.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from . import env
from .env import MissionState


@dataclass(frozen=True)
class MctsConfig:
    simulations_per_step: int = 200
    c_uct: float = 1.5
    rollout_depth: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.simulations_per_step < 1:
            raise ValueError("simulations_per_step must be >= 1")
        if self.rollout_depth < 1:
            raise ValueError("rollout_depth must be >= 1")
        if self.c_uct < 0:
            raise ValueError("c_uct must be >= 0")


@dataclass(eq=False)
class SearchNode:
    """Tree node holding per-action edge statistics.

    ``visit_count`` starts at 1 for the node's own creation, so at all times
    ``visit_count == 1 + sum(edge_visits.values())``. ``reward`` is the
    immediate reward of the edge that led here (0 for the root).
    """

    state: MissionState
    reward: float = 0.0
    visit_count: int = 1
    children: dict[int, "SearchNode"] = field(default_factory=dict)
    edge_visits: dict[int, int] = field(default_factory=dict)
    edge_values: dict[int, float] = field(default_factory=dict)
    untried: list[int] = field(default_factory=list)
    terminal: bool = False

    @classmethod
    def from_state(cls, state: MissionState, reward: float = 0.0) -> "SearchNode":
        terminal, _ = env.is_terminal(state)
        untried = [] if terminal else [int(a) for a in state.mask.nonzero()[0]]
        return cls(state, reward=reward, untried=untried, terminal=terminal)

    def q(self, action: int) -> float:
        return self.edge_values.get(action, 0.0)

    def n(self, action: int) -> int:
        return self.edge_visits.get(action, 0)


def uct_score(q: float, n_sa: int, n_s: int, c: float) -> float:
    """q + c * sqrt(ln(n_s) / (1 + n_sa))."""
    return q + c * math.sqrt(math.log(n_s) / (1 + n_sa))


def select(root: SearchNode, c: float = 1.5) -> list[tuple[SearchNode, int]]:
    """Descend by UCT until a node with untried actions or a terminal node.

    Returns the traversed (node, action) edges; an empty list means the root
    itself is the leaf. Ties go to the lowest action index.
    """
    path = []
    node = root
    while not node.terminal and not node.untried and node.children:
        best_a, best = None, -math.inf
        for a in sorted(node.children):
            score = uct_score(node.q(a), node.n(a), node.visit_count, c)
            if score > best:
                best_a, best = a, score
        path.append((node, best_a))
        node = node.children[best_a]
    return path


def leaf_of(root: SearchNode, path: list[tuple[SearchNode, int]]) -> SearchNode:
    if not path:
        return root
    node, action = path[-1]
    return node.children[action]


def expand(node: SearchNode, rng: random.Random) -> tuple[int, SearchNode]:
    """Expand one uniformly chosen untried action; returns (action, child)."""
    if not node.untried:
        raise ValueError("node is fully expanded")
    action = node.untried.pop(rng.randrange(len(node.untried)))
    result = env.step(node.state, action)
    child = SearchNode.from_state(result.state, reward=result.reward)
    node.children[action] = child
    return action, child


def rollout(state: MissionState, depth: int, rng: random.Random) -> float:
    """Undiscounted return of a uniform-random masked playout of at most ``depth`` steps."""
    total = 0.0
    for _ in range(depth):
        if env.is_terminal(state)[0]:
            break
        valid = state.mask.nonzero()[0]
        result = env.step(state, int(valid[rng.randrange(len(valid))]))
        total += result.reward
        state = result.state
    return total


def backpropagate(path: list[tuple[SearchNode, int]], value: float) -> None:
    """Push a leaf return up the path, adding each edge's own reward on the way."""
    ret = value
    for node, action in reversed(path):
        child = node.children.get(action)
        if child is not None:
            ret += child.reward
        n = node.edge_visits.get(action, 0) + 1
        q = node.edge_values.get(action, 0.0)
        node.edge_visits[action] = n
        node.edge_values[action] = q + (ret - q) / n
        node.visit_count += 1


def search(state: MissionState, config: MctsConfig) -> SearchNode:
    """Build a search tree from ``state`` with the configured simulation budget."""
    if env.is_terminal(state)[0]:
        raise ValueError("no feasible action: state is terminal")
    rng = random.Random(config.seed)
    root = SearchNode.from_state(state)
    for _ in range(config.simulations_per_step):
        path = select(root, config.c_uct)
        leaf = leaf_of(root, path)
        if leaf.terminal:
            value = 0.0
        else:
            action, child = expand(leaf, rng)
            path.append((leaf, action))
            value = 0.0 if child.terminal else rollout(child.state, config.rollout_depth, rng)
        backpropagate(path, value)
    return root


def best_action(root: SearchNode) -> int:
    """Most visited root action, lowest index on ties."""
    return max(sorted(root.edge_visits), key=lambda a: (root.edge_visits[a], -a))


def plan(state: MissionState, config: MctsConfig = MctsConfig()) -> int:
    """Choose the next action for ``state`` by UCT search."""
    valid = state.mask.nonzero()[0]
    if len(valid) == 1 and not env.is_terminal(state)[0]:
        return int(valid[0])
    return best_action(search(state, config))
