"""Small fixed missions plus exhaustive oracles over their action sequences."""
import itertools
from functools import lru_cache

import numpy as np

from adrplan import env

# first field seed whose greedy-by-dv sequence is optimal at 3 km/s; 14 days
# exceeds the slowest ordering of its four debris (about 11.6 days), so every
# ordering fits both budgets without refuelling
TOY_FIELD_SEED = 1
TOY_DV = 3.0
TOY_DAYS = 14.0


def toy_state(n_debris=4, dv=TOY_DV, days=TOY_DAYS, seed=TOY_FIELD_SEED):
    cfg = env.desk_config(n_debris=n_debris).with_budget(dv, days)
    return env.reset(cfg, seed)


def every_ordering_fits(state) -> bool:
    """True when all debris orderings are feasible back to back without refuelling."""
    for order in itertools.permutations(range(state.n_debris)):
        s = state
        for k in order:
            if not s.mask[k]:
                return False
            s = env.step(s, k).state
    return True


def _children(state):
    for a in np.flatnonzero(env.valid_action_mask(state)):
        yield env.step(state, int(a))


def exhaustive_best_visits(state):
    """Largest visit count over every legal action sequence (refuels included)."""
    @lru_cache(maxsize=None)
    def best(s):
        if env.is_terminal(s)[0]:
            return s.visited_count
        return max(best(r.state) for r in _children(s))
    return best(state)


def expected_rollout_return(state, depth):
    """Exact expectation of a depth-limited uniform-random masked rollout."""
    if depth == 0 or env.is_terminal(state)[0]:
        return 0.0
    results = list(_children(state))
    return sum(r.reward + expected_rollout_return(r.state, depth - 1) for r in results) / len(results)


def greedy_by_dv_visits(state):
    """Visits reached by always taking the cheapest feasible rendezvous."""
    while not env.is_terminal(state)[0]:
        mask = env.valid_action_mask(state)
        options = [(env.action_cost(state, k).total_dv, k) for k in np.flatnonzero(mask[:-1])]
        if not options:
            break
        state = env.step(state, min(options)[1]).state
    return state.visited_count
