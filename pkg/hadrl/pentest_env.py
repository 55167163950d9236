"""
Seedable penetration-testing environment over a ScenarioSpec.

Actions are flat integer ids into a catalog enumerated in a fixed order:
host-to-host types (type, source, target != source), then host-to-subnet
types (type, source, subnet), then on-host types (type, host).  Ids at or
beyond the catalog size (the decomposition dead zone) are invalid actions.

Observations are ``4 * hosts + subnets`` floats: the discovered, service
scanned, OS known and compromised bits of every host (one block per field),
then the reachable bit of every subnet.  Flags are not part of the
observation.
"""

import collections
import dataclasses
import logging

import numpy as np

from .action_types import Kind, Knowledge, Outcome, types_of_kind
from .errors import ContractError, InvalidArgumentError, ResourceError, UnreachableFlagError
from .scenario import load_scenario

logger = logging.getLogger(__name__)

ORACLE_STATE_BUDGET = 10 ** 6

CatalogEntry = collections.namedtuple('CatalogEntry', 'type source target')


def enumerate_catalog(scenario):
    """The flat action catalog of ``scenario`` as a list of CatalogEntry.
    ``target`` is None for on-host types."""
    p, q = scenario.hosts, scenario.subnets
    catalog = []
    for cls in types_of_kind(Kind.HOST_TO_HOST)[:scenario.m]:
        for src in range(p):
            catalog += [CatalogEntry(cls, src, tgt) for tgt in range(p) if tgt != src]
    for cls in types_of_kind(Kind.HOST_TO_SUBNET)[:scenario.n]:
        for src in range(p):
            catalog += [CatalogEntry(cls, src, subnet) for subnet in range(q)]
    for cls in types_of_kind(Kind.ON_HOST)[:scenario.o]:
        catalog += [CatalogEntry(cls, host, None) for host in range(p)]
    return catalog


def describe_entry(entry):
    target = '-' if entry.target is None else str(entry.target)
    return '{} {} {}'.format(entry.type.__name__, entry.source, target)


def _bits(mask, width):
    return [(mask >> i) & 1 for i in range(width)]


@dataclasses.dataclass
class EnvState:
    knowledge: Knowledge
    steps: int = 0
    terminal: bool = False


class PentestEnv:
    """One episode at a time over a scenario.  Owns its RNG; not shared
    between rollout loops."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.catalog = enumerate_catalog(scenario)
        if len(self.catalog) != scenario.total_actions:
            # enumerate_catalog and ScenarioSpec.total_actions disagree
            raise AssertionError('catalog size {} != {}'.format(
                len(self.catalog), scenario.total_actions))
        self._rng = np.random.default_rng()
        self.state = None

    @property
    def total_actions(self):
        return len(self.catalog)

    @property
    def observation_size(self):
        return self.scenario.observation_size

    def initial_knowledge(self):
        s = self.scenario
        foothold = 1 << s.foothold
        return Knowledge(discovered=foothold, compromised=foothold,
                         reachable=1 << s.subnet_of[s.foothold])

    def reset(self, seed=None):
        """Start an episode.  A seed reseeds the RNG; None keeps the stream."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = EnvState(self.initial_knowledge())
        return self.observation()

    def observation(self):
        k = self.state.knowledge
        p, q = self.scenario.hosts, self.scenario.subnets
        bits = (_bits(k.discovered, p) + _bits(k.service_scanned, p)
                + _bits(k.os_known, p) + _bits(k.compromised, p) + _bits(k.reachable, q))
        return np.array(bits, dtype=np.float64)

    def decode(self, action_id):
        """CatalogEntry for ``action_id``, or None inside the dead zone."""
        if action_id < 0:
            raise InvalidArgumentError('action ids are non-negative, got {}'.format(action_id))
        if action_id >= len(self.catalog):
            return None
        return self.catalog[action_id]

    def reward_for(self, outcome):
        r = self.scenario.rewards
        return {
            Outcome.INVALID: r.invalid,
            Outcome.FAILED: r.failed_exploit,
            Outcome.NEUTRAL: 0.0,
            Outcome.PIVOT: r.pivot,
            Outcome.FLAG: r.flag,
        }[outcome]

    def step(self, action_id):
        """Apply one action.  Returns ``(observation, reward, done, info)``."""
        if self.state is None:
            raise ContractError('reset() must be called before step()')
        if self.state.terminal:
            raise ContractError('episode is over; call reset()')
        action_id = int(action_id)
        entry = self.decode(action_id)
        k = self.state.knowledge
        if entry is None:
            outcome = Outcome.INVALID
        else:
            k, outcome = entry.type.apply(self.scenario, k, entry.source, entry.target,
                                          rng=self._rng)
        reward = self.reward_for(outcome)

        state = self.state
        state.knowledge = k
        state.steps += 1
        all_flags = k.captured == self.scenario.flag_mask
        state.terminal = all_flags or state.steps >= self.scenario.step_limit
        if outcome is Outcome.FLAG:
            logger.debug('flag captured on host %d at step %d', entry.target, state.steps)
        info = {'action': entry, 'outcome': outcome, 'steps': state.steps,
                'flags_captured': all_flags}
        return self.observation(), reward, state.terminal, info


def build_scenario(config):
    """Environment for a ScenarioSpec, scenario file path or preset name."""
    return PentestEnv(load_scenario(config))


def total_actions(env):
    return env.total_actions


def _project(k):
    # os_known and reachable never gate an action or change a reward
    return (k.discovered, k.service_scanned, k.compromised)


def oracle_optimal(env, budget=ORACLE_STATE_BUDGET):
    """Shortest action sequence capturing every flag with exploits forced to
    succeed, by breadth-first search over the deterministic transition graph.

    Returns ``(min_steps, max_return)``, where max_return is the best return
    over all shortest sequences.  Raises ResourceError past ``budget``
    abstract states and UnreachableFlagError when no sequence exists.
    """
    scenario = env.scenario
    useful = [e for e in env.catalog if e.type.affects_progress]
    start = env.initial_knowledge().replace(reachable=0)
    seen = {_project(start)}
    # knowledge -> best return reaching it in the current number of steps
    frontier = {_project(start): (start, 0.0)}
    depth = 0
    while frontier:
        depth += 1
        nxt = {}
        finished = []
        for k, ret in frontier.values():
            for entry in useful:
                k2, outcome = entry.type.apply(scenario, k, entry.source, entry.target)
                if outcome is Outcome.INVALID:
                    continue
                key2 = _project(k2)
                if key2 in seen:
                    continue
                ret2 = ret + env.reward_for(outcome)
                if k2.captured == scenario.flag_mask:
                    finished.append(ret2)
                elif key2 not in nxt or nxt[key2][1] < ret2:
                    nxt[key2] = (k2.replace(reachable=0), ret2)
        if finished:
            if depth > scenario.step_limit:
                logger.warning('optimal path (%d steps) exceeds the step limit %d',
                               depth, scenario.step_limit)
            return depth, round(max(finished), 10)
        seen.update(nxt)
        if len(seen) > budget:
            msg = 'oracle explored more than {} abstract states'
            raise ResourceError(msg.format(budget))
        frontier = nxt
    msg = 'no action sequence captures every flag in scenario {!r}'
    raise UnreachableFlagError(msg.format(scenario.name))
