"""
HA-DRL agent groups: one dueling DQN learner per decomposition level, all
trained on the same reward from one shared replay buffer.

Every agent picks a primitive digit for its level; the digits are composed
into the flat action executed by the environment.  A transition stores both,
and agent i regresses Q(s, a_i) using its own digit of the stored action.
The single-agent baseline is a group with a one-level plan.
"""

import collections
import configparser
import functools
import logging
import multiprocessing.pool
import os

import numpy as np

from . import nn_core
from .action_algebra import DecompositionPlan, compose, single_level_plan
from .errors import BufferNotReadyError, CheckpointError, InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.99
DEFAULT_SYNC_PERIOD = 1000
DEFAULT_BUFFER_CAPACITY = 100000
DEFAULT_BATCH_SIZE = 64

MANIFEST_NAME = 'manifest.ini'

Transition = collections.namedtuple(
    'Transition',
    'state primitive_actions composed_action reward next_state terminal',
)

# column arrays of a sampled minibatch; primitives is (batch, levels)
Batch = collections.namedtuple(
    'Batch',
    'states primitives actions rewards next_states terminals',
)


class Agent:
    """The learner for one level of the decomposition."""

    def __init__(self, index, net, lr=nn_core.DEFAULT_LR, optimizer='adam',
                 sync_period=DEFAULT_SYNC_PERIOD, target=None):
        self.index = index
        self.net = net
        self.target = nn_core.make_target(net) if target is None else target
        if not self.net.shape_matches(self.target):
            raise InvalidArgumentError('online and target networks differ in shape')
        self.optimizer = nn_core.OptimizerState(net, mode=optimizer)
        self.lr = lr
        self.sync_period = sync_period
        self.updates = 0

    @property
    def level(self):
        """1-based level in the hierarchy."""
        return self.index + 1

    @property
    def action_count(self):
        return self.net.action_count

    def __repr__(self):
        return 'Agent(level={}, actions={}, updates={})'.format(
            self.level, self.action_count, self.updates)


def select_primitive(agent, state, epsilon, rng):
    """Epsilon-greedy primitive action; greedy ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidArgumentError('epsilon must lie in [0, 1], got {}'.format(epsilon))
    if rng.random() < epsilon:
        return int(rng.integers(agent.action_count))
    return int(np.argmax(nn_core.forward(agent.net, state)))


class AgentGroup:
    """Agents for levels 1..L of ``plan`` plus the shared learning settings.

    With ``parallel`` set, per-step updates of the L agents run on a thread
    pool; each update touches only its own agent, so the results do not
    depend on scheduling.
    """

    def __init__(self, plan, agents, gamma=DEFAULT_GAMMA, double_dqn=False, parallel=False):
        if len(agents) != plan.levels:
            msg = 'plan has {} levels but {} agents were given'
            raise InvalidArgumentError(msg.format(plan.levels, len(agents)))
        for agent, radix in zip(agents, plan.radices):
            if agent.action_count != radix:
                msg = 'agent at level {} has {} actions, plan radix is {}'
                raise InvalidArgumentError(msg.format(agent.level, agent.action_count, radix))
        if not 0.0 <= gamma <= 1.0:
            raise InvalidArgumentError('gamma must lie in [0, 1]')
        self.plan = plan
        self.agents = list(agents)
        self.gamma = gamma
        self.double_dqn = double_dqn
        self.epsilon = 1.0
        self.parallel = parallel
        self._pool = None

    @property
    def levels(self):
        return self.plan.levels

    @property
    def pool(self):
        if self._pool is None:
            self._pool = multiprocessing.pool.ThreadPool(self.levels)
        return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def update(self, batch):
        """One update per agent on the shared batch; returns the losses."""
        step = functools.partial(update, batch=batch, gamma=self.gamma,
                                 double_dqn=self.double_dqn)
        if self.parallel and self.levels > 1:
            return self.pool.map(step, self.agents)
        return [step(agent) for agent in self.agents]

    def __repr__(self):
        return 'AgentGroup(radices={}, gamma={})'.format(self.plan.radices, self.gamma)


def select_joint(group, state, epsilon, rng):
    """Query every level in order and compose the joint action.

    ``rng`` is either one Generator shared by all levels, or a sequence with a
    Generator per level.  Returns ``(primitives, composed_action)``.
    """
    if isinstance(rng, (list, tuple)):
        rngs = rng
    else:
        rngs = [rng] * group.levels
    primitives = tuple(select_primitive(agent, state, epsilon, r)
                       for agent, r in zip(group.agents, rngs))
    return primitives, compose(group.plan, primitives)


class ReplayBuffer:
    """Bounded FIFO ring of transitions shared by every agent of a group."""

    def __init__(self, capacity, plan):
        if capacity < 1:
            raise InvalidArgumentError('capacity must be >= 1')
        self.capacity = capacity
        self.plan = plan
        self.cursor = 0
        self.size = 0
        self._states = None

    def __len__(self):
        return self.size

    def _allocate(self, width):
        c = self.capacity
        self._states = np.zeros((c, width))
        self._next_states = np.zeros((c, width))
        self._primitives = np.zeros((c, self.plan.levels), dtype=np.int64)
        self._actions = np.zeros(c, dtype=np.int64)
        self._rewards = np.zeros(c)
        self._terminals = np.zeros(c, dtype=bool)

    def push(self, t):
        if len(t.primitive_actions) != self.plan.levels \
                or compose(self.plan, t.primitive_actions) != t.composed_action:
            msg = 'primitive actions {} do not compose to {}'
            raise InvalidArgumentError(msg.format(t.primitive_actions, t.composed_action))
        state = np.asarray(t.state, dtype=np.float64)
        if self._states is None:
            self._allocate(state.shape[0])
        if state.shape != self._states.shape[1:]:
            raise InvalidArgumentError('state width changed within one buffer')
        i = self.cursor
        self._states[i] = state
        self._next_states[i] = t.next_state
        self._primitives[i] = t.primitive_actions
        self._actions[i] = t.composed_action
        self._rewards[i] = t.reward
        self._terminals[i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _slot(self, i):
        return Transition(self._states[i].copy(), tuple(int(a) for a in self._primitives[i]),
                          int(self._actions[i]), float(self._rewards[i]),
                          self._next_states[i].copy(), bool(self._terminals[i]))

    def transitions(self):
        """Stored transitions, oldest first."""
        start = self.cursor if self.size == self.capacity else 0
        return [self._slot((start + k) % self.capacity) for k in range(self.size)]

    def sample(self, batch_size, rng):
        """Uniform sample with replacement.  Raises BufferNotReadyError when
        fewer than ``batch_size`` transitions are stored."""
        if self.size < batch_size or self.size == 0:
            msg = 'buffer holds {} transitions, {} requested'
            raise BufferNotReadyError(msg.format(self.size, batch_size))
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self._states[idx], self._primitives[idx], self._actions[idx],
                     self._rewards[idx], self._next_states[idx], self._terminals[idx])


def push(buffer, t):
    buffer.push(t)


def sample(buffer, batch_size, rng):
    return buffer.sample(batch_size, rng)


def td_targets(agent, batch, gamma, double_dqn=False):
    """``y = r + gamma * max_a' Q_target(s', a')``, and ``y = r`` at terminal
    transitions.  With ``double_dqn`` the online network picks a'."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError('gamma must lie in [0, 1]')
    q_next = nn_core.forward(agent.target, batch.next_states)
    if double_dqn:
        best = np.argmax(nn_core.forward(agent.net, batch.next_states), axis=1)
        bootstrap = q_next[np.arange(len(best)), best]
    else:
        bootstrap = q_next.max(axis=1)
    rewards = np.asarray(batch.rewards, dtype=np.float64)
    live = ~np.asarray(batch.terminals, dtype=bool)
    return rewards + gamma * live * bootstrap


def update(agent, batch, gamma, double_dqn=False):
    """One gradient step of ``agent`` on its own digit of the batch actions.
    Syncs the target network every ``agent.sync_period`` updates."""
    targets = td_targets(agent, batch, gamma, double_dqn)
    actions = np.asarray(batch.primitives)[:, agent.index]
    loss, grads = nn_core.td_loss_and_grads(agent.net, batch.states, actions, targets)
    nn_core.optimizer_step(agent.net, grads, agent.optimizer, agent.lr)
    agent.updates += 1
    if agent.updates % agent.sync_period == 0:
        nn_core.sync_target(agent.net, agent.target)
        logger.debug('level %d target synced after %d updates', agent.level, agent.updates)
    return loss


def build_group(plan, input_width, trunk=(128, 128), value_width=64, seed=0,
                lr=nn_core.DEFAULT_LR, gamma=DEFAULT_GAMMA, sync_period=DEFAULT_SYNC_PERIOD,
                optimizer='adam', double_dqn=False, parallel=False):
    """Fresh agents for every level of ``plan``, each with its own seeded
    network spawned from ``seed``."""
    arch = (input_width,) + tuple(trunk)
    seeds = np.random.SeedSequence(seed).spawn(plan.levels)
    agents = []
    for i, (radix, s) in enumerate(zip(plan.radices, seeds)):
        net = nn_core.init_network(arch, radix, s, value_width=value_width)
        agents.append(Agent(i, net, lr=lr, optimizer=optimizer, sync_period=sync_period))
    logger.info('built %d agent(s) with radices %s', plan.levels, plan.radices)
    return AgentGroup(plan, agents, gamma=gamma, double_dqn=double_dqn, parallel=parallel)


def build_baseline(action_count, input_width, trunk=(128, 128), value_width=64, seed=0,
                   **kwargs):
    """Single dueling DQN over every action: a group with a one-level plan."""
    if action_count < 1:
        raise InvalidArgumentError('action_count must be >= 1')
    return build_group(single_level_plan(action_count), input_width, trunk, value_width,
                       seed, **kwargs)


def save_group(group, directory, algo=None):
    """Write one network file per agent and a manifest to ``directory``.
    ``algo`` defaults to ddqn for one-level plans and hadrl otherwise."""
    os.makedirs(directory, exist_ok=True)
    cfg = configparser.ConfigParser(interpolation=None)
    first = group.agents[0]
    cfg['group'] = {
        'total_actions': str(group.plan.total_actions),
        'radices': ','.join(str(r) for r in group.plan.radices),
        'gamma': repr(group.gamma),
        'epsilon': repr(group.epsilon),
        'double_dqn': str(group.double_dqn),
        'sync_period': str(first.sync_period),
        'lr': repr(first.lr),
        'optimizer': first.optimizer.mode,
        'algo': algo or ('ddqn' if group.levels == 1 else 'hadrl'),
    }
    for agent in group.agents:
        name = 'agent{}.net'.format(agent.level)
        nn_core.save_network(agent.net, os.path.join(directory, name))
        cfg['agent{}'.format(agent.level)] = {'updates': str(agent.updates), 'file': name}
    with open(os.path.join(directory, MANIFEST_NAME), 'w', encoding='utf-8') as f:
        cfg.write(f)
    logger.info('checkpoint written to %s', directory)


def load_group(directory, parallel=False):
    """Rebuild a group from save_group() output.  Targets start equal to the
    online networks and optimizer moments start fresh."""
    path = os.path.join(directory, MANIFEST_NAME)
    cfg = configparser.ConfigParser(interpolation=None)
    if not cfg.read(path, encoding='utf-8'):
        raise CheckpointError('no checkpoint manifest at {}'.format(path))
    try:
        g = cfg['group']
        radices = tuple(int(r) for r in g['radices'].split(','))
        plan = DecompositionPlan(int(g['total_actions']), radices)
        agents = []
        for i in range(plan.levels):
            section = cfg['agent{}'.format(i + 1)]
            net = nn_core.load_network(os.path.join(directory, section['file']))
            agent = Agent(i, net, lr=float(g['lr']), optimizer=g['optimizer'],
                          sync_period=int(g['sync_period']))
            agent.updates = int(section['updates'])
            agents.append(agent)
        group = AgentGroup(plan, agents, gamma=float(g['gamma']),
                           double_dqn=g.getboolean('double_dqn'), parallel=parallel)
        group.epsilon = float(g['epsilon'])
    except (KeyError, ValueError) as e:
        raise CheckpointError('malformed manifest {}: {}'.format(path, e)) from None
    return group
