"""
Training runs, greedy evaluation, cross-algorithm comparison and activation
dumps for HA-DRL and the single-DQN baseline.

A run directory written by train() contains::

    run.ini         the resolved RunConfig
    scenario.ini    the scenario actually used
    metrics.csv     one row per episode, appended and flushed as it happens
    checkpoint/     agents.save_group() output
"""

import configparser
import csv
import dataclasses
import logging
import math
import multiprocessing
import os
import statistics
import time

import numpy as np

from . import agents as agents_mod
from . import nn_core
from .action_algebra import plan_decomposition, single_level_plan
from .agents import ReplayBuffer, Transition, select_joint
from .errors import ConfigurationError, InvalidArgumentError
from .pentest_env import PentestEnv, oracle_optimal
from .scenario import ScenarioSpec, load_scenario, parse_scenario

logger = logging.getLogger(__name__)

ALGORITHMS = ('hadrl', 'ddqn')
METRICS_HEADER = ['episode', 'return', 'steps', 'epsilon', 'loss_mean',
                  'eval_return', 'eval_steps', 'wall_ms', 'seed']
METRICS_NAME = 'metrics.csv'
RUN_NAME = 'run.ini'
SCENARIO_NAME = 'scenario.ini'
CHECKPOINT_NAME = 'checkpoint'

# fraction of the oracle return a greedy evaluation has to reach
CONVERGENCE_FRACTION = 0.9


@dataclasses.dataclass
class RunConfig:
    scenario: str = 'tiny'
    algo: str = 'hadrl'
    max_branch: int = 10
    episodes: int = 0
    seed: int = 0
    gamma: float = agents_mod.DEFAULT_GAMMA
    lr: float = nn_core.DEFAULT_LR
    batch_size: int = agents_mod.DEFAULT_BATCH_SIZE
    buffer_capacity: int = agents_mod.DEFAULT_BUFFER_CAPACITY
    sync_period: int = agents_mod.DEFAULT_SYNC_PERIOD
    # transitions stored before the first update
    warmup: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    # share of the episodes over which epsilon decays linearly
    eps_decay_fraction: float = 0.2
    eval_every: int = 50
    eval_episodes: int = 10
    trunk: tuple = (128, 128)
    value_width: int = 64
    optimizer: str = 'adam'
    double_dqn: bool = False
    parallel: bool = False
    record_wall_clock: bool = False
    # restore the best greedy-evaluated parameters before the final evaluation
    keep_best: bool = True
    # overrides the scenario's exploit_prob when set
    exploit_prob: float = None
    out: str = None

    def validate(self):
        def fail(msg):
            raise ConfigurationError('run config: ' + msg)
        if self.algo not in ALGORITHMS:
            fail('algo must be one of {}, got {!r}'.format(ALGORITHMS, self.algo))
        if self.episodes < 0:
            fail('episodes must be >= 0')
        if self.eval_every < 1 or self.eval_episodes < 1:
            fail('evaluation cadence must be >= 1')
        if self.max_branch < 2:
            fail('max_branch must be >= 2')
        if not 0.0 <= self.gamma <= 1.0:
            fail('gamma must lie in [0, 1]')
        if self.lr <= 0:
            fail('lr must be positive')
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            fail('need 1 <= batch_size <= buffer_capacity')
        if self.sync_period < 1:
            fail('sync_period must be >= 1')
        if not (0.0 <= self.eps_end <= 1.0 and 0.0 <= self.eps_start <= 1.0):
            fail('epsilon bounds must lie in [0, 1]')
        if not 0.0 <= self.eps_decay_fraction <= 1.0:
            fail('eps_decay_fraction must lie in [0, 1]')
        if self.optimizer not in (nn_core.OptimizerState.ADAM, nn_core.OptimizerState.SGD):
            fail('unknown optimizer {!r}'.format(self.optimizer))
        if not self.trunk or any(w < 1 for w in self.trunk):
            fail('trunk widths must be >= 1')
        if self.value_width < 0:
            fail('value_width must be >= 0')
        return self

    def epsilon_at(self, episode):
        decay = self.eps_decay_fraction * self.episodes
        if decay <= 0:
            return self.eps_end
        frac = min(1.0, episode / decay)
        return self.eps_start + (self.eps_end - self.eps_start) * frac

    def to_ini(self):
        """The config as a ``[run]`` section; ``out`` is not recorded."""
        lines = ['[run]']
        for f in dataclasses.fields(self):
            if f.name == 'out':
                continue
            value = getattr(self, f.name)
            if isinstance(value, ScenarioSpec):
                value = value.name
            elif isinstance(value, tuple):
                value = ','.join(str(v) for v in value)
            elif value is None:
                value = ''
            elif isinstance(value, float):
                value = repr(value)
            lines.append('{} = {}'.format(f.name, value))
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_ini(cls, text):
        cfg = configparser.ConfigParser(interpolation=None)
        cfg.read_string(text)
        section = cfg['run']
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in section:
                continue
            raw = section[f.name]
            if f.default is None:
                kwargs[f.name] = float(raw) if raw else None
            elif isinstance(f.default, bool):
                kwargs[f.name] = section.getboolean(f.name)
            elif isinstance(f.default, tuple):
                kwargs[f.name] = tuple(int(v) for v in raw.split(','))
            else:
                kwargs[f.name] = type(f.default)(raw)
        return cls(**kwargs)


@dataclasses.dataclass
class MetricsRecord:
    episode: int
    ret: float
    steps: int
    epsilon: float
    # mean loss of each agent over this episode's updates (empty before warmup)
    losses: list
    seed: int
    eval_return: float = None
    eval_steps: float = None
    wall_ms: float = None

    @property
    def loss_mean(self):
        if not self.losses:
            return None
        return float(np.mean(self.losses))

    def to_row(self):
        def fmt(v):
            return '' if v is None else repr(float(v))
        return [str(self.episode), fmt(self.ret), str(self.steps), fmt(self.epsilon),
                fmt(self.loss_mean), fmt(self.eval_return), fmt(self.eval_steps),
                fmt(self.wall_ms), str(self.seed)]


class MetricsWriter:
    """Appends one CSV row per episode, flushing after every row so a
    crashed run still leaves a readable file."""

    def __init__(self, path):
        self.path = path
        self._f = open(path, 'w', encoding='utf-8', newline='')
        self._writer = csv.writer(self._f, lineterminator='\n')
        self._writer.writerow(METRICS_HEADER)
        self._f.flush()

    def write(self, record):
        self._writer.writerow(record.to_row())
        self._f.flush()

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path):
    """Parse a metrics file back into MetricsRecords.  ``losses`` holds the
    logged mean only."""
    def opt(v):
        return float(v) if v != '' else None
    records = []
    with open(path, encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != METRICS_HEADER:
            raise InvalidArgumentError('{} is not a metrics file'.format(path))
        for row in reader:
            loss = opt(row[4])
            records.append(MetricsRecord(
                episode=int(row[0]), ret=float(row[1]), steps=int(row[2]),
                epsilon=float(row[3]), losses=[] if loss is None else [loss],
                eval_return=opt(row[5]), eval_steps=opt(row[6]), wall_ms=opt(row[7]),
                seed=int(row[8])))
    return records


@dataclasses.dataclass
class TrainResult:
    history: list
    group: object
    final_return: float
    final_steps: float
    checkpoint: str = None


def _child_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _resolve_scenario(config):
    scenario = load_scenario(config.scenario)
    if config.exploit_prob is not None:
        scenario = scenario.with_exploit_prob(config.exploit_prob)
    return scenario


def build_run(config, scenario):
    """Environment-independent pieces of a run: the plan and the agent group."""
    if config.algo == 'hadrl':
        plan = plan_decomposition(scenario.total_actions, config.max_branch)
    else:
        plan = single_level_plan(scenario.total_actions)
    net_seed = _child_seeds(config.seed, 1)[0]
    return agents_mod.build_group(
        plan, scenario.observation_size, trunk=config.trunk, value_width=config.value_width,
        seed=net_seed, lr=config.lr, gamma=config.gamma, sync_period=config.sync_period,
        optimizer=config.optimizer, double_dqn=config.double_dqn, parallel=config.parallel)


def evaluate(env, group, episodes, seed=None):
    """Greedy rollouts.  Returns ``(mean_return, mean_steps)``; touches no
    parameters, buffer or exploration state."""
    if episodes < 1:
        raise InvalidArgumentError('episodes must be >= 1')
    # epsilon is 0 so this stream only feeds the (never taken) random branch
    rng = np.random.default_rng(0)
    returns, steps = [], []
    dead = 0
    for i in range(episodes):
        obs = env.reset(seed if i == 0 else None)
        done, total, n = False, 0.0, 0
        while not done:
            _, action = select_joint(group, obs, 0.0, rng)
            obs, reward, done, info = env.step(action)
            if info['action'] is None:
                dead += 1
            total += reward
            n += 1
        returns.append(total)
        steps.append(n)
    if dead:
        logger.warning('greedy policy chose %d dead-zone action(s) over %d episode(s)',
                       dead, episodes)
    return float(np.mean(returns)), float(np.mean(steps))


def _snapshot(group):
    return [[p.copy() for p in agent.net.params] for agent in group.agents]


def _restore(group, snapshot):
    for agent, params in zip(group.agents, snapshot):
        for dst, src in zip(agent.net.params, params):
            np.copyto(dst, src)
        nn_core.sync_target(agent.net, agent.target)


def train(config):
    """Run ``config.episodes`` training episodes.  With ``config.out`` set,
    metrics, the resolved config and a final checkpoint are written there.

    With ``config.keep_best`` the final evaluation and the checkpoint use the
    parameters of the best periodic evaluation rather than the last ones.
    """
    config.validate()
    scenario = _resolve_scenario(config)
    env = PentestEnv(scenario)
    eval_env = PentestEnv(scenario)
    group = build_run(config, scenario)
    buffer = ReplayBuffer(config.buffer_capacity, group.plan)

    _, act_seed, replay_seed, env_seed, eval_seed = _child_seeds(config.seed, 5)
    if config.parallel:
        act_rng = [np.random.default_rng(s)
                   for s in np.random.SeedSequence(act_seed).spawn(group.levels)]
    else:
        act_rng = np.random.default_rng(act_seed)
    replay_rng = np.random.default_rng(replay_seed)
    warmup = max(config.warmup, config.batch_size)

    writer = None
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        with open(os.path.join(config.out, RUN_NAME), 'w', encoding='utf-8') as f:
            f.write(config.to_ini())
        with open(os.path.join(config.out, SCENARIO_NAME), 'w', encoding='utf-8') as f:
            f.write(scenario.to_ini())
        writer = MetricsWriter(os.path.join(config.out, METRICS_NAME))

    logger.info('training %s on %r: %d actions, radices %s, %d episodes, seed %d',
                config.algo, scenario.name, scenario.total_actions, group.plan.radices,
                config.episodes, config.seed)
    history = []
    best = None
    try:
        for episode in range(config.episodes):
            start = time.perf_counter()
            epsilon = config.epsilon_at(episode)
            group.epsilon = epsilon
            obs = env.reset(env_seed if episode == 0 else None)
            done, total, steps = False, 0.0, 0
            losses = [[] for _ in group.agents]
            while not done:
                primitives, action = select_joint(group, obs, epsilon, act_rng)
                next_obs, reward, done, info = env.step(action)
                # running out of steps truncates the episode but is not terminal
                buffer.push(Transition(obs, primitives, action, reward, next_obs,
                                       info['flags_captured']))
                if len(buffer) >= warmup:
                    batch = buffer.sample(config.batch_size, replay_rng)
                    for acc, loss in zip(losses, group.update(batch)):
                        acc.append(loss)
                obs = next_obs
                total += reward
                steps += 1

            record = MetricsRecord(
                episode=episode, ret=total, steps=steps, epsilon=epsilon,
                losses=[float(np.mean(l)) for l in losses if l], seed=config.seed)
            if (episode + 1) % config.eval_every == 0:
                record.eval_return, record.eval_steps = evaluate(
                    eval_env, group, config.eval_episodes, seed=eval_seed)
                logger.info('episode %d: eval return %.3f in %.1f steps (epsilon %.3f)',
                            episode, record.eval_return, record.eval_steps, epsilon)
                score = (record.eval_return, -record.eval_steps)
                if config.keep_best and (best is None or score > best[0]):
                    best = (score, episode, _snapshot(group))
            if config.record_wall_clock:
                record.wall_ms = (time.perf_counter() - start) * 1000.0
            history.append(record)
            if writer is not None:
                writer.write(record)
    finally:
        if writer is not None:
            writer.close()
        group.close()

    if config.keep_best and best is not None:
        _restore(group, best[2])
        logger.info('restored parameters from episode %d (eval return %.3f)',
                    best[1], best[0][0])
    final_return, final_steps = evaluate(eval_env, group, config.eval_episodes, seed=eval_seed)
    checkpoint = None
    if config.out:
        checkpoint = os.path.join(config.out, CHECKPOINT_NAME)
        agents_mod.save_group(group, checkpoint, algo=config.algo)
    logger.info('finished: greedy return %.3f in %.1f steps', final_return, final_steps)
    return TrainResult(history, group, final_return, final_steps, checkpoint)


def _train_worker(config):
    try:
        result = train(config)
    except Exception:
        logger.exception('run with seed %d failed', config.seed)
        raise
    return config.seed, result.history, result.final_return, result.final_steps


def train_seeds(config, seeds, processes=None):
    """Independent runs of ``config`` for every seed, in a process pool.
    Each run writes to ``<config.out>/seed<k>`` when ``out`` is set.

    Returns ``{seed: (history, final_return, final_steps)}``.
    """
    configs = []
    for seed in seeds:
        out = os.path.join(config.out, 'seed{}'.format(seed)) if config.out else None
        configs.append(dataclasses.replace(config, seed=seed, out=out))
    for c in configs:
        c.validate()
    if processes == 1 or len(configs) == 1:
        results = [_train_worker(c) for c in configs]
    else:
        with multiprocessing.Pool(processes or len(configs)) as pool:
            results = pool.map(_train_worker, configs)
    return {seed: (history, ret, steps) for seed, history, ret, steps in results}


@dataclasses.dataclass
class Run:
    """A finished run read back from its directory."""
    config: RunConfig
    scenario: object
    history: list


def load_run(directory):
    with open(os.path.join(directory, RUN_NAME), encoding='utf-8') as f:
        config = RunConfig.from_ini(f.read())
    with open(os.path.join(directory, SCENARIO_NAME), encoding='utf-8') as f:
        scenario = parse_scenario(f.read())
    history = read_metrics(os.path.join(directory, METRICS_NAME))
    return Run(config, scenario, history)


def episodes_to_threshold(history, threshold):
    """First episode whose greedy evaluation reached ``threshold``, or inf."""
    for record in history:
        if record.eval_return is not None and record.eval_return >= threshold:
            return record.episode
    return math.inf


@dataclasses.dataclass
class ComparisonSummary:
    threshold: float
    algo_a: str
    algo_b: str
    # (seed, episodes for a, episodes for b)
    per_seed: list
    median_a: float
    median_b: float
    success_a: int
    success_b: int

    def to_text(self):
        def ep(v):
            return 'inf' if v == math.inf else repr(v)
        lines = ['threshold={!r}'.format(self.threshold),
                 'algo_a={}'.format(self.algo_a),
                 'algo_b={}'.format(self.algo_b)]
        lines += ['seed={} a={} b={}'.format(s, ep(a), ep(b)) for s, a, b in self.per_seed]
        lines += ['median_a={}'.format(ep(self.median_a)),
                  'median_b={}'.format(ep(self.median_b)),
                  'success_a={}'.format(self.success_a),
                  'success_b={}'.format(self.success_b)]
        return '\n'.join(lines) + '\n'


def compare(runs_a, runs_b, threshold=None):
    """Episodes-to-threshold per seed, medians and success counts for two
    sets of runs on the same scenario and seeds.

    ``threshold`` defaults to 90% of the scenario's oracle return.
    """
    runs = list(runs_a) + list(runs_b)
    if not runs_a or not runs_b:
        raise InvalidArgumentError('both sides need at least one run')
    scenario = runs[0].scenario
    if any(r.scenario != scenario for r in runs):
        raise InvalidArgumentError('runs were made on different scenarios')
    by_seed_a = {r.config.seed: r for r in runs_a}
    by_seed_b = {r.config.seed: r for r in runs_b}
    if set(by_seed_a) != set(by_seed_b):
        msg = 'seed sets differ: {} vs {}'
        raise InvalidArgumentError(msg.format(sorted(by_seed_a), sorted(by_seed_b)))

    if threshold is None:
        _, best = oracle_optimal(PentestEnv(scenario))
        threshold = CONVERGENCE_FRACTION * best

    per_seed = []
    for seed in sorted(by_seed_a):
        a = episodes_to_threshold(by_seed_a[seed].history, threshold)
        b = episodes_to_threshold(by_seed_b[seed].history, threshold)
        per_seed.append((seed, a, b))
    col_a = [a for _, a, _ in per_seed]
    col_b = [b for _, _, b in per_seed]
    return ComparisonSummary(
        threshold=threshold,
        algo_a=runs_a[0].config.algo,
        algo_b=runs_b[0].config.algo,
        per_seed=per_seed,
        median_a=statistics.median(col_a),
        median_b=statistics.median(col_b),
        success_a=sum(1 for v in col_a if v != math.inf),
        success_b=sum(1 for v in col_b if v != math.inf),
    )


def dump_embeddings(checkpoint, env, episodes, path, seed=0):
    """Greedy rollouts writing, per visited state and agent, the agent's
    level, its greedy primitive action and its trunk activations.

    Returns the number of rows written.
    """
    group = agents_mod.load_group(checkpoint) if isinstance(checkpoint, str) else checkpoint
    width = group.agents[0].net.penultimate_width
    header = ['agent', 'action'] + ['h{}'.format(i) for i in range(width)]
    rows = 0
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for i in range(episodes):
            obs = env.reset(seed if i == 0 else None)
            done = False
            while not done:
                primitives = []
                for agent in group.agents:
                    h = nn_core.penultimate(agent.net, obs)
                    a = int(np.argmax(nn_core.forward(agent.net, obs)))
                    primitives.append(a)
                    writer.writerow([agent.level, a] + [repr(float(v)) for v in h])
                    rows += 1
                obs, _, done, _ = env.step(group.plan.compose(primitives))
    logger.info('wrote %d activation rows to %s', rows, path)
    return rows
