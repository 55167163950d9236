"""
Command-line driver for HA-DRL experiments: action decomposition plans, the
action catalog, the optimal-path oracle, training, greedy evaluation, run
comparison and activation dumps.

Exit status is 0 on success, 1 when a command fails at runtime and 2 for
usage errors.
"""

import argparse
import logging
import sys

from .. import nn_core, trainer
from ..action_algebra import DEFAULT_MAX_BRANCH, plan_decomposition
from ..agents import load_group
from ..errors import HadrlError, InvalidArgumentError
from ..pentest_env import PentestEnv, describe_entry, oracle_optimal
from ..scenario import load_scenario

logger = logging.getLogger('hadrl')


def _at_least(lower):
    def convert(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError('{!r} is not an integer'.format(text))
        if value < lower:
            raise argparse.ArgumentTypeError('must be >= {} (got {})'.format(lower, value))
        return value
    convert.__name__ = 'int>={}'.format(lower)
    return convert


def _fraction(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError('must lie in [0, 1] (got {})'.format(value))
    return value


def _widths(text):
    try:
        widths = tuple(int(w) for w in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated widths, got {!r}'.format(text))
    if any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError('widths must be >= 1')
    return widths


def _add_scenario(p):
    p.add_argument(
        '--scenario',
        help='preset name or path to a scenario file',
        required=True,
    )


def _get_parser():
    p = argparse.ArgumentParser(prog='hadrl', description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument(
        '-v', '--verbose',
        action='count',
        default=0,
        help='log progress (repeat for debug output)',
    )
    sub = p.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    plan = sub.add_parser('plan', help='print the decomposition plan for N actions')
    plan.add_argument('--actions', type=_at_least(1), required=True)
    plan.add_argument('--max-branch', type=_at_least(2), default=DEFAULT_MAX_BRANCH)

    enum_ = sub.add_parser('enumerate', help='print the action catalog of a scenario')
    _add_scenario(enum_)

    oracle = sub.add_parser('oracle', help='shortest flag-capturing action sequence')
    _add_scenario(oracle)

    train = sub.add_parser('train', help='train HA-DRL or the single-DQN baseline')
    _add_scenario(train)
    train.add_argument('--algo', choices=trainer.ALGORITHMS, default='hadrl')
    train.add_argument('--episodes', type=_at_least(0), required=True)
    train.add_argument('--seed', type=_at_least(0), default=0)
    train.add_argument(
        '--seeds',
        type=_at_least(0),
        nargs='+',
        help='train one run per seed, each into OUT/seed<k>, in a process pool',
    )
    train.add_argument('--processes', type=_at_least(1), default=None)
    train.add_argument('--out', required=True, help='run directory')
    train.add_argument('--max-branch', type=_at_least(2), default=DEFAULT_MAX_BRANCH)
    train.add_argument('--gamma', type=_fraction, default=trainer.RunConfig.gamma)
    train.add_argument('--lr', type=float, default=trainer.RunConfig.lr)
    train.add_argument('--batch-size', type=_at_least(1), default=trainer.RunConfig.batch_size)
    train.add_argument('--buffer', type=_at_least(1), default=trainer.RunConfig.buffer_capacity,
                       help='replay buffer capacity')
    train.add_argument('--sync-period', type=_at_least(1),
                       default=trainer.RunConfig.sync_period)
    train.add_argument('--warmup', type=_at_least(0), default=trainer.RunConfig.warmup)
    train.add_argument('--eps-start', type=_fraction, default=trainer.RunConfig.eps_start)
    train.add_argument('--eps-end', type=_fraction, default=trainer.RunConfig.eps_end)
    train.add_argument('--eps-decay', type=_fraction,
                       default=trainer.RunConfig.eps_decay_fraction,
                       help='share of the episodes over which epsilon decays')
    train.add_argument('--eval-every', type=_at_least(1), default=trainer.RunConfig.eval_every)
    train.add_argument('--eval-episodes', type=_at_least(1),
                       default=trainer.RunConfig.eval_episodes)
    train.add_argument(
        '--arch',
        choices=sorted(nn_core.ARCH_PRESETS),
        default='desk',
        help='network size preset',
    )
    train.add_argument('--trunk', type=_widths, help='trunk widths, overriding --arch')
    train.add_argument('--value-width', type=_at_least(0),
                       help='value stream hidden width, overriding --arch')
    train.add_argument('--optimizer', choices=('adam', 'sgd'), default='adam')
    train.add_argument('--exploit-prob', type=float, default=None)
    train.add_argument('--double-dqn', action='store_true')
    train.add_argument('--parallel', action='store_true',
                       help='update the agents of a step on a thread pool')
    train.add_argument('--wall-clock', action='store_true',
                       help='record per-episode wall time in the metrics')
    train.add_argument('--keep-last', dest='keep_best', action='store_false',
                       help='checkpoint the last parameters instead of the best evaluated ones')

    ev = sub.add_parser('eval', help='greedy evaluation of a checkpoint')
    ev.add_argument('--checkpoint', required=True)
    _add_scenario(ev)
    ev.add_argument('--episodes', type=_at_least(1), default=10)
    ev.add_argument('--seed', type=_at_least(0), default=0)

    cmp_ = sub.add_parser('compare', help='episodes-to-threshold of two sets of runs')
    cmp_.add_argument('--a', nargs='+', required=True, metavar='DIR')
    cmp_.add_argument('--b', nargs='+', required=True, metavar='DIR')
    cmp_.add_argument('--threshold', type=float, default=None,
                      help='defaults to 90%% of the oracle return')
    cmp_.add_argument('--out', help='also write the summary here')

    dump = sub.add_parser('dump-embeddings', help='write trunk activations of greedy rollouts')
    dump.add_argument('--checkpoint', required=True)
    _add_scenario(dump)
    dump.add_argument('--episodes', type=_at_least(1), default=1)
    dump.add_argument('--seed', type=_at_least(0), default=0)
    dump.add_argument('--out', required=True)
    return p


def cmd_plan(args):
    print(plan_decomposition(args.actions, args.max_branch).describe())


def cmd_enumerate(args):
    env = PentestEnv(load_scenario(args.scenario))
    for i, entry in enumerate(env.catalog):
        print(i, describe_entry(entry))


def cmd_oracle(args):
    env = PentestEnv(load_scenario(args.scenario))
    steps, best = oracle_optimal(env)
    print('min_steps={} max_return={!r}'.format(steps, best))


def cmd_train(args):
    trunk, value_width = nn_core.ARCH_PRESETS[args.arch]
    if args.trunk is not None:
        trunk = args.trunk
    if args.value_width is not None:
        value_width = args.value_width
    config = trainer.RunConfig(
        scenario=args.scenario, algo=args.algo, max_branch=args.max_branch,
        episodes=args.episodes, seed=args.seed, gamma=args.gamma, lr=args.lr,
        batch_size=args.batch_size, buffer_capacity=args.buffer,
        sync_period=args.sync_period, warmup=args.warmup, eps_start=args.eps_start,
        eps_end=args.eps_end, eps_decay_fraction=args.eps_decay,
        eval_every=args.eval_every, eval_episodes=args.eval_episodes, trunk=trunk,
        value_width=value_width, optimizer=args.optimizer, double_dqn=args.double_dqn,
        parallel=args.parallel, record_wall_clock=args.wall_clock,
        exploit_prob=args.exploit_prob, keep_best=args.keep_best, out=args.out,
    )
    if args.seeds:
        results = trainer.train_seeds(config, args.seeds, args.processes)
        for seed in args.seeds:
            _, ret, steps = results[seed]
            print('seed={} final_return={!r} final_steps={!r}'.format(seed, ret, steps))
        return
    result = trainer.train(config)
    print('final_return={!r} final_steps={!r}'.format(result.final_return, result.final_steps))


def _load_matching(checkpoint, env):
    group = load_group(checkpoint)
    if group.plan.total_actions != env.total_actions:
        msg = 'checkpoint covers {} actions, scenario has {}'
        raise InvalidArgumentError(msg.format(group.plan.total_actions, env.total_actions))
    return group


def cmd_eval(args):
    env = PentestEnv(load_scenario(args.scenario))
    group = _load_matching(args.checkpoint, env)
    ret, steps = trainer.evaluate(env, group, args.episodes, seed=args.seed)
    print('mean_return={!r} mean_steps={!r}'.format(ret, steps))


def cmd_compare(args):
    runs_a = [trainer.load_run(d) for d in args.a]
    runs_b = [trainer.load_run(d) for d in args.b]
    text = trainer.compare(runs_a, runs_b, args.threshold).to_text()
    sys.stdout.write(text)
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text)


def cmd_dump_embeddings(args):
    env = PentestEnv(load_scenario(args.scenario))
    group = _load_matching(args.checkpoint, env)
    rows = trainer.dump_embeddings(group, env, args.episodes, args.out,
                                   seed=args.seed)
    print('rows={}'.format(rows))


COMMANDS = {
    'plan': cmd_plan,
    'enumerate': cmd_enumerate,
    'oracle': cmd_oracle,
    'train': cmd_train,
    'eval': cmd_eval,
    'compare': cmd_compare,
    'dump-embeddings': cmd_dump_embeddings,
}


def main(argv=None):
    parser = _get_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help
        return e.code
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        COMMANDS[args.command](args)
    except HadrlError as e:
        logger.debug('%s failed', args.command, exc_info=True)
        print('hadrl: error: {}'.format(e), file=sys.stderr)
        return 1
    except OSError as e:
        print('hadrl: error: {}'.format(e), file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
