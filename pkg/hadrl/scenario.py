"""
Scenario description, its INI file format, and the preset library.

A scenario file looks like::

    [scenario]
    name = tiny

    [network]
    hosts = 6
    subnets = 2
    subnet_of = 0,0,0,1,1,1
    # "chain" (default), "star", or explicit links "0-1;1-2"
    adjacency = chain

    [flags]
    hosts = 4

    [agent]
    foothold = 0

    [dynamics]
    exploit_prob = 1.0
    step_limit = 30

    [actions]
    m = 2
    n = 1
    o = 2

    [rewards]
    flag = 10.0

Only ``[network]``, ``[flags]`` and ``[agent]`` are required; unknown
sections or keys are errors.
"""

import configparser
import dataclasses
import io
import logging
import os

from .action_types import MAX_TYPES, Kind
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

PRESET_DIR = os.path.join(os.path.dirname(__file__), 'presets')
PRESET_DIR_ENV = 'HADRL_PRESET_DIR'

DEFAULT_EXPLOIT_PROB = 0.9
DEFAULT_STEP_LIMIT = 500


@dataclasses.dataclass(frozen=True)
class Rewards:
    flag: float = 10.0
    pivot: float = 0.2
    invalid: float = -0.1
    failed_exploit: float = 0.0


def chain_adjacency(subnets):
    """Subnet i linked to i - 1 and i + 1."""
    pairs = set()
    for i in range(subnets - 1):
        pairs |= {(i, i + 1), (i + 1, i)}
    return frozenset(pairs)


def star_adjacency(subnets, hub=0):
    """Every subnet linked to ``hub`` (the public subnet) only."""
    pairs = set()
    for i in range(subnets):
        if i != hub:
            pairs |= {(i, hub), (hub, i)}
    return frozenset(pairs)


@dataclasses.dataclass(frozen=True)
class ScenarioSpec:
    """Topology, flag placement, dynamics and action-type counts.

    ``adjacency`` holds ordered subnet pairs and must be symmetric; every
    subnet is implicitly linked to itself.
    """
    hosts: int
    subnets: int
    subnet_of: tuple
    flag_hosts: tuple
    foothold: int
    adjacency: frozenset = None
    exploit_prob: float = DEFAULT_EXPLOIT_PROB
    step_limit: int = DEFAULT_STEP_LIMIT
    m: int = 2
    n: int = 1
    o: int = 2
    rewards: Rewards = Rewards()
    name: str = 'custom'

    def __post_init__(self):
        setattr_ = object.__setattr__
        setattr_(self, 'subnet_of', tuple(int(s) for s in self.subnet_of))
        setattr_(self, 'flag_hosts', tuple(sorted(set(int(h) for h in self.flag_hosts))))
        if self.adjacency is None:
            setattr_(self, 'adjacency', chain_adjacency(self.subnets))
        else:
            setattr_(self, 'adjacency', frozenset((int(a), int(b)) for a, b in self.adjacency))
        self._validate()

        members = [0] * self.subnets
        for host, subnet in enumerate(self.subnet_of):
            members[subnet] |= 1 << host
        linked = [1 << s for s in range(self.subnets)]
        for a, b in self.adjacency:
            linked[a] |= 1 << b
        flag_mask = 0
        for h in self.flag_hosts:
            flag_mask |= 1 << h
        setattr_(self, 'members', tuple(members))
        setattr_(self, 'linked_mask', tuple(linked))
        setattr_(self, 'flag_mask', flag_mask)

    def _fail(self, invariant):
        raise ConfigurationError('scenario {!r}: {}'.format(self.name, invariant))

    def _validate(self):
        if self.hosts < 1:
            self._fail('hosts must be >= 1 (got {})'.format(self.hosts))
        if self.subnets < 1:
            self._fail('subnets must be >= 1 (got {})'.format(self.subnets))
        if len(self.subnet_of) != self.hosts:
            self._fail('every host belongs to exactly one subnet: subnet_of has {} '
                       'entries for {} hosts'.format(len(self.subnet_of), self.hosts))
        for host, subnet in enumerate(self.subnet_of):
            if not 0 <= subnet < self.subnets:
                self._fail('host {} assigned to unknown subnet {}'.format(host, subnet))
        if not self.flag_hosts:
            self._fail('flag_hosts must not be empty')
        for h in self.flag_hosts:
            if not 0 <= h < self.hosts:
                self._fail('flag host {} out of range'.format(h))
        if not 0 <= self.foothold < self.hosts:
            self._fail('foothold {} out of range [0, {}]'.format(self.foothold, self.hosts - 1))
        if self.foothold in self.flag_hosts:
            self._fail('foothold must not be a flag host')
        for a, b in self.adjacency:
            if not (0 <= a < self.subnets and 0 <= b < self.subnets):
                self._fail('adjacency pair {}-{} names an unknown subnet'.format(a, b))
            if (b, a) not in self.adjacency:
                self._fail('adjacency must be symmetric: {}-{} has no reverse link'.format(a, b))
        if not 0 < self.exploit_prob <= 1:
            self._fail('exploit_prob must lie in (0, 1] (got {})'.format(self.exploit_prob))
        if self.step_limit < 1:
            self._fail('step_limit must be >= 1')
        for key, kind in (('m', Kind.HOST_TO_HOST), ('n', Kind.HOST_TO_SUBNET),
                          ('o', Kind.ON_HOST)):
            count = getattr(self, key)
            if not 0 <= count <= MAX_TYPES[kind]:
                self._fail('{} must lie in [0, {}] (got {})'.format(key, MAX_TYPES[kind], count))
        if self.total_actions < 1:
            self._fail('the action catalog is empty')

    def subnets_linked(self, a, b):
        return (self.linked_mask[a] >> b) & 1 == 1

    @property
    def total_actions(self):
        p, q = self.hosts, self.subnets
        return self.m * p * (p - 1) + self.n * p * q + self.o * p

    @property
    def observation_size(self):
        return 4 * self.hosts + self.subnets

    def with_exploit_prob(self, exploit_prob):
        return dataclasses.replace(self, exploit_prob=exploit_prob)

    def to_ini(self):
        """Serialize back to the scenario file format."""
        links = sorted((a, b) for a, b in self.adjacency if a < b)
        cfg = configparser.ConfigParser(interpolation=None)
        cfg['scenario'] = {'name': self.name}
        cfg['network'] = {
            'hosts': str(self.hosts),
            'subnets': str(self.subnets),
            'subnet_of': ','.join(str(s) for s in self.subnet_of),
            'adjacency': ';'.join('{}-{}'.format(a, b) for a, b in links),
        }
        cfg['flags'] = {'hosts': ','.join(str(h) for h in self.flag_hosts)}
        cfg['agent'] = {'foothold': str(self.foothold)}
        cfg['dynamics'] = {'exploit_prob': repr(self.exploit_prob),
                           'step_limit': str(self.step_limit)}
        cfg['actions'] = {'m': str(self.m), 'n': str(self.n), 'o': str(self.o)}
        cfg['rewards'] = {f.name: repr(getattr(self.rewards, f.name))
                          for f in dataclasses.fields(Rewards)}
        buf = io.StringIO()
        cfg.write(buf)
        return buf.getvalue()


# section -> allowed keys
_SCHEMA = {
    'scenario': {'name'},
    'network': {'hosts', 'subnets', 'subnet_of', 'adjacency'},
    'flags': {'hosts'},
    'agent': {'foothold'},
    'dynamics': {'exploit_prob', 'step_limit'},
    'actions': {'m', 'n', 'o'},
    'rewards': {f.name for f in dataclasses.fields(Rewards)},
}
_REQUIRED = [('network', 'hosts'), ('network', 'subnets'), ('network', 'subnet_of'),
             ('flags', 'hosts'), ('agent', 'foothold')]


def _int_list(text, what):
    try:
        return [int(v) for v in text.replace(' ', '').split(',') if v != '']
    except ValueError:
        raise ConfigurationError('{}: expected a comma-separated list of integers, '
                                 'got {!r}'.format(what, text)) from None


def _parse_adjacency(text, subnets):
    text = text.strip()
    if text == 'chain':
        return chain_adjacency(subnets)
    if text == 'star':
        return star_adjacency(subnets)
    pairs = set()
    for item in text.split(';'):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = (int(v) for v in item.split('-'))
        except ValueError:
            raise ConfigurationError('adjacency: bad link {!r}; expected "a-b"'.format(item)) from None
        pairs |= {(a, b), (b, a)}
    return frozenset(pairs)


def parse_scenario(text, name=None):
    """Build a ScenarioSpec from scenario-file text."""
    cfg = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',))
    try:
        cfg.read_string(text)
    except configparser.Error as e:
        raise ConfigurationError('unreadable scenario file: {}'.format(e)) from None

    for section in cfg.sections():
        if section not in _SCHEMA:
            raise ConfigurationError('unknown section [{}]'.format(section))
        for key in cfg[section]:
            if key not in _SCHEMA[section]:
                raise ConfigurationError('unknown key {!r} in [{}]'.format(key, section))
    for section, key in _REQUIRED:
        if not cfg.has_option(section, key):
            raise ConfigurationError('missing required key {!r} in [{}]'.format(key, section))

    def get(section, key, conv, default):
        if not cfg.has_option(section, key):
            return default
        raw = cfg.get(section, key)
        try:
            return conv(raw)
        except ValueError:
            msg = '[{}] {}: cannot read {!r}'
            raise ConfigurationError(msg.format(section, key, raw)) from None

    subnets = get('network', 'subnets', int, None)
    adjacency = None
    if cfg.has_option('network', 'adjacency'):
        adjacency = _parse_adjacency(cfg.get('network', 'adjacency'), subnets)
    rewards = Rewards(**{f.name: get('rewards', f.name, float, f.default)
                         for f in dataclasses.fields(Rewards)})
    return ScenarioSpec(
        name=get('scenario', 'name', str.strip, name or 'custom'),
        hosts=get('network', 'hosts', int, None),
        subnets=subnets,
        subnet_of=_int_list(cfg.get('network', 'subnet_of'), 'subnet_of'),
        adjacency=adjacency,
        flag_hosts=_int_list(cfg.get('flags', 'hosts'), 'flags'),
        foothold=get('agent', 'foothold', int, None),
        exploit_prob=get('dynamics', 'exploit_prob', float, DEFAULT_EXPLOIT_PROB),
        step_limit=get('dynamics', 'step_limit', int, DEFAULT_STEP_LIMIT),
        m=get('actions', 'm', int, 2),
        n=get('actions', 'n', int, 1),
        o=get('actions', 'o', int, 2),
        rewards=rewards,
    )


def available_presets():
    return sorted(f[:-4] for f in os.listdir(PRESET_DIR) if f.endswith('.ini'))


def _preset_path(name):
    user_dir = os.environ.get(PRESET_DIR_ENV)
    builtin = os.path.join(PRESET_DIR, name + '.ini')
    if user_dir:
        path = os.path.join(user_dir, name + '.ini')
        if os.path.isfile(path):
            if os.path.isfile(builtin):
                logger.warning('preset %r from %s shadows the built-in one', name, user_dir)
            return path
    if os.path.isfile(builtin):
        return builtin
    return None


def load_scenario(source):
    """Resolve a ScenarioSpec from a spec, a file path or a preset name."""
    if isinstance(source, ScenarioSpec):
        return source
    source = os.fspath(source)
    if os.path.isfile(source):
        path, name = source, os.path.splitext(os.path.basename(source))[0]
    else:
        path, name = _preset_path(source), source
        if path is None:
            msg = 'no scenario file or preset named {!r} (presets: {})'
            raise ConfigurationError(msg.format(source, ', '.join(available_presets())))
    logger.debug('loading scenario %r from %s', name, path)
    with open(path, encoding='utf-8') as f:
        return parse_scenario(f.read(), name=name)
