"""
Mixed-radix factorization of a flat integer action space.

A plan splits ``total_actions`` ids into L levels with radices
``beta_1 .. beta_L``.  Each level picks a primitive digit in
``[0, beta_i - 1]`` and the composed id is built with Horner's rule::

    a_out = a_1
    a_out = a_out * beta_i + a_i     for i = 2 .. L

so ``beta_1`` is never used as a multiplier.  Ids in
``[total_actions, capacity - 1]`` (the dead zone) are still valid outputs of
compose(); the environment treats them as invalid actions.
"""

import dataclasses
import logging

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_MAX_BRANCH = 10


@dataclasses.dataclass(frozen=True)
class DecompositionPlan:
    total_actions: int
    radices: tuple

    def __post_init__(self):
        radices = tuple(int(r) for r in self.radices)
        object.__setattr__(self, 'radices', radices)
        if self.total_actions < 1:
            raise InvalidArgumentError('total_actions must be >= 1')
        if not radices:
            raise InvalidArgumentError('a plan needs at least one level')
        if any(r < 1 for r in radices):
            raise InvalidArgumentError('every radix must be >= 1, got {}'.format(radices))
        if self.capacity < self.total_actions:
            msg = 'capacity {} of radices {} is below total_actions {}'
            raise InvalidArgumentError(msg.format(self.capacity, radices, self.total_actions))

    @property
    def levels(self):
        return len(self.radices)

    @property
    def capacity(self):
        capacity = 1
        for r in self.radices:
            capacity *= r
        return capacity

    @property
    def dead_zone(self):
        """Number of composed ids that do not map onto a real action."""
        return self.capacity - self.total_actions

    def compose(self, digits):
        return compose(self, digits)

    def decompose(self, action_id):
        return decompose(self, action_id)

    def describe(self):
        """The one-line text form used by ``hadrl plan``."""
        radices = ','.join(str(r) for r in self.radices)
        return 'levels={} radices={} capacity={}'.format(self.levels, radices, self.capacity)


def _level_count(total_actions, max_branch):
    # smallest L with max_branch**L >= total_actions; integer arithmetic so exact
    # powers (1000 with base 10) don't pick up an extra level from float rounding.
    levels = 0
    reach = 1
    while reach < total_actions:
        reach *= max_branch
        levels += 1
    return max(1, levels)


def _integer_root_ceil(value, degree):
    """Smallest r with r**degree >= value."""
    r = max(1, int(round(value ** (1.0 / degree))))
    while r ** degree < value:
        r += 1
    while r > 1 and (r - 1) ** degree >= value:
        r -= 1
    return r


def plan_decomposition(total_actions, max_branch=DEFAULT_MAX_BRANCH):
    """Plan balanced radices for ``total_actions`` with at most ``max_branch``
    primitive actions per level.

    The level count is ``ceil(log(total_actions) / log(max_branch))`` (at least
    one); every level starts at ``ceil(total_actions ** (1 / L))`` and the last
    radix is then shrunk while the capacity still covers every action.
    """
    if total_actions < 1:
        raise InvalidArgumentError('total_actions must be >= 1, got {}'.format(total_actions))
    if max_branch < 2:
        raise InvalidArgumentError('max_branch must be >= 2, got {}'.format(max_branch))

    levels = _level_count(total_actions, max_branch)
    radix = _integer_root_ceil(total_actions, levels)
    radices = [radix] * levels

    prefix = radix ** (levels - 1)
    while radices[-1] > 1 and prefix * (radices[-1] - 1) >= total_actions:
        radices[-1] -= 1

    plan = DecompositionPlan(total_actions, tuple(radices))
    logger.debug('planned %s for %d actions (max_branch=%d)',
                 plan.describe(), total_actions, max_branch)
    return plan


def single_level_plan(total_actions):
    """Degenerate plan with one level covering every action exactly."""
    return DecompositionPlan(total_actions, (total_actions,))


def compose(plan, digits):
    """Compose primitive digits (level 1 first) into a flat action id."""
    if len(digits) != plan.levels:
        msg = 'expected {} digits, got {}'
        raise InvalidArgumentError(msg.format(plan.levels, len(digits)))
    action_id = 0
    for level, (digit, radix) in enumerate(zip(digits, plan.radices)):
        digit = int(digit)
        if not 0 <= digit < radix:
            msg = 'digit {} at level {} outside [0, {}]'
            raise InvalidArgumentError(msg.format(digit, level + 1, radix - 1))
        action_id = action_id * radix + digit
    return action_id


def decompose(plan, action_id):
    """Inverse of compose(): extract the digits of ``action_id``."""
    action_id = int(action_id)
    if not 0 <= action_id < plan.capacity:
        msg = 'action id {} outside [0, {}]'
        raise InvalidArgumentError(msg.format(action_id, plan.capacity - 1))
    digits = []
    for radix in reversed(plan.radices):
        action_id, digit = divmod(action_id, radix)
        digits.append(digit)
    digits.reverse()
    return tuple(digits)
