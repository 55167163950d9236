"""
Attacker action types.  Every type knows its preconditions and what it
reveals; the environment turns the returned Outcome into a reward.

Types are grouped by kind and kept in registration order; a scenario's
``m``, ``n`` and ``o`` counts select the first m host-to-host, n
host-to-subnet and o on-host types.
"""

import abc
import dataclasses
import enum


class Kind(enum.Enum):
    """What an action type targets."""
    HOST_TO_HOST = 'host'
    HOST_TO_SUBNET = 'subnet'
    ON_HOST = 'local'


class Outcome(enum.Enum):
    INVALID = 0
    # preconditions held but the attempt did not succeed
    FAILED = 1
    # valid, nothing worth a reward
    NEUTRAL = 2
    # a non-flag host was compromised
    PIVOT = 3
    # a flag host was compromised
    FLAG = 4


@dataclasses.dataclass(frozen=True)
class Knowledge:
    """What the attacker knows and holds.  Host sets are int bitmasks (bit i
    is host i); ``reachable`` is a bitmask over subnets."""
    discovered: int = 0
    service_scanned: int = 0
    os_known: int = 0
    compromised: int = 0
    reachable: int = 0
    captured: int = 0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _has(mask, i):
    return (mask >> i) & 1 == 1


# mapping of class name: ActionType subclass, in registration order.  Built up
# with the register() decorator.
action_types = {}


def register(cls):
    """Register a class as an attacker action type."""
    action_types[cls.__name__] = cls
    return cls


def types_of_kind(kind):
    return [cls for cls in action_types.values() if cls.kind is kind]


class ActionType(abc.ABC):
    """Class which knows how to apply one kind of attacker action."""

    kind = None
    # False when the type can never change hosts' discovered, scanned or
    # compromised bits; the oracle skips those.
    affects_progress = True

    @classmethod
    @abc.abstractmethod
    def apply(cls, scenario, knowledge, source, target, rng=None):
        """
        Apply the action from ``source`` to ``target`` (None for on-host
        types).  ``rng`` draws stochastic success; None means every attempt
        whose preconditions hold succeeds.

        Returns ``(new_knowledge, Outcome)``.
        """


@register
class ServiceScan(ActionType):
    """TCP SYN sweep of a discovered host."""
    kind = Kind.HOST_TO_HOST

    @classmethod
    def apply(cls, scenario, knowledge, source, target, rng=None):
        if not (_has(knowledge.compromised, source) and _has(knowledge.discovered, target)):
            return knowledge, Outcome.INVALID
        k = knowledge.replace(service_scanned=knowledge.service_scanned | (1 << target))
        return k, Outcome.NEUTRAL


@register
class ExploitSSH(ActionType):
    """Brute-force SSH credentials for remote code execution on the target."""
    kind = Kind.HOST_TO_HOST

    @classmethod
    def apply(cls, scenario, knowledge, source, target, rng=None):
        if not (_has(knowledge.compromised, source)
                and _has(knowledge.service_scanned, target)
                and not _has(knowledge.compromised, target)
                and scenario.subnets_linked(scenario.subnet_of[source],
                                            scenario.subnet_of[target])):
            return knowledge, Outcome.INVALID
        if rng is not None and not rng.random() < scenario.exploit_prob:
            return knowledge, Outcome.FAILED
        bit = 1 << target
        k = knowledge.replace(compromised=knowledge.compromised | bit,
                              discovered=knowledge.discovered | bit)
        if bit & scenario.flag_mask:
            return k.replace(captured=k.captured | bit), Outcome.FLAG
        return k, Outcome.PIVOT


@register
class SubnetScan(ActionType):
    """ICMP ping sweep of a subnet linked to the source's subnet."""
    kind = Kind.HOST_TO_SUBNET

    @classmethod
    def apply(cls, scenario, knowledge, source, target, rng=None):
        if not (_has(knowledge.compromised, source)
                and scenario.subnets_linked(scenario.subnet_of[source], target)):
            return knowledge, Outcome.INVALID
        k = knowledge.replace(discovered=knowledge.discovered | scenario.members[target],
                              reachable=knowledge.reachable | (1 << target))
        return k, Outcome.NEUTRAL


@register
class OSInfo(ActionType):
    kind = Kind.ON_HOST
    affects_progress = False

    @classmethod
    def apply(cls, scenario, knowledge, source, target=None, rng=None):
        if not _has(knowledge.compromised, source):
            return knowledge, Outcome.INVALID
        return knowledge.replace(os_known=knowledge.os_known | (1 << source)), Outcome.NEUTRAL


@register
class PassiveObserve(ActionType):
    """Sniff traffic on the host's subnet, discovering its neighbours."""
    kind = Kind.ON_HOST

    @classmethod
    def apply(cls, scenario, knowledge, source, target=None, rng=None):
        if not _has(knowledge.compromised, source):
            return knowledge, Outcome.INVALID
        members = scenario.members[scenario.subnet_of[source]]
        return knowledge.replace(discovered=knowledge.discovered | members), Outcome.NEUTRAL


@register
class NetworkInfo(ActionType):
    """Read routing information on the host: every subnet linked to the
    host's subnet becomes reachable."""
    kind = Kind.ON_HOST
    affects_progress = False

    @classmethod
    def apply(cls, scenario, knowledge, source, target=None, rng=None):
        if not _has(knowledge.compromised, source):
            return knowledge, Outcome.INVALID
        linked = scenario.linked_mask[scenario.subnet_of[source]]
        return knowledge.replace(reachable=knowledge.reachable | linked), Outcome.NEUTRAL


MAX_TYPES = {kind: len(types_of_kind(kind)) for kind in Kind}
