import dataclasses

import numpy as np
import pytest

from hadrl.action_algebra import plan_decomposition
from hadrl.action_types import ExploitSSH, Knowledge, OSInfo, Outcome, PassiveObserve, ServiceScan
from hadrl.errors import ContractError, InvalidArgumentError, ResourceError, UnreachableFlagError
from hadrl.pentest_env import (PentestEnv, build_scenario, describe_entry, enumerate_catalog,
                               oracle_optimal, total_actions)
from hadrl.scenario import ScenarioSpec, load_scenario

# catalog ids in the tiny preset
SUBNET_SCAN_0_1 = 61
SERVICE_SCAN_0_4 = 3
EXPLOIT_0_4 = 33
PASSIVE_0 = 78
SERVICE_SCAN_0_1 = 0
EXPLOIT_0_1 = 30


@pytest.mark.parametrize('name', ['tiny', 's6', 's16', 's24', 's50'])
def test_catalog_size(name):
    env = build_scenario(name)
    s = env.scenario
    p, q = s.hosts, s.subnets
    assert total_actions(env) == s.m * p * (p - 1) + s.n * p * q + s.o * p
    assert len(set(env.catalog)) == len(env.catalog)


def test_catalog_order(tiny):
    catalog = enumerate_catalog(tiny)
    assert describe_entry(catalog[0]) == 'ServiceScan 0 1'
    assert describe_entry(catalog[SERVICE_SCAN_0_4]) == 'ServiceScan 0 4'
    assert describe_entry(catalog[30]) == 'ExploitSSH 0 1'
    assert describe_entry(catalog[SUBNET_SCAN_0_1]) == 'SubnetScan 0 1'
    assert describe_entry(catalog[72]) == 'OSInfo 0 -'
    assert describe_entry(catalog[PASSIVE_0]) == 'PassiveObserve 0 -'
    assert describe_entry(catalog[-1]) == 'PassiveObserve 5 -'


def test_on_host_types_beyond_two():
    s = ScenarioSpec(hosts=2, subnets=1, subnet_of=(0, 0), flag_hosts=(1,), foothold=0, o=3)
    catalog = enumerate_catalog(s)
    assert len(catalog) == s.total_actions == 2 * 2 + 2 + 3 * 2
    assert describe_entry(catalog[-1]) == 'NetworkInfo 1 -'


def test_initial_observation(tiny_env):
    obs = tiny_env.reset(seed=0)
    assert obs.shape == (26,)
    assert obs.dtype == np.float64
    expected = np.zeros(26)
    expected[0] = 1       # discovered host 0
    expected[18] = 1      # compromised host 0
    expected[24] = 1      # subnet 0 reachable
    np.testing.assert_array_equal(obs, expected)


def test_optimal_sequence(tiny_env):
    tiny_env.reset(seed=0)
    _, r1, done1, _ = tiny_env.step(SUBNET_SCAN_0_1)
    _, r2, done2, _ = tiny_env.step(SERVICE_SCAN_0_4)
    obs, r3, done3, info = tiny_env.step(EXPLOIT_0_4)
    assert (r1, r2, r3) == (0.0, 0.0, 10.0)
    assert not done1 and not done2 and done3
    assert info['outcome'] is Outcome.FLAG
    assert info['flags_captured']
    assert obs[18 + 4] == 1


def test_exploit_before_scan_is_invalid(tiny_env):
    obs = tiny_env.reset(seed=0)
    after, reward, done, info = tiny_env.step(EXPLOIT_0_4)
    assert reward == -0.1
    assert info['outcome'] is Outcome.INVALID
    np.testing.assert_array_equal(obs, after)
    assert not done


def test_dead_zone_id_is_invalid(tiny_env):
    tiny_env.reset(seed=0)
    assert tiny_env.decode(85) is None
    _, reward, _, info = tiny_env.step(85)
    assert reward == -0.1
    assert info['action'] is None


def test_negative_id(tiny_env):
    tiny_env.reset(seed=0)
    with pytest.raises(InvalidArgumentError):
        tiny_env.step(-1)


def test_step_contract(tiny_env):
    with pytest.raises(ContractError):
        tiny_env.step(0)
    tiny_env.reset(seed=0)
    for _ in range(3):
        tiny_env.step(SUBNET_SCAN_0_1)
    tiny_env.step(SERVICE_SCAN_0_4)
    *_, done, _ = tiny_env.step(EXPLOIT_0_4)
    assert done
    with pytest.raises(ContractError):
        tiny_env.step(0)


def test_step_limit(tiny_env):
    tiny_env.reset(seed=0)
    done = False
    steps = 0
    while not done:
        _, _, done, info = tiny_env.step(EXPLOIT_0_4)
        steps += 1
    assert steps == tiny_env.scenario.step_limit == 30
    assert not info['flags_captured']


def test_exploiting_own_host_is_invalid(tiny_env):
    tiny_env.reset(seed=0)
    tiny_env.step(PASSIVE_0)
    tiny_env.step(SERVICE_SCAN_0_1)
    _, reward, _, info = tiny_env.step(EXPLOIT_0_1)
    assert info['outcome'] is Outcome.PIVOT
    assert reward == 0.2
    _, reward, _, info = tiny_env.step(EXPLOIT_0_1)
    assert info['outcome'] is Outcome.INVALID


def _exploit_outcomes(env, seed, attempts=40):
    env.reset(seed=seed)
    env.step(PASSIVE_0)
    env.step(SERVICE_SCAN_0_1)
    outcomes = []
    for _ in range(attempts):
        _, reward, _, info = env.step(EXPLOIT_0_1)
        outcomes.append((info['outcome'], reward))
        if info['outcome'] is not Outcome.FAILED:
            break
    return outcomes


def test_stochastic_exploit_is_seeded(tiny):
    env = PentestEnv(tiny.with_exploit_prob(0.3))
    first = _exploit_outcomes(env, seed=5)
    assert _exploit_outcomes(env, seed=5) == first
    assert all(o is Outcome.FAILED and r == 0.0 for o, r in first[:-1])
    assert first[-1] == (Outcome.PIVOT, 0.2)


def test_failures_happen_at_the_configured_rate(tiny):
    env = PentestEnv(tiny.with_exploit_prob(0.5))
    failures = sum(len(_exploit_outcomes(env, seed=s)) - 1 for s in range(2000))
    # geometric with p = 0.5: mean 1 and variance 2 per seed, so 2000 +- 4 * sqrt(4000)
    assert 1747 < failures < 2253


def test_action_type_preconditions(tiny):
    k = Knowledge(discovered=1, compromised=1, reachable=1)
    assert ServiceScan.apply(tiny, k, 1, 0)[1] is Outcome.INVALID
    assert OSInfo.apply(tiny, k, 0, None)[0].os_known == 1
    k2, outcome = PassiveObserve.apply(tiny, k, 0, None)
    assert outcome is Outcome.NEUTRAL and k2.discovered == 0b111
    # forced success without an rng
    k3 = k2.replace(service_scanned=1 << 4, discovered=k2.discovered | 1 << 4)
    k4, outcome = ExploitSSH.apply(tiny, k3, 0, 4)
    assert outcome is Outcome.FLAG and k4.captured == 1 << 4


def _rollout_invariants(scenario, steps, rng):
    env = PentestEnv(scenario)
    r = scenario.rewards
    allowed = {r.flag, r.pivot, r.invalid, r.failed_exploit, 0.0}
    flags = len(scenario.flag_hosts)
    bound = r.flag * flags + r.pivot * (scenario.hosts - flags)
    fields = ('discovered', 'service_scanned', 'os_known', 'compromised', 'reachable',
              'captured')
    # draw from the whole capacity of a plan so dead-zone ids show up too
    capacity = plan_decomposition(scenario.total_actions, 10).capacity
    env.reset(seed=9)
    total = 0.0
    for _ in range(steps):
        before = env.state.knowledge
        obs, reward, done, info = env.step(int(rng.integers(0, capacity)))
        after = env.state.knowledge
        assert reward in allowed
        assert set(np.unique(obs)) <= {0.0, 1.0}
        assert info['steps'] <= scenario.step_limit
        assert done == (info['flags_captured'] or info['steps'] == scenario.step_limit)
        for f in fields:
            b, a = getattr(before, f), getattr(after, f)
            assert a & b == b
        total += reward
        assert total <= bound + 1e-9
        if done:
            env.reset()
            total = 0.0


def test_random_rollouts_keep_invariants(tiny, rng):
    _rollout_invariants(tiny.with_exploit_prob(0.7), 5000, rng)


@pytest.mark.parametrize('name', [
    'tiny', 's6', 's16',
    pytest.param('s24', marks=pytest.mark.slow),
    pytest.param('s50', marks=pytest.mark.slow),
])
def test_long_random_rollouts_on_presets(name):
    _rollout_invariants(load_scenario(name), 100000, np.random.default_rng(17))


def test_flag_placement_is_invisible(tiny, rng):
    elsewhere = dataclasses.replace(tiny, flag_hosts=(5,), exploit_prob=0.7)
    envs = [PentestEnv(tiny.with_exploit_prob(0.7)), PentestEnv(elsewhere)]
    for episode in range(50):
        observations = [env.reset(seed=episode) for env in envs]
        np.testing.assert_array_equal(*observations)
        done = False
        while not done:
            action = int(rng.integers(0, tiny.total_actions))
            (obs_a, r_a, done_a, info_a), (obs_b, r_b, done_b, info_b) = (
                env.step(action) for env in envs)
            np.testing.assert_array_equal(obs_a, obs_b)
            if Outcome.FLAG not in (info_a['outcome'], info_b['outcome']):
                assert r_a == r_b
            done = done_a or done_b


def test_action_count_with_one_type_per_kind():
    s = ScenarioSpec(hosts=24, subnets=8, subnet_of=[h // 3 for h in range(24)],
                     flag_hosts=(23,), foothold=0, m=1, n=1, o=1)
    assert s.total_actions == 768
    assert len(enumerate_catalog(s)) == 768


def test_oracle_tiny(tiny_env):
    assert oracle_optimal(tiny_env) == (3, 10.0)


def test_oracle_flag_in_foothold_subnet():
    s = ScenarioSpec(hosts=3, subnets=1, subnet_of=(0, 0, 0), flag_hosts=(2,), foothold=0)
    assert oracle_optimal(PentestEnv(s)) == (3, 10.0)


def test_oracle_two_flags():
    assert oracle_optimal(build_scenario('s6')) == (6, 20.0)


def test_second_flag_lengthens_the_optimal_path():
    two = load_scenario('s6')
    one = dataclasses.replace(two, flag_hosts=(3,))
    assert oracle_optimal(PentestEnv(one)) == (3, 10.0)
    assert oracle_optimal(PentestEnv(two))[0] > oracle_optimal(PentestEnv(one))[0]


def test_oracle_unreachable_flag():
    s = ScenarioSpec(hosts=2, subnets=2, subnet_of=(0, 1), flag_hosts=(1,), foothold=0,
                     adjacency=frozenset())
    with pytest.raises(UnreachableFlagError):
        oracle_optimal(PentestEnv(s))


def test_oracle_budget(tiny_env):
    with pytest.raises(ResourceError):
        oracle_optimal(tiny_env, budget=1)


def test_oracle_is_stable(tiny_env):
    assert oracle_optimal(tiny_env) == oracle_optimal(PentestEnv(load_scenario('tiny')))


@pytest.mark.slow
def test_oracle_mid_preset():
    assert oracle_optimal(build_scenario('s16')) == (6, 20.0)
