from ._version import __version__
from .action_algebra import DecompositionPlan, compose, decompose, plan_decomposition
from .scenario import ScenarioSpec, load_scenario
from .pentest_env import PentestEnv, oracle_optimal
from .agents import AgentGroup, build_baseline, build_group
from .trainer import RunConfig, compare, evaluate, train
from . import errors
