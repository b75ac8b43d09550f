"""Asymmetric actor-critic experiments on tabular POMDPs."""
# isort:skip_file
__version__ = "0.1.0"

from .pomdp import (  # noqa F401
    NO_TERMINALS,
    DiscreteDistribution,
    History,
    Pomdp,
    TerminalSpec,
    Trajectory,
    sample_episode,
    validate,
)
from .envs import ENVIRONMENTS, make_environment  # noqa F401
from .oracle import (  # noqa F401
    Belief,
    BiasReport,
    belief_of_history,
    belief_update,
    bias_report,
    v_history,
    v_history_state,
    v_state_reactive,
    v_timed_state,
)
from .gradients import GradientTable, exact_policy_gradient  # noqa F401
from .agent import AgentNets, CriticKind  # noqa F401
from .config import TrainConfig  # noqa F401
from .trainer import LearningCurve, train  # noqa F401
from .harness import (  # noqa F401
    ExperimentSpec,
    GridSearchSpec,
    grid_search,
    run_experiment,
)
