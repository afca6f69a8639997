"""Goal-conditioned future-measurement prediction agents in grid worlds.

An agent observes an egocentric sensory grid plus a low-dimensional
measurement vector, learns to predict future measurement differences
conditioned on observation, action, and goal, and acts by maximizing the
goal-weighted prediction. The numerics (backprop, Adam) are self-contained;
the hot convolution kernels have a compiled core with a NumPy fallback.
"""

from . import kernels
from .agent import EpsilonSchedule, GoalSpec, build_goal_vector, epsilon_value, sample_goal, select_action
from .gridworld import (GridWorld, GridWorldConfig, Observation, load_map,
                        make_appearance_split, parse_map, scenario_config)
from .memory import (DOOM_SCALES, Experience, ExperienceMemory, MeasurementNormalizer,
                     calibrate_normalizer)
from .predictor import (PredictorConfig, PredictorNet, a1_config, build_predictor,
                        choose_action, desk_config, desk_large_config)
from .tensor import ParameterStore, Tensor, he_init
from .trainer import (EvalResult, TrainConfig, TrainReport, evaluate, load_checkpoint,
                      save_checkpoint, train)

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Active kernel backend: "compiled" or "numpy"."""
    return kernels.backend()
