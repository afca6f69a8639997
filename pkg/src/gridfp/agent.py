"""Goal construction, the epsilon schedule, and epsilon-greedy action selection.

A goal pairs per-measurement weights with per-offset coefficients; the flat
goal vector is their outer product, offset-major, matching the layout of the
future-difference targets. Goals are resampled once per episode, never per
step, and the vector used at test time may differ from anything seen in
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predictor import PredictorNet, choose_action

DEFAULT_OFFSET_COEFFS = (0.0, 0.0, 0.0, 0.5, 0.5, 1.0)

GOAL_REGIMES = ("fixed", "uniform01", "uniform_sym")


@dataclass(frozen=True)
class GoalSpec:
    """Measurement weights (length = predicted measurements) and offset coefficients."""

    weights: tuple[float, ...]
    offset_coeffs: tuple[float, ...] = DEFAULT_OFFSET_COEFFS

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "offset_coeffs", tuple(float(c) for c in self.offset_coeffs))


def build_goal_vector(spec: GoalSpec, offset_count: int | None = None,
                      measurement_count: int | None = None) -> np.ndarray:
    """Flatten a GoalSpec to the vector g: g[i*n_m + j] = coeff[i] * weight[j]."""
    if offset_count is not None and len(spec.offset_coeffs) != offset_count:
        raise ValueError(f"goal has {len(spec.offset_coeffs)} offset coefficients, expected {offset_count}")
    if measurement_count is not None and len(spec.weights) != measurement_count:
        raise ValueError(f"goal has {len(spec.weights)} weights, expected {measurement_count}")
    coeffs = np.asarray(spec.offset_coeffs, dtype=np.float32)
    weights = np.asarray(spec.weights, dtype=np.float32)
    return np.outer(coeffs, weights).ravel()


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.02
    decay_fraction: float = 0.6  # horizon as a fraction of total training steps

    def __post_init__(self):
        if not 0.0 <= self.end <= self.start <= 1.0:
            raise ValueError(f"need 0 <= end <= start <= 1, got start={self.start}, end={self.end}")
        if not 0.0 < self.decay_fraction <= 1.0:
            raise ValueError(f"decay_fraction must be in (0, 1], got {self.decay_fraction}")


def epsilon_value(schedule: EpsilonSchedule, step: int, total_steps: int) -> float:
    """Linear interpolation start->end over the decay horizon, constant afterwards."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    horizon = schedule.decay_fraction * total_steps
    if horizon <= 0 or step >= horizon:
        return schedule.end
    return schedule.start + (schedule.end - schedule.start) * (step / horizon)


def select_action(net: PredictorNet, sensory: np.ndarray, measurements: np.ndarray,
                  goal_vector: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability epsilon, else greedy w.r.t. the goal.

    ``measurements`` must already be normalized (network-input convention).
    The random branch skips the forward pass entirely.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(net.config.action_count))
    return choose_action(net.forward(sensory, measurements, goal_vector), goal_vector)


def sample_goal(regime: str, base: GoalSpec, rng: np.random.Generator) -> GoalSpec:
    """Per-episode goal sampling; only the measurement weights are randomized."""
    if regime == "fixed":
        return base
    n = len(base.weights)
    if regime == "uniform01":
        weights = rng.uniform(0.0, 1.0, n)
    elif regime == "uniform_sym":
        weights = rng.uniform(-1.0, 1.0, n)
    else:
        raise ValueError(f"unknown goal regime {regime!r}; expected one of {GOAL_REGIMES}")
    return GoalSpec(weights=tuple(weights), offset_coeffs=base.offset_coeffs)
