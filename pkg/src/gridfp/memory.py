"""Experience memory, future-difference targets, and measurement normalization.

Experiences store raw measurements; normalization is applied when targets are
built and when measurements feed the network, so the normalizer can be
recalibrated without invalidating stored experience. Targets for offsets that
cross the episode end are masked out rather than extrapolated. A step becomes
sampleable once its episode has advanced at least the largest offset beyond
it, or has terminated; sampling is uniform with replacement over that set.

Append and sample may be called from different threads; a single internal
lock serializes them.
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

# fixed scales used by the paper-scale preset: (ammo, health, frags)
DOOM_SCALES = (7.5, 30.0, 1.0)

DEFAULT_OFFSETS = (1, 2, 4, 8, 16, 32)


class NoEligibleExperience(RuntimeError):
    """Sampling was attempted before any experience became eligible."""


class MeasurementNormalizer:
    """Per-measurement positive scales; normalize divides, denormalize multiplies.

    Calibration rounds scales to powers of two, which makes the round trip
    bit-exact for every finite input.
    """

    def __init__(self, scales):
        scales = np.asarray(scales, dtype=np.float32)
        if scales.ndim != 1 or np.any(scales <= 0):
            raise ValueError(f"scales must be a 1-d positive vector, got {scales!r}")
        self.scales = scales

    def normalize(self, m: np.ndarray) -> np.ndarray:
        return np.asarray(m, dtype=np.float32) / self.scales

    def denormalize(self, m: np.ndarray) -> np.ndarray:
        return np.asarray(m, dtype=np.float32) * self.scales

    def __repr__(self) -> str:
        return f"MeasurementNormalizer({self.scales.tolist()})"


def _pow2_round(x: float) -> float:
    return float(2.0 ** round(math.log2(x)))


def calibrate_normalizer(env, steps: int, rng: np.random.Generator) -> MeasurementNormalizer:
    """Scales from the measurement standard deviations under a uniform-random policy.

    Runs ``steps`` environment steps (resetting on terminals), takes the
    population standard deviation of each raw measurement over the visited
    states, rounds it to the nearest power of two, and falls back to 1 for
    near-constant measurements (std < 1e-6).
    """
    if steps < 1000:
        raise ValueError(f"calibration needs at least 1000 steps, got {steps}")
    seen = []
    obs = env.reset(rng)
    seen.append(np.asarray(obs.measurements, dtype=np.float64))
    while len(seen) < steps:
        obs, terminal = env.step(int(rng.integers(env.action_count)))
        seen.append(np.asarray(obs.measurements, dtype=np.float64))
        if terminal:
            obs = env.reset(rng)
    stds = np.std(np.asarray(seen), axis=0)
    scales = [1.0 if s < 1e-6 else _pow2_round(float(s)) for s in stds]
    return MeasurementNormalizer(scales)


@dataclass(slots=True)
class Experience:
    sensory: np.ndarray          # uint8 egocentric window
    measurements: np.ndarray     # raw measurement vector
    action: int
    goal_vector: np.ndarray      # flattened goal in force for the episode
    episode_id: int
    step_index: int
    terminal: bool


@dataclass(slots=True)
class Minibatch:
    sensory: np.ndarray       # (N, H, W, C) uint8
    measurements: np.ndarray  # (N, n_m) float32, normalized
    goals: np.ndarray         # (N, dim_f) float32
    actions: np.ndarray       # (N,) int64
    targets: np.ndarray       # (N, dim_f) float32
    masks: np.ndarray         # (N, dim_f) float32 in {0, 1}


class _EpisodeRecord:
    __slots__ = ("measurements", "ids", "open", "live")

    def __init__(self):
        self.measurements: list[np.ndarray] = []
        self.ids: list[int] = []
        self.open = True
        self.live = 0


class ExperienceMemory:
    """FIFO ring buffer of experiences with per-episode measurement trajectories."""

    def __init__(self, capacity: int, offsets=DEFAULT_OFFSETS,
                 predict_indices: tuple[int, ...] | None = None,
                 normalizer: MeasurementNormalizer | None = None):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        offsets = tuple(int(t) for t in offsets)
        if not offsets or any(t <= 0 for t in offsets) or list(offsets) != sorted(set(offsets)):
            raise ValueError(f"offsets must be strictly increasing positive integers, got {offsets}")
        self.capacity = capacity
        self.offsets = offsets
        self.max_offset = offsets[-1]
        self.predict_indices = None if predict_indices is None else tuple(predict_indices)
        self.normalizer = normalizer
        self._buffer: deque[Experience] = deque()
        self._episodes: dict[int, _EpisodeRecord] = {}
        self._eligible: list[int] = []
        self._appended = 0
        self._since_compact = 0
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._buffer)

    @property
    def appended_total(self) -> int:
        return self._appended

    @property
    def _first_id(self) -> int:
        return self._appended - len(self._buffer)

    def experience_at(self, index: int) -> Experience:
        return self._buffer[index]

    def append(self, exp: Experience) -> None:
        with self._lock:
            rec = self._episodes.get(exp.episode_id)
            if rec is None:
                rec = self._episodes[exp.episode_id] = _EpisodeRecord()
            if exp.step_index != len(rec.measurements):
                raise ValueError(
                    f"episode {exp.episode_id}: got step {exp.step_index}, expected {len(rec.measurements)}"
                )
            exp_id = self._appended
            rec.measurements.append(np.asarray(exp.measurements, dtype=np.float32))
            rec.ids.append(exp_id)
            rec.live += 1
            self._buffer.append(exp)
            self._appended += 1

            if exp.step_index >= self.max_offset:
                self._mark_eligible(rec.ids[exp.step_index - self.max_offset])
            if exp.terminal:
                rec.open = False
                for s in range(max(0, exp.step_index - self.max_offset + 1), exp.step_index + 1):
                    self._mark_eligible(rec.ids[s])

            if len(self._buffer) > self.capacity:
                evicted = self._buffer.popleft()
                evrec = self._episodes[evicted.episode_id]
                evrec.live -= 1
                if evrec.live == 0 and not evrec.open:
                    del self._episodes[evicted.episode_id]

            self._since_compact += 1
            if self._since_compact >= self.capacity:
                first = self._first_id
                self._eligible = [i for i in self._eligible if i >= first]
                self._since_compact = 0

    def _mark_eligible(self, exp_id: int) -> None:
        if exp_id >= self._first_id:
            self._eligible.append(exp_id)

    def compute_targets(self, index: int, offsets=None) -> tuple[np.ndarray, np.ndarray]:
        """Future-difference target and mask for the experience at buffer position ``index``.

        Block i of the target is normalized(m at step t+offsets[i]) minus
        normalized(m at step t) when that future step exists within the same
        episode; otherwise the block is zero with mask zero.
        """
        with self._lock:
            if not 0 <= index < len(self._buffer):
                raise IndexError(f"index {index} out of range for memory of {len(self._buffer)}")
            return self._targets_for(self._buffer[index], offsets)

    def _norm(self, m: np.ndarray) -> np.ndarray:
        if self.normalizer is None:
            return np.asarray(m, dtype=np.float32)
        return self.normalizer.normalize(m)

    def _targets_for(self, exp: Experience, offsets=None) -> tuple[np.ndarray, np.ndarray]:
        offsets = self.offsets if offsets is None else tuple(offsets)
        rec = self._episodes[exp.episode_id]
        sel = self.predict_indices
        m_now = self._norm(exp.measurements)
        if sel is not None:
            m_now = m_now[list(sel)]
        n_pred = m_now.shape[0]
        f = np.zeros(len(offsets) * n_pred, dtype=np.float32)
        mask = np.zeros_like(f)
        for i, tau in enumerate(offsets):
            fut = exp.step_index + tau
            if fut < len(rec.measurements):
                m_fut = self._norm(rec.measurements[fut])
                if sel is not None:
                    m_fut = m_fut[list(sel)]
                f[i * n_pred : (i + 1) * n_pred] = m_fut - m_now
                mask[i * n_pred : (i + 1) * n_pred] = 1.0
        return f, mask

    def eligible_count(self) -> int:
        with self._lock:
            first = self._first_id
            return sum(1 for i in self._eligible if i >= first)

    def _draw_eligible(self, rng: np.random.Generator) -> Experience:
        first = self._first_id
        while self._eligible:
            pos = int(rng.integers(len(self._eligible)))
            exp_id = self._eligible[pos]
            if exp_id >= first:
                return self._buffer[exp_id - first]
            # stale (evicted) entry: swap-pop and redraw
            self._eligible[pos] = self._eligible[-1]
            self._eligible.pop()
        raise NoEligibleExperience("no eligible experiences to sample")

    def sample_minibatch(self, batch_size: int, rng: np.random.Generator) -> Minibatch:
        """Uniform with-replacement sample over eligible experiences."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        with self._lock:
            if not self._buffer:
                raise NoEligibleExperience("cannot sample from an empty memory")
            picked = [self._draw_eligible(rng) for _ in range(batch_size)]
            pairs = [self._targets_for(exp) for exp in picked]
        return Minibatch(
            sensory=np.stack([e.sensory for e in picked]),
            measurements=np.stack([self._norm(e.measurements) for e in picked]),
            goals=np.stack([e.goal_vector for e in picked]),
            actions=np.asarray([e.action for e in picked], dtype=np.int64),
            targets=np.stack([f for f, _ in pairs]),
            masks=np.stack([m for _, m in pairs]),
        )
