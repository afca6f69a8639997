"""The training loop: actors collecting experience, periodic regression updates,
schedules, evaluation, and checkpointing.

Single-actor runs are strictly deterministic given the seed (bit-identical
parameters, reports, and checkpoints). Multi-actor mode runs actor threads
that share only the experience memory and read-only parameter snapshots
published at update boundaries; those runs are not required to be
reproducible. RNG streams: net init uses ``seed``, actor i (1-based) uses
``seed + i``, minibatch sampling ``seed + 1000003``, normalizer calibration
``seed + 2000003``, evaluation ``seed + 3000003 + eval ordinal``.
"""

from __future__ import annotations

import csv
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .agent import (DEFAULT_OFFSET_COEFFS, EpsilonSchedule, GoalSpec, build_goal_vector,
                    epsilon_value, sample_goal, select_action)
from .layers import masked_mse_loss
from .memory import (DEFAULT_OFFSETS, Experience, ExperienceMemory, MeasurementNormalizer,
                     NoEligibleExperience, calibrate_normalizer)
from .predictor import PredictorConfig, PredictorNet, build_predictor, choose_action

_SAMPLER_SEED = 1_000_003
_CALIBRATION_SEED = 2_000_003
_EVAL_SEED = 3_000_003


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2_000_000
    memory_capacity: int = 20_000
    batch_size: int = 64
    update_interval: int = 64          # one Adam step per this many appended experiences
    actor_count: int = 8
    learning_rate: float = 1e-4
    lr_decay_points: tuple[float, ...] = (0.6, 0.85)  # fractions of total updates
    lr_decay_factor: float = 0.3
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    goal: GoalSpec | None = None       # base/test goal; None -> unit weights
    goal_regime: str = "fixed"
    offsets: tuple[int, ...] = DEFAULT_OFFSETS
    predict_indices: tuple[int, ...] | None = None  # measurement subset to predict
    eval_interval: int = 50_000
    eval_episodes: int = 20
    normalizer_steps: int = 5_000
    normalizer_scales: tuple[float, ...] | None = None  # skip calibration when set
    seed: int = 0

    def __post_init__(self):
        if min(self.memory_capacity, self.batch_size, self.update_interval) < 1:
            raise ValueError("memory_capacity, batch_size and update_interval must be positive")
        if self.total_steps < 0 or self.actor_count < 1:
            raise ValueError("total_steps must be >= 0 and actor_count >= 1")


@dataclass(frozen=True)
class EvalPoint:
    step: int
    epsilon: float
    learning_rate: float
    means: tuple[float, ...]
    stds: tuple[float, ...]
    wall_clock: float
    steps_per_sec: float


@dataclass
class TrainReport:
    measurement_names: tuple[str, ...]
    rows: list[EvalPoint] = field(default_factory=list)
    normalizer_scales: tuple[float, ...] = ()

    def csv_header(self) -> list[str]:
        cols = ["step", "eps", "lr"]
        for name in self.measurement_names:
            cols += [f"{name}_mean", f"{name}_std"]
        return cols

    def to_csv(self, path) -> None:
        """Deterministic columns only (timing lives in the rows, not the CSV)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.csv_header())
            for row in self.rows:
                cells = [row.step, f"{row.epsilon:.6f}", f"{row.learning_rate:.3e}"]
                for mean, std in zip(row.means, row.stds):
                    cells += [f"{mean:.6f}", f"{std:.6f}"]
                writer.writerow(cells)


@dataclass(frozen=True)
class EvalResult:
    measurement_names: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    episodes: int

    def mean_of(self, name: str) -> float:
        return self.means[self.measurement_names.index(name)]


def evaluate(net: PredictorNet, env_factory, goal: GoalSpec, episodes: int, seed: int,
             normalizer: MeasurementNormalizer | None = None) -> EvalResult:
    """Greedy rollouts (epsilon=0); terminal measurement mean/std per component."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    env = env_factory()
    rng = np.random.default_rng(seed)
    goal_vec = build_goal_vector(goal, net.config.offset_count, net.config.target_count)
    finals = []
    for _ in range(episodes):
        obs = env.reset(rng)
        terminal = False
        while not terminal:
            m_in = normalizer.normalize(obs.measurements) if normalizer else obs.measurements
            action = choose_action(net.forward(obs.sensory, m_in, goal_vec), goal_vec)
            obs, terminal = env.step(action)
        finals.append(obs.measurements.astype(np.float64))
    arr = np.asarray(finals)
    return EvalResult(
        measurement_names=env.measurement_names,
        means=tuple(float(v) for v in arr.mean(axis=0)),
        stds=tuple(float(v) for v in arr.std(axis=0)),
        episodes=episodes,
    )


def _resolve_goal(config: TrainConfig, n_predicted: int) -> GoalSpec:
    if config.goal is not None:
        if len(config.goal.weights) != n_predicted:
            raise ValueError(f"goal has {len(config.goal.weights)} weights, expected {n_predicted}")
        if len(config.goal.offset_coeffs) != len(config.offsets):
            raise ValueError("goal offset coefficients must match the configured offsets")
        return config.goal
    if len(config.offsets) == len(DEFAULT_OFFSET_COEFFS):
        coeffs = DEFAULT_OFFSET_COEFFS
    else:
        coeffs = (0.0,) * (len(config.offsets) - 1) + (1.0,)
    return GoalSpec(weights=(1.0,) * n_predicted, offset_coeffs=coeffs)


class _Trainer:
    def __init__(self, env_factory, predictor_config: PredictorConfig, config: TrainConfig,
                 progress: bool):
        self.env_factory = env_factory
        self.config = config
        self.progress = progress

        if config.normalizer_scales is not None:
            self.normalizer = MeasurementNormalizer(config.normalizer_scales)
        elif config.normalizer_steps > 0:
            self.normalizer = calibrate_normalizer(
                env_factory(), config.normalizer_steps, np.random.default_rng(config.seed + _CALIBRATION_SEED))
        else:
            self.normalizer = None

        self.memory = ExperienceMemory(config.memory_capacity, config.offsets,
                                       config.predict_indices, self.normalizer)
        self.net = build_predictor(predictor_config, np.random.default_rng(config.seed))
        probe = env_factory()
        n_meas = len(probe.measurement_names)
        if predictor_config.measurement_count != n_meas:
            raise ValueError(f"predictor expects {predictor_config.measurement_count} measurements, "
                             f"env provides {n_meas}")
        if predictor_config.action_count != probe.action_count:
            raise ValueError(f"predictor expects {predictor_config.action_count} actions, "
                             f"env provides {probe.action_count}")
        n_pred = n_meas if config.predict_indices is None else len(config.predict_indices)
        if predictor_config.target_count != n_pred or predictor_config.offset_count != len(config.offsets):
            raise ValueError("predictor head size must match predicted measurements x offsets")
        self.base_goal = _resolve_goal(config, n_pred)

        self.sampler_rng = np.random.default_rng(config.seed + _SAMPLER_SEED)
        self.total_updates = max(config.total_steps // config.update_interval, 1)
        self.updates_done = 0
        self.steps_done = 0
        self.episode_counter = 0
        self.report = TrainReport(
            measurement_names=probe.measurement_names,
            normalizer_scales=tuple(float(s) for s in self.normalizer.scales) if self.normalizer else (),
        )
        self._t0 = time.perf_counter()
        self._lock = threading.Lock()          # steps/episode counters (multi-actor)
        self._snapshot_version = 0
        self._snapshot_values = None
        self._stop = threading.Event()

    # -- shared helpers ------------------------------------------------------

    def current_lr(self) -> float:
        passed = sum(1 for frac in self.config.lr_decay_points
                     if self.updates_done >= frac * self.total_updates)
        return self.config.learning_rate * self.config.lr_decay_factor**passed

    def norm_m(self, m: np.ndarray) -> np.ndarray:
        return self.normalizer.normalize(m) if self.normalizer else m

    def update_once(self) -> float:
        cfg = self.config
        batch = self.memory.sample_minibatch(cfg.batch_size, self.sampler_rng)
        n = batch.actions.shape[0]
        preds = self.net.forward(batch.sensory.astype(np.float32), batch.measurements, batch.goals)
        picked = preds[np.arange(n), batch.actions]
        loss, dpicked = masked_mse_loss(picked, batch.targets, batch.masks)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite training loss {loss!r} at update {self.updates_done}, "
                               f"step {self.steps_done}")
        grad = np.zeros_like(preds)
        grad[np.arange(n), batch.actions] = dpicked
        self.net.backward(grad)
        self.net.store.adam_step(self.current_lr())
        self.updates_done += 1
        return loss

    def maybe_update(self) -> None:
        cfg = self.config
        while self.memory.appended_total >= (self.updates_done + 1) * cfg.update_interval:
            try:
                self.update_once()
            except NoEligibleExperience:
                # warmup: nothing sampleable yet; re-attempt at the next boundary
                break

    def run_eval(self) -> None:
        cfg = self.config
        result = evaluate(self.net, self.env_factory, self.base_goal, cfg.eval_episodes,
                          cfg.seed + _EVAL_SEED + len(self.report.rows), self.normalizer)
        elapsed = time.perf_counter() - self._t0
        point = EvalPoint(
            step=self.steps_done,
            epsilon=epsilon_value(cfg.epsilon, self.steps_done, cfg.total_steps),
            learning_rate=self.current_lr(),
            means=result.means,
            stds=result.stds,
            wall_clock=elapsed,
            steps_per_sec=self.steps_done / elapsed if elapsed > 0 else 0.0,
        )
        self.report.rows.append(point)
        if self.progress:
            stats = " ".join(f"{n}={m:.1f}±{s:.1f}" for n, m, s in
                             zip(self.report.measurement_names, point.means, point.stds))
            print(f"step {point.step} eps {point.epsilon:.3f} lr {point.learning_rate:.1e} "
                  f"{stats} ({point.steps_per_sec:.0f} steps/s)", flush=True)

    # -- single-actor deterministic loop -------------------------------------

    def run_single(self) -> None:
        cfg = self.config
        env = self.env_factory()
        actor_rng = np.random.default_rng(cfg.seed + 1)
        dim_f = self.net.config.dim_f
        next_eval = cfg.eval_interval

        goal_vec = np.zeros(dim_f, dtype=np.float32)
        obs = None
        step_index = 0
        while self.steps_done < cfg.total_steps:
            if obs is None:
                goal_spec = sample_goal(cfg.goal_regime, self.base_goal, actor_rng)
                goal_vec = build_goal_vector(goal_spec, len(cfg.offsets))
                obs = env.reset(actor_rng)
                step_index = 0
            eps = epsilon_value(cfg.epsilon, self.steps_done, cfg.total_steps)
            action = select_action(self.net, obs.sensory, self.norm_m(obs.measurements),
                                   goal_vec, eps, actor_rng)
            self.memory.append(Experience(obs.sensory, obs.measurements, action, goal_vec,
                                          self.episode_counter, step_index, terminal=False))
            self.maybe_update()
            obs, terminal = env.step(action)
            self.steps_done += 1
            step_index += 1
            if terminal:
                self.memory.append(Experience(obs.sensory, obs.measurements, 0, goal_vec,
                                              self.episode_counter, step_index, terminal=True))
                self.maybe_update()
                self.episode_counter += 1
                obs = None
            if self.steps_done >= next_eval:
                self.run_eval()
                next_eval += cfg.eval_interval

    # -- multi-actor mode -----------------------------------------------------

    def _publish(self) -> None:
        self._snapshot_values = self.net.store.copy_values()
        self._snapshot_version += 1

    def _actor_loop(self, actor_index: int) -> None:
        cfg = self.config
        env = self.env_factory()
        rng = np.random.default_rng(cfg.seed + actor_index)
        local = self.net.clone()
        local_version = self._snapshot_version
        local.store.load_values(self._snapshot_values)
        obs = None
        step_index = 0
        goal_vec = None
        while not self._stop.is_set():
            if obs is None:
                goal_spec = sample_goal(cfg.goal_regime, self.base_goal, rng)
                goal_vec = build_goal_vector(goal_spec, len(cfg.offsets))
                obs = env.reset(rng)
                step_index = 0
            if local_version != self._snapshot_version:
                local_version = self._snapshot_version
                local.store.load_values(self._snapshot_values)
            with self._lock:
                if self.steps_done >= cfg.total_steps:
                    break
                self.steps_done += 1
                episode = self.episode_counter
            eps = epsilon_value(cfg.epsilon, self.steps_done, cfg.total_steps)
            action = select_action(local, obs.sensory, self.norm_m(obs.measurements),
                                   goal_vec, eps, rng)
            self.memory.append(Experience(obs.sensory, obs.measurements, action, goal_vec,
                                          episode, step_index, terminal=False))
            obs, terminal = env.step(action)
            step_index += 1
            if terminal:
                self.memory.append(Experience(obs.sensory, obs.measurements, 0, goal_vec,
                                              episode, step_index, terminal=True))
                with self._lock:
                    self.episode_counter += 1
                obs = None

    def run_multi(self) -> None:
        cfg = self.config
        self._publish()
        actors = [threading.Thread(target=self._actor_loop, args=(i + 1,), daemon=True)
                  for i in range(cfg.actor_count)]
        for t in actors:
            t.start()
        next_eval = cfg.eval_interval
        try:
            while True:
                with self._lock:
                    done = self.steps_done
                before = self.updates_done
                self.maybe_update()
                if self.updates_done != before:
                    self._publish()
                if done >= next_eval:
                    self.run_eval()
                    next_eval += cfg.eval_interval
                if done >= cfg.total_steps:
                    break
                time.sleep(0.001)
        finally:
            self._stop.set()
            for t in actors:
                t.join()


def train(env_factory, predictor_config: PredictorConfig, config: TrainConfig,
          progress: bool = False) -> tuple[PredictorNet, TrainReport]:
    """Run the full training loop; returns the trained net and the report."""
    trainer = _Trainer(env_factory, predictor_config, config, progress)
    if config.total_steps > 0:
        if config.actor_count == 1:
            trainer.run_single()
        else:
            trainer.run_multi()
        if not trainer.report.rows or trainer.report.rows[-1].step < trainer.steps_done:
            trainer.run_eval()
    return trainer.net, trainer.report


def save_checkpoint(net: PredictorNet, path, extra_header: dict[str, str] | None = None) -> None:
    """Write the binary parameter file plus the key=value config sidecar."""
    checkpoint.save_params(path, {name: t.values for name, t in net.store.params.items()})
    header = net.config.to_header()
    if extra_header:
        header.update(extra_header)
    checkpoint.write_config_text(checkpoint.config_path(path), header)


def load_checkpoint(path) -> PredictorNet:
    """Rebuild a net from a checkpoint; validates magic, version, and shapes."""
    params = checkpoint.load_params(path)
    header = checkpoint.read_config_text(checkpoint.config_path(path))
    net = build_predictor(PredictorConfig.from_header(header), np.random.default_rng(0))
    expected = net.store.params
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise checkpoint.CheckpointError(
            f"{path}: parameter names do not match config (missing {missing}, unexpected {extra})")
    for name, tensor in expected.items():
        if params[name].shape != tensor.values.shape:
            raise checkpoint.CheckpointError(
                f"{path}: shape mismatch for {name!r}: file {params[name].shape}, config {tensor.values.shape}")
    net.store.load_values(params)
    return net


def read_checkpoint_header(path) -> dict[str, str]:
    return checkpoint.read_config_text(checkpoint.config_path(path))
