"""The future-measurement predictor network.

Three input modules (perception conv stack, measurement stack, goal stack)
feed a joint representation that two parallel streams turn into per-action
predictions: an expectation stream for the action-averaged outcome and an
action stream whose per-column mean over actions is forced to zero by a
normalization layer, so each output row is ``normalized_action_row +
expectation``. Ablation flags can drop the normalization, the split, or the
measurement input entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2d, Dense, LeakyReLU
from .tensor import ParameterStore


@dataclass(frozen=True)
class PredictorConfig:
    height: int
    width: int
    channels: int
    measurement_count: int
    action_count: int
    offset_count: int = 6
    # head width factor: how many measurements the network predicts; equals
    # measurement_count unless the prediction targets are a subset
    target_measurement_count: int | None = None
    conv_layers: tuple[tuple[int, int, int], ...] = ((16, 3, 2), (32, 3, 2))  # (channels, kernel, stride)
    perception_width: int = 128
    measurement_widths: tuple[int, ...] = (64, 64, 64)
    goal_widths: tuple[int, ...] = (64, 64, 64)
    expectation_hidden: int = 128
    action_hidden: int = 128
    disable_normalization: bool = False
    disable_split: bool = False
    disable_input_measurements: bool = False

    def __post_init__(self):
        if self.action_count < 1:
            raise ValueError(f"action_count must be >= 1, got {self.action_count}")
        if self.measurement_count < 1:
            raise ValueError(f"measurement_count must be >= 1, got {self.measurement_count}")
        if self.offset_count < 1:
            raise ValueError(f"offset_count must be >= 1, got {self.offset_count}")
        if self.target_count < 1:
            raise ValueError("target_measurement_count must be >= 1")

    @property
    def target_count(self) -> int:
        return self.measurement_count if self.target_measurement_count is None else self.target_measurement_count

    @property
    def dim_f(self) -> int:
        """Width of the prediction for one action: predicted measurements x offsets."""
        return self.target_count * self.offset_count

    def conv_output_shape(self) -> tuple[int, int, int]:
        h, w, c = self.height, self.width, self.channels
        for out_c, kernel, stride in self.conv_layers:
            if kernel > h or kernel > w:
                raise ValueError(f"conv kernel {kernel} larger than input extent {h}x{w}")
            h = (h - kernel) // stride + 1
            w = (w - kernel) // stride + 1
            c = out_c
        return h, w, c

    def to_header(self) -> dict[str, str]:
        conv = ",".join(f"{c}x{k}x{s}" for c, k, s in self.conv_layers)
        return {
            "height": str(self.height),
            "width": str(self.width),
            "channels": str(self.channels),
            "measurement_count": str(self.measurement_count),
            "action_count": str(self.action_count),
            "offset_count": str(self.offset_count),
            "target_measurement_count": str(self.target_count),
            "conv_layers": conv,
            "perception_width": str(self.perception_width),
            "measurement_widths": ",".join(map(str, self.measurement_widths)),
            "goal_widths": ",".join(map(str, self.goal_widths)),
            "expectation_hidden": str(self.expectation_hidden),
            "action_hidden": str(self.action_hidden),
            "disable_normalization": str(int(self.disable_normalization)),
            "disable_split": str(int(self.disable_split)),
            "disable_input_measurements": str(int(self.disable_input_measurements)),
        }

    @classmethod
    def from_header(cls, header: dict[str, str]) -> "PredictorConfig":
        conv = tuple(
            tuple(int(p) for p in item.split("x")) for item in header["conv_layers"].split(",") if item
        )
        return cls(
            height=int(header["height"]),
            width=int(header["width"]),
            channels=int(header["channels"]),
            measurement_count=int(header["measurement_count"]),
            action_count=int(header["action_count"]),
            offset_count=int(header["offset_count"]),
            target_measurement_count=int(header["target_measurement_count"]),
            conv_layers=conv,
            perception_width=int(header["perception_width"]),
            measurement_widths=tuple(int(v) for v in header["measurement_widths"].split(",")),
            goal_widths=tuple(int(v) for v in header["goal_widths"].split(",")),
            expectation_hidden=int(header["expectation_hidden"]),
            action_hidden=int(header["action_hidden"]),
            disable_normalization=bool(int(header["disable_normalization"])),
            disable_split=bool(int(header["disable_split"])),
            disable_input_measurements=bool(int(header["disable_input_measurements"])),
        )


def desk_config(height: int, width: int, channels: int, measurement_count: int,
                action_count: int, offset_count: int = 6, **overrides) -> PredictorConfig:
    """Default desk-scale network for the grid scenarios."""
    return PredictorConfig(height=height, width=width, channels=channels,
                           measurement_count=measurement_count, action_count=action_count,
                           offset_count=offset_count, **overrides)


def desk_large_config(height: int, width: int, channels: int, measurement_count: int,
                      action_count: int, offset_count: int = 6, **overrides) -> PredictorConfig:
    """Desk network with every layer from the third onward twice as wide."""
    return PredictorConfig(height=height, width=width, channels=channels,
                           measurement_count=measurement_count, action_count=action_count,
                           offset_count=offset_count, perception_width=256,
                           expectation_hidden=256, action_hidden=256, **overrides)


def a1_config(action_count: int = 256, measurement_count: int = 3, **overrides) -> PredictorConfig:
    """Full-scale 84x84 grayscale preset (valid padding, so spatial sizes run 20/9/7)."""
    return PredictorConfig(
        height=84, width=84, channels=1,
        measurement_count=measurement_count, action_count=action_count,
        conv_layers=((32, 8, 4), (64, 4, 2), (64, 3, 1)),
        perception_width=512,
        measurement_widths=(128, 128, 128),
        goal_widths=(128, 128, 128),
        expectation_hidden=512,
        action_hidden=512,
        **overrides,
    )


PRESETS = {"desk": desk_config, "desk-large": desk_large_config, "a1": a1_config}


class _DenseStack:
    """Dense -> LeakyReLU pairs, activation after every layer."""

    def __init__(self, store, name, n_in, widths, rng, dtype):
        self.layers = []
        for i, width in enumerate(widths):
            self.layers.append(Dense(store, f"{name}.fc{i}", n_in, width, rng, dtype))
            self.layers.append(LeakyReLU())
            n_in = width
        self.out_width = n_in

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy):
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy


class PredictorNet:
    """Predictor with parameters in a ParameterStore; forward/backward are explicit.

    ``forward`` accepts a single observation (HWC sensory, measurement vector,
    goal vector) or batches with a leading N axis, and returns the prediction
    matrix of shape (w, dim_f) per example: row a is the prediction for action a.
    """

    def __init__(self, config: PredictorConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.store = ParameterStore()
        c = config
        ch, cw, cc = c.conv_output_shape()
        self._conv_flat = ch * cw * cc

        self.convs = []
        in_c = c.channels
        for i, (out_c, kernel, stride) in enumerate(c.conv_layers):
            self.convs.append(Conv2d(self.store, f"S.conv{i}", in_c, out_c, kernel, stride, rng, dtype))
            self.convs.append(LeakyReLU())
            in_c = out_c
        self.s_fc = Dense(self.store, "S.fc", self._conv_flat, c.perception_width, rng, dtype)
        self.s_act = LeakyReLU()

        joint = c.perception_width
        if not c.disable_input_measurements:
            self.m_stack = _DenseStack(self.store, "M", c.measurement_count, c.measurement_widths, rng, dtype)
            joint += self.m_stack.out_width
        else:
            self.m_stack = None
        self.g_stack = _DenseStack(self.store, "G", c.dim_f, c.goal_widths, rng, dtype)
        joint += self.g_stack.out_width
        self.joint_width = joint

        if c.disable_split:
            self.head_fc = Dense(self.store, "head.fc", joint, c.action_hidden, rng, dtype)
            self.head_act = LeakyReLU()
            self.head_out = Dense(self.store, "head.out", c.action_hidden, c.action_count * c.dim_f, rng, dtype)
        else:
            self.e_fc = Dense(self.store, "E.fc", joint, c.expectation_hidden, rng, dtype)
            self.e_act = LeakyReLU()
            self.e_out = Dense(self.store, "E.out", c.expectation_hidden, c.dim_f, rng, dtype)
            self.a_fc = Dense(self.store, "A.fc", joint, c.action_hidden, rng, dtype)
            self.a_act = LeakyReLU()
            self.a_out = Dense(self.store, "A.out", c.action_hidden, c.action_count * c.dim_f, rng, dtype)

    def clone(self) -> "PredictorNet":
        """Fresh net with a by-value copy of the parameters."""
        other = PredictorNet(self.config, np.random.default_rng(0), self.dtype)
        other.store.load_values(self.store.copy_values())
        return other

    def _check_inputs(self, sensory, measurements, goal):
        c = self.config
        if sensory.shape[-3:] != (c.height, c.width, c.channels):
            raise ValueError(f"sensory shape {sensory.shape} != configured {(c.height, c.width, c.channels)}")
        if measurements.shape[-1] != c.measurement_count:
            raise ValueError(f"measurement length {measurements.shape[-1]} != {c.measurement_count}")
        if goal.shape[-1] != c.dim_f:
            raise ValueError(f"goal length {goal.shape[-1]} != dim_f {c.dim_f}")

    def forward(self, sensory: np.ndarray, measurements: np.ndarray, goal: np.ndarray,
                return_expectation: bool = False):
        c = self.config
        self._check_inputs(sensory, measurements, goal)
        single = sensory.ndim == 3
        x = np.asarray(sensory, dtype=self.dtype)
        m = np.asarray(measurements, dtype=self.dtype)
        g = np.asarray(goal, dtype=self.dtype)
        if single:
            x, m, g = x[None], m[None], g[None]
        n = x.shape[0]

        h = x
        for layer in self.convs:
            h = layer.forward(h)
        self._conv_out_shape = h.shape
        s = self.s_act.forward(self.s_fc.forward(h.reshape(n, self._conv_flat)))

        parts = [s]
        if self.m_stack is not None:
            parts.append(self.m_stack.forward(m))
        parts.append(self.g_stack.forward(g))
        self._part_widths = [p.shape[1] for p in parts]
        j = np.concatenate(parts, axis=1)

        if c.disable_split:
            out = self.head_out.forward(self.head_act.forward(self.head_fc.forward(j)))
            p = out.reshape(n, c.action_count, c.dim_f)
            e = None
        else:
            e = self.e_out.forward(self.e_act.forward(self.e_fc.forward(j)))
            a = self.a_out.forward(self.a_act.forward(self.a_fc.forward(j)))
            a = a.reshape(n, c.action_count, c.dim_f)
            if not c.disable_normalization:
                a = a - a.mean(axis=1, keepdims=True)
            p = a + e[:, None, :]

        if single:
            p = p[0]
            e = None if e is None else e[0]
        return (p, e) if return_expectation else p

    def backward(self, grad_p: np.ndarray) -> None:
        """Accumulate parameter gradients from d(loss)/d(prediction matrix)."""
        c = self.config
        if grad_p.ndim == 2:
            grad_p = grad_p[None]
        n = grad_p.shape[0]

        if c.disable_split:
            dj = self.head_fc.backward(self.head_act.backward(
                self.head_out.backward(grad_p.reshape(n, c.action_count * c.dim_f))))
        else:
            de = grad_p.sum(axis=1)
            da = grad_p if c.disable_normalization else grad_p - grad_p.mean(axis=1, keepdims=True)
            dj = self.e_fc.backward(self.e_act.backward(self.e_out.backward(de)))
            dj = dj + self.a_fc.backward(self.a_act.backward(
                self.a_out.backward(da.reshape(n, c.action_count * c.dim_f))))

        splits = np.cumsum(self._part_widths)[:-1]
        pieces = np.split(dj, splits, axis=1)
        ds = pieces[0]
        if self.m_stack is not None:
            self.m_stack.backward(pieces[1])
            self.g_stack.backward(pieces[2])
        else:
            self.g_stack.backward(pieces[1])

        dh = self.s_fc.backward(self.s_act.backward(ds)).reshape(self._conv_out_shape)
        for layer in reversed(self.convs):
            dh = layer.backward(dh)


def build_predictor(config: PredictorConfig, rng: np.random.Generator, dtype=np.float32) -> PredictorNet:
    return PredictorNet(config, rng, dtype)


def choose_action(predictions: np.ndarray, goal: np.ndarray) -> int:
    """Index of the row maximizing goal . prediction; ties go to the lowest index."""
    if predictions.ndim != 2 or predictions.shape[1] != goal.shape[-1]:
        raise ValueError(f"predictions {predictions.shape} incompatible with goal {goal.shape}")
    return int(np.argmax(predictions @ goal))
