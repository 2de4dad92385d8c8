"""Fully-connected spiking classifier with rate readout.

Every layer is ``dense -> neuron population``; the prediction is the mean
output-layer spike over ``T`` timesteps. Neuron state starts fresh (V=0,
V_th=V_init_th, no refractory window) for every forward call.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import neuron as nrn
from .autodiff import LayerTape, Tape, smooth_spike
from .errors import ConfigError, DataError
from .neuron import NeuronConfig, NeuronState
from .numerics import DTYPE, Rng, matmul

CHECKPOINT_MAGIC = b"RPLF"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    layer_sizes: tuple = (784, 128, 10)
    neuron_cfg: NeuronConfig = field(default_factory=NeuronConfig)
    timesteps: int = 4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes needs at least an input and an output size")
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigError(f"layer sizes must be positive, got {self.layer_sizes}")
        if int(self.timesteps) != self.timesteps or self.timesteps < 1:
            raise ConfigError(f"timesteps must be an integer >= 1, got {self.timesteps}")

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "neuron_cfg": self.neuron_cfg.to_dict(),
            "timesteps": self.timesteps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            layer_sizes=tuple(d["layer_sizes"]),
            neuron_cfg=NeuronConfig.from_dict(d["neuron_cfg"]),
            timesteps=d["timesteps"],
            seed=d["seed"],
        )


@dataclass(frozen=True)
class Readout:
    rate: np.ndarray  # (batch, classes), mean spike count over T

    def predict(self) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.rate, axis=1)


@dataclass
class Model:
    spec: ModelSpec
    weights: list
    biases: list

    @classmethod
    def create(cls, spec: ModelSpec) -> "Model":
        weights, biases = init_weights(spec)
        return cls(spec, weights, biases)

    @property
    def params(self) -> list:
        return list(self.weights) + list(self.biases)

    def copy(self) -> "Model":
        return Model(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def with_neuron(self, cfg: NeuronConfig) -> "Model":
        """Same parameters (shared, not copied) under a different neuron config."""
        spec = ModelSpec(self.spec.layer_sizes, cfg, self.spec.timesteps, self.spec.seed)
        return Model(spec, self.weights, self.biases)


def init_weights(spec: ModelSpec):
    rng = Rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=DTYPE))
    return weights, biases


def encode_static(image, T: int) -> np.ndarray:
    """Direct encoding: the analog image repeated as the input at each of T steps."""
    image = np.asarray(image, dtype=DTYPE)
    if np.any(image < 0) or np.any(image > 1) or not np.all(np.isfinite(image)):
        raise DataError("pixel values must lie in [0, 1]")
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    return np.broadcast_to(image, (T,) + image.shape).copy()


def forward(model: Model, inputs, smooth: bool = False, record: bool = True):
    """Run all timesteps for a batch.

    ``inputs`` is either a static batch ``(batch, n_in)``, presented unchanged
    at every step, or a sequence ``(T, batch, n_in)``.

    Returns ``(readout, tape, spikes)`` where ``spikes[l]`` is the
    ``(T, batch, n_l)`` spike tensor of layer ``l``. ``tape`` is None when
    ``record`` is False.
    """
    spec = model.spec
    cfg = spec.neuron_cfg
    T = spec.timesteps
    x = np.asarray(inputs, dtype=DTYPE)
    static = x.ndim == 2
    if static:
        batch, n_in = x.shape
    elif x.ndim == 3:
        if x.shape[0] != T:
            raise ConfigError(f"sequence input has {x.shape[0]} steps, model expects {T}")
        _, batch, n_in = x.shape
    else:
        raise ConfigError(f"inputs must be 2-D or 3-D, got shape {x.shape}")
    if n_in != spec.layer_sizes[0]:
        raise ConfigError(f"input width {n_in} != layer_sizes[0]={spec.layer_sizes[0]}")

    tape = Tape(weights=model.weights, leak=cfg.leak, timesteps=T, smooth=smooth) if record else None
    spikes = []
    layer_in = x
    layer_static = static
    for W, b in zip(model.weights, model.biases):
        n_out = W.shape[1]
        if layer_static:
            cur = matmul(layer_in, W) + b
            currents = np.broadcast_to(cur, (T, batch, n_out))
        else:
            currents = np.stack([matmul(layer_in[t], W) + b for t in range(T)])
        state = NeuronState.fresh((batch, n_out), cfg)
        u_all = np.empty((T, batch, n_out), dtype=DTYPE)
        s_all = np.empty_like(u_all)
        th_all = np.empty_like(u_all)
        v_all = np.empty_like(u_all)
        for t in range(T):
            if smooth:
                u = nrn.charge(state, currents[t], cfg)
                th = state.v_th
                s = smooth_spike(u - th)
                state.v = u * (1.0 - s)
            else:
                u, s, th = nrn.step(state, currents[t], cfg)
            u_all[t], s_all[t], th_all[t], v_all[t] = u, s, th, state.v
        if record:
            tape.layers.append(LayerTape(
                x=layer_in, i=currents, u=u_all, s=s_all, v_th=th_all, v=v_all,
                static_input=layer_static,
            ))
        spikes.append(s_all)
        layer_in = s_all
        layer_static = False

    rate = spikes[-1].sum(axis=0) / T
    return Readout(rate), tape, spikes


def predict(model: Model, inputs) -> np.ndarray:
    return forward(model, inputs, record=False)[0].predict()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path) -> None:
    """Binary layout (little-endian): b"RPLF", u32 version, u32 layer count;
    per layer u32 rows, u32 cols, rows*cols f64 weights, cols f64 biases;
    then u32 length + UTF-8 JSON of the ModelSpec."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(model.weights))]
    for W, b in zip(model.weights, model.biases):
        rows, cols = W.shape
        parts.append(struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    blob = json.dumps(model.spec.to_dict(), sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise DataError(f"checkpoint {path} truncated at offset {pos} (wanted {n} bytes)")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    magic = take(4)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"checkpoint {path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    version, n_layers = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint {path}: unsupported version {version}")
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", take(8))
        W = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        b = np.frombuffer(take(8 * cols), dtype="<f8")
        weights.append(W.astype(DTYPE))
        biases.append(b.astype(DTYPE))
    (length,) = struct.unpack("<I", take(4))
    spec = ModelSpec.from_dict(json.loads(take(length).decode("utf-8")))
    if pos != len(buf):
        raise DataError(f"checkpoint {path}: {len(buf) - pos} trailing bytes at offset {pos}")
    expected = list(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]))
    if [w.shape for w in weights] != expected:
        raise DataError(f"checkpoint {path}: weight shapes disagree with layer_sizes")
    return Model(spec, weights, biases)
