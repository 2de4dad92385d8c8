"""LIF and RPLIF neuron populations in discrete time.

One timestep is four calls, in this order::

    u = charge(state, current, cfg)     # U[t] = (1 - 1/tau) V[t-1] + I[t]
    s = fire(u, state)                  # S[t] = H(U[t] - V_th), H(0) = 1
    state.v = reset(u, s)               # V[t] = U[t] (1 - S[t])
    update_threshold(state, s, cfg)     # spike-triggered threshold change

:func:`step` bundles them. The threshold written by ``update_threshold`` is
the one used at the *next* firing decision.

Threshold modes
---------------
``baseline``        plain LIF, threshold fixed at ``v_init_th``.
``multiplicative``  a spike multiplies the current threshold by ``alpha``
                    (relative refractory period, ``1 < alpha < 2``).
``absolute``        same rule with a very large ``alpha`` (default 100), so
                    bounded inputs cannot fire during the window.
``additive``        a spike adds ``beta * v_init_th`` to the threshold.

After a spike the raised threshold lasts ``step`` timesteps; a step without
a spike counts the window down and, once it reaches zero, restores
``v_init_th``. Spikes inside an open window compound the increase and
restart the window. With ``step=1`` this is exactly the original
single-step rule.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .numerics import DTYPE

MODES = ("baseline", "multiplicative", "additive", "absolute")

_DEFAULT_ALPHA = {"baseline": 1.0, "multiplicative": 1.5, "additive": 1.0, "absolute": 100.0}


@dataclass(frozen=True)
class NeuronConfig:
    tau: float = 2.0
    v_init_th: float = 1.0
    mode: str = "multiplicative"
    alpha: float | None = None
    beta: float = 0.5
    step: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown neuron mode {self.mode!r}; expected one of {MODES}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", _DEFAULT_ALPHA[self.mode])
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if not (self.tau > 1.0):
            raise ConfigError(f"tau must be > 1 (or inf), got {self.tau}")
        if not (self.v_init_th > 0):
            raise ConfigError(f"v_init_th must be > 0, got {self.v_init_th}")
        if self.mode in ("multiplicative", "absolute") and not self.alpha >= 1.0:
            raise ConfigError(f"alpha must be >= 1 for mode={self.mode}, got {self.alpha}")
        if self.mode == "additive" and not self.beta > 0:
            raise ConfigError(f"beta must be > 0 for additive mode, got {self.beta}")
        if int(self.step) != self.step or self.step < 1:
            raise ConfigError(f"step must be an integer >= 1, got {self.step}")
        object.__setattr__(self, "step", int(self.step))

    @property
    def leak(self) -> float:
        return 1.0 if math.isinf(self.tau) else 1.0 - 1.0 / self.tau

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.tau):
            d["tau"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NeuronConfig":
        d = dict(d)
        if isinstance(d.get("tau"), str):
            d["tau"] = float(d["tau"])
        return cls(**d)


@dataclass
class NeuronState:
    v: np.ndarray
    v_th: np.ndarray
    countdown: np.ndarray

    @classmethod
    def fresh(cls, shape, cfg: NeuronConfig) -> "NeuronState":
        return cls(
            v=np.zeros(shape, dtype=DTYPE),
            v_th=np.full(shape, cfg.v_init_th, dtype=DTYPE),
            countdown=np.zeros(shape, dtype=np.int64),
        )

    @property
    def shape(self):
        return self.v.shape


@dataclass(frozen=True)
class StepRecord:
    t: int
    u: float
    s: int
    v: float
    v_th: float


def charge(state: NeuronState, input_current, cfg: NeuronConfig) -> np.ndarray:
    input_current = np.asarray(input_current, dtype=DTYPE)
    if input_current.shape != state.shape:
        raise ConfigError(
            f"input current shape {input_current.shape} != state shape {state.shape}"
        )
    return cfg.leak * state.v + input_current


def fire(u: np.ndarray, state: NeuronState) -> np.ndarray:
    return (u - state.v_th >= 0).astype(DTYPE)


def reset(u: np.ndarray, s: np.ndarray) -> np.ndarray:
    return u * (1.0 - s)


def update_threshold(state: NeuronState, s: np.ndarray, cfg: NeuronConfig) -> None:
    if cfg.mode == "baseline":
        return
    spiked = s > 0
    if cfg.mode == "additive":
        raised = state.v_th + cfg.beta * cfg.v_init_th
    else:
        raised = state.v_th * cfg.alpha
    countdown = np.where(spiked, cfg.step, np.maximum(state.countdown - 1, 0))
    expired = ~spiked & (countdown == 0) & (state.v_th > cfg.v_init_th)
    state.v_th = np.where(spiked, raised, np.where(expired, cfg.v_init_th, state.v_th))
    state.countdown = countdown


def step(state: NeuronState, input_current, cfg: NeuronConfig):
    """Advance one timestep in place.

    Returns ``(u, s, v_th_at_decision)``; the post-reset potential is left in
    ``state.v``.
    """
    u = charge(state, input_current, cfg)
    v_th = state.v_th
    s = fire(u, state)
    state.v = reset(u, s)
    update_threshold(state, s, cfg)
    return u, s, v_th


def run_trace(cfg: NeuronConfig, currents: Iterable[float]) -> list[StepRecord]:
    currents = [float(c) for c in currents]
    if not currents:
        raise ConfigError("run_trace needs at least one current value")
    if not all(math.isfinite(c) for c in currents):
        raise ConfigError("run_trace currents must be finite")
    state = NeuronState.fresh((1,), cfg)
    records = []
    for t, i in enumerate(currents):
        u, s, v_th = step(state, np.array([i]), cfg)
        records.append(StepRecord(t, float(u[0]), int(s[0]), float(state.v[0]), float(v_th[0])))
    return records


def format_trace_csv(records: list[StepRecord]) -> str:
    lines = ["t,u,s,v,v_th"]
    for r in records:
        lines.append(f"{r.t},{r.u:.12g},{r.s},{r.v:.12g},{r.v_th:.12g}")
    return "\n".join(lines) + "\n"


def write_trace_csv(records: list[StepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_trace_csv(records))


def read_trace_csv(path) -> list[StepRecord]:
    with open(path, newline="") as fh:
        return [
            StepRecord(int(r["t"]), float(r["u"]), int(r["s"]), float(r["v"]), float(r["v_th"]))
            for r in csv.DictReader(fh)
        ]
