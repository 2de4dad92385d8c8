"""Backpropagation through time for stacked dense spiking layers.

The forward pass (:func:`rplif.model.forward`) records a :class:`Tape`;
:func:`backward` walks it in reverse time. Gradient paths, per layer and
timestep, with ``x = U[t] - V_th[t]``:

* ``dU[t] += dS[t] * surrogate_grad(x)``  (spike site)
* ``dU[t] += dV[t] * (1 - S[t])``         (reset, with S detached)
* ``dV[t-1] = dU[t] * (1 - 1/tau)``       (leak)
* ``dI[t] = dU[t]``; linear-layer rules give dW, db and dS of the layer below.

Thresholds are control state and never receive or pass gradient.

In smooth mode (used only for finite-difference verification) the spike is
``0.5 + atan(x)/pi`` with its exact derivative, thresholds are frozen, and
the reset path is differentiated fully.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .numerics import DTYPE, matmul


def surrogate_grad(u, v_th, width: float = 1.0) -> np.ndarray:
    x = np.asarray(u, dtype=DTYPE) - np.asarray(v_th, dtype=DTYPE)
    return 1.0 / (1.0 + (width * x) ** 2)


def smooth_spike(x: np.ndarray) -> np.ndarray:
    return 0.5 + np.arctan(x) / np.pi


def smooth_spike_grad(x: np.ndarray) -> np.ndarray:
    return 1.0 / (np.pi * (1.0 + x * x))


@dataclass
class LayerTape:
    """Per-timestep caches of one layer, each shaped (T, batch, neurons).

    ``x`` is the layer input; for a static first layer it is the single
    (batch, inputs) frame shared by every timestep.
    """

    x: np.ndarray
    i: np.ndarray
    u: np.ndarray
    s: np.ndarray
    v_th: np.ndarray
    v: np.ndarray
    static_input: bool = False


@dataclass
class Tape:
    weights: list
    leak: float
    timesteps: int
    smooth: bool = False
    surrogate_width: float = 1.0
    layers: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.timesteps * len(self.layers)

    @property
    def complete(self) -> bool:
        return bool(self.layers) and len(self.layers) == len(self.weights)


@dataclass
class GradSet:
    weights: list
    biases: list

    def __iter__(self):
        yield from self.weights
        yield from self.biases

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self)

    def __add__(self, other: "GradSet") -> "GradSet":
        return GradSet(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )


def backward(tape: Tape, loss_grad) -> GradSet:
    """Gradients of a loss w.r.t. all weights and biases.

    ``loss_grad`` is dLoss/dReadout, shaped (batch, classes); the readout is
    the mean output spike over the tape's timesteps.
    """
    if tape is None or not tape.complete:
        raise UsageError("backward called on an empty or incomplete tape")
    loss_grad = np.asarray(loss_grad, dtype=DTYPE)
    T = tape.timesteps
    leak = tape.leak
    n_layers = len(tape.layers)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers

    # dS of the top layer: readout = sum_t S[t] / T
    d_s = np.broadcast_to(loss_grad / T, (T,) + loss_grad.shape)

    for l in reversed(range(n_layers)):
        lt = tape.layers[l]
        W = tape.weights[l]
        d_i = np.empty_like(lt.u)
        d_v = np.zeros_like(lt.u[0])
        for t in reversed(range(T)):
            x = lt.u[t] - lt.v_th[t]
            if tape.smooth:
                s = smooth_spike(x)
                ds_du = smooth_spike_grad(x)
                dv_du = (1.0 - s) - lt.u[t] * ds_du
            else:
                ds_du = 1.0 / (1.0 + (tape.surrogate_width * x) ** 2)
                dv_du = 1.0 - lt.s[t]
            d_u = d_s[t] * ds_du + d_v * dv_du
            d_i[t] = d_u
            d_v = d_u * leak

        if lt.static_input:
            d_i_total = d_i[0].copy()
            for t in range(1, T):
                d_i_total += d_i[t]
            grad_w[l] = matmul(lt.x.T, d_i_total)
        else:
            gw = np.zeros_like(W)
            for t in range(T):
                gw += matmul(lt.x[t].T, d_i[t])
            grad_w[l] = gw
        grad_b[l] = d_i.sum(axis=(0, 1))

        if l > 0:
            Wt = W.T
            d_s = np.stack([matmul(d_i[t], Wt) for t in range(T)])

    return GradSet(grad_w, grad_b)


def grad_check_smooth(model, inputs, eps: float = 1e-5, loss_weights=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    The model runs in smooth mode. The scalar loss is
    ``sum(loss_weights * readout)`` (``loss_weights`` defaults to ones), so
    ``loss_weights=0`` gives a constant output and an error of exactly 0.
    """
    from .model import forward

    readout, tape, _ = forward(model, inputs, smooth=True)
    if loss_weights is None:
        loss_weights = np.ones_like(readout.rate)
    loss_weights = np.broadcast_to(np.asarray(loss_weights, dtype=DTYPE), readout.rate.shape)

    def loss() -> float:
        return float(np.sum(loss_weights * forward(model, inputs, smooth=True, record=False)[0].rate))

    grads = backward(tape, loss_weights)
    worst = 0.0
    params = list(model.weights) + list(model.biases)
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss()
            flat[k] = orig - eps
            down = loss()
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(gflat[k] - numeric) / max(abs(gflat[k]), 1e-8)
            worst = max(worst, err)
    return worst
