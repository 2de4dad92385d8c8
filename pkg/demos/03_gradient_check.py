"""
Checking the backward pass
==========================

With a smooth spike function the whole network is differentiable, so the
hand-written backward pass can be compared with central differences. In
spiking mode the surrogate derivative replaces the Heaviside step.
"""
import numpy as np

from rplif.autodiff import backward, grad_check_smooth
from rplif.model import Model, ModelSpec, forward
from rplif.neuron import NeuronConfig

g = np.random.default_rng(0)
model = Model.create(ModelSpec((6, 8, 3), NeuronConfig(), timesteps=4, seed=1))
x = g.uniform(0, 1, (2, 6))

err = grad_check_smooth(model, x, eps=1e-5)
print(f"smooth mode, max relative error vs finite differences: {err:.2e}")

# Spiking mode: gradients flow through the surrogate, not through resets or thresholds
for W in model.weights:
    W *= 4.0
readout, tape, spikes = forward(model, x)
grads = backward(tape, np.ones_like(readout.rate))
print("output rates:", readout.rate.round(3).tolist())
print("weight gradient norms:", [round(float(np.linalg.norm(gw)), 4) for gw in grads.weights])
