"""
Training a small spiking network on Poisson patterns
====================================================

Two classes of Poisson spike trains differ only in which half of the input
neurons fire more often. A 20-16-2 network learns them with surrogate
gradients, once with plain LIF neurons and once with raised thresholds.
"""
from rplif.data import default_rate_profiles, gen_poisson_patterns
from rplif.model import Model, ModelSpec
from rplif.neuron import NeuronConfig
from rplif.numerics import Rng
from rplif.train import TrainConfig, evaluate, firing_report, train

T, neurons = 8, 20
rates = default_rate_profiles(neurons, low=0.1, high=0.5)
rng = Rng(0)
train_set = gen_poisson_patterns(100, neurons, T, rates, rng.split(1))
test_set = gen_poisson_patterns(50, neurons, T, rates, rng.split(2))

for cfg in (NeuronConfig(mode="baseline"), NeuronConfig(mode="multiplicative", alpha=1.5)):
    model = Model.create(ModelSpec((neurons, 16, 2), cfg, T, seed=0))
    history = train(model, train_set, TrainConfig(lr0=1e-2, epochs=5), test=test_set)
    _, acc = evaluate(model, test_set)
    rates_by_layer = firing_report(model, test_set).mean_rates
    print(f"{cfg.mode:15s} loss {[round(m.train_loss, 3) for m in history]}")
    print(f"{'':15s} test accuracy {acc:.3f}, layer firing rates {[round(r, 3) for r in rates_by_layer]}")
