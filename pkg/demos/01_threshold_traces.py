"""
Spike-triggered thresholds on a single neuron
=============================================

A constant current of 1.2 drives one neuron for three steps. The plain LIF
neuron fires every step. Raising the threshold after each spike suppresses
the second spike, and the threshold falls back once the neuron stays quiet.
"""
from rplif.neuron import NeuronConfig, format_trace_csv, run_trace

currents = [1.2, 1.2, 1.2]

for label, cfg in [
    ("plain LIF", NeuronConfig(mode="baseline")),
    ("relative refractory (alpha=1.5)", NeuronConfig(mode="multiplicative", alpha=1.5)),
    ("absolute refractory (alpha=100)", NeuronConfig(mode="absolute")),
    ("additive (beta=0.5)", NeuronConfig(mode="additive", beta=0.5)),
]:
    records = run_trace(cfg, currents)
    print(f"{label:34s} spikes {[r.s for r in records]}  thresholds {[r.v_th for r in records]}")

# A stronger input can still fire through the raised threshold in relative mode
strong = run_trace(NeuronConfig(alpha=1.5), [2.0, 2.0, 2.0])
print("\ncurrent 2.0, alpha=1.5:", [r.s for r in strong], [r.v_th for r in strong])

# A longer refractory window keeps the threshold raised for two quiet steps
window = run_trace(NeuronConfig(alpha=1.5, step=2), [1.2, 1.3, 0.1, 1.3])
print("\nstep=2 window, full trace:")
print(format_trace_csv(window))
