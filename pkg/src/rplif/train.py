"""Loss, Adam, cosine schedule, training/evaluation loops and firing rates."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradSet, backward
from .data import Dataset
from .errors import ConfigError, DataError, NumericalError
from .model import Model, forward
from .numerics import DTYPE, Rng

HIST_BINS = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    epochs: int = 3
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    logit_scale: float = 10.0
    seed: int = 0
    # Gradients are reduced over fixed-size chunks in index order, so the
    # result does not depend on how many workers compute the chunks.
    chunk_size: int = 16
    workers: int = 1

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be an integer >= 1, got {self.batch_size}")
        if self.chunk_size < 1 or self.workers < 1:
            raise ConfigError("chunk_size and workers must be >= 1")
        if not self.logit_scale > 0:
            raise ConfigError(f"logit_scale must be > 0, got {self.logit_scale}")


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    test_loss: float | None = None
    test_accuracy: float | None = None
    layer_rates: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def loss_ce_rate(rate, labels, scale: float = 1.0):
    """Softmax cross-entropy on ``scale * rate``.

    ``rate`` is (classes,) with an integer label, or (batch, classes) with a
    label vector; the batch loss is the mean. Returns ``(loss, dloss/drate)``.
    """
    rate = np.asarray(rate, dtype=DTYPE)
    single = rate.ndim == 1
    r = rate[None, :] if single else rate
    y = np.atleast_1d(np.asarray(labels))
    n, classes = r.shape
    if y.shape != (n,):
        raise DataError(f"expected {n} labels, got shape {y.shape}")
    if np.any(y < 0) or np.any(y >= classes) or not np.issubdtype(y.dtype, np.integer):
        raise DataError(f"labels must be integers in [0, {classes})")
    z = scale * r
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z - log_norm[:, None]
    losses = -log_p[np.arange(n), y]
    probs = np.exp(log_p)
    grad = probs
    grad[np.arange(n), y] -= 1.0
    grad *= scale / n
    if single:
        return float(losses[0]), grad[0]
    return float(losses.mean()), grad


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    if not 0 <= epoch <= total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------

def _chunks(idx: np.ndarray, size: int) -> list:
    return [idx[i : i + size] for i in range(0, len(idx), size)]


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def batch_gradients(model: Model, dataset: Dataset, idx: np.ndarray, cfg: TrainConfig):
    """Mean loss, gradient, correct count and per-layer spike sums over rows ``idx``."""
    n = len(idx)

    def one_chunk(chunk):
        readout, tape, spikes = forward(model, dataset.batch_inputs(chunk))
        loss, grad = loss_ce_rate(readout.rate, dataset.labels[chunk], cfg.logit_scale)
        # loss_ce_rate averages over the chunk; rescale to the full batch mean
        frac = len(chunk) / n
        grads = backward(tape, grad * frac)
        correct = int(np.sum(readout.predict() == dataset.labels[chunk]))
        return loss * frac, grads, correct, [float(s.sum()) for s in spikes]

    results = _map(one_chunk, _chunks(idx, cfg.chunk_size), cfg.workers)
    loss, grads, correct, spike_sums = results[0]
    for r in results[1:]:
        loss += r[0]
        grads = grads + r[1]
        correct += r[2]
        spike_sums = [a + b for a, b in zip(spike_sums, r[3])]
    return loss, grads, correct, spike_sums


def evaluate(model: Model, dataset: Dataset, batch_size: int = 500, workers: int = 1,
             logit_scale: float = 10.0):
    """Return ``(mean loss, accuracy)``; predictions are argmax of class rates."""
    order = np.arange(len(dataset))

    def one(chunk):
        readout = forward(model, dataset.batch_inputs(chunk), record=False)[0]
        loss, _ = loss_ce_rate(readout.rate, dataset.labels[chunk], logit_scale)
        return loss * len(chunk), int(np.sum(readout.predict() == dataset.labels[chunk]))

    results = _map(one, _chunks(order, batch_size), workers)
    total_loss = sum(r[0] for r in results)
    correct = sum(r[1] for r in results)
    return total_loss / len(dataset), correct / len(dataset)


def train(model: Model, dataset: Dataset, cfg: TrainConfig, test: Dataset | None = None,
          log=None, stop=None) -> list[EpochMetrics]:
    """Train ``model`` in place; returns one :class:`EpochMetrics` per epoch.

    ``stop(metrics) -> bool`` ends training early after the epoch it accepts.
    """
    rng = Rng(cfg.seed)
    state = AdamState.zeros(model.params)
    sizes = model.spec.layer_sizes[1:]
    T = model.spec.timesteps
    history = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(cfg.lr0, epoch, cfg.epochs)
        order = rng.permutation(len(dataset))
        loss_sum, correct, seen = 0.0, 0, 0
        spikes = [0.0] * len(sizes)
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads, c, sp = batch_gradients(model, dataset, idx, cfg)
            if not math.isfinite(loss) or not grads.all_finite():
                raise NumericalError(f"non-finite loss or gradient in epoch {epoch}")
            adam_step(model.params, list(grads), state, lr, cfg.beta1, cfg.beta2, cfg.eps)
            loss_sum += loss * len(idx)
            correct += c
            seen += len(idx)
            spikes = [a + b for a, b in zip(spikes, sp)]
        m = EpochMetrics(
            epoch=epoch,
            lr=lr,
            train_loss=loss_sum / seen,
            train_accuracy=correct / seen,
            layer_rates=[s / (n * T * seen) for s, n in zip(spikes, sizes)],
        )
        if test is not None:
            m.test_loss, m.test_accuracy = evaluate(
                model, test, workers=cfg.workers, logit_scale=cfg.logit_scale
            )
        history.append(m)
        if log is not None:
            log(m)
        if stop is not None and stop(m):
            break
    return history


# ---------------------------------------------------------------------------
# Firing rates
# ---------------------------------------------------------------------------

@dataclass
class FiringReport:
    mean_rates: list      # per spiking layer
    neuron_rates: list    # per layer, (neurons,) arrays
    histograms: list      # per layer, 10 counts over HIST_BINS
    bin_edges: np.ndarray = field(default_factory=lambda: HIST_BINS.copy())


def firing_report(model: Model, dataset: Dataset, batch_size: int = 500,
                  workers: int = 1) -> FiringReport:
    T = model.spec.timesteps
    order = np.arange(len(dataset))

    def one(chunk):
        _, _, spikes = forward(model, dataset.batch_inputs(chunk), record=False)
        return [s.sum(axis=(0, 1)) for s in spikes]

    results = _map(one, _chunks(order, batch_size), workers)
    counts = results[0]
    for r in results[1:]:
        counts = [a + b for a, b in zip(counts, r)]
    neuron_rates = [c / (T * len(dataset)) for c in counts]
    mean_rates = [float(c.sum() / (c.size * T * len(dataset))) for c in counts]
    histograms = [np.histogram(r, bins=HIST_BINS)[0] for r in neuron_rates]
    return FiringReport(mean_rates, neuron_rates, histograms)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def metrics_csv(history: list[EpochMetrics]) -> str:
    lines = ["epoch,split,loss,accuracy"]
    for m in history:
        lines.append(f"{m.epoch},train,{_fmt(m.train_loss)},{_fmt(m.train_accuracy)}")
        if m.test_accuracy is not None:
            lines.append(f"{m.epoch},test,{_fmt(m.test_loss)},{_fmt(m.test_accuracy)}")
    return "\n".join(lines) + "\n"


def firing_rates_csv(report: FiringReport) -> str:
    lines = ["layer,mean_rate"]
    lines += [f"{l},{_fmt(r)}" for l, r in enumerate(report.mean_rates)]
    return "\n".join(lines) + "\n"


def histogram_csv(report: FiringReport) -> str:
    lines = ["layer,bin_lo,bin_hi,count"]
    edges = report.bin_edges
    for l, hist in enumerate(report.histograms):
        for k, count in enumerate(hist):
            lines.append(f"{l},{edges[k]:.1f},{edges[k + 1]:.1f},{int(count)}")
    return "\n".join(lines) + "\n"
