"""MNIST IDX loading, synthetic spike-pattern data and pixel noise.

Images are float64 in [0, 1] (raw byte / 255). The noise injectors work in
that normalized space and always clamp back into [0, 1]; level 0 returns
the input unchanged (a copy, bit-exact).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .numerics import DTYPE, Rng

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

NOISE_KINDS = ("gaussian", "salt_pepper", "uniform")

# Four increasing severities L1..L4 per noise kind.
NOISE_LEVELS = {
    "gaussian": (0.2, 0.4, 0.6, 0.8),
    "salt_pepper": (0.05, 0.10, 0.15, 0.20),
    "uniform": (0.2, 0.4, 0.6, 0.8),
}

MNIST_FILES = {
    "train_images": "train-images.idx3-ubyte",
    "train_labels": "train-labels.idx1-ubyte",
    "test_images": "t10k-images.idx3-ubyte",
    "test_labels": "t10k-labels.idx1-ubyte",
}


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, features) float64 in [0, 1], or (N, T, features) spike trains
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def temporal(self) -> bool:
        return self.images.ndim == 3

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n])

    def batch_inputs(self, idx) -> np.ndarray:
        """Model-ready inputs for rows ``idx``: (B, n) or (T, B, n)."""
        x = self.images[idx]
        return x.transpose(1, 0, 2) if self.temporal else x


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.level < 0:
            raise ConfigError(f"noise level must be >= 0, got {self.level}")
        if self.kind == "salt_pepper" and self.level > 1:
            raise ConfigError(f"salt-and-pepper proportion must be <= 1, got {self.level}")


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise DataError(f"{path}: truncated header ({len(buf)} bytes, need {header})")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DataError(f"{path}: bad magic 0x{got:08X} at offset 0, expected {magic}")
    dims = struct.unpack(">" + "I" * ndim, buf[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(buf) - header != size:
        raise DataError(
            f"{path}: payload is {len(buf) - header} bytes from offset {header}, "
            f"dimensions {dims} require {size}"
        )
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    raw = _read_idx(images_path, IMAGE_MAGIC, 3)
    labels = _read_idx(labels_path, LABEL_MAGIC, 1)
    if raw.shape[0] != labels.shape[0]:
        raise DataError(
            f"image count {raw.shape[0]} ({images_path}) != label count {labels.shape[0]} ({labels_path})"
        )
    images = raw.reshape(raw.shape[0], -1).astype(DTYPE) / 255.0
    return Dataset(images, labels.astype(np.int64))


def write_idx_images(path, images_u8: np.ndarray) -> None:
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, rows, cols = images_u8.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images_u8.tobytes())


def write_idx_labels(path, labels_u8: np.ndarray) -> None:
    labels_u8 = np.asarray(labels_u8, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", LABEL_MAGIC, len(labels_u8)) + labels_u8.tobytes())


def load_mnist(directory, split: str = "train", limit: int | None = None) -> Dataset:
    d = Path(directory)
    ds = load_idx(d / MNIST_FILES[f"{split}_images"], d / MNIST_FILES[f"{split}_labels"])
    return ds.subset(limit)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

def _check_pixels(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if np.any(x < 0) or np.any(x > 1):
        raise DataError("noise injectors expect pixels in [0, 1]")
    return x


def add_gaussian(x, sigma: float, rng: Rng) -> np.ndarray:
    if sigma < 0:
        raise ConfigError(f"gaussian sigma must be >= 0, got {sigma}")
    x = _check_pixels(x)
    if sigma == 0:
        return x.copy()
    return np.clip(x + rng.normal(0.0, sigma, x.shape), 0.0, 1.0)


def add_salt_pepper(x, p: float, rng: Rng) -> np.ndarray:
    if not 0 <= p <= 1:
        raise ConfigError(f"salt-and-pepper proportion must lie in [0, 1], got {p}")
    x = _check_pixels(x)
    if p == 0:
        return x.copy()
    corrupt = rng.uniform(0.0, 1.0, x.shape) < p
    salt = rng.uniform(0.0, 1.0, x.shape) < 0.5
    return np.where(corrupt, salt.astype(DTYPE), x)


def add_uniform(x, i: float, rng: Rng) -> np.ndarray:
    if i < 0:
        raise ConfigError(f"uniform noise range must be >= 0, got {i}")
    x = _check_pixels(x)
    if i == 0:
        return x.copy()
    return np.clip(x + rng.uniform(-i, i, x.shape), 0.0, 1.0)


_INJECTORS = {"gaussian": add_gaussian, "salt_pepper": add_salt_pepper, "uniform": add_uniform}


def apply_noise(x, spec: NoiseSpec) -> np.ndarray:
    return _INJECTORS[spec.kind](x, spec.level, Rng(spec.seed))


def noise_grid(seed: int = 0) -> list[NoiseSpec]:
    return [
        NoiseSpec(kind, level, seed)
        for kind in NOISE_KINDS
        for level in NOISE_LEVELS[kind]
    ]


# ---------------------------------------------------------------------------
# Synthetic temporal patterns
# ---------------------------------------------------------------------------

def default_rate_profiles(neurons: int, low: float = 0.1, high: float = 0.5) -> np.ndarray:
    """Two classes: class 0 fires fast on the first half of the channels,
    class 1 on the second half."""
    rates = np.full((2, neurons), low, dtype=DTYPE)
    half = neurons // 2
    rates[0, :half] = high
    rates[1, half:] = high
    return rates


def gen_poisson_patterns(n_per_class: int, neurons: int, T: int, rates, rng: Rng,
                         classes: int = 2) -> Dataset:
    """Bernoulli spike trains, ``images`` shaped (N, T, neurons).

    Samples are interleaved by class (0, 1, 0, 1, ...).
    """
    rates = np.asarray(rates, dtype=DTYPE)
    if rates.shape != (classes, neurons):
        raise ConfigError(f"rates must have shape ({classes}, {neurons}), got {rates.shape}")
    if np.any(rates < 0) or np.any(rates > 1):
        raise ConfigError("rates must lie in [0, 1]")
    labels = np.tile(np.arange(classes, dtype=np.int64), n_per_class)
    x = rng.bernoulli(rates[labels][:, None, :], (len(labels), T, neurons))
    return Dataset(x, labels)
