"""Dense float64 arithmetic and seeded randomness.

Tensors are plain ``numpy.ndarray`` objects of dtype float64, row-major,
batch dimension first. The helpers here add the two guarantees the rest of
the package relies on: a matrix product whose summation order is fixed
(sequential over the inner dimension, so results never depend on the BLAS
build or thread count) and a reproducible counter-based random stream.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericalError

DTYPE = np.float64


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in {what}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product ``a @ b`` accumulated in ascending inner-index order.

    Each output entry equals ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``
    evaluated left to right, i.e. bit-identical to a naive triple loop.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ConfigError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.zeros((m, n), dtype=DTYPE)
    tmp = np.empty((m, n), dtype=DTYPE)
    for p in range(k):
        np.multiply(a[:, p : p + 1], b[p : p + 1, :], out=tmp)
        out += tmp
    return out


def _same_shape(a: np.ndarray, b) -> None:
    if np.ndim(b) != 0 and np.shape(b) != a.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {np.shape(b)}")


def add(a, b) -> np.ndarray:
    a = as_tensor(a)
    _same_shape(a, b)
    return a + b


def sub(a, b) -> np.ndarray:
    a = as_tensor(a)
    _same_shape(a, b)
    return a - b


def mul(a, b) -> np.ndarray:
    a = as_tensor(a)
    _same_shape(a, b)
    return a * b


def scale(a, factor: float) -> np.ndarray:
    return as_tensor(a) * float(factor)


def clamp(a, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ConfigError(f"clamp bounds inverted: lo={lo} > hi={hi}")
    return np.clip(as_tensor(a), lo, hi)


_EW_OPS = {"add": add, "sub": sub, "mul": mul, "scale": scale, "clamp": clamp}


def ew(op: str, *args) -> np.ndarray:
    """Dispatch an elementwise operation by name (add, sub, mul, scale, clamp)."""
    try:
        fn = _EW_OPS[op]
    except KeyError:
        raise ConfigError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


class Rng:
    """Seeded random stream backed by the Philox counter-based generator.

    Normal variates come from a Box-Muller transform of the uniform stream
    rather than numpy's ziggurat, so every distribution is a fixed function
    of the same uniform sequence.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(seed))

    def split(self, stream: int) -> "Rng":
        """Independent stream for worker/sub-task ``stream``."""
        return Rng(self.seed ^ int(stream))

    def uniform(self, a: float = 0.0, b: float = 1.0, shape=()) -> np.ndarray:
        if a > b:
            raise ConfigError(f"uniform requires a <= b, got a={a}, b={b}")
        u = self._gen.random(shape)
        return a + (b - a) * u

    def normal(self, mu: float = 0.0, sigma: float = 1.0, shape=()) -> np.ndarray:
        if sigma < 0:
            raise ConfigError(f"normal requires sigma >= 0, got {sigma}")
        size = int(np.prod(shape, dtype=np.int64))
        u1 = 1.0 - self._gen.random(size)  # (0, 1], keeps log finite
        u2 = self._gen.random(size)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return (mu + sigma * z).reshape(shape)

    def bernoulli(self, p, shape=()) -> np.ndarray:
        p_arr = np.asarray(p, dtype=DTYPE)
        if np.any(p_arr < 0) or np.any(p_arr > 1):
            raise ConfigError("bernoulli probability must lie in [0, 1]")
        return (self._gen.random(shape) < p_arr).astype(DTYPE)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def rand(self, dist: str, *params, shape=()) -> np.ndarray:
        """Sample ``shape`` values from ``dist`` in {uniform, normal, bernoulli}."""
        if dist == "uniform":
            return self.uniform(*params, shape=shape)
        if dist == "normal":
            return self.normal(*params, shape=shape)
        if dist == "bernoulli":
            return self.bernoulli(*params, shape=shape)
        raise ConfigError(f"unknown distribution {dist!r}")


def rand(rng: Rng, dist: str, *params, shape=()) -> np.ndarray:
    return rng.rand(dist, *params, shape=shape)
