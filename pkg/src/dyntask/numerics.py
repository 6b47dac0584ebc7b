"""Dense float64 helpers and a seedable, splittable random generator.

numpy does the heavy lifting; the wrappers here pin down the shape and
finiteness contracts the rest of the package relies on. Everything runs in
64-bit precision because the finite-difference checks need ~1e-6 relative
accuracy.
"""

import zlib

import numpy as np

from .errors import InvalidArgumentError, ShapeError

EPS_NORM = 1e-12


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Stable softmax along ``axis``.

    The running max is subtracted first, so arbitrarily large finite logits
    saturate toward a one-hot instead of overflowing.
    """
    x = as_f64(logits)
    if x.size == 0:
        raise InvalidArgumentError("softmax input is empty")
    require_finite("softmax logits", x)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit L2 norm; vectors with norm <= 1e-12 pass through unchanged."""
    x = as_f64(v)
    if x.size == 0:
        raise InvalidArgumentError("l2_normalize input is empty")
    n = float(np.sqrt((x * x).sum()))
    if n <= EPS_NORM:
        return x.copy()
    return x / n


def matmul(a, b) -> np.ndarray:
    a, b = as_f64(a), as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a, b = as_f64(a), as_f64(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def scale(a, c: float) -> np.ndarray:
    return float(c) * as_f64(a)


def transpose(a) -> np.ndarray:
    a = as_f64(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D operand, got shape {a.shape}")
    return a.T.copy()


class Rng:
    """Deterministic PCG64 generator keyed by a 64-bit seed.

    ``split(tag)`` derives an independent child stream from a string tag, so a
    single config seed can feed init, batching, data generation, ... without
    the streams interfering. Equal seeds give bitwise-equal draw sequences.
    """

    def __init__(self, seed: int, _words: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._words = tuple(int(w) for w in _words)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self._words])
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def split(self, tag: str) -> "Rng":
        word = zlib.crc32(tag.encode("utf-8"))
        return Rng(self.seed, self._words + (word,))

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(loc=loc, scale=scale, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low=low, high=high, size=size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.generator.integers(low, high, size=size)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)
