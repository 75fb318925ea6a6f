"""Random streams, min-max scaling and a finite-difference gradient oracle.

Generator choice is frozen: every stream is numpy's ``PCG64`` bit generator
seeded through ``SeedSequence(entropy=seed, spawn_key=...)``.  Child streams
hash their label with SHA-256 and append the first four 32-bit words of the
digest to the parent's spawn key, so a stream is fully identified by
``(seed, labels...)``.  Gaussian draws use ``Generator.standard_normal``,
which is numpy's 256-layer ziggurat.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import RejectedInputError

_SEED_MASK = (1 << 64) - 1


def _label_words(label: str) -> tuple[int, ...]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


class RngStream:
    """Deterministic random stream identified by a seed and a label path.

    Not safe to share between workers; derive a ``child`` per worker instead.
    """

    def __init__(self, seed: int, labels: Sequence[str] = ()):
        if seed < 0 or seed > _SEED_MASK:
            raise RejectedInputError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.labels = tuple(labels)
        spawn_key = tuple(w for label in self.labels for w in _label_words(label))
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, self.labels + (str(label),))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, labels={self.labels!r})"

    def normal(self, size=None, scale: float = 1.0):
        return self.generator.standard_normal(size) * scale

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def derive_seed(self) -> int:
        """Draw a fresh 64-bit seed from this stream."""
        return int(self.generator.integers(0, _SEED_MASK, dtype=np.uint64, endpoint=True))


def gaussian_sample(stream: RngStream) -> float:
    """One standard-normal draw; advances ``stream``."""
    return float(stream.generator.standard_normal())


@dataclass(frozen=True)
class Scaler:
    """Per-column affine map onto [0, 1].  Constant columns map to 0."""

    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        out = (x - self.minimum) / safe
        return np.where(span > 0, out, 0.0)

    def invert(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z * self.span + self.minimum

    def to_dict(self) -> dict:
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["minimum"], dtype=float), np.asarray(d["maximum"], dtype=float))


def fit_scaler(matrix) -> Scaler:
    """Fit column-wise minima and maxima.  A 1-D input is one column."""
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        raise RejectedInputError("cannot fit a scaler on an empty matrix")
    if not np.all(np.isfinite(m)):
        raise RejectedInputError("scaler input contains non-finite entries")
    return Scaler(m.min(axis=0), m.max(axis=0))


def apply_scaler(scaler: Scaler, x) -> np.ndarray:
    return scaler.apply(x)


def invert_scaler(scaler: Scaler, z) -> np.ndarray:
    return scaler.invert(z)


def finite_diff_gradient(f: Callable[[np.ndarray], float], p, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``p``."""
    if h <= 0:
        raise RejectedInputError("finite-difference step must be positive")
    p = np.array(p, dtype=float)
    grad = np.empty_like(p)
    flat = p.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = f(p)
        flat[k] = orig - h
        down = f(p)
        flat[k] = orig
        g[k] = (up - down) / (2 * h)
    return grad
