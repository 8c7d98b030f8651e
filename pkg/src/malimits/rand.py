"""Seeded sampling and a chunked Monte Carlo expectation engine.

Every random draw in the package goes through an :class:`RngStream`.  A
stream is a ``(seed, stream_id)`` pair; chunk ``c`` of a stream is backed by
a Philox generator keyed on ``(seed, stream_id)`` whose counter starts at
block ``c``.  Chunks are therefore independent of evaluation order, which is
what makes results bit-identical for any worker count.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

_U64 = (1 << 64) - 1

DEFAULT_CHUNK_SIZE = 1024
DEFAULT_Z = 1.96


@dataclass(frozen=True)
class RngStream:
    """A reproducible random substream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= _U64:
                raise InvalidArgumentError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self, chunk: int = 0) -> np.random.Generator:
        """Generator for chunk ``chunk``; identical on every call."""
        if chunk < 0:
            raise InvalidArgumentError("chunk index must be non-negative")
        # chunk lives in the third counter word, so chunks never overlap
        # unless one of them draws 2**128 blocks
        key = np.array([int(self.seed), int(self.stream_id)], dtype=np.uint64)
        counter = np.array([0, 0, int(chunk), 0], dtype=np.uint64)
        bitgen = np.random.Philox(key=key, counter=counter)
        return np.random.Generator(bitgen)

    def child(self, *labels) -> "RngStream":
        """Derive an independent stream from this one and a tuple of labels."""
        digest = hashlib.blake2b(repr((int(self.stream_id),) + labels).encode(), digest_size=8).digest()
        return RngStream(self.seed, int.from_bytes(digest, "little"))


def as_generator(source) -> np.random.Generator:
    """Accept either an :class:`RngStream` (chunk 0) or a ready Generator."""
    if isinstance(source, RngStream):
        return source.generator(0)
    if isinstance(source, np.random.Generator):
        return source
    raise InvalidArgumentError(f"expected RngStream or numpy Generator, got {type(source).__name__}")


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate of an expectation with a normal-approximation CI."""

    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples, z: float = DEFAULT_Z) -> "McEstimate":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 2:
            raise InvalidArgumentError("at least two samples are needed for a standard error")
        mean = float(np.mean(x))
        if np.all(x == x[0]):
            se = 0.0
            mean = float(x[0])
        else:
            se = float(np.std(x, ddof=1) / math.sqrt(x.size))
        return cls(mean, se, mean - z * se, mean + z * se, int(x.size))

    @classmethod
    def exact(cls, value: float, n_samples: int) -> "McEstimate":
        v = float(value)
        return cls(v, 0.0, v, v, int(n_samples))


def _chunk_sizes(trials: int, chunk_size: int) -> list[int]:
    full, rest = divmod(trials, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def mc_samples(
    f: Callable[[np.random.Generator, int], np.ndarray],
    trials: int,
    stream: RngStream,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``f`` on ``trials`` independent realizations, chunk by chunk.

    ``f(rng, size)`` must draw ``size`` realizations from ``rng`` and return an
    array whose first axis has length ``size``.  The result is the
    concatenation over chunks in chunk order.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be positive")
    if chunk_size < 1:
        raise InvalidArgumentError("chunk_size must be positive")
    sizes = _chunk_sizes(int(trials), int(chunk_size))

    def run(item):
        idx, size = item
        out = np.asarray(f(stream.generator(idx), size))
        if out.shape[:1] != (size,):
            raise InvalidArgumentError(f"f returned shape {out.shape}, expected first axis {size}")
        return out

    items = list(enumerate(sizes))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, items))
    else:
        parts = [run(item) for item in items]
    return np.concatenate(parts, axis=0)


def mc_expectation(
    f: Callable[[np.random.Generator, int], np.ndarray],
    trials: int,
    stream: RngStream,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    z: float = DEFAULT_Z,
) -> McEstimate:
    """Monte Carlo estimate of ``E[f]`` over ``trials`` realizations."""
    if trials < 2:
        raise InvalidArgumentError("trials must be at least 2 to estimate a variance")
    x = mc_samples(f, trials, stream, chunk_size=chunk_size, workers=workers)
    return McEstimate.from_samples(x, z)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian array with total variance ``variance``."""
    parts = rng.standard_normal(tuple(shape) + (2,))
    out = parts[..., 0] + 1j * parts[..., 1]
    return out * math.sqrt(variance / 2.0)


def sample_complex_gaussian(stream, rows: int, cols: int, variance: float = 1.0) -> np.ndarray:
    """``rows x cols`` matrix of i.i.d. CN(0, variance) entries."""
    if rows < 1 or cols < 1:
        raise InvalidArgumentError("rows and cols must be at least 1")
    if not variance > 0:
        raise InvalidArgumentError("variance must be positive")
    return complex_normal(as_generator(stream), (int(rows), int(cols)), variance)
