"""Seeded substreams and the two noise distributions used by the mechanisms.

Every stream is identified by a 64-bit master seed plus a path of labels.
The pair is hashed into the key of a counter-based Philox generator, so a
stream's samples depend only on its identity and never on which other
streams were created first or on which worker runs it.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


def _derive_key(seed: int, path: tuple) -> int:
    blob = json.dumps([seed, list(path)], separators=(",", ":")).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=16).digest(), "little")


class RngStream:
    """A reproducible random stream addressed by ``(seed, path)``.

    Streams are cheap to fork; a task that needs randomness should fork its
    own child rather than share one stream with other tasks.
    """

    def __init__(self, seed: int = 0, path=()):
        seed = int(seed)
        if seed < 0 or seed > _MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path = tuple(str(p) for p in path)
        self.generator = np.random.Generator(np.random.Philox(key=_derive_key(seed, self.path)))

    def fork(self, *labels) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(str(l) for l in labels))

    @property
    def path_str(self) -> str:
        return "/".join(self.path)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path!r})"

    def uniform(self, size=None):
        """Uniform draws on the open interval (0, 1); never exactly 0 or 1."""
        k = self.generator.integers(0, 1 << 53, size=size, dtype=np.uint64)
        return (k.astype(np.float64) + 0.5) / _TWO53 if size is not None else (float(k) + 0.5) / _TWO53


class NoiseScale(float):
    """A positive, finite noise scale (beta for Laplace, lambda for one-sided)."""

    def __new__(cls, value):
        v = float(value)
        if not math.isfinite(v) or v <= 0:
            raise ValueError(f"noise scale must be positive and finite, got {value!r}")
        return super().__new__(cls, v)


def laplace_sample(rng: RngStream, scale, size=None):
    """Zero-mean Laplace(scale) by inverse transform of one uniform per draw."""
    b = NoiseScale(scale)
    u = rng.uniform(size)
    if size is None:
        return b * math.log(2 * u) if u < 0.5 else -b * math.log(2 * (1 - u))
    u = np.asarray(u)
    lo = u < 0.5
    out = np.empty_like(u)
    out[lo] = b * np.log(2 * u[lo])
    out[~lo] = -b * np.log(2 * (1 - u[~lo]))
    return out


def one_sided_laplace_sample(rng: RngStream, scale, size=None):
    """Mirrored exponential: density exp(x/scale)/scale on x <= 0."""
    lam = NoiseScale(scale)
    u = rng.uniform(size)
    if size is None:
        return lam * math.log(u)
    return lam * np.log(u)


def one_sided_laplace_cdf(x, scale):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, np.exp(np.minimum(x, 0) / float(scale)), 1.0)
