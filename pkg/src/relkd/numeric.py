"""Deterministic numeric primitives: vectors, a seedable PRNG, and a
central-finite-difference gradient checker.

All arithmetic is float64. The PRNG is SplitMix64, chosen because its output
sequence is a pure function of the 64-bit seed and reproduces bit-exactly on
any platform with 64-bit integer arithmetic.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

_U64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

#: Default central-difference step. Balances truncation error (O(h^2)) against
#: round-off error (O(eps/h)) for float64.
DEFAULT_FD_STEP = 1e-5


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array with at least one entry."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size < 1:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array with at least one row and column."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def dot(x, y) -> float:
    """Inner product of two equal-length vectors."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if xv.shape != yv.shape:
        raise ValueError(f"dimension mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    return float(np.dot(xv, yv))


def norm(x) -> float:
    """L2 norm, sqrt(dot(x, x))."""
    xv = as_vector(x, "x")
    return float(np.sqrt(np.dot(xv, xv)))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, h: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Central-difference gradient of a scalar function at x.

    g_i = (f(x + h*e_i) - f(x - h*e_i)) / (2h). Raises if f returns a
    non-finite value at any probe point.
    """
    if not (h > 0):
        raise ValueError(f"step h must be positive, got {h}")
    x0 = as_vector(x, "x")
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] = x0[i] + h
        fp = float(f(xp))
        xm = x0.copy()
        xm[i] = x0[i] - h
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"function returned non-finite value near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g


def finite_diff_grad_array(
    f: Callable[[np.ndarray], float], x, h: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """finite_diff_grad for an arbitrary-shape array argument.

    Perturbs one entry at a time and returns a gradient of the same shape.
    """
    x0 = np.asarray(x, dtype=np.float64)
    shape = x0.shape

    def f_flat(v: np.ndarray) -> float:
        return float(f(v.reshape(shape)))

    return finite_diff_grad(f_flat, x0.ravel(), h).reshape(shape)


def grad_relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Sup-norm relative disagreement between two gradients.

    max|a - n| / max(max|a|, max|n|, floor): relative to the largest gradient
    magnitude, so coordinates that happen to be ~0 do not dominate.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {n.shape}")
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), floor)
    return float(np.max(np.abs(a - n))) / scale


class SplitMix64:
    """SplitMix64 PRNG with documented real-valued transforms.

    Update rule (all mod 2^64): state += 0x9E3779B97F4A7C15, then the output
    is mixed as z ^= z>>30, z *= 0xBF58476D1CE4E5B9, z ^= z>>27,
    z *= 0x94D049BB133111EB, z ^= z>>31.

    * uniform():  (next_u64() >> 11) * 2^-53, in [0, 1)
    * normal():   Box-Muller on (u1, u2) where u1 = ((next_u64() >> 11) + 1)
      * 2^-53 in (0, 1] and u2 is a plain uniform; returns
      sqrt(-2 ln u1) * cos(2 pi u2) and caches the sin twin for the next call.

    Arrays are filled in row-major order from the single stream, so equal
    seeds give bit-identical draw sequences.
    """

    def __init__(self, seed: int):
        if not (0 <= int(seed) <= _U64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self._state = int(seed)
        self._cached_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _U64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _U64
        z = ((z ^ (z >> 27)) * _MIX2) & _U64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self) -> float:
        if self._cached_normal is not None:
            z = self._cached_normal
            self._cached_normal = None
            return z
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        self._cached_normal = float(r * np.sin(theta))
        return float(r * np.cos(theta))

    def uniforms(self, shape: int | Sequence[int]) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = self.uniform()
        return out.reshape(shape)

    def normals(self, shape: int | Sequence[int]) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = self.normal()
        return out.reshape(shape)

    def integer(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection-free modulo of a
        53-bit draw; bias is negligible for the small bounds used here."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return int(self.uniform() * bound)


def seeded_rng(seed: int) -> SplitMix64:
    """Deterministic stream for a given unsigned 64-bit seed."""
    return SplitMix64(seed)
