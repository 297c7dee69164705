"""Shared numerical primitives: SoftMin, spectral norm estimation, seeded randomness.

Dense matrices and sequences are plain float64 numpy arrays (row-major).
All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1

# Fixed seed for the power-iteration start vector, so spectral_norm is a
# deterministic function of its matrix argument alone.
_POWER_ITERATION_SEED = 0x5EC7_0A11


def require_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def softmin(values, gamma: float) -> float:
    """Smooth minimum of a list of reals.

    Computes -gamma * log(sum_i exp(-v_i / gamma)) using a shift by the true
    minimum so that small gamma does not overflow.  gamma = 0 returns the
    exact hard minimum.  The result is always <= min(values).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmin requires at least one value")
    if np.any(np.isnan(v)):
        raise ValueError("softmin received NaN input")
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    m = float(np.min(v))
    if gamma == 0.0:
        return m
    return m - gamma * float(np.log(np.sum(np.exp(-(v - m) / gamma))))


def softmin_weights(values, gamma: float) -> np.ndarray:
    """Gradient of softmin with respect to its inputs.

    w_i = exp(-v_i/gamma) / sum_j exp(-v_j/gamma); nonnegative, sums to 1.
    gamma must be strictly positive: at gamma = 0 the hard minimum only has a
    subgradient and the caller must branch explicitly.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmin_weights requires at least one value")
    if np.any(np.isnan(v)):
        raise ValueError("softmin_weights received NaN input")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    w = np.exp(-(v - np.min(v)) / gamma)
    return w / np.sum(w)


def spectral_norm(m: np.ndarray, iterations: int = 1000, tol: float = 1e-10) -> float:
    """Largest singular value of a dense matrix, by power iteration.

    Runs power iteration on m^T m from a fixed seeded start vector; stops when
    two successive estimates differ by less than tol or after `iterations`
    rounds.  A zero matrix returns 0.0.
    """
    a = require_finite(m, "matrix")
    if a.ndim != 2 or a.size == 0:
        raise ValueError("spectral_norm expects a nonempty 2-D matrix")
    gen = np.random.Generator(np.random.Philox(key=_POWER_ITERATION_SEED))
    v = gen.standard_normal(a.shape[1])
    nv = np.linalg.norm(v)
    v = v / nv
    sigma = 0.0
    for _ in range(int(iterations)):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        u = a.T @ w
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return float(nw)
        v = u / nu
        if abs(nw - sigma) < tol:
            sigma = nw
            break
        sigma = nw
    return float(np.linalg.norm(a @ v))


def project_to_simplex(rows: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex.

    Standard sort-and-threshold algorithm: for row y with sorted values u,
    find rho = max{k : u_k - (cumsum(u)_k - 1)/k > 0} and clip at the
    corresponding threshold.
    """
    y = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    u = np.sort(y, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, y.shape[1] + 1)
    cond = u - css / k > 0
    rho = np.count_nonzero(cond, axis=1)
    theta = css[np.arange(y.shape[0]), rho - 1] / rho
    out = np.maximum(y - theta[:, None], 0.0)
    return out.reshape(np.asarray(rows).shape)


class Rng:
    """Deterministic random source backed by the Philox 4x32-10 counter-based
    generator (numpy's ``np.random.Philox``).

    Equal seeds produce bit-identical streams across runs and platforms.
    ``derive`` creates a statistically independent child stream whose seed is
    a keyed BLAKE2b hash of the given tags, so substream contents never depend
    on draw order elsewhere in the program.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def derive(self, *tags) -> "Rng":
        h = hashlib.blake2b(
            repr(tags).encode("utf-8"),
            key=self.seed.to_bytes(8, "little"),
            digest_size=8,
        )
        return Rng(int.from_bytes(h.digest(), "little"))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def permutation(self, x):
        return self._gen.permutation(x)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"
