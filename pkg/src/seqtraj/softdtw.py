"""Soft dynamic time warping between prediction sequences.

A prediction sequence is a (tau, C) float64 array whose rows are softmax
scores (nonnegative, summing to 1).  The gamma-soft DTW distance relaxes the
classical minimum-cost alignment with a SoftMin over all monotone alignment
paths; the O(tau * tau') dynamic program below is its standard equivalent.
The backward pass accumulates occupancy weights E over the alignment lattice,
from which exact gradients with respect to either sequence follow.

A brute-force oracle that enumerates every alignment path explicitly is kept
alongside for testing the gamma -> 0 limit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ROW_SUM_TOL = 1e-9
BRUTEFORCE_MAX_LEN = 10


def check_prediction_sequence(phi: np.ndarray, name: str = "sequence") -> np.ndarray:
    """Validate a (tau, C) row-stochastic array and return it as float64."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise ValueError(f"{name} must be 2-D (tau, C), got shape {phi.shape}")
    tau, c = phi.shape
    if tau < 1:
        raise ValueError(f"{name} must have tau >= 1")
    if c < 2:
        raise ValueError(f"{name} must have at least 2 classes, got {c}")
    if not np.all(np.isfinite(phi)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(phi < 0):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(phi.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValueError(f"{name} rows must sum to 1 within {ROW_SUM_TOL}")
    return phi


def distance_matrix(a: np.ndarray, b: np.ndarray, validate: bool = True) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of a and b."""
    if validate:
        a = check_prediction_sequence(a, "a")
        b = check_prediction_sequence(b, "b")
    else:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"class-count mismatch: a has {a.shape[1]} columns, b has {b.shape[1]}"
        )
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("mnc,mnc->mn", diff, diff)


@njit(cache=True)
def _forward_dp(D, gamma):
    """Forward recursion r[i,j] = D[i-1,j-1] + softmin(three predecessors).

    Returns the (n+1, m+1) array r with r[0,0] = 0 and +inf borders.
    gamma = 0 takes the exact hard minimum.
    """
    n, m = D.shape
    r = np.full((n + 1, m + 1), np.inf)
    r[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            x = r[i - 1, j]
            y = r[i, j - 1]
            z = r[i - 1, j - 1]
            mn = min(x, min(y, z))
            if gamma == 0.0:
                s = mn
            else:
                s = mn - gamma * np.log(
                    np.exp(-(x - mn) / gamma)
                    + np.exp(-(y - mn) / gamma)
                    + np.exp(-(z - mn) / gamma)
                )
            r[i, j] = D[i - 1, j - 1] + s
    return r


@njit(cache=True)
def _backward_dp(D, r, gamma):
    """Occupancy weights E[i,j] for the soft-DTW gradient.

    Reverse recursion: each cell receives from its three successors the
    softmin weight it had as a predecessor there.  E is (n, m), nonnegative,
    with E[n-1, m-1] = 1.
    """
    n, m = D.shape
    rx = np.full((n + 2, m + 2), -np.inf)
    rx[1 : n + 1, 1 : m + 1] = r[1:, 1:]
    rx[n + 1, m + 1] = r[n, m]
    dx = np.zeros((n + 2, m + 2))
    dx[1 : n + 1, 1 : m + 1] = D
    e = np.zeros((n + 2, m + 2))
    e[n + 1, m + 1] = 1.0
    for j in range(m, 0, -1):
        for i in range(n, 0, -1):
            # exponents are <= 0 because r_succ <= D_succ + r[i,j]
            wa = np.exp((rx[i + 1, j] - rx[i, j] - dx[i + 1, j]) / gamma)
            wb = np.exp((rx[i, j + 1] - rx[i, j] - dx[i, j + 1]) / gamma)
            wc = np.exp((rx[i + 1, j + 1] - rx[i, j] - dx[i + 1, j + 1]) / gamma)
            e[i, j] = wa * e[i + 1, j] + wb * e[i, j + 1] + wc * e[i + 1, j + 1]
    return e[1 : n + 1, 1 : m + 1]


def soft_dtw(a: np.ndarray, b: np.ndarray, gamma: float, validate: bool = True) -> float:
    """gamma-soft DTW distance between two prediction sequences.

    At gamma = 0 this equals the classical DTW minimum path cost; for
    gamma > 0 it is the SoftMin over all path costs and may lie below the
    hard minimum.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    D = distance_matrix(a, b, validate=validate)
    r = _forward_dp(D, float(gamma))
    return float(r[-1, -1])


def soft_dtw_occupancy(
    a: np.ndarray, b: np.ndarray, gamma: float, validate: bool = True
) -> tuple[float, np.ndarray]:
    """Soft-DTW value together with the (tau, tau') occupancy matrix E."""
    if gamma <= 0:
        raise ValueError(f"occupancy requires gamma > 0, got {gamma}")
    D = distance_matrix(a, b, validate=validate)
    r = _forward_dp(D, float(gamma))
    e = _backward_dp(D, r, float(gamma))
    return float(r[-1, -1]), e


def soft_dtw_grad(
    a: np.ndarray, b: np.ndarray, gamma: float, validate: bool = True
) -> tuple[float, np.ndarray, np.ndarray]:
    """Soft-DTW value and its exact gradients with respect to both sequences.

    grad_a[m] = sum_n E[m,n] * 2 (a_m - b_n) and symmetrically for grad_b.
    Refuses gamma = 0, where ties make the hard-DTW gradient set-valued.
    """
    if gamma <= 0:
        raise ValueError(f"gradient requires gamma > 0, got {gamma}")
    if validate:
        a = check_prediction_sequence(a, "a")
        b = check_prediction_sequence(b, "b")
    else:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
    value, e = soft_dtw_occupancy(a, b, gamma, validate=False)
    grad_a = 2.0 * (a * e.sum(axis=1)[:, None] - e @ b)
    grad_b = 2.0 * (b * e.sum(axis=0)[:, None] - e.T @ a)
    return value, grad_a, grad_b


# --- brute-force path enumeration oracle ---

_PATH_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def alignment_paths(tau: int, tau_p: int):
    """Yield every monotone alignment path as a list of 0-based (i, j) pairs.

    Paths start at (0, 0), end at (tau-1, tau_p-1), and advance i, j, or both
    by exactly 1 per step.
    """
    stack = [[(0, 0)]]
    while stack:
        path = stack.pop()
        i, j = path[-1]
        if i == tau - 1 and j == tau_p - 1:
            yield path
            continue
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < tau and nj < tau_p:
                stack.append(path + [(ni, nj)])


def _padded_paths(tau: int, tau_p: int) -> tuple[np.ndarray, np.ndarray]:
    """All alignment paths as padded index arrays (pads point past the grid)."""
    key = (tau, tau_p)
    if key not in _PATH_CACHE:
        paths = list(alignment_paths(tau, tau_p))
        max_len = max(len(p) for p in paths)
        rows = np.full((len(paths), max_len), tau, dtype=np.int64)
        cols = np.full((len(paths), max_len), tau_p, dtype=np.int64)
        for k, p in enumerate(paths):
            idx = np.asarray(p, dtype=np.int64)
            rows[k, : len(p)] = idx[:, 0]
            cols[k, : len(p)] = idx[:, 1]
        _PATH_CACHE[key] = (rows, cols)
    return _PATH_CACHE[key]


def dtw_bruteforce(a: np.ndarray, b: np.ndarray, validate: bool = True) -> float:
    """Exact classical DTW by explicit enumeration of every alignment path.

    Only valid at desk scale; sequence lengths above BRUTEFORCE_MAX_LEN are
    rejected to keep the path count bounded.
    """
    D = distance_matrix(a, b, validate=validate)
    tau, tau_p = D.shape
    if tau > BRUTEFORCE_MAX_LEN or tau_p > BRUTEFORCE_MAX_LEN:
        raise ValueError(
            f"sequences too long for brute force: {tau}x{tau_p} "
            f"(limit {BRUTEFORCE_MAX_LEN})"
        )
    dx = np.zeros((tau + 1, tau_p + 1))
    dx[:tau, :tau_p] = D
    rows, cols = _padded_paths(tau, tau_p)
    costs = dx[rows, cols].sum(axis=1)
    return float(costs.min())
