"""Class exemplars as soft-DTW Frechet means of a support set.

An exemplar is a (tau_bar, C) trajectory M minimizing

    sum_n (w_n / tau_n) * softdtw(Phi_n, M, gamma)

over the support sequences Phi_n, with tau_bar the rounded mean support
length.  The minimization is plain fixed-step gradient descent with an
optional per-row projection onto the probability simplex, returning the
iterate with the lowest recorded objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import project_to_simplex
from .softdtw import check_prediction_sequence, soft_dtw, soft_dtw_grad


class NumericalError(RuntimeError):
    """Raised when an optimization step produces non-finite values."""


@dataclass
class SupportSet:
    """N same-class prediction sequences with simplex-normalized weights.

    Weights default to uniform; any nonnegative weights with positive sum are
    accepted and renormalized to sum to 1.
    """

    sequences: list[np.ndarray]
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.sequences) < 1:
            raise ValueError("support set must contain at least one sequence")
        self.sequences = [
            check_prediction_sequence(s, f"support[{i}]")
            for i, s in enumerate(self.sequences)
        ]
        c = self.sequences[0].shape[1]
        for i, s in enumerate(self.sequences):
            if s.shape[1] != c:
                raise ValueError(
                    f"support[{i}] has {s.shape[1]} classes, expected {c}"
                )
        n = len(self.sequences)
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (n,):
                raise ValueError(f"weights must have shape ({n},), got {w.shape}")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and nonnegative")
            total = w.sum()
            if total <= 0:
                raise ValueError("weights must have positive sum")
            self.weights = w / total

    @property
    def num_classes(self) -> int:
        return self.sequences[0].shape[1]

    def lengths(self) -> np.ndarray:
        return np.array([s.shape[0] for s in self.sequences])


def mean_length(support: SupportSet) -> int:
    """Rounded (half-up) mean support length, at least 1."""
    return max(1, int(np.floor(support.lengths().mean() + 0.5)))


def resample_linear(seq: np.ndarray, new_length: int, validate: bool = True) -> np.ndarray:
    """Resample a sequence to new_length rows by linear interpolation.

    Rows are interpolated at uniformly spaced fractional positions over
    [0, tau-1] and renormalized to sum to 1.
    """
    if new_length < 1:
        raise ValueError(f"new_length must be >= 1, got {new_length}")
    if validate:
        seq = check_prediction_sequence(seq, "sequence")
    else:
        seq = np.asarray(seq, dtype=np.float64)
    tau = seq.shape[0]
    if new_length == tau:
        return seq.copy()
    pos = np.linspace(0.0, tau - 1.0, new_length)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, tau - 1)
    frac = (pos - lo)[:, None]
    out = (1.0 - frac) * seq[lo] + frac * seq[hi]
    return out / out.sum(axis=1, keepdims=True)


def barycenter_objective(support: SupportSet, m: np.ndarray, gamma: float) -> float:
    """sum_n (w_n / tau_n) * softdtw(Phi_n, m, gamma)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != support.num_classes:
        raise ValueError(
            f"exemplar shape {m.shape} does not match support with "
            f"{support.num_classes} classes"
        )
    total = 0.0
    for seq, w in zip(support.sequences, support.weights):
        total += (w / seq.shape[0]) * soft_dtw(seq, m, gamma, validate=False)
    return total


def _canonical_order(support: SupportSet) -> SupportSet:
    # Accumulation runs in a content-derived order so permuting the support
    # set leaves every float operation, and hence the result, bit-identical.
    key = sorted(
        range(len(support.sequences)),
        key=lambda i: (
            support.sequences[i].shape[0],
            support.weights[i],
            support.sequences[i].tobytes(),
        ),
    )
    return SupportSet(
        [support.sequences[i] for i in key],
        np.array([support.weights[i] for i in key]),
    )


def barycenter(
    support: SupportSet,
    gamma: float,
    steps: int = 200,
    step_size: float = 0.1,
    length: int | None = None,
    project: bool = True,
    return_trace: bool = False,
):
    """Gradient-descent estimate of the soft-DTW Frechet mean of a support set.

    Initialized with the weighted Euclidean mean of the supports resampled to
    the target length.  Each step subtracts step_size times the objective
    gradient and (by default) projects rows back onto the probability
    simplex; the iterate with the lowest recorded objective is returned.
    Set project=False for the unconstrained ablation.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if step_size <= 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    support = _canonical_order(support)
    tau_bar = mean_length(support) if length is None else int(length)
    if tau_bar < 1:
        raise ValueError("exemplar length must be >= 1")

    m = np.zeros((tau_bar, support.num_classes))
    for seq, w in zip(support.sequences, support.weights):
        m += w * resample_linear(seq, tau_bar, validate=False)
    if project:
        m = project_to_simplex(m)

    best = m.copy()
    best_obj = barycenter_objective(support, m, gamma)
    trace = [best_obj]
    for step in range(int(steps)):
        grad = np.zeros_like(m)
        obj = 0.0
        for seq, w in zip(support.sequences, support.weights):
            value, _, grad_m = soft_dtw_grad(seq, m, gamma, validate=False)
            scale = w / seq.shape[0]
            obj += scale * value
            grad += scale * grad_m
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite barycenter gradient at step {step}")
        # obj is the objective at the current iterate, before the update
        if obj < best_obj:
            best_obj = obj
            best = m.copy()
        if step > 0:
            trace.append(obj)
        m = m - step_size * grad
        if project:
            m = project_to_simplex(m)
    final_obj = barycenter_objective(support, m, gamma)
    trace.append(final_obj)
    if final_obj < best_obj:
        best_obj = final_obj
        best = m.copy()
    if return_trace:
        return best, np.asarray(trace)
    return best
