"""Numerically stable soft-min (scaled negative log-sum-exp) and its gradient."""

from __future__ import annotations

import numpy as np

__all__ = ["softmin_value", "softmin_gradient", "softmin_rows"]


def _checked(y, eps: float) -> tuple[np.ndarray, float]:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("soft-min of an empty vector is undefined")
    eps = float(eps)
    if eps <= 0:
        raise ValueError(f"smoothing scale must be positive (got {eps})")
    return y, eps


def softmin_value(y, eps: float) -> float:
    """Smooth under-approximation of min(y): -eps*log(sum_j exp(-y_j/eps)).

    The minimum entry is factored out before exponentiating, so every
    exponent is <= 0 and the inner sum lies in [1, n].  That pins the result
    inside [min(y) - eps*log(n), min(y)] even in floating point, with no
    overflow for entries of magnitude 1e6 at eps = 0.01.
    """
    y, eps = _checked(y, eps)
    ymin = float(y.min())
    return ymin - eps * float(np.log(np.exp(-(y - ymin) / eps).sum()))


def softmin_gradient(y, eps: float) -> np.ndarray:
    """Gradient of softmin_value: the softmax of -y/eps, a probability vector.

    Larger weight goes to smaller entries; the output is normalized so it
    sums to one up to rounding.
    """
    y, eps = _checked(y, eps)
    w = np.exp(-(y - y.min()) / eps)
    return w / w.sum()


def softmin_rows(Y: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise soft-min values and gradients sharing one pass of exponentials.

    Y has shape (m, n); returns (values of length m, row-stochastic (m, n)
    weight matrix).  Used by the dispatch policies and the dual objective so
    repeated per-row calls do not recompute the same exponentials.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("Y must be a nonempty 2-d array")
    eps = float(eps)
    if eps <= 0:
        raise ValueError(f"smoothing scale must be positive (got {eps})")
    ymin = Y.min(axis=1, keepdims=True)
    w = np.exp(-(Y - ymin) / eps)
    sums = w.sum(axis=1, keepdims=True)
    values = ymin[:, 0] - eps * np.log(sums[:, 0])
    return values, w / sums
