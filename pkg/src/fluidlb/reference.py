"""Independent brute-force oracles for cross-checking the closed-form solvers.

Nothing here shares code with the production paths: the QP oracle is plain
projected gradient descent over the scaled simplex, and the derivative
oracle is central differencing.  Deliberately simple and slow.
"""

from __future__ import annotations

import numpy as np

__all__ = ["project_scaled_simplex", "qp_bruteforce", "central_difference"]


def project_scaled_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of v onto {x >= 0, sum(x) = total}.

    Standard sort-and-threshold construction: with entries sorted in
    decreasing order, find the largest k for which u_k exceeds the running
    shortfall (cumsum_k - total)/k and subtract that threshold.
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def qp_bruteforce(
    gamma_row: np.ndarray,
    z_row: np.ndarray,
    nu: np.ndarray,
    r: float,
    tol: float = 1e-13,
    max_iters: int = 200_000,
) -> np.ndarray:
    """Solve one dispatcher QP by projected gradient descent.

    minimize sum_j (x_j/gamma_j + (x_j - gamma_j z_j)^2/(2 gamma_j) + nu_j x_j)
    over the scaled simplex {x >= 0, sum x = r}.  Step size 1/L with
    L = max_j 1/gamma_j; iterates until the displacement stalls below tol.
    """
    gamma_row = np.asarray(gamma_row, dtype=float)
    z_row = np.asarray(z_row, dtype=float)
    nu = np.asarray(nu, dtype=float)
    lin = 1.0 / gamma_row + nu
    step = float(gamma_row.min())  # 1 / max(1/gamma)
    x = np.full(gamma_row.size, r / gamma_row.size)
    for _ in range(max_iters):
        grad = lin + x / gamma_row - z_row
        x_new = project_scaled_simplex(x - step * grad, r)
        if np.abs(x_new - x).max() < tol:
            return x_new
        x = x_new
    return x


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for idx in range(x.size):
        bump = np.zeros(x.size)
        bump[idx] = h
        g[idx] = (f(x + bump) - f(x - bump)) / (2.0 * h)
    return g
