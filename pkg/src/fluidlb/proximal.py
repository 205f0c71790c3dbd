"""Proximal dispatch through setup queues and virtual-queue multipliers.

Each dispatcher i holds setup queues z[i, :] and solves a small per-row QP:

    minimize_j  sum_j (x_j / gamma_j + (x_j - gamma_j z_j)^2 / (2 gamma_j)
                       + nu_j x_j)   subject to  x >= 0, sum_j x_j = r_i.

The solution is the thresholded affine map x_j = max(gamma_j (z_j - nu_j -
lam) - 1, 0) with lam the unique level making the row sum to r_i; it is found
exactly by sorting the activation breakpoints.  Saddle dynamics on (Z, nu)
descend/ascend the reduced Lagrangian and converge to an optimum of the
routing program with capacities shrunk to ctilde, which keeps equilibrium
pool queues strictly below c.
"""

from __future__ import annotations

import numpy as np

from .model import KktResiduals, Scenario

__all__ = [
    "dispatcher_qp",
    "proximal_rates",
    "reduced_lagrangian",
    "reduced_gradients",
    "saddle_field",
    "combined_field",
    "lyapunov_distance",
    "verify_saddle_kkt",
    "solve_saddle",
    "SaddleConvergenceError",
]


class SaddleConvergenceError(RuntimeError):
    """Saddle dynamics did not settle within the allotted horizon."""


def _qp_rows(gamma: np.ndarray, z: np.ndarray, nu: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve every dispatcher QP at once by exact breakpoint search.

    The row sum sum_j max(gamma_j (z_j - nu_j - lam) - 1, 0) is piecewise
    linear and strictly decreasing in lam wherever positive, ranging from
    +inf down to 0, so it crosses r exactly once.  Sorting the per-coordinate
    activation levels lam_j = z_j - nu_j - 1/gamma_j descending and solving
    the linear segment containing the crossing gives lam in closed form.
    """
    if np.any(r <= 0):
        i = int(np.flatnonzero(r <= 0)[0])
        raise ValueError(f"row demand must be positive (r[{i}] = {r[i]})")
    shifted = z - nu[None, :]
    bp = shifted - 1.0 / gamma
    order = np.argsort(-bp, axis=1)
    bps = np.take_along_axis(bp, order, axis=1)
    gs = np.take_along_axis(gamma, order, axis=1)
    cum_gb = np.cumsum(gs * bps, axis=1)
    cum_g = np.cumsum(gs, axis=1)
    # Candidate level if the k+1 largest-breakpoint coordinates are active.
    lam_cand = (cum_gb - r[:, None]) / cum_g
    next_bp = np.concatenate([bps[:, 1:], np.full((bps.shape[0], 1), -np.inf)], axis=1)
    first_valid = np.argmax(lam_cand >= next_bp, axis=1)
    lam = np.take_along_axis(lam_cand, first_valid[:, None], axis=1)
    return np.maximum(gamma * (shifted - lam) - 1.0, 0.0)


def dispatcher_qp(i: int, z_row, nu, s: Scenario) -> np.ndarray:
    """Optimal dispatch for a single row i given its setup queues and nu."""
    z_row = np.asarray(z_row, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if z_row.shape != (s.n,):
        raise ValueError(f"z_row must have length n = {s.n}")
    return _qp_rows(s.gamma[i : i + 1], z_row[None, :], nu, s.r[i : i + 1])[0]


def proximal_rates(Z, nu, s: Scenario) -> np.ndarray:
    """Stack of all dispatcher QP solutions; rows sum to r."""
    Z = np.asarray(Z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if Z.shape != (s.m, s.n):
        raise ValueError(f"Z must have shape ({s.m}, {s.n}), got {Z.shape}")
    return _qp_rows(s.gamma, Z, nu, s.r)


def reduced_lagrangian(Z, nu, s: Scenario, capacities) -> float:
    """Lagrangian of the proximal program with the rate block minimized out.

    The inner minimizer is the dispatcher QP solution, so this function of
    (Z, nu) alone is convex in Z and concave (affine) in nu.
    """
    Z = np.asarray(Z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    capacities = np.asarray(capacities, dtype=float)
    x = proximal_rates(Z, nu, s)
    setup = np.sum(x / s.gamma)
    penalty = np.sum((x - s.gamma * Z) ** 2 / (2.0 * s.gamma))
    return float(setup + penalty + nu @ (x.sum(axis=0) - capacities))


def reduced_gradients(Z, nu, s: Scenario, capacities) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of the reduced Lagrangian.

    Because the rate block is an optimizer of the inner problem, the envelope
    rule applies: no differentiation through the QP solution is needed.

        d/dZ  = gamma * Z - x_bar
        d/dnu = column sums of x_bar - capacities
    """
    Z = np.asarray(Z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    capacities = np.asarray(capacities, dtype=float)
    x = proximal_rates(Z, nu, s)
    return s.gamma * Z - x, x.sum(axis=0) - capacities


def _positive_projection(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Rate projection keeping beta nonnegative: alpha if alpha > 0 or beta > 0, else 0."""
    return np.where((alpha > 0) | (beta > 0), alpha, 0.0)


def saddle_field(Z, nu, s: Scenario, capacities) -> tuple[np.ndarray, np.ndarray]:
    """Gradient descent/ascent flow on the reduced Lagrangian.

    Z moves against its gradient; nu climbs its gradient with the projection
    that keeps nu from leaving the nonnegative orthant.
    """
    dZ, g = reduced_gradients(Z, nu, s, capacities)
    nu = np.asarray(nu, dtype=float)
    return -dZ, _positive_projection(g, nu)


def combined_field(state, s: Scenario) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint drift of pool queues and the saddle dynamics (shrunk capacities).

    Pools receive work at the setup completion rates gamma * Z and serve at
    min(q, c); the (Z, nu) block runs the saddle flow against ctilde and does
    not depend on q, so the coupling is one-directional.
    """
    q = np.asarray(state.q, dtype=float)
    Z = np.asarray(state.Z, dtype=float)
    nu = np.asarray(state.nu, dtype=float)
    x = proximal_rates(Z, nu, s)
    dq = (s.gamma * Z).sum(axis=0) - np.minimum(q, s.c)
    dZ = x - s.gamma * Z
    g = x.sum(axis=0) - s.ctilde
    return dq, dZ, _positive_projection(g, nu)


def lyapunov_distance(Z, nu, Z_hat, nu_hat) -> float:
    """Half squared distance to a reference saddle; nonincreasing along the flow."""
    Z = np.asarray(Z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    dz = Z - np.asarray(Z_hat, dtype=float)
    dn = nu - np.asarray(nu_hat, dtype=float)
    return 0.5 * float(np.sum(dz * dz)) + 0.5 * float(np.sum(dn * dn))


def verify_saddle_kkt(Z, nu, s: Scenario, capacities, tol: float = 1e-6) -> KktResiduals:
    """Optimality residuals of (Z, nu) for the capacity-constrained program.

    stationarity checks the setup-queue fixed point gamma * Z = x_bar; the
    remaining residuals mirror the primal/dual/complementarity checks of the
    routing program with the given capacities.
    """
    Z = np.asarray(Z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    capacities = np.asarray(capacities, dtype=float)
    x = proximal_rates(Z, np.maximum(nu, 0.0), s)
    col = x.sum(axis=0)
    primal = max(
        float(np.abs(x.sum(axis=1) - s.r).max()),
        float(np.maximum(col - capacities, 0.0).max()),
        float(np.maximum(-x, 0.0).max()),
    )
    dual = float(np.maximum(-nu, 0.0).max())
    comp = float(np.abs(nu * (col - capacities)).max())
    stationarity = float(np.abs(s.gamma * Z - x).max())
    return KktResiduals(
        primal_infeas=primal,
        dual_infeas=dual,
        comp_slack=comp,
        stationarity=stationarity,
    )


def solve_saddle(
    s: Scenario,
    capacities,
    dt: float = 0.01,
    tol: float = 1e-8,
    max_time: float = 5000.0,
    Z0=None,
    nu0=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the saddle flow to a fixed point (field norm below ``tol``).

    Plain fixed-step fourth-order integration on (Z, nu) with nonnegativity
    clipping on the stage states.  Used to produce reference saddles for
    Lyapunov monitoring and equilibrium reports.
    """
    if dt <= 0 or max_time <= dt:
        raise ValueError("need dt > 0 and max_time > dt")
    capacities = np.asarray(capacities, dtype=float)
    Z = np.zeros((s.m, s.n)) if Z0 is None else np.array(Z0, dtype=float)
    nu = np.zeros(s.n) if nu0 is None else np.array(nu0, dtype=float)
    steps = int(np.ceil(max_time / dt))
    for _ in range(steps):
        kz1, kn1 = saddle_field(Z, nu, s, capacities)
        norm = np.sqrt(np.sum(kz1 * kz1) + np.sum(kn1 * kn1))
        if norm < tol:
            return Z, nu
        kz2, kn2 = saddle_field(
            np.maximum(Z + 0.5 * dt * kz1, 0.0), np.maximum(nu + 0.5 * dt * kn1, 0.0), s, capacities
        )
        kz3, kn3 = saddle_field(
            np.maximum(Z + 0.5 * dt * kz2, 0.0), np.maximum(nu + 0.5 * dt * kn2, 0.0), s, capacities
        )
        kz4, kn4 = saddle_field(
            np.maximum(Z + dt * kz3, 0.0), np.maximum(nu + dt * kn3, 0.0), s, capacities
        )
        Z = np.maximum(Z + (dt / 6.0) * (kz1 + 2.0 * kz2 + 2.0 * kz3 + kz4), 0.0)
        nu = np.maximum(nu + (dt / 6.0) * (kn1 + 2.0 * kn2 + 2.0 * kn3 + kn4), 0.0)
    raise SaddleConvergenceError(
        f"saddle flow still moving after t = {max_time} (field norm {norm:.3e})"
    )
