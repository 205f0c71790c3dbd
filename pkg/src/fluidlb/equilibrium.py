"""Equilibrium of the myopic policy via the dual of the smoothed routing program.

The smoothed program minimizes total setup cost plus an entropy penalty over
routing matrices with fixed row sums r and column sums capped by c.  Its dual
in the capacity multipliers mu is smooth and concave:

    D(mu) = sum_i r_i * softmin(tau[i, :] + mu) - c . mu

and is maximized here by projected gradient ascent over mu >= 0.  The primal
optimum is recovered in closed form from mu, and the equilibrium queue
occupancies follow as q*_j = sum_i x*_ij + c_j * mu*_j.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import (
    CostReport,
    InfeasibleError,
    KktResiduals,
    Scenario,
    check_feasibility,
    compute_costs,
    scenario_with_epsilon,
)
from .myopic import myopic_rates
from .softmin import softmin_rows

__all__ = [
    "DualAscentError",
    "EquilibriumReport",
    "dual_value",
    "dual_gradient",
    "solve_dual",
    "primal_from_dual",
    "equilibrium_queues",
    "verify_kkt",
    "solve_equilibrium",
    "reference_rates_small_eps",
]


class DualAscentError(RuntimeError):
    """Projected gradient ascent ran out of iterations before the tolerance."""

    def __init__(self, message: str, mu_last: np.ndarray, residual: float):
        super().__init__(message)
        self.mu_last = mu_last
        self.residual = residual


def dual_value(mu, s: Scenario) -> float:
    """Concave dual objective at multipliers mu."""
    mu = np.asarray(mu, dtype=float)
    values, _ = softmin_rows(s.tau + mu[None, :], s.epsilon)
    return float(s.r @ values - s.c @ mu)


def dual_gradient(mu, s: Scenario) -> np.ndarray:
    """Gradient of the dual: expected load per pool minus capacity.

    Component j is sum_i r_i * delta_ij(mu) - c_j where delta is the soft-min
    dispatch fraction at delays tau + mu.
    """
    mu = np.asarray(mu, dtype=float)
    _, frac = softmin_rows(s.tau + mu[None, :], s.epsilon)
    return s.r @ frac - s.c


def _projected_gradient(mu: np.ndarray, g: np.ndarray) -> np.ndarray:
    # At the boundary mu_j = 0 only an ascent direction counts as residual.
    return np.where(mu > 0, g, np.maximum(g, 0.0))


def solve_dual(
    s: Scenario,
    step: float | None = None,
    tol: float = 1e-8,
    max_iters: int = 200_000,
    mu0=None,
) -> np.ndarray:
    """Maximize the dual by projected gradient ascent with backtracking.

    The initial step defaults to epsilon * min(c) / max(r), a conservative
    inverse of the dual curvature scale; backtracking halves it whenever the
    ascent condition fails and the accepted step is re-expanded afterwards.
    Terminates when the projected gradient norm drops below ``tol``.  A warm
    start may be passed through ``mu0``.
    """
    rep = check_feasibility(s)
    if not rep.feasible:
        raise InfeasibleError(
            f"dual is unbounded for infeasible demand: sum(r) = {s.r.sum()} > sum(c) = {s.c.sum()}"
        )
    if not rep.strictly_feasible:
        warnings.warn(
            "total demand equals total capacity: the dual maximizer is a ray and "
            "equilibrium multipliers are not unique",
            stacklevel=2,
        )
    mu = np.zeros(s.n) if mu0 is None else np.maximum(np.asarray(mu0, dtype=float), 0.0)
    if step is None:
        step = s.epsilon * float(s.c.min()) / float(s.r.max())
    t = step
    sigma = 1e-4
    mu_prev = None
    g_prev = None
    for _ in range(max_iters):
        g = dual_gradient(mu, s)
        residual = float(np.linalg.norm(_projected_gradient(mu, g)))
        if residual <= tol:
            return mu
        if mu_prev is not None:
            # Curvature-tracking trial step: near the maximizer the ascent
            # condition drops below rounding resolution of D, so the trial
            # step itself must be contractive.  The secant ratio estimates
            # the inverse of the local curvature along the last move.
            sdiff = mu - mu_prev
            ydiff = g_prev - g
            denom = float(sdiff @ ydiff)
            if denom > 0.0:
                t = min(max(float(sdiff @ sdiff) / denom, 1e-3 * step), 1e8 * step)
        d0 = dual_value(mu, s)
        # Accept unconditionally once the predicted gain is unrepresentable
        # at the scale of D; comparisons below that are rounding noise.
        floor = 64.0 * np.finfo(float).eps * (1.0 + abs(d0))
        tt = t
        while True:
            cand = np.maximum(mu + tt * g, 0.0)
            gain = sigma * float(g @ (cand - mu))
            if gain <= floor or dual_value(cand, s) >= d0 + gain - floor:
                break
            tt *= 0.5
            if tt < 1e-18 * step:
                raise DualAscentError(
                    "backtracking stalled before reaching tolerance", mu, residual
                )
        mu_prev, g_prev = mu, g
        mu = cand
    raise DualAscentError(
        f"no convergence within {max_iters} iterations (projected gradient norm {residual:.3e})",
        mu,
        residual,
    )


def primal_from_dual(mu, s: Scenario) -> np.ndarray:
    """Optimal routing matrix induced by dual multipliers mu.

    This is exactly the myopic dispatch map evaluated at mu: row i equals
    r[i] times the soft-min fractions of tau[i, :] + mu.
    """
    return myopic_rates(mu, s)


def equilibrium_queues(x, mu, s: Scenario, return_cases: bool = False):
    """Equilibrium queue occupancy q*_j = sum_i x_ij + c_j * mu_j.

    For saturated pools (mu_j > 0, column sum = c_j) this equals
    c_j * (1 + mu_j); for unsaturated pools it reduces to the column sum.
    With ``return_cases`` the per-pool label ("saturated"/"unsaturated")
    is returned alongside.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    q = x.sum(axis=0) + s.c * mu
    if not return_cases:
        return q
    cases = ["saturated" if m > 0.0 else "unsaturated" for m in mu]
    return q, cases


def verify_kkt(x, mu, s: Scenario, tol: float = 1e-6) -> KktResiduals:
    """Max-abs residuals of the optimality system for a candidate pair (x, mu).

    All four residuals below ``tol`` certify a saddle point of the smoothed
    program.  ``stationarity`` measures the distance from x to the dispatch
    map induced by mu, which characterizes the inner minimizer.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    col = x.sum(axis=0)
    primal = max(
        float(np.abs(x.sum(axis=1) - s.r).max()),
        float(np.maximum(col - s.c, 0.0).max()),
        float(np.maximum(-x, 0.0).max()),
    )
    dual = float(np.maximum(-mu, 0.0).max())
    comp = float(np.abs(mu * (col - s.c)).max())
    stationarity = float(np.abs(x - primal_from_dual(np.maximum(mu, 0.0), s)).max())
    return KktResiduals(
        primal_infeas=primal,
        dual_infeas=dual,
        comp_slack=comp,
        stationarity=stationarity,
    )


@dataclass(frozen=True)
class EquilibriumReport:
    """Solved equilibrium: multipliers, rates, queues, and certificates."""

    mu_star: np.ndarray
    x_star: np.ndarray
    q_star: np.ndarray
    dual_value: float
    kkt: KktResiduals
    unique: bool
    costs: CostReport


def solve_equilibrium(s: Scenario, tol: float = 1e-8) -> EquilibriumReport:
    """Full pipeline: dual ascent, primal recovery, queues, KKT check, costs."""
    mu = solve_dual(s, tol=tol)
    x = primal_from_dual(mu, s)
    return EquilibriumReport(
        mu_star=mu,
        x_star=x,
        q_star=equilibrium_queues(x, mu, s),
        dual_value=dual_value(mu, s),
        kkt=verify_kkt(x, mu, s),
        unique=check_feasibility(s).strictly_feasible,
        costs=compute_costs(x, s),
    )


def reference_rates_small_eps(
    s: Scenario, eps_sequence=(0.1, 0.03, 0.01, 0.003)
) -> np.ndarray:
    """Near-limit routing rates via smoothing continuation.

    Solves the dual along a decreasing smoothing sequence, warm-starting each
    solve with the previous multipliers, and returns the primal rates at the
    smallest scale.  Serves as the reference oracle for limiting (eps -> 0)
    routing rates.
    """
    if len(eps_sequence) == 0:
        raise ValueError("eps_sequence must be nonempty")
    mu = None
    s_eps = s
    for eps in eps_sequence:
        s_eps = scenario_with_epsilon(s, eps)
        mu = solve_dual(s_eps, mu0=mu)
    return primal_from_dual(mu, s_eps)
