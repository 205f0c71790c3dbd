"""Problem instances and shared value types for pool load balancing.

A scenario describes m task types arriving at rates ``r`` that must be
dispatched across n server pools with capacities ``c``.  Serving a type-i
task on a pool-j server first requires a setup of mean duration
``tau[i, j]``; ``gamma = 1/tau`` are the corresponding completion rates.
``tau`` is the single source of truth and ``gamma`` is derived from it at
construction.  All value types here are immutable after construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Scenario",
    "ScenarioError",
    "InfeasibleError",
    "FeasibilityReport",
    "CostReport",
    "KktResiduals",
    "SystemState",
    "validate_scenario",
    "scenario_with_capacities",
    "scenario_with_epsilon",
    "check_feasibility",
    "proportional_feasible_point",
    "compute_costs",
    "negentropy",
    "scenario_hash",
    "zero_state",
]


class ScenarioError(ValueError):
    """Raw scenario fields violate a model invariant."""


class InfeasibleError(ValueError):
    """Total demand exceeds total capacity where feasibility is required."""


def _locked(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """An immutable load-balancing instance.

    Fields
    ------
    r : arrival rate per task type (tasks/sec), length m, all > 0
    c : pool capacities (simultaneous tasks, i.e. tasks/sec at unit service
        rate), length n, all > 0
    tau : mean setup duration per (type, pool) pair (sec), shape (m, n), > 0
    gamma : setup completion rates, elementwise 1/tau (derived field)
    epsilon : soft-min smoothing scale (sec), > 0
    ctilde : shrunk capacity targets used by the proximal dispatcher,
        elementwise in (0, c)
    """

    r: np.ndarray
    c: np.ndarray
    tau: np.ndarray
    gamma: np.ndarray
    epsilon: float
    ctilde: np.ndarray

    @property
    def m(self) -> int:
        return self.r.size

    @property
    def n(self) -> int:
        return self.c.size

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "r": self.r.tolist(),
            "c": self.c.tolist(),
            "tau": self.tau.tolist(),
            "epsilon": self.epsilon,
            "ctilde": self.ctilde.tolist(),
        }


def validate_scenario(
    r,
    c,
    tau,
    epsilon: float = 0.01,
    ctilde=None,
    ctilde_factor: float | None = None,
    m: int | None = None,
    n: int | None = None,
) -> Scenario:
    """Build a Scenario from raw fields, rejecting anything inconsistent.

    ``ctilde`` may be given explicitly or via a scalar ``ctilde_factor``
    (default 0.99, applied to ``c``).  Optional ``m``/``n`` are checked
    against the array shapes; they are otherwise derived.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    if r.ndim != 1 or c.ndim != 1:
        raise ScenarioError("r and c must be one-dimensional")
    if m is not None and m != r.size:
        raise ScenarioError(f"m = {m} does not match len(r) = {r.size}")
    if n is not None and n != c.size:
        raise ScenarioError(f"n = {n} does not match len(c) = {c.size}")
    if tau.shape != (r.size, c.size):
        raise ScenarioError(
            f"tau must have shape (m, n) = ({r.size}, {c.size}), got {tau.shape}"
        )
    for name, arr in (("r", r), ("c", c)):
        if not np.all(np.isfinite(arr)):
            raise ScenarioError(f"{name} must be finite")
        bad = np.flatnonzero(arr <= 0)
        if bad.size:
            i = int(bad[0])
            raise ScenarioError(f"{name} must be positive ({name}[{i}] = {arr[i]})")
    if not np.all(np.isfinite(tau)):
        raise ScenarioError("tau must be finite")
    bad = np.argwhere(tau <= 0)
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise ScenarioError(f"tau must be positive (tau[{i}][{j}] = {tau[i, j]})")
    epsilon = float(epsilon)
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise ScenarioError(f"epsilon must be positive (epsilon = {epsilon})")

    if ctilde is not None and ctilde_factor is not None:
        raise ScenarioError("give either ctilde or ctilde_factor, not both")
    if ctilde is None:
        factor = 0.99 if ctilde_factor is None else float(ctilde_factor)
        if not 0 < factor < 1:
            raise ScenarioError(
                f"ctilde_factor must lie in (0, 1) (got {factor})"
            )
        ctilde = factor * c
    else:
        ctilde = np.atleast_1d(np.asarray(ctilde, dtype=float))
        if ctilde.shape != c.shape:
            raise ScenarioError("ctilde must have the same length as c")
    bad = np.flatnonzero(ctilde <= 0)
    if bad.size:
        j = int(bad[0])
        raise ScenarioError(f"ctilde must be positive (ctilde[{j}] = {ctilde[j]})")
    bad = np.flatnonzero(ctilde >= c)
    if bad.size:
        j = int(bad[0])
        raise ScenarioError(
            f"ctilde must be strictly below c (ctilde[{j}] = {ctilde[j]}, c[{j}] = {c[j]})"
        )

    return Scenario(
        r=_locked(r),
        c=_locked(c),
        tau=_locked(tau),
        gamma=_locked(1.0 / tau),
        epsilon=epsilon,
        ctilde=_locked(ctilde),
    )


def scenario_with_capacities(s: Scenario, c, ctilde_factor: float = 0.99) -> Scenario:
    """Same instance with capacities replaced (ctilde rescaled from the new c)."""
    return validate_scenario(s.r, c, s.tau, epsilon=s.epsilon, ctilde_factor=ctilde_factor)


def scenario_with_epsilon(s: Scenario, epsilon: float) -> Scenario:
    """Same instance with a different soft-min smoothing scale."""
    return validate_scenario(s.r, s.c, s.tau, epsilon=epsilon, ctilde=s.ctilde)


def scenario_hash(s: Scenario) -> str:
    """Canonical content hash, used to tie runs back to their instance."""
    payload = json.dumps(s.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeasibilityReport:
    """Aggregate demand vs. capacity, against both c and the shrunk ctilde."""

    feasible: bool
    strictly_feasible: bool
    slack: float
    feasible_shrunk: bool
    strictly_feasible_shrunk: bool
    slack_shrunk: float


def check_feasibility(s: Scenario) -> FeasibilityReport:
    """Demand can be routed iff total arrival rate does not exceed total capacity.

    Uniqueness guarantees downstream need the strict inequality, so both the
    weak and strict versions are reported, plus the same tests against the
    shrunk capacities.
    """
    total_r = float(s.r.sum())
    total_c = float(s.c.sum())
    total_ct = float(s.ctilde.sum())
    return FeasibilityReport(
        feasible=total_r <= total_c,
        strictly_feasible=total_r < total_c,
        slack=total_c - total_r,
        feasible_shrunk=total_r <= total_ct,
        strictly_feasible_shrunk=total_r < total_ct,
        slack_shrunk=total_ct - total_r,
    )


def proportional_feasible_point(s: Scenario) -> np.ndarray:
    """Routing matrix that splits every type across pools proportionally to capacity.

    x[i, j] = c[j] * r[i] / sum(c).  Row sums equal r exactly and column sums
    equal c[j] * sum(r)/sum(c) <= c[j] whenever the scenario is feasible.
    """
    rep = check_feasibility(s)
    if not rep.feasible:
        raise InfeasibleError(
            f"no feasible routing exists: sum(r) = {s.r.sum()} > sum(c) = {s.c.sum()}"
        )
    return np.outer(s.r, s.c) / s.c.sum()


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    """Setup cost and entropy penalty of a routing matrix.

    ``entropy_penalty`` is epsilon times the negative entropy of the dispatch
    fractions, weighted by arrival rates; it is <= 0 for any row-feasible
    matrix, with equality iff every row concentrates on a single pool.
    """

    setup_cost: float
    entropy_penalty: float
    total: float


def negentropy(d: np.ndarray) -> float:
    """sum d*log(d) with the 0*log(0) = 0 convention; <= 0 on the simplex."""
    d = np.asarray(d, dtype=float)
    pos = d > 0
    return float(np.sum(d[pos] * np.log(d[pos])))


def compute_costs(x: np.ndarray, s: Scenario) -> CostReport:
    """Evaluate the smoothed routing objective at a nonnegative routing matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape != (s.m, s.n):
        raise ValueError(f"x must have shape ({s.m}, {s.n}), got {x.shape}")
    if np.any(x < 0):
        i, j = (int(v) for v in np.argwhere(x < 0)[0])
        raise ValueError(f"x must be nonnegative (x[{i}][{j}] = {x[i, j]})")
    setup = float(np.sum(s.tau * x))
    pos = x > 0
    ratio = x[pos] / np.broadcast_to(s.r[:, None], x.shape)[pos]
    entropy = s.epsilon * float(np.sum(x[pos] * np.log(ratio)))
    return CostReport(setup_cost=setup, entropy_penalty=entropy, total=setup + entropy)


# ---------------------------------------------------------------------------
# system state and KKT residual container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemState:
    """Instantaneous state: pool queues q, setup queues Z, multipliers nu.

    Policies that do not carry setup queues or virtual-queue multipliers
    leave the corresponding fields as None.
    """

    q: np.ndarray
    Z: np.ndarray | None = None
    nu: np.ndarray | None = None


def zero_state(s: Scenario, policy: str = "proximal") -> SystemState:
    """All-zero initial state shaped for the given policy."""
    if policy in ("myopic", "myopic-delayed"):
        return SystemState(q=np.zeros(s.n))
    if policy == "proximal":
        return SystemState(q=np.zeros(s.n), Z=np.zeros((s.m, s.n)), nu=np.zeros(s.n))
    raise ValueError(f"unknown policy {policy!r}")


@dataclass(frozen=True)
class KktResiduals:
    """Max-abs optimality residuals for a primal/dual pair.

    primal_infeas: worst violation of row sums, capacity bounds, or x >= 0
    dual_infeas:   worst violation of multiplier nonnegativity
    comp_slack:    worst |multiplier * capacity slack|
    stationarity:  worst deviation of x from the dispatch map induced by the
                   multipliers
    """

    primal_infeas: float
    dual_infeas: float
    comp_slack: float
    stationarity: float

    def max(self) -> float:
        return max(self.primal_infeas, self.dual_infeas, self.comp_slack, self.stationarity)

    def within(self, tol: float) -> bool:
        return self.max() < tol
