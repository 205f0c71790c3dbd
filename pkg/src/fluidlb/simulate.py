"""Fixed-step integration of the routing dynamics, with recording and monitors.

The integrator is classic fourth-order Runge-Kutta with nonnegativity
clipping applied to every stage state; the multiplier projection is part of
the field itself, so stages stay consistent with the flow they sample.  A
delayed-arrival variant feeds pool inflows through per-pair ring buffers
spanning the setup times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import dual_value, equilibrium_queues, primal_from_dual, solve_dual
from .model import Scenario, SystemState, scenario_hash
from .myopic import myopic_rates, waiting_time
from .proximal import lyapunov_distance, proximal_rates, solve_saddle
from .softmin import softmin_rows

__all__ = [
    "POLICIES",
    "StabilityError",
    "IntegrationError",
    "Trajectory",
    "MonotonicityReport",
    "stability_guard_dt",
    "integrate",
    "integrate_delayed",
    "detect_equilibrium",
    "monitor_lyapunov",
]

POLICIES = ("myopic", "proximal", "myopic-delayed")


class StabilityError(ValueError):
    """Requested step size exceeds the stiffness guard for the policy."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class IntegrationError(RuntimeError):
    """The state left the representable range (NaN/Inf) mid-run."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


def stability_guard_dt(s: Scenario) -> float:
    """Largest safe step for the myopic field.

    The soft-min dispatch fractions vary on the scale epsilon, so the field's
    stiffness is bounded by max(r) / (epsilon * min(c)); half its inverse
    keeps the explicit integrator comfortably inside the stability region.
    """
    return s.epsilon * float(s.c.min()) / (2.0 * float(s.r.max()))


@dataclass(frozen=True)
class Trajectory:
    """Recorded run: states plus derived per-step signals.

    Signal columns not carried by the policy (e.g. setup queues under the
    myopic policy) are None.  ``lyapunov`` holds the dual objective of the
    waiting times for myopic-family runs and is None for proximal runs,
    where the distance-to-saddle value needs a reference point (see
    ``monitor_lyapunov``).
    """

    times: np.ndarray
    qs: np.ndarray
    Zs: np.ndarray | None
    nus: np.ndarray | None
    rates: np.ndarray
    setup_costs: np.ndarray
    lyapunov: np.ndarray | None
    field_norms: np.ndarray
    policy: str
    dt: float
    scenario: Scenario
    meta: dict

    def __len__(self) -> int:
        return self.times.size

    def state(self, k: int) -> SystemState:
        return SystemState(
            q=self.qs[k],
            Z=None if self.Zs is None else self.Zs[k],
            nu=None if self.nus is None else self.nus[k],
        )

    @property
    def final_state(self) -> SystemState:
        return self.state(len(self) - 1)


def _check_run_args(dt: float, T: float) -> int:
    if dt <= 0:
        raise ValueError(f"dt must be positive (got {dt})")
    if T < dt:
        raise ValueError(f"horizon T must cover at least one step (T = {T}, dt = {dt})")
    return int(round(T / dt))


def _check_state0(state0: SystemState, s: Scenario, policy: str) -> None:
    q = np.asarray(state0.q, dtype=float)
    if q.shape != (s.n,) or np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError("state0.q must be a finite nonnegative vector of length n")
    if policy == "proximal":
        if state0.Z is None or state0.nu is None:
            raise ValueError("proximal runs need state0 with Z and nu")
        Z = np.asarray(state0.Z, dtype=float)
        nu = np.asarray(state0.nu, dtype=float)
        if Z.shape != (s.m, s.n) or np.any(Z < 0):
            raise ValueError("state0.Z must be nonnegative with shape (m, n)")
        if nu.shape != (s.n,) or np.any(nu < 0):
            raise ValueError("state0.nu must be a nonnegative vector of length n")


def _myopic_deriv(q: np.ndarray, s: Scenario) -> np.ndarray:
    mu = np.maximum(q / s.c - 1.0, 0.0)
    _, frac = softmin_rows(s.tau + mu[None, :], s.epsilon)
    return s.r @ frac - np.minimum(q, s.c)


def _myopic_full(q: np.ndarray, s: Scenario):
    # One fused pass: field, rates, and the dual value of the waiting times.
    mu = np.maximum(q / s.c - 1.0, 0.0)
    values, frac = softmin_rows(s.tau + mu[None, :], s.epsilon)
    x = s.r[:, None] * frac
    dq = x.sum(axis=0) - np.minimum(q, s.c)
    lyap = float(s.r @ values - s.c @ mu)
    return dq, x, lyap


def integrate(
    policy: str,
    state0: SystemState,
    s: Scenario,
    dt: float,
    T: float,
    stride: int = 1,
) -> Trajectory:
    """Integrate the chosen policy from ``state0`` over [0, T].

    Records every ``stride``-th step (plus the initial state).  For the
    myopic policy a step above the stability guard is rejected up front.
    """
    if policy == "myopic":
        return _integrate_myopic(state0, s, dt, T, stride)
    if policy == "proximal":
        return _integrate_proximal(state0, s, dt, T, stride)
    raise ValueError(f"unknown policy {policy!r}; use one of {POLICIES[:2]}")


def _guard_myopic_dt(s: Scenario, dt: float) -> None:
    dt_max = stability_guard_dt(s)
    if dt > dt_max:
        raise StabilityError(
            f"dt = {dt} exceeds the myopic stability guard {dt_max:.6g}; "
            f"use dt <= {dt_max:.6g}",
            suggested_dt=dt_max,
        )


def _integrate_myopic(state0, s, dt, T, stride) -> Trajectory:
    nsteps = _check_run_args(dt, T)
    _guard_myopic_dt(s, dt)
    _check_state0(state0, s, "myopic")
    q = np.array(state0.q, dtype=float)

    nrec = nsteps // stride + 1
    times = np.empty(nrec)
    qs = np.empty((nrec, s.n))
    rates = np.empty((nrec, s.m, s.n))
    setup_costs = np.empty(nrec)
    lyap = np.empty(nrec)
    field_norms = np.empty(nrec)

    def record(k, t, q, dq, x, ly):
        times[k] = t
        qs[k] = q
        rates[k] = x
        setup_costs[k] = np.sum(s.tau * x)
        lyap[k] = ly
        field_norms[k] = np.linalg.norm(dq)

    dq, x, ly = _myopic_full(q, s)
    record(0, 0.0, q, dq, x, ly)
    rec = 1
    half = 0.5 * dt
    for step in range(1, nsteps + 1):
        k1 = dq
        k2 = _myopic_deriv(np.maximum(q + half * k1, 0.0), s)
        k3 = _myopic_deriv(np.maximum(q + half * k2, 0.0), s)
        k4 = _myopic_deriv(np.maximum(q + dt * k3, 0.0), s)
        q = np.maximum(q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0)
        if not np.all(np.isfinite(q)):
            raise IntegrationError(f"non-finite state at step {step}", step)
        dq, x, ly = _myopic_full(q, s)
        if step % stride == 0:
            record(rec, step * dt, q, dq, x, ly)
            rec += 1
    return Trajectory(
        times=times[:rec],
        qs=qs[:rec],
        Zs=None,
        nus=None,
        rates=rates[:rec],
        setup_costs=setup_costs[:rec],
        lyapunov=lyap[:rec],
        field_norms=field_norms[:rec],
        policy="myopic",
        dt=dt,
        scenario=s,
        meta={"policy": "myopic", "dt": dt, "T": T, "stride": stride,
              "scenario_hash": scenario_hash(s)},
    )


def _proximal_deriv(q, Z, nu, s):
    x = proximal_rates(Z, nu, s)
    dq = (s.gamma * Z).sum(axis=0) - np.minimum(q, s.c)
    dZ = x - s.gamma * Z
    g = x.sum(axis=0) - s.ctilde
    dnu = np.where((g > 0) | (nu > 0), g, 0.0)
    return dq, dZ, dnu, x


def _integrate_proximal(state0, s, dt, T, stride) -> Trajectory:
    nsteps = _check_run_args(dt, T)
    _check_state0(state0, s, "proximal")
    q = np.array(state0.q, dtype=float)
    Z = np.array(state0.Z, dtype=float)
    nu = np.array(state0.nu, dtype=float)

    nrec = nsteps // stride + 1
    times = np.empty(nrec)
    qs = np.empty((nrec, s.n))
    Zs = np.empty((nrec, s.m, s.n))
    nus = np.empty((nrec, s.n))
    rates = np.empty((nrec, s.m, s.n))
    setup_costs = np.empty(nrec)
    field_norms = np.empty(nrec)

    def record(k, t, dq, dZ, dnu, x):
        times[k] = t
        qs[k] = q
        Zs[k] = Z
        nus[k] = nu
        rates[k] = x
        setup_costs[k] = np.sum(s.tau * x)
        field_norms[k] = np.sqrt(
            np.sum(dq * dq) + np.sum(dZ * dZ) + np.sum(dnu * dnu)
        )

    dq, dZ, dnu, x = _proximal_deriv(q, Z, nu, s)
    record(0, 0.0, dq, dZ, dnu, x)
    rec = 1
    half = 0.5 * dt
    for step in range(1, nsteps + 1):
        kq1, kZ1, kn1 = dq, dZ, dnu
        kq2, kZ2, kn2, _ = _proximal_deriv(
            np.maximum(q + half * kq1, 0.0),
            np.maximum(Z + half * kZ1, 0.0),
            np.maximum(nu + half * kn1, 0.0),
            s,
        )
        kq3, kZ3, kn3, _ = _proximal_deriv(
            np.maximum(q + half * kq2, 0.0),
            np.maximum(Z + half * kZ2, 0.0),
            np.maximum(nu + half * kn2, 0.0),
            s,
        )
        kq4, kZ4, kn4, _ = _proximal_deriv(
            np.maximum(q + dt * kq3, 0.0),
            np.maximum(Z + dt * kZ3, 0.0),
            np.maximum(nu + dt * kn3, 0.0),
            s,
        )
        sixth = dt / 6.0
        q = np.maximum(q + sixth * (kq1 + 2.0 * kq2 + 2.0 * kq3 + kq4), 0.0)
        Z = np.maximum(Z + sixth * (kZ1 + 2.0 * kZ2 + 2.0 * kZ3 + kZ4), 0.0)
        nu = np.maximum(nu + sixth * (kn1 + 2.0 * kn2 + 2.0 * kn3 + kn4), 0.0)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(Z)) and np.all(np.isfinite(nu))):
            raise IntegrationError(f"non-finite state at step {step}", step)
        dq, dZ, dnu, x = _proximal_deriv(q, Z, nu, s)
        if step % stride == 0:
            record(rec, step * dt, dq, dZ, dnu, x)
            rec += 1
    return Trajectory(
        times=times[:rec],
        qs=qs[:rec],
        Zs=Zs[:rec],
        nus=nus[:rec],
        rates=rates[:rec],
        setup_costs=setup_costs[:rec],
        lyapunov=None,
        field_norms=field_norms[:rec],
        policy="proximal",
        dt=dt,
        scenario=s,
        meta={"policy": "proximal", "dt": dt, "T": T, "stride": stride,
              "scenario_hash": scenario_hash(s)},
    )


def equilibrium_warm_start(s: Scenario, tol: float = 1e-12):
    """Self-consistent (state, rates) pair for warm-starting the delayed run.

    The delayed closed loop can be unstable around the operating point (the
    delay-gain product grows like 1/epsilon), in which case any residual in
    the starting state is amplified exponentially.  This polishes the dual
    solution until the queue balance residual sits at rounding level, then
    returns the queue state together with the rates the integrator itself
    recomputes there, so a warm-started run holds the point to within the
    update's rounding.
    """
    mu = solve_dual(s, tol=tol)
    q = equilibrium_queues(primal_from_dual(mu, s), mu, s)
    rates = myopic_rates(waiting_time(q, s.c), s)
    return SystemState(q=q), rates


def integrate_delayed(
    state0: SystemState,
    s: Scenario,
    dt: float,
    T: float,
    initial_rates=None,
    stride: int = 1,
) -> Trajectory:
    """Myopic policy with pool inflows delayed by the setup times.

    Dispatch decisions use the current queues, but a decision made at time t
    reaches pool j only at t + tau[i, j]; the rates in transit live in ring
    buffers of length round(tau/dt).  ``initial_rates`` pre-fills the buffers
    (warm start at a known operating point); the default zero fill models an
    empty past.  Advanced with explicit first-order steps, since the buffers
    only resolve the past at dt granularity.
    """
    nsteps = _check_run_args(dt, T)
    _guard_myopic_dt(s, dt)
    _check_state0(state0, s, "myopic")
    lengths = np.maximum(np.round(s.tau / dt).astype(int), 1)
    mismatch = np.abs(lengths * dt - s.tau) / s.tau
    if np.any(mismatch > 0.01):
        i, j = (int(v) for v in np.argwhere(mismatch > 0.01)[0])
        raise ValueError(
            f"dt = {dt} does not divide tau[{i}][{j}] = {s.tau[i, j]} within 1%"
        )
    q = np.array(state0.q, dtype=float)
    flat_len = lengths.ravel()
    buf = np.zeros((s.m * s.n, int(flat_len.max())))
    if initial_rates is not None:
        initial_rates = np.asarray(initial_rates, dtype=float)
        if initial_rates.shape != (s.m, s.n):
            raise ValueError("initial_rates must have shape (m, n)")
        buf[:] = initial_rates.ravel()[:, None]
    ptr = np.zeros(s.m * s.n, dtype=int)
    rows = np.arange(s.m * s.n)

    nrec = nsteps // stride + 1
    times = np.empty(nrec)
    qs = np.empty((nrec, s.n))
    rates = np.empty((nrec, s.m, s.n))
    setup_costs = np.empty(nrec)
    lyap = np.empty(nrec)
    field_norms = np.empty(nrec)
    rec = 0
    for step in range(nsteps + 1):
        mu = np.maximum(q / s.c - 1.0, 0.0)
        values, frac = softmin_rows(s.tau + mu[None, :], s.epsilon)
        x = s.r[:, None] * frac
        inflow = buf[rows, ptr].reshape(s.m, s.n).sum(axis=0)
        dq = inflow - np.minimum(q, s.c)
        if step % stride == 0:
            times[rec] = step * dt
            qs[rec] = q
            rates[rec] = x
            setup_costs[rec] = np.sum(s.tau * x)
            lyap[rec] = s.r @ values - s.c @ mu
            field_norms[rec] = np.linalg.norm(dq)
            rec += 1
        if step == nsteps:
            break
        buf[rows, ptr] = x.ravel()
        ptr = (ptr + 1) % flat_len
        q = np.maximum(q + dt * dq, 0.0)
        if not np.all(np.isfinite(q)):
            raise IntegrationError(f"non-finite state at step {step + 1}", step + 1)
    return Trajectory(
        times=times[:rec],
        qs=qs[:rec],
        Zs=None,
        nus=None,
        rates=rates[:rec],
        setup_costs=setup_costs[:rec],
        lyapunov=lyap[:rec],
        field_norms=field_norms[:rec],
        policy="myopic-delayed",
        dt=dt,
        scenario=s,
        meta={"policy": "myopic-delayed", "dt": dt, "T": T, "stride": stride,
              "scenario_hash": scenario_hash(s),
              "buffer_lengths": lengths.tolist(),
              "warm_start": initial_rates is not None},
    )


def detect_equilibrium(
    traj: Trajectory, s: Scenario, tol: float = 1e-3, window: float = 5.0
) -> SystemState | None:
    """Final state if the field norm stayed below ``tol`` over the last ``window``.

    Returns None when the trajectory is shorter than the window or any
    recorded field norm inside it is too large.
    """
    t_end = traj.times[-1]
    if t_end - traj.times[0] < window:
        return None
    tail = traj.field_norms[traj.times >= t_end - window]
    if np.all(tail < tol):
        return traj.final_state
    return None


@dataclass(frozen=True)
class MonotonicityReport:
    """Per-step monotonicity audit of a Lyapunov signal."""

    kind: str
    direction: str
    num_steps: int
    violations: int
    worst_violation: float
    passed: bool


def monitor_lyapunov(
    traj: Trajectory,
    s: Scenario,
    kind: str,
    reference=None,
    slack: float = 1e-6,
) -> MonotonicityReport:
    """Audit the policy's Lyapunov function along a recorded trajectory.

    kind "dual_of_mu" (myopic family): the dual objective evaluated at the
    waiting times must never decrease.  kind "saddle_distance" (proximal):
    the half squared distance to a reference saddle must never increase; the
    reference is computed by running the saddle flow to convergence when not
    supplied.  Per-step changes beyond ``slack`` count as violations.
    """
    if kind == "dual_of_mu":
        if traj.policy not in ("myopic", "myopic-delayed"):
            raise ValueError(f"kind 'dual_of_mu' needs a myopic-family run, got {traj.policy!r}")
        v = traj.lyapunov
        if v is None:
            v = np.array([dual_value(waiting_time(qk, s.c), s) for qk in traj.qs])
        deltas = np.diff(v)
        bad = deltas < -slack
        worst = max(0.0, -float(deltas.min())) if deltas.size else 0.0
        direction = "nondecreasing"
    elif kind == "saddle_distance":
        if traj.policy != "proximal":
            raise ValueError(f"kind 'saddle_distance' needs a proximal run, got {traj.policy!r}")
        if reference is None:
            Z_hat, nu_hat = solve_saddle(s, s.ctilde)
        elif isinstance(reference, SystemState):
            Z_hat, nu_hat = reference.Z, reference.nu
        else:
            Z_hat, nu_hat = reference
        v = np.array(
            [lyapunov_distance(traj.Zs[k], traj.nus[k], Z_hat, nu_hat) for k in range(len(traj))]
        )
        deltas = np.diff(v)
        bad = deltas > slack
        worst = max(0.0, float(deltas.max())) if deltas.size else 0.0
        direction = "nonincreasing"
    else:
        raise ValueError(f"unknown Lyapunov kind {kind!r}")
    violations = int(bad.sum())
    return MonotonicityReport(
        kind=kind,
        direction=direction,
        num_steps=int(deltas.size),
        violations=violations,
        worst_violation=worst,
        passed=violations == 0,
    )
