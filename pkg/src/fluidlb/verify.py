"""Randomized self-verification suite backing the CLI verify command."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import equilibrium, model, proximal, reference
from .myopic import myopic_field, waiting_time
from .softmin import softmin_value, softmin_gradient

__all__ = ["PropertyResult", "random_feasible_scenario", "random_instance", "run_property_suite"]

DEFAULT_SEED = 20260401


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    cases: int
    detail: str


def random_feasible_scenario(
    rng: np.random.Generator,
    max_m: int = 4,
    max_n: int = 4,
    load_range: tuple[float, float] = (0.4, 0.85),
    eps_range: tuple[float, float] = (0.05, 0.1),
) -> model.Scenario:
    """Strictly feasible random instance with m, n drawn up to the given caps.

    Demand is scaled to a load factor strictly below one and individual rates
    are bounded away from zero, so every generated instance admits a unique
    equilibrium and a finite stability guard.
    """
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, max_n + 1))
    c = rng.uniform(3.0, 10.0, n)
    load = rng.uniform(*load_range)
    weights = rng.uniform(0.2, 1.0, m)
    r = load * c.sum() * weights / weights.sum()
    tau = rng.uniform(0.2, 2.5, (m, n))
    eps = float(rng.uniform(*eps_range))
    return model.validate_scenario(r=r, c=c, tau=tau, epsilon=eps)


def random_instance(rng: np.random.Generator, max_m: int = 4, max_n: int = 4):
    """Raw (r, c, tau) triple with no feasibility guarantee; may overload."""
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, max_n + 1))
    c = rng.uniform(1.0, 10.0, n)
    r = rng.uniform(0.2, 6.0, m)
    u = rng.uniform()
    if u < 0.15:
        # near the boundary but on a definite side: rounding in the scaling
        # could otherwise land a hair on either side of sum(c)
        side = 1e-10 if rng.uniform() < 0.5 else -1e-10
        r = r * (c.sum() / r.sum()) * (1.0 + side)
    tau = rng.uniform(0.2, 2.5, (m, n))
    return r, c, tau


def _check_softmin_bracket(rng, cases=1000) -> PropertyResult:
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 11))
        y = rng.uniform(-100.0, 100.0, n)
        eps = float(rng.choice([1.0, 0.1, 0.01]))
        v = softmin_value(y, eps)
        lo = y.min() - eps * np.log(n)
        if not (lo <= v <= y.min()):
            return PropertyResult("softmin-bracket", False, cases,
                                  f"value {v} outside [{lo}, {y.min()}]")
        t = float(rng.uniform(-10.0, 10.0))
        shift_err = abs(softmin_value(y + t, eps) - (v + t))
        worst = max(worst, shift_err)
        if shift_err > 1e-12:
            return PropertyResult("softmin-bracket", False, cases,
                                  f"translation identity off by {shift_err:.2e}")
    return PropertyResult("softmin-bracket", True, cases,
                          f"bracket tight, worst translation error {worst:.2e}")


def _check_gradients(rng, scenarios, corrupt=False, cases_per=4) -> PropertyResult:
    worst = 0.0
    total = 0
    for s in scenarios:
        for _ in range(cases_per):
            y = rng.uniform(0.0, 5.0, s.n)
            eps = max(s.epsilon, 0.01)
            h = 1e-6 * eps
            fd = reference.central_difference(lambda v: softmin_value(v, eps), y, h)
            g = softmin_gradient(y, eps)
            err = np.abs(fd - g).max() / max(1.0, np.abs(g).max())
            worst = max(worst, err)
            total += 1
            if err > 1e-6:
                return PropertyResult("gradient-consistency", False, total,
                                      f"soft-min gradient off by {err:.2e}")
            mu = rng.uniform(0.0, 3.0, s.n)
            fd = reference.central_difference(lambda v: equilibrium.dual_value(v, s), mu, 1e-6)
            g = equilibrium.dual_gradient(mu, s)
            if corrupt:
                g = g + 1e-3
            err = np.abs(fd - g).max() / max(1.0, np.abs(g).max())
            worst = max(worst, err)
            total += 1
            if err > 1e-6:
                return PropertyResult("gradient-consistency", False, total,
                                      f"dual gradient off by {err:.2e}")
    return PropertyResult("gradient-consistency", True, total,
                          f"worst relative error {worst:.2e}")


def _check_qp_oracle(rng, cases=100) -> PropertyResult:
    worst_gap = 0.0
    worst_kkt = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 7))
        gamma = rng.uniform(0.2, 5.0, (1, n))
        z = rng.uniform(0.0, 10.0, (1, n))
        nu = rng.uniform(0.0, 3.0, n)
        r = np.array([float(rng.uniform(0.5, 20.0))])
        x = proximal._qp_rows(gamma, z, nu, r)
        x_ref = reference.qp_bruteforce(gamma[0], z[0], nu, r[0])
        gap = np.abs(x[0] - x_ref).max()
        worst_gap = max(worst_gap, gap)
        if gap > 1e-6:
            return PropertyResult("qp-oracle", False, cases,
                                  f"closed form vs brute force differ by {gap:.2e}")
        # internal KKT consistency: recover the level from the largest entry
        j = int(np.argmax(x[0]))
        lam = z[0, j] - nu[j] - (x[0, j] + 1.0) / gamma[0, j]
        resid = max(
            abs(x[0].sum() - r[0]),
            np.abs(np.where(x[0] > 0, gamma[0] * (z[0] - nu - lam) - 1.0 - x[0], 0.0)).max(),
            np.maximum(np.where(x[0] == 0, gamma[0] * (z[0] - nu - lam) - 1.0, 0.0), 0.0).max(),
        )
        worst_kkt = max(worst_kkt, resid)
        if resid > 1e-10:
            return PropertyResult("qp-oracle", False, cases,
                                  f"KKT residual {resid:.2e}")
    return PropertyResult("qp-oracle", True, cases,
                          f"worst gap {worst_gap:.2e}, worst KKT residual {worst_kkt:.2e}")


def _check_kkt_roundtrip(scenarios) -> PropertyResult:
    worst_kkt = 0.0
    worst_field = 0.0
    for s in scenarios:
        rep = equilibrium.solve_equilibrium(s)
        worst_kkt = max(worst_kkt, rep.kkt.max())
        if not rep.kkt.within(1e-4):
            return PropertyResult("kkt-roundtrip", False, len(scenarios),
                                  f"KKT residual {rep.kkt.max():.2e} at a solved equilibrium")
        fnorm = float(np.linalg.norm(myopic_field(rep.q_star, s)))
        worst_field = max(worst_field, fnorm)
        if fnorm > 1e-3:
            return PropertyResult("kkt-roundtrip", False, len(scenarios),
                                  f"equilibrium queues are not a fixed point (|field| = {fnorm:.2e})")
        mu_back = waiting_time(rep.q_star, s.c)
        if np.abs(mu_back - rep.mu_star).max() > 1e-6:
            return PropertyResult("kkt-roundtrip", False, len(scenarios),
                                  "waiting times at q* do not recover the multipliers")
    return PropertyResult("kkt-roundtrip", True, len(scenarios),
                          f"worst KKT {worst_kkt:.2e}, worst fixed-point residual {worst_field:.2e}")


def _check_feasibility_characterization(rng, cases=200) -> PropertyResult:
    for _ in range(cases):
        r, c, tau = random_instance(rng)
        s = None
        try:
            s = model.validate_scenario(r=r, c=c, tau=tau, epsilon=0.05)
        except model.ScenarioError:
            continue
        rep = model.check_feasibility(s)
        x = np.outer(s.r, s.c) / s.c.sum()
        point_ok = (
            np.all(x >= 0)
            and np.abs(x.sum(axis=1) - s.r).max() < 1e-9 * max(1.0, s.r.max())
            and np.all(x.sum(axis=0) <= s.c * (1.0 + 1e-12))
        )
        if rep.feasible != point_ok:
            return PropertyResult(
                "feasibility-characterization", False, cases,
                f"flag {rep.feasible} but proportional point feasible = {point_ok}",
            )
        try:
            model.proportional_feasible_point(s)
            raised = False
        except model.InfeasibleError:
            raised = True
        if raised == rep.feasible:
            return PropertyResult(
                "feasibility-characterization", False, cases,
                "proportional_feasible_point disagrees with check_feasibility",
            )
    return PropertyResult("feasibility-characterization", True, cases, "both directions agree")


def run_property_suite(
    s: model.Scenario,
    n_random: int = 50,
    seed: int = DEFAULT_SEED,
    corrupt: str | None = None,
) -> list[PropertyResult]:
    """Run every property check on ``s`` plus ``n_random`` random instances.

    ``corrupt`` is a test hook: "gradient" perturbs the dual gradient inside
    the gradient-consistency check so the harness can prove it would catch a
    broken derivative.
    """
    if corrupt not in (None, "gradient"):
        raise ValueError(f"unknown corrupt hook {corrupt!r}")
    rng = np.random.default_rng(seed)
    scenarios = [s] + [random_feasible_scenario(rng) for _ in range(n_random)]
    results = [
        _check_softmin_bracket(rng),
        _check_gradients(rng, scenarios, corrupt=(corrupt == "gradient")),
        _check_qp_oracle(rng),
        _check_kkt_roundtrip(scenarios),
        _check_feasibility_characterization(rng),
    ]
    return results
