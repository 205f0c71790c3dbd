import numpy as np
import pytest

from fluidlb import (
    InfeasibleError,
    Scenario,
    ScenarioError,
    SystemState,
    check_feasibility,
    compute_costs,
    proportional_feasible_point,
    scenario_with_capacities,
    scenario_with_epsilon,
    validate_scenario,
    zero_state,
)
from fluidlb.model import scenario_hash


def test_scenario_fields_and_gamma(scen_a):
    assert scen_a.m == 2 and scen_a.n == 2
    np.testing.assert_array_equal(scen_a.gamma, [[1.0, 0.5], [0.5, 1.0]])
    # gamma is derived from tau, exact elementwise inverse
    np.testing.assert_array_equal(scen_a.gamma * scen_a.tau, np.ones((2, 2)))
    np.testing.assert_allclose(scen_a.ctilde, 0.99 * scen_a.c)


def test_scenario_is_immutable(scen_a):
    with pytest.raises(Exception):
        scen_a.r[0] = 99.0
    with pytest.raises(Exception):
        scen_a.epsilon = 0.5


def test_zero_tau_rejected():
    with pytest.raises(ScenarioError, match="tau must be positive"):
        validate_scenario(r=[1.0], c=[1.0, 1.0], tau=[[0.0, 1.0]])


def test_ctilde_equal_to_c_rejected():
    with pytest.raises(ScenarioError, match="strictly below c"):
        validate_scenario(
            r=[1.0], c=[2.0, 2.0], tau=[[1.0, 1.0]], ctilde=[2.0, 1.9]
        )


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(r=[0.0], c=[1.0], tau=[[1.0]]),
        dict(r=[-1.0], c=[1.0], tau=[[1.0]]),
        dict(r=[1.0], c=[0.0], tau=[[1.0]]),
        dict(r=[1.0], c=[1.0], tau=[[1.0]], epsilon=0.0),
        dict(r=[1.0], c=[1.0], tau=[[1.0, 1.0]]),  # shape mismatch
        dict(r=[1.0], c=[1.0], tau=[[1.0]], m=2),  # stated m contradicts r
    ],
)
def test_bad_scenarios_rejected(kwargs):
    with pytest.raises(ScenarioError):
        validate_scenario(**kwargs)


def test_scenario_with_epsilon(scen_a):
    s2 = scenario_with_epsilon(scen_a, 0.1)
    assert s2.epsilon == 0.1
    np.testing.assert_array_equal(s2.tau, scen_a.tau)
    assert scen_a.epsilon == 0.01  # original untouched


def test_scenario_with_capacities(scen_a):
    shrunk = scenario_with_capacities(scen_a, scen_a.ctilde)
    np.testing.assert_allclose(shrunk.c, 0.99 * scen_a.c)
    assert np.all(shrunk.ctilde < shrunk.c)


def test_scenario_hash_stable_and_sensitive(scen_a):
    again = validate_scenario(
        r=[16.0, 8.0], c=[15.0, 10.0], tau=[[1.0, 2.0], [2.0, 1.0]], epsilon=0.01
    )
    assert scenario_hash(scen_a) == scenario_hash(again)
    other = scenario_with_epsilon(scen_a, 0.02)
    assert scenario_hash(scen_a) != scenario_hash(other)


# --- feasibility ------------------------------------------------------------


def test_feasibility_scen_a(scen_a):
    rep = check_feasibility(scen_a)
    assert rep.feasible and rep.strictly_feasible
    assert rep.slack == pytest.approx(1.0)
    # shrunk totals: 0.99 * 25 - 24 = 0.75
    assert rep.feasible_shrunk
    assert rep.slack_shrunk == pytest.approx(0.75)


def test_feasibility_overloaded():
    s = validate_scenario(r=[25.0, 1.0], c=[15.0, 10.0], tau=[[1.0, 2.0], [2.0, 1.0]])
    rep = check_feasibility(s)
    assert not rep.feasible
    assert rep.slack == pytest.approx(-1.0)


def test_feasibility_boundary_not_strict():
    s = validate_scenario(r=[15.0, 10.0], c=[15.0, 10.0], tau=[[1.0, 2.0], [2.0, 1.0]])
    rep = check_feasibility(s)
    assert rep.feasible and not rep.strictly_feasible
    assert rep.slack == 0.0


def test_proportional_point_scen_a(scen_a):
    x = proportional_feasible_point(scen_a)
    np.testing.assert_allclose(x, [[9.6, 6.4], [4.8, 3.2]])
    np.testing.assert_allclose(x.sum(axis=1), scen_a.r)
    assert np.all(x.sum(axis=0) <= scen_a.c)


def test_proportional_point_single_pool():
    s = validate_scenario(r=[2.0, 3.0], c=[6.0], tau=[[1.0], [1.0]])
    x = proportional_feasible_point(s)
    np.testing.assert_allclose(x[:, 0], s.r)


def test_proportional_point_equal_capacities_splits_evenly():
    s = validate_scenario(r=[4.0], c=[5.0, 5.0], tau=[[1.0, 1.0]])
    np.testing.assert_allclose(proportional_feasible_point(s), [[2.0, 2.0]])


def test_proportional_point_infeasible_raises():
    s = validate_scenario(r=[30.0], c=[15.0, 10.0], tau=[[1.0, 2.0]])
    with pytest.raises(InfeasibleError):
        proportional_feasible_point(s)


def test_proportional_point_random_property(rng):
    # Whenever total demand fits, the proportional split satisfies all
    # constraints of the routing polytope.
    for _ in range(100):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(1, 5))
        c = rng.uniform(1.0, 10.0, size=n)
        load = rng.uniform(0.1, 1.0)
        w = rng.uniform(0.2, 1.0, size=m)
        r = load * c.sum() * w / w.sum()
        tau = rng.uniform(0.2, 2.0, size=(m, n))
        s = validate_scenario(r=r, c=c, tau=tau)
        x = proportional_feasible_point(s)
        assert np.all(x >= 0.0)
        np.testing.assert_allclose(x.sum(axis=1), r, rtol=1e-12)
        assert np.all(x.sum(axis=0) <= c * (1.0 + 1e-12))


# --- costs ------------------------------------------------------------------


def test_setup_cost_golden_values(scen_a):
    assert compute_costs(
        np.array([[15.0, 1.0], [0.0, 8.0]]), scen_a
    ).setup_cost == pytest.approx(25.0)
    assert compute_costs(
        np.array([[14.85, 1.15], [0.0, 8.0]]), scen_a
    ).setup_cost == pytest.approx(25.15)


def test_entropy_penalty_uniform_row():
    s = validate_scenario(r=[6.0], c=[10.0, 10.0], tau=[[1.0, 1.0]], epsilon=0.5)
    rep = compute_costs(np.array([[3.0, 3.0]]), s)
    # uniform split: eps * r * (-log n)
    assert rep.entropy_penalty == pytest.approx(0.5 * 6.0 * (-np.log(2.0)))
    assert rep.total == pytest.approx(rep.setup_cost + rep.entropy_penalty)


def test_entropy_penalty_zero_on_concentrated_rows(scen_a):
    # 0 * log 0 treated as 0; a row with a single nonzero entry has no penalty.
    rep = compute_costs(np.array([[16.0, 0.0], [0.0, 8.0]]), scen_a)
    assert rep.entropy_penalty == 0.0


def test_entropy_penalty_nonpositive(rng, scen_a):
    for _ in range(50):
        frac = rng.dirichlet(np.ones(2), size=2)
        x = scen_a.r[:, None] * frac
        assert compute_costs(x, scen_a).entropy_penalty <= 1e-15


def test_negative_rates_rejected(scen_a):
    with pytest.raises(ValueError):
        compute_costs(np.array([[-1.0, 17.0], [0.0, 8.0]]), scen_a)


def test_zero_state_shapes(scen_a):
    st = zero_state(scen_a, "myopic")
    assert st.Z is None and st.nu is None
    np.testing.assert_array_equal(st.q, np.zeros(2))
    stp = zero_state(scen_a, "proximal")
    assert stp.Z.shape == (2, 2) and stp.nu.shape == (2,)


def test_system_state_fields_cannot_be_rebound(scen_a):
    # shallow freeze only: states wrap integrator buffers without copying
    st = zero_state(scen_a, "proximal")
    with pytest.raises(Exception):
        st.q = np.ones(2)
