import numpy as np
import pytest

from fluidlb import validate_scenario
from fluidlb.myopic import (
    hard_myopic_choice,
    myopic_field,
    myopic_rates,
    waiting_time,
)


def test_waiting_time_at_capacity_is_zero(scen_a):
    np.testing.assert_array_equal(waiting_time(scen_a.c.copy(), scen_a.c), [0.0, 0.0])


def test_waiting_time_overloaded(scen_a):
    np.testing.assert_allclose(
        waiting_time(np.array([30.0, 9.0]), scen_a.c), [1.0, 0.0]
    )


def test_waiting_time_negative_queue_rejected(scen_a):
    with pytest.raises(ValueError):
        waiting_time(np.array([-0.1, 5.0]), scen_a.c)


def test_rates_single_pool():
    s = validate_scenario(r=[3.0, 5.0], c=[10.0], tau=[[1.0], [2.0]])
    x = myopic_rates(np.zeros(1), s)
    np.testing.assert_array_equal(x[:, 0], s.r)


def test_rates_equalized_delays(scen_a):
    # mu = (1, 0) makes type 1 see (2, 2): even split. Type 2 sees (3, 1).
    x = myopic_rates(np.array([1.0, 0.0]), scen_a)
    np.testing.assert_allclose(x[0], [8.0, 8.0], atol=1e-9)
    np.testing.assert_allclose(x[1], [0.0, 8.0], atol=1e-6)


def test_rates_concentrate_at_zero_mu(scen_a):
    x = myopic_rates(np.zeros(2), scen_a)
    np.testing.assert_allclose(x[0], [16.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(x[1], [0.0, 8.0], atol=1e-6)


def test_row_sums_exact(rng, scen_a):
    for _ in range(300):
        mu = rng.uniform(0.0, 3.0, size=2)
        x = myopic_rates(mu, scen_a)
        assert np.max(np.abs(x.sum(axis=1) - scen_a.r)) <= 1e-12


def test_field_from_empty_system(scen_a):
    # Empty pools serve nothing, so the field equals the column sums.
    dq = myopic_field(np.zeros(2), scen_a)
    np.testing.assert_allclose(dq, [16.0, 8.0], atol=1e-6)


def test_field_zero_at_equilibrium(scen_a):
    # The exact fixed point sits at q1 = c1 (1 + mu1*) with mu1* = 1 - eps ln 15,
    # slightly below the nominal (30, 9); at the nominal point the smoothing
    # still splits type 1 almost evenly, so (30, 9) itself is not a zero.
    q_star = np.array([29.593792469834668, 9.0])
    assert np.linalg.norm(myopic_field(q_star, scen_a)) < 1e-3


def test_field_total_drift_when_saturated(scen_a):
    q = np.array([200.0, 150.0])
    dq = myopic_field(q, scen_a)
    assert dq.sum() == pytest.approx(scen_a.r.sum() - scen_a.c.sum(), abs=1e-9)
    assert dq.sum() < 0


def test_field_lipschitz_envelope(rng, scen_a):
    # Generous envelope: L = (1 + max r / (eps * min c)) * sqrt(m*n).
    L = (1.0 + scen_a.r.max() / (scen_a.epsilon * scen_a.c.min())) * 2.0
    for _ in range(200):
        qa = rng.uniform(0.0, 40.0, size=2)
        qb = qa + rng.uniform(-1e-3, 1e-3, size=2)
        qb = np.maximum(qb, 0.0)
        lhs = np.linalg.norm(myopic_field(qa, scen_a) - myopic_field(qb, scen_a))
        assert lhs <= L * np.linalg.norm(qa - qb) + 1e-12


def test_mass_balance_identity(rng, scen_a):
    # Summing the field over pools must cancel the routing terms exactly.
    for _ in range(100):
        q = rng.uniform(0.0, 50.0, size=2)
        dq = myopic_field(q, scen_a)
        expected = scen_a.r.sum() - np.minimum(q, scen_a.c).sum()
        assert dq.sum() == pytest.approx(expected, abs=1e-10)


def test_hard_choice_diagonal(scen_a):
    np.testing.assert_array_equal(hard_myopic_choice(np.zeros(2), scen_a), [0, 1])


def test_hard_choice_tie_breaks_low(scen_a):
    # mu = (1, 0): type 1 sees (2, 2), tie goes to pool 0.
    np.testing.assert_array_equal(
        hard_myopic_choice(np.array([1.0, 0.0]), scen_a), [0, 1]
    )
