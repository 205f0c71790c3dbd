"""Myopic dispatch: route by smallest current delay-to-service.

The delay a type-i task sees at pool j is the setup time tau[i, j] plus the
pool's waiting time mu[j] = max(q[j]/c[j] - 1, 0).  The soft-min gradient of
those delays gives the dispatch fractions; queues then drain at rate
min(q, c).
"""

from __future__ import annotations

import numpy as np

from .model import Scenario
from .softmin import softmin_rows

__all__ = ["waiting_time", "myopic_rates", "myopic_field", "hard_myopic_choice"]


def waiting_time(q, c) -> np.ndarray:
    """Fluid waiting time per pool: max(q/c - 1, 0); zero below capacity."""
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(q < 0):
        j = int(np.flatnonzero(q < 0)[0])
        raise ValueError(f"queue lengths must be nonnegative (q[{j}] = {q[j]})")
    return np.maximum(q / c - 1.0, 0.0)


def myopic_rates(mu, s: Scenario) -> np.ndarray:
    """Routing matrix under soft-min dispatch at waiting times mu.

    Row i is r[i] times the soft-min gradient of the delays tau[i, :] + mu,
    so each row sums to r[i] (the gradient is normalized on the simplex).
    """
    mu = np.asarray(mu, dtype=float)
    _, frac = softmin_rows(s.tau + mu[None, :], s.epsilon)
    return s.r[:, None] * frac


def myopic_field(q, s: Scenario) -> np.ndarray:
    """Queue drift under the myopic policy: arrivals minus service min(q, c)."""
    q = np.asarray(q, dtype=float)
    x = myopic_rates(waiting_time(q, s.c), s)
    return x.sum(axis=0) - np.minimum(q, s.c)


def hard_myopic_choice(mu, s: Scenario) -> np.ndarray:
    """Limiting hard dispatch: per type, the pool minimizing tau[i, j] + mu[j].

    Ties resolve to the lowest pool index.  Returns 0-based pool indices.
    """
    mu = np.asarray(mu, dtype=float)
    return np.argmin(s.tau + mu[None, :], axis=1)
