"""Independent reference computations used only by the tests.

None of these call into ``delaybp`` solvers; they rebuild the quantity from
its definition with different machinery.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def star_capacity_exact(gains=(0, 1, 2, 3), n_links: int = 4) -> Fraction:
    """Symmetric star: every link carries one unit of demand, one link per slot.

    By symmetry and convexity of the dual the optimal link prices are equal,
    so ``n_links * theta = E[max gain]``, evaluated exactly over all states.
    """
    total = Fraction(0)
    states = list(itertools.product(gains, repeat=n_links))
    for s in states:
        total += max(s)
    return total / len(states) / n_links


def timeshare_capacity(states, probs, schedules, demand) -> float:
    """Capacity scale from the primal time-sharing program, solved with cvxpy.

    Variables are per-state schedule probabilities; written independently of
    the package's LP (different formulation, different solver).
    """
    import cvxpy as cp

    states = np.asarray(states, float)
    probs = np.asarray(probs, float)
    demand = np.asarray(demand, float)
    H, L = states.shape
    S = len(schedules)
    member = np.zeros((S, L))
    for k, s in enumerate(schedules):
        member[k, list(s)] = 1.0
    p = cp.Variable((H, S), nonneg=True)
    t = cp.Variable()
    cons = [cp.sum(p, axis=1) == 1]
    for l in np.flatnonzero(demand > 0):
        served = cp.sum(cp.multiply(p, np.outer(probs * states[:, l], member[:, l])))
        cons.append(served >= t * demand[l])
    cp.Problem(cp.Maximize(t), cons).solve(solver=cp.CLARABEL)
    return float(t.value)


def l1_linear_drain_exact() -> float:
    """int_0^1 e^-t (1 - t) dt."""
    return math.exp(-1.0)


def rbm_mean_by_quadrature(b: float, sigma_sq: float, n: int = 2_000_001) -> float:
    """Mean of the exponential law as the integral of its survival function."""
    rate = 2 * abs(b) / sigma_sq
    top = 60.0 / rate
    y = np.linspace(0.0, top, n)
    surv = np.exp(-rate * y)
    return float(np.trapezoid(surv, y))
