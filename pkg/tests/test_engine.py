import math

import numpy as np
import pytest

from delaybp import kernels
from delaybp.engine import (
    InfeasibleAllocation,
    SimConfig,
    SlotState,
    check_invariants,
    run,
    run_replications,
    stationary_stats,
    step,
    workload,
)
from delaybp.presets import star_arrivals, star_channel
from delaybp.scheduler import Allocation, PolicyParams
from delaybp.stochastic import ArrivalModel, SourceArrivals, constant_channel
from conftest import line_network

P1 = PolicyParams.uniform(1)
P2 = PolicyParams.uniform(2)


def test_step_idle():
    spec = line_network(1)
    s0 = SlotState.initial(spec)
    s1, inc = step(spec, s0, [0], 0, [1], Allocation())
    assert np.array_equal(s1.Q, s0.Q) and not inc.A.any() and not inc.D.any() and not inc.G


def test_step_truncates_service():
    spec = line_network(1)
    s0 = SlotState.initial(spec, [3])
    alloc = Allocation((0,), 0, {0: (0, 5)})
    s1, inc = step(spec, s0, [0], 0, [5], alloc)
    assert s1.Q[0] == 0 and inc.D[0] == 3 and alloc.served[0] == 3


def test_step_two_hop(star):
    s0 = SlotState.initial(star, [2, 0, 0, 0])
    s1, inc = step(star, s0, [0, 0, 0, 0], 0, [2, 0, 0, 0], Allocation((0,), 0, {0: (0, 2)}))
    assert inc.S[0] == 2 and inc.R[1] == 2 and s1.Q[1] == 2 and s1.Q[0] == 0


def test_step_rejects_bad_allocations(star):
    s0 = SlotState.initial(star, [2, 0, 2, 0])
    with pytest.raises(InfeasibleAllocation):
        step(star, s0, [0] * 4, 0, [1] * 4, Allocation((0, 1), 0, {0: (0, 1), 1: (1, 1)}))
    with pytest.raises(InfeasibleAllocation):
        step(star, s0, [0] * 4, 0, [1] * 4, Allocation((0,), 0, {0: (1, 1)}))
    with pytest.raises(InfeasibleAllocation):
        step(star, s0, [0] * 4, 0, [1] * 4, Allocation((0,), 0, {0: (0, 3)}))


def test_run_matches_step_by_step(star):
    """The compiled loop and a pure step-by-step replay agree slot for slot."""
    from delaybp.scheduler import solve_schedule
    from delaybp.stochastic import RngStream, sample_arrivals, sample_channel

    ch, arr = star_channel(), star_arrivals(0.6)
    cfg = SimConfig(horizon=500, seed=4)
    tr = run(star, P2, arr, ch, cfg)
    rs = RngStream(4, 0)
    A = sample_arrivals(arr, rs.arrivals(), 500)
    H = sample_channel(ch, rs.channel(), 500)
    s = SlotState.initial(star)
    src = star.source_queues()
    for t in range(500):
        per_q = np.zeros(star.n_queues, dtype=np.int64)
        per_q[src] = A[t]
        h = ch.states[H[t]]
        a = solve_schedule(s.Q, h, star, P2)
        s, _ = step(star, s, per_q, int(H[t]), h, a)
        assert np.array_equal(s.Q, tr.Q[t + 1])


def test_zero_arrivals_drain(star):
    arr = ArrivalModel((SourceArrivals(1, 0, "poisson", 0.0), SourceArrivals(2, 1, "poisson", 0.0)))
    tr = run(star, P2, arr, star_channel(), SimConfig(horizon=2000, initial=(5, 0, 0, 3)))
    assert tr.A[-1].sum() == 0
    assert tr.Q[-1].sum() == 0
    assert tr.D[-1].sum() == 5 + 5 + 3
    assert check_invariants(tr) == []


def test_deterministic_unit_link_bounded():
    spec = line_network(1)
    arr = ArrivalModel((SourceArrivals(0, 0, "deterministic", 1.0),))
    tr = run(spec, P1, arr, constant_channel([1]), SimConfig(horizon=1000))
    assert tr.Q.max() <= 1


@pytest.mark.parametrize("rate,stride", [(0.5, 1), (0.64, 7), (0.66, 100)])
def test_conservation(star, rate, stride):
    tr = run(star, P2, star_arrivals(rate), star_channel(), SimConfig(horizon=20_000, seed=1, stride=stride))
    assert check_invariants(tr) == []
    assert tr.times[-1] == 20_000


def test_determinism_and_backends(star):
    cfg = SimConfig(horizon=5000, seed=9, stride=3)
    a = run(star, P2, star_arrivals(0.64), star_channel(), cfg, kernel="python")
    b = run(star, P2, star_arrivals(0.64), star_channel(), cfg)
    for k in ("Q", "A", "D", "R", "S", "qf_sum", "qf_sq", "channel"):
        assert np.array_equal(getattr(a, k), getattr(b, k)), k
    assert a.G == b.G


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


def test_replications_order_independent_of_jobs(star):
    cfg = SimConfig(horizon=3000, seed=2, replications=3, stride=10)
    serial = run_replications(star, P2, star_arrivals(0.6), star_channel(), cfg)
    par = run_replications(star, P2, star_arrivals(0.6), star_channel(), cfg, jobs=2)
    for x, y in zip(serial, par):
        assert np.array_equal(x.Q, y.Q)
    assert not np.array_equal(serial[0].Q, serial[1].Q)


def test_workload():
    spec = line_network(2)
    tr = run(spec, PolicyParams.uniform(1), ArrivalModel((SourceArrivals(0, 0, "poisson", 0.0),)),
             constant_channel([1, 1]), SimConfig(horizon=1, initial=(3, 4)))
    w = workload(tr, [1 / math.sqrt(2)] * 2)
    assert w[0] == pytest.approx(7 / math.sqrt(2))
    assert np.all(workload(tr, [0, 0]) == 0)
    with pytest.raises(ValueError):
        workload(tr, [1.0])


def test_stationary_stats(star):
    arr = ArrivalModel((SourceArrivals(1, 0, "poisson", 0.0), SourceArrivals(2, 1, "poisson", 0.0)))
    idle = constant_channel([0, 0, 0, 0])
    trs = [run(star, P2, arr, idle, SimConfig(horizon=100, initial=(q, 0, 0, 0), stride=10))
           for q in (4, 6)]
    st = stationary_stats(trs[:1])
    assert st.mean[0] == 4 and st.ci_halfwidth[0] == 0
    assert stationary_stats(trs).mean[0] == 5
    with pytest.raises(ValueError):
        stationary_stats(trs, burn_in=1.0)


def test_env_forces_python_fallback():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from delaybp import kernels; print(kernels.BACKEND)"],
        capture_output=True, text=True, env={**__import__("os").environ, "DELAYBP_KERNEL": "python"},
    )
    assert out.stdout.strip() == "python"
