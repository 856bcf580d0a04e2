import numpy as np
import pytest

from delaybp import experiments as ex
from delaybp.engine import SimConfig, run
from delaybp.presets import table2_scenario, table3_scenario


def test_approximation_pinned_and_computed():
    sc = table2_scenario()
    pinned = ex.approximation(sc, [0.64, 0.64])
    assert round(pinned.queues[0]) == 232
    assert pinned.sigma_hat_sq == 8 and pinned.sigma_hat_sq_computed < 1
    free = ex.approximation(sc, [0.64, 0.64], pinned=False)
    assert np.allclose(free.boundary, 335 / 512)
    assert free.queues[0] < pinned.queues[0]


def test_rate_sweep_jobs_invariant():
    sc = table3_scenario()
    a = ex.rate_sweep(sc, (0.6,), horizon=3000, reps=3, with_approx=False)
    b = ex.rate_sweep(sc, (0.6,), horizon=3000, reps=3, with_approx=False, jobs=3)
    assert np.array_equal(a[0].mean, b[0].mean)
    with pytest.raises(ValueError):
        ex.rate_sweep(sc, (), horizon=10)


def test_drain_time_grows_linearly():
    res = ex.drain_sequence(table2_scenario(), ns=(5, 10, 20), seeds=20)
    m = res.mean_times
    assert np.all(np.isfinite(m)) and np.all(np.diff(m) > 0)
    # within a factor of two of linear growth
    assert 0.5 <= res.slope <= 2.0


def test_ssc_time_average_small():
    sc = ex.with_rate(table2_scenario(), 0.645)
    cfg = SimConfig(horizon=40_000, seed=1, stride=100)
    trs = [run(sc.spec, sc.params, sc.arrivals, sc.channel, cfg, s) for s in range(4)]
    cap = ex.scenario_capacity(sc)
    d, zero = ex.ssc_time_average(trs, cap.psi_flow, cap.psi_flow)
    print(f"ssc time-average {d:.4f}, zero-workload rows {zero:.2%}")
    assert d < 0.15


def test_implied_index():
    assert ex.implied_index([0.64, 0.64], [0.65, 0.65]) == 71
    assert ex.implied_index([0.65], [0.65]) == 1
