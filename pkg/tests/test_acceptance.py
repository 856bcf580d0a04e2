"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines, or execute the
file directly for a summary.
"""
from __future__ import annotations

import math
import sys
from functools import lru_cache

import numpy as np
import pytest

import oracles
from delaybp import diffusion as dif
from delaybp import experiments as ex
from delaybp.capacity import capacity_scale
from delaybp.diffusion import queue_approx
from delaybp.engine import SimConfig, check_invariants, run, run_replications
from delaybp.presets import (
    BOUNDARY,
    TABLE2_APPROX,
    TABLE2_RATES,
    TABLE2_SIM,
    TABLE3_OBTAINED,
    TABLE3_TARGETS,
    star_arrivals,
    star_channel,
    star_network,
    table2_scenario,
    table3_scenario,
)
from delaybp.scheduler import Plan, PolicyParams, oracle_solve_schedule, solve_schedule

# tolerances
APPROX_TOL = 1.0
SIM_REL_TOL = 0.20
SIM_NEAR_BOUNDARY_TOL = 0.40
TABLE3_REL_TOL = 0.25
TARGET_FACTOR = 1.2
THETA_TOL = 1e-4
COMPLEMENTARITY_TOL = 1e-9
RBM_TOL = 1e-6
L1_TOL = 2e-3
N_INSTANCES = 1000
N_PATHS = 1000
REPORT_FLOW = 1  # flow 2 -> 3 -> 5

pytestmark = pytest.mark.slow


def report(num: int, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")


@lru_cache(maxsize=None)
def table2_rows():
    return ex.rate_sweep(table2_scenario(), TABLE2_RATES)


@lru_cache(maxsize=None)
def table3_rows():
    return ex.rate_sweep(table3_scenario(), (0.63, 0.64), with_approx=False)


def test_c1_table2_approximation():
    phi = np.array([1, 1]) / math.sqrt(2)
    got = [float(queue_approx(phi, 2 * r + 8, [r, r], BOUNDARY)[0]) for r in TABLE2_RATES]
    errs = [abs(g - p) for g, p in zip(got, TABLE2_APPROX)]
    ok = max(errs) <= APPROX_TOL
    report(1, ok, f"approximation {[round(g, 1) for g in got]} vs {list(TABLE2_APPROX)}, "
                  f"max |err| {max(errs):.2f} <= {APPROX_TOL}")
    assert ok


def test_c2_table2_simulation():
    rows = table2_rows()
    ok = True
    parts = []
    for row, paper in zip(rows, TABLE2_SIM):
        sim = float(row.mean[REPORT_FLOW])
        if row.rate <= 0.645 + 1e-12:
            rel = (sim - paper) / paper
            good = abs(rel) <= SIM_REL_TOL
            parts.append(f"{row.rate}: sim {sim:.1f} vs paper {paper} ({rel:+.0%})")
        else:
            approx = float(row.approx[REPORT_FLOW])
            rel = (sim - approx) / approx
            good = abs(rel) <= SIM_NEAR_BOUNDARY_TOL
            parts.append(f"{row.rate}: sim {sim:.1f} vs approx {approx:.1f} ({rel:+.0%})")
        ok &= good
    report(2, ok, "; ".join(parts))
    assert ok


def test_c3_table3():
    rows = table3_rows()
    ok = True
    parts = []
    for row, paper in zip(rows, TABLE3_OBTAINED):
        rel = np.abs(row.mean - paper) / np.array(paper)
        ok &= bool(np.all(rel <= TABLE3_REL_TOL))
        parts.append(f"{row.rate}: {np.round(row.mean, 1).tolist()} vs {list(paper)}")
    met = bool(np.all(rows[0].mean <= TARGET_FACTOR * np.array(TABLE3_TARGETS)))
    parts.append(f"targets met at 0.63: {met}")
    ok &= met
    report(3, ok, "; ".join(parts))
    assert ok


def test_c4_capacity():
    cap = capacity_scale(star_network(), star_channel(), [1, 1])
    exact = float(oracles.star_capacity_exact())
    ok = abs(cap.theta - exact) <= THETA_TOL and abs(exact - 335 / 512) == 0 and round(cap.theta, 2) == 0.65
    report(4, ok, f"theta {cap.theta:.6f}, oracle {exact:.6f} (335/512), rounds to {round(cap.theta, 2)}")
    assert ok


def test_c5_oracle_equivalence():
    from conftest import random_instance

    rng = np.random.default_rng(20240501)
    fails = 0
    for _ in range(N_INSTANCES):
        spec, params, Q, h = random_instance(rng)
        plan = Plan(spec)
        fails += solve_schedule(Q, h, plan, params).objective != oracle_solve_schedule(Q, h, plan, params)[1]
    report(5, fails == 0, f"{fails} mismatches in {N_INSTANCES} random instances")
    assert fails == 0


def _trajectories():
    spec = star_network()
    out = []
    for rate, stride, params in ((0.3, 1, PolicyParams.uniform(2)),
                                 (0.64, 1, PolicyParams.uniform(2)),
                                 (0.66, 13, PolicyParams.uniform(2)),
                                 (0.63, 50, table3_scenario().params)):
        cfg = SimConfig(horizon=50_000, seed=7, replications=3, stride=stride)
        out += run_replications(spec, params, star_arrivals(rate), star_channel(), cfg)
    cfg = SimConfig(horizon=5000, seed=8, stride=1, initial=(40, 3, 0, 17))
    out.append(run(spec, PolicyParams.uniform(2), star_arrivals(0.5), star_channel(), cfg, kernel="python"))
    return out


def test_c6_conservation():
    trajs = _trajectories()
    bad = [v for tr in trajs for v in check_invariants(tr)]
    report(6, not bad, f"{len(bad)} violations over {len(trajs)} trajectories")
    assert not bad


def test_c7_workload_identity():
    sc = table2_scenario()
    cap = ex.scenario_capacity(sc)
    from delaybp.capacity import ht_params

    worst = 0
    trajs = _trajectories()
    for mode in ("aggregate", "queue"):
        hp = ht_params(sc.spec, sc.channel, cap, 1, [0.64, 0.64], mode=mode)
        for tr in trajs:
            worst = max(worst, dif.uv_decompose(tr, hp.queue_coeff, hp.mu).max_identity_error())
    report(7, worst == 0, f"max |W - U - V| = {worst} (exact arithmetic) over {2 * len(trajs)} decompositions")
    assert worst == 0


def test_c8_regulator():
    rng = np.random.default_rng(8)
    fails, competitors = 0, 0
    for _ in range(N_PATHS):
        k = int(rng.integers(2, 40))
        pieces = rng.uniform(-3, 3, k)
        lens = rng.integers(1, 20, k)
        incs = np.repeat(pieces / lens, lens)
        u = rng.uniform(0, 2) + np.concatenate([[0.0], np.cumsum(incs)])
        v, w = dif.skorokhod_regulator(u)
        good = (v[0] == 0 and np.all(np.diff(v) >= 0) and np.all(w >= 0)
                and abs(dif.regulator_complementarity(v, w)) <= COMPLEMENTARITY_TOL)
        # any nondecreasing v' >= 0 with u + v' >= 0 must dominate v
        for _ in range(10):
            cand = np.maximum.accumulate(np.maximum(0.0, -u + rng.uniform(-0.5, 0.5, len(u))))
            if np.all(u + cand >= 0):
                competitors += 1
                good &= bool(np.all(cand >= v))
        fails += not good
    report(8, fails == 0, f"{fails} failing paths of {N_PATHS}; {competitors} feasible competitors checked")
    assert fails == 0


def test_c9_rbm_mean():
    worst = 0.0
    for b in (-0.01, -0.1, -1.0, -3.0):
        for s2 in (0.1, 1.0, 9.28):
            worst = max(worst, abs(dif.rbm_stationary(b, s2).mean - oracles.rbm_mean_by_quadrature(b, s2)))
    report(9, worst <= RBM_TOL, f"max |mean - integral of survival| = {worst:.2e}")
    assert worst <= RBM_TOL


def test_c10_lyapunov():
    t = np.arange(0, 20 + 1e-12, 1e-3)
    val, tail = dif.lyapunov_L1(t, np.maximum(1 - t, 0))
    err = abs(val - oracles.l1_linear_drain_exact())
    report(10, err <= L1_TOL, f"L1 = {val:.6f} vs e^-1 = {math.exp(-1):.6f}, |err| {err:.1e}, tail {tail:.1e}")
    assert err <= L1_TOL


def test_c11_stability_trend():
    sc = table2_scenario()
    trend = ex.stability_trend(sc, 0.5, ns=(10, 100, 1000), seeds=20)
    cap = ex.scenario_capacity(sc)
    sr = ex.with_rate(sc, 0.645)
    trajs = run_replications(sr.spec, sr.params, sr.arrivals, sr.channel,
                             SimConfig(horizon=100_000, seed=0, replications=20, stride=100))
    from delaybp.capacity import invariant_point

    phi, _ = invariant_point(sc.params, cap.psi_flow)
    ssc, zero = ex.ssc_time_average(trajs, cap.psi_flow, phi)
    med = np.median(trend.norms, axis=0)
    report(11, trend.majority,
           f"monotone decrease in {trend.votes}/20 seeds, median fluid norms {np.round(med, 4).tolist()}; "
           f"SSC time-average at 0.645 = {ssc:.4f} (reported, zero-workload rows {zero:.1%})")
    assert trend.majority


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q", "-p", "no:cacheprovider"]))
