"""Experiment drivers shared by the command line and the acceptance tests.

Each driver takes a :class:`Scenario`, runs replications through the engine
and reduces them in replication order, so results do not depend on ``jobs``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffusion as dif
from .capacity import CapacityResult, capacity_scale, ht_params, invariant_point
from .engine import SimConfig, SystemTrajectory, run, run_replications, stationary_stats
from .presets import Scenario
from .scenario import with_rate
from .scheduler import Plan
from .topology import enumerate_schedules


def scenario_capacity(sc: Scenario) -> CapacityResult:
    return capacity_scale(sc.spec, sc.channel, sc.ray(), rate_table=sc.rate_table)


def _config(sc: Scenario, horizon=None, reps=None, seed=None, stride=None, initial=None) -> SimConfig:
    return SimConfig(
        horizon=int(horizon if horizon is not None else sc.horizon),
        seed=int(seed if seed is not None else sc.seed),
        replications=int(reps if reps is not None else sc.replications),
        stride=int(stride if stride is not None else sc.stride),
        initial=None if initial is None else tuple(int(x) for x in initial),
    )


def simulate(sc: Scenario, *, horizon=None, reps=None, seed=None, stride=None, initial=None,
             jobs: int = 1, kernel: str | None = None) -> list[SystemTrajectory]:
    cfg = _config(sc, horizon, reps, seed, stride, initial)
    return run_replications(sc.spec, sc.params, sc.arrivals, sc.channel, cfg, jobs=jobs,
                            rate_table=sc.rate_table, kernel=kernel)


@dataclass
class Approximation:
    """Closed-form stationary estimate for one rate vector."""

    rates: np.ndarray
    boundary: np.ndarray
    phi: np.ndarray
    sigma_sq: float
    sigma_hat_sq: float
    sigma_hat_sq_computed: float
    queues: np.ndarray


def approximation(sc: Scenario, rates, cap: CapacityResult | None = None, *,
                  pinned: bool = True) -> Approximation:
    """``phi sigma^2 / (2 |rates - boundary|)`` per flow.

    With ``pinned`` the scenario's ``boundary`` and ``sigma_hat_sq`` overrides
    are used when present; otherwise the computed values are.
    """
    cap = cap or scenario_capacity(sc)
    rates = np.asarray(rates, dtype=float)
    arrivals = sc.arrivals.with_means(rates)
    ov = sc.sigma_hat_sq if pinned else None
    hp = ht_params(sc.spec, sc.channel, cap, 1, rates, arrivals, mode="aggregate",
                   sigma_hat_sq=ov, rate_table=sc.rate_table)
    phi, _ = invariant_point(sc.params, cap.psi_flow)
    boundary = np.asarray(sc.boundary, dtype=float) if (pinned and sc.boundary) else cap.boundary
    q = dif.queue_approx(phi, hp.sigma_sq, rates, boundary)
    return Approximation(rates, boundary, phi, hp.sigma_sq, hp.sigma_hat_sq,
                         hp.sigma_hat_sq_computed, q)


@dataclass
class SweepRow:
    rate: float
    mean: np.ndarray
    ci: np.ndarray
    approx: np.ndarray | None = None
    approx_computed: np.ndarray | None = None


def _rate_grid(sc: Scenario, rates) -> tuple[float, ...]:
    grid = tuple(float(r) for r in (rates if rates is not None else sc.rates))
    if not grid:
        raise ValueError("rate grid is empty")
    return grid


def rate_sweep(sc: Scenario, rates=None, *, horizon=None, reps=None, seed=None, jobs: int = 1,
               burn_in: float = 0.0, with_approx: bool = True, kernel: str | None = None) -> list[SweepRow]:
    """Mean total queue per flow at each rate of the grid (same rate on every flow)."""
    grid = _rate_grid(sc, rates)
    cap = scenario_capacity(sc) if with_approx else None
    rows = []
    for r in grid:
        sr = with_rate(sc, r)
        # aggregated statistics only need sparse records
        trajs = simulate(sr, horizon=horizon, reps=reps, seed=seed, jobs=jobs,
                         stride=max(1, int(horizon or sr.horizon) // 100), kernel=kernel)
        st = stationary_stats(trajs, burn_in=burn_in)
        row = SweepRow(r, st.mean, st.ci_halfwidth)
        if with_approx:
            lam = np.full(sc.spec.n_flows, r)
            row.approx = approximation(sr, lam, cap).queues
            try:
                row.approx_computed = approximation(sr, lam, cap, pinned=False).queues
            except ValueError:
                row.approx_computed = np.full(sc.spec.n_flows, np.nan)
        rows.append(row)
    return rows


@dataclass
class TrendResult:
    ns: tuple[int, ...]
    T: float
    norms: np.ndarray  # (seeds, len(ns))
    monotone: np.ndarray  # per seed

    @property
    def votes(self) -> int:
        return int(self.monotone.sum())

    @property
    def majority(self) -> bool:
        return self.votes * 2 > len(self.monotone)


def stability_trend(sc: Scenario, rate, ns=(10, 100, 1000), T: float = 20.0, seeds: int = 20,
                    seed: int = 0, kernel: str | None = None) -> TrendResult:
    """Fluid-scaled queue norm ``|Q(nT)|/n`` from ``Q(0) = n x0`` with ``|x0| = 1``.

    ``x0`` spreads unit norm evenly over the queues. One replication per
    (seed, n); the same stream ids are reused across ``n``.
    """
    sr = with_rate(sc, rate)
    nq = sc.spec.n_queues
    x0 = np.full(nq, 1.0 / math.sqrt(nq))
    plan = Plan(sc.spec)
    norms = np.zeros((seeds, len(ns)))
    for j, n in enumerate(ns):
        T_slots = int(math.floor(n * T))
        init = tuple(int(round(v)) for v in n * x0)
        cfg = SimConfig(horizon=T_slots, seed=seed, stride=T_slots, initial=init)
        for s in range(seeds):
            tr = run(sr.spec, sr.params, sr.arrivals, sr.channel, cfg, s, plan=plan,
                     rate_table=sr.rate_table, kernel=kernel)
            norms[s, j] = np.linalg.norm(tr.Q[-1].astype(float)) / n
    mono = np.all(np.diff(norms, axis=1) < 0, axis=1)
    return TrendResult(tuple(ns), T, norms, mono)


def ssc_time_average(trajs, psi, phi, *, aggregate: bool = True, from_frac: float = 0.5) -> tuple[float, float]:
    """Mean SSC distance over the recorded slots after ``from_frac`` of the horizon.

    Returns ``(mean, fraction of rows with zero workload)``.
    """
    vals, zero = [], 0
    total = 0
    for tr in trajs:
        k0 = int(np.searchsorted(tr.times, from_frac * tr.horizon))
        Q = tr.flow_totals() if aggregate else tr.Q
        d = dif.ssc_series(Q[k0:], psi, phi)
        zero += int(np.isnan(d).sum())
        total += len(d)
        vals.append(d[~np.isnan(d)])
    allv = np.concatenate(vals) if vals else np.array([])
    return (float(allv.mean()) if allv.size else float("nan")), zero / max(total, 1)


@dataclass
class DrainResult:
    ns: tuple[int, ...]
    gap: float
    times: np.ndarray  # (seeds, len(ns)); NaN when the horizon was exceeded
    slope: float

    @property
    def mean_times(self) -> np.ndarray:
        ok = np.any(np.isfinite(self.times), axis=0)
        m = np.full(self.times.shape[1], np.nan)
        m[ok] = np.nanmean(self.times[:, ok], axis=0)
        return m


def drain_sequence(sc: Scenario, ns=(5, 10, 20), *, gap: float = 1.0, level: float = 10.0,
                   T: float = 100.0, threshold: float = 0.05, seeds: int = 20, seed: int = 0,
                   kernel: str | None = None) -> DrainResult:
    """Drain times of the heavy-traffic sequence ``lambda^n = theta* (1 - gap/n) d``.

    Each system starts at ``Q(0) = n * level * x0`` with ``x0`` a unit vector
    spread evenly over the source queues, and runs for ``n**2 T`` slots (fluid
    horizon ``n T``). Norms are divided by their initial value, so the
    threshold is relative. In heavy traffic the stationary fluid-scaled level
    stays of order one, hence the default ``level`` well above it.

    ``slope`` is the least squares slope of mean drain time against ``n``,
    times ``ns[0] / mean[0]``; exactly linear growth gives 1.
    """
    cap = scenario_capacity(sc)
    src = sc.spec.source_queues()
    out = np.full((seeds, len(ns)), np.nan)
    plan = Plan(sc.spec)
    for j, n in enumerate(ns):
        rates = cap.boundary * (1.0 - gap / n)
        sr = replace(sc, arrivals=sc.arrivals.with_means(rates))
        init = np.zeros(sc.spec.n_queues, dtype=np.int64)
        init[src] = int(round(n * level / math.sqrt(len(src))))
        cfg = SimConfig(horizon=int(n * n * T), seed=seed, stride=1, initial=tuple(init))
        for s in range(seeds):
            tr = run(sr.spec, sr.params, sr.arrivals, sr.channel, cfg, s, plan=plan,
                     rate_table=sr.rate_table, kernel=kernel)
            t, norms = dif.fluid_norms(tr, n)
            try:
                out[s, j] = dif.drain_time(t, norms, threshold)
            except dif.DrainTimeExceeded:
                pass
    ok = np.any(np.isfinite(out), axis=0)
    m = np.full(len(ns), np.nan)
    m[ok] = np.nanmean(out[:, ok], axis=0)
    ns_arr = np.asarray(ns, dtype=float)
    slope = float(np.polyfit(ns_arr, m, 1)[0] * ns_arr[0] / m[0]) if ok.all() else float("nan")
    return DrainResult(tuple(ns), gap, out, slope)


def implied_index(rates, boundary) -> int:
    """Heavy-traffic index ``n`` implied by a single system: ``round(1/|rates - boundary|)``."""
    gap = float(np.linalg.norm(np.asarray(rates, float) - np.asarray(boundary, float)))
    return max(1, int(round(1.0 / gap))) if gap > 0 else 1


@dataclass
class AnalysisReport:
    """Everything ``analyze`` reports, as plain data plus per-slot series."""

    summary: dict
    series_header: list[str]
    series: np.ndarray = field(repr=False)


def analyze(sc: Scenario, traj: SystemTrajectory, n: int | None = None,
            burn_in: float = 0.0) -> AnalysisReport:
    spec = sc.spec
    cap = scenario_capacity(sc)
    rates = sc.arrivals.means
    flow_rates = np.zeros(spec.n_flows)
    for s in sc.arrivals.sources:
        flow_rates[s.flow] += s.mean
    if n is None:
        n = implied_index(flow_rates, cap.boundary)
    hp = ht_params(spec, sc.channel, cap, n, flow_rates, sc.arrivals, mode=sc.mode,
                   sigma_hat_sq=sc.sigma_hat_sq, rate_table=sc.rate_table)
    coord_flow = None if sc.mode == "aggregate" else spec.flow_of_queue()
    phi, k = invariant_point(sc.params, hp.psi, coord_flow)
    summary: dict = {
        "network": spec.name,
        "horizon": traj.horizon,
        "stride": int(traj.meta.get("stride", 0)) or int(traj.times[1] - traj.times[0]),
        "rates": flow_rates.tolist(),
        "capacity": {
            "theta": cap.theta, "boundary": cap.boundary.tolist(),
            "psi_flow": cap.psi_flow.tolist(), "psi_queue": cap.psi_queue.tolist(),
            "link_duals": cap.link_duals.tolist(), "degenerate": cap.degenerate,
        },
        "heavy_traffic": {
            "mode": sc.mode, "n": n, "b_star": hp.b_star, "mu_hat": hp.mu_hat,
            "psi_boundary": hp.psi_boundary, "sigma_hat_sq": hp.sigma_hat_sq,
            "sigma_hat_sq_computed": hp.sigma_hat_sq_computed, "arrival_var": hp.arrival_var,
            "sigma_sq": hp.sigma_sq, "phi": phi.tolist(), "k": k,
            "mu_range": [float(hp.mu.min()), float(hp.mu.max())], "channel_states": len(hp.mu),
        },
    }
    st = stationary_stats([traj], burn_in=burn_in)
    summary["simulated_mean"] = st.mean.tolist()
    try:
        summary["predicted_mean"] = approximation(sc, flow_rates, cap).queues.tolist()
    except ValueError as exc:
        summary["predicted_mean"] = None
        summary["predicted_mean_note"] = str(exc)
    if hp.b_star < 0:
        law = dif.rbm_stationary(hp.b_star, hp.sigma_sq)
        summary["rbm"] = {"mean": law.mean, "rate": law.rate}
    else:
        summary["rbm"] = None

    uv = dif.uv_decompose(traj, hp.queue_coeff, hp.mu)
    U, V, W, X = uv.U, uv.V, uv.W, uv.X
    v_reg, w_reg = dif.skorokhod_regulator(U) if U[0] >= 0 else (np.full_like(U, np.nan),) * 2
    summary["decomposition"] = {
        "identity_error": uv.max_identity_error(),
        "final": {"X": float(X[-1]), "U": float(U[-1]), "V": float(V[-1]), "W": float(W[-1])},
        "regulator_final_v": float(v_reg[-1]),
        "regulator_complementarity": (dif.regulator_complementarity(v_reg, w_reg)
                                      if np.all(np.isfinite(v_reg)) else None),
    }

    if sc.mode == "aggregate":
        qvec = traj.flow_totals().astype(float)
        alpha = dif.policy_alpha(sc.params, np.arange(spec.n_flows))
    else:
        qvec = traj.Q.astype(float)
        alpha = dif.policy_alpha(sc.params, spec.flow_of_queue())
    ssc = dif.ssc_series(qvec, hp.psi, phi)
    zero = np.isnan(ssc)
    summary["ssc"] = {
        "mean_distance": float(np.nanmean(ssc)) if not zero.all() else None,
        "zero_workload_fraction": float(zero.mean()),
        "undefined": bool(zero.all()),
    }

    fl = dif.scale(qvec, n, "fluid", slots=traj.times)
    grid = fl.times
    L1 = []
    for t in np.linspace(0, grid[-1], 5)[:-1]:
        val, tail = dif.lyapunov_L1(grid, fl.values, alpha, t)
        L1.append({"t": float(t), "value": val, "tail_bound": tail})
    summary["lyapunov_L1"] = L1

    if traj.times[1] - traj.times[0] == 1 and traj.horizon >= 2 * n:
        windows = traj.horizon // n
        fs = dif.fslln_check(traj, n, (windows - 1) / n)
        summary["fslln"] = {"n": n, "windows": windows, "max_arrival_dev": fs.max_arrival_dev,
                            "max_channel_dev": fs.max_channel_dev}
    else:
        summary["fslln"] = {"skipped": "needs every slot recorded and horizon >= 2n"}

    t_fl, norms = dif.fluid_norms(traj, n)
    try:
        summary["drain_time"] = dif.drain_time(t_fl, norms)
    except dif.DrainTimeExceeded as exc:
        summary["drain_time"] = None
        summary["drain_time_note"] = str(exc)

    growth = {}
    for qi in np.flatnonzero(traj.A[-1] > 0):
        r = traj.A[-1, qi] / traj.horizon
        _, slope = dif.deviation_growth([traj.A[:, qi]], r, traj.times)
        growth[f"A[{qi}]"] = slope
    summary["deviation_growth_slope"] = growth

    header = ["slot", "X", "U", "V", "W", "regulator_v", "regulator_w", "ssc_distance"]
    series = np.column_stack([traj.times, X, U, V, W, v_reg, w_reg, ssc])
    return AnalysisReport(summary, header, series)


def schedule_count(sc: Scenario) -> int:
    return len(enumerate_schedules(sc.spec))
