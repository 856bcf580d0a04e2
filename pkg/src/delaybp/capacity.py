"""Capacity region along a ray, its outer normal, and heavy-traffic parameters.

The capacity region is the set of per-flow rates that some time-sharing of
schedules, chosen per channel state, can carry on every route link. Along a
direction ``d`` the boundary scale is a small LP; its link duals give the
outer normal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog

from .scheduler import PolicyParams, weight
from .stochastic import ArrivalModel, ChannelModel
from .topology import NetworkSpec, enumerate_schedules

log = logging.getLogger(__name__)

_RTOL = 4 * np.finfo(float).eps  # brentq floor


class CapacityError(RuntimeError):
    pass


@dataclass
class CapacityResult:
    """Boundary point along a ray.

    ``psi_flow`` is the unit outer normal in per-flow rate space (aggregate
    mode); ``psi_queue`` is the same normal lifted to queue space, each queue
    weighted by the link duals still ahead of it on its route.
    """

    theta: float
    direction: np.ndarray
    boundary: np.ndarray
    link_demand: np.ndarray
    link_duals: np.ndarray
    psi_flow: np.ndarray
    psi_queue: np.ndarray
    queue_weight: np.ndarray
    active_links: tuple[int, ...]
    degenerate: bool = False

    def psi(self, mode: str = "aggregate") -> np.ndarray:
        return _pick(mode, self.psi_flow, self.psi_queue)


def _pick(mode, flow_val, queue_val):
    if mode == "aggregate":
        return flow_val
    if mode == "queue":
        return queue_val
    raise ValueError(f"unknown mode {mode!r} (expected 'aggregate' or 'queue')")


def _rates(channel: ChannelModel, rate_table=None) -> np.ndarray:
    r = np.asarray(channel.states, dtype=float)
    if rate_table is not None:
        r = np.asarray(rate_table, dtype=float)[channel.states]
    return r


def link_demand(spec: NetworkSpec, direction) -> np.ndarray:
    d = np.zeros(spec.n_links)
    for f, fl in enumerate(spec.flows):
        for link in fl.route:
            d[link] += direction[f]
    return d


def capacity_scale(spec: NetworkSpec, channel: ChannelModel, direction, *, rate_table=None,
                   schedules=None, tol: float = 1e-9) -> CapacityResult:
    """Largest ``theta`` with ``theta * direction`` in the capacity region."""
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (spec.n_flows,):
        raise ValueError("direction needs one entry per flow")
    if np.any(direction < 0) or not np.any(direction > 0):
        raise ValueError("direction must be nonnegative and nonzero")
    if channel.n_links != spec.n_links:
        raise ValueError("channel model does not match the network's links")
    schedules = enumerate_schedules(spec) if schedules is None else schedules
    rates = _rates(channel, rate_table)
    gamma = channel.probs
    nH, nS, nL = channel.n_states, len(schedules), spec.n_links
    d = link_demand(spec, direction)
    loaded = np.flatnonzero(d > 0)

    # variables: p[h, s] flattened, then theta
    nv = nH * nS + 1
    c = np.zeros(nv)
    c[-1] = -1.0
    A_rows, b = [], []
    for h in range(nH):
        row = np.zeros(nv)
        row[h * nS:(h + 1) * nS] = 1.0
        A_rows.append(row)
        b.append(1.0)
    member = np.zeros((nS, nL))
    for s, sched in enumerate(schedules):
        member[s, list(sched)] = 1.0
    for link in loaded:
        row = np.zeros(nv)
        # service delivered on link: sum_h gamma_h sum_s p[h,s] rate(h,link) [link in s]
        row[:-1] = -(gamma[:, None] * member[None, :, link] * rates[:, None, link]).ravel()
        row[-1] = d[link]
        A_rows.append(row)
        b.append(0.0)
    res = linprog(c, A_ub=np.array(A_rows), b_ub=np.array(b), bounds=(0, None), method="highs")
    if res.status == 3:
        raise CapacityError("capacity LP is unbounded: some loaded link never competes")
    if res.status != 0:
        raise CapacityError(f"capacity LP failed: {res.message}")
    theta = float(res.x[-1])
    marg = -np.asarray(res.ineqlin.marginals)[nH:]
    slack = np.asarray(res.ineqlin.residual)[nH:]
    duals = np.zeros(nL)
    duals[loaded] = np.maximum(marg, 0.0)
    active = tuple(int(l) for l, s in zip(loaded, slack) if s <= tol)
    degenerate = any(duals[l] <= tol for l in active) or len(active) == 0

    qweight = np.zeros(spec.n_queues)
    for qi, (node, f) in enumerate(spec.queues):
        route = spec.flows[f].route
        start = next(k for k, l in enumerate(route) if spec.links[l][0] == node)
        qweight[qi] = duals[list(route[start:])].sum()
    fweight = np.array([duals[list(fl.route)].sum() for fl in spec.flows])
    if not np.any(qweight > 0):
        raise CapacityError("no binding link constraint; normal undefined")
    if degenerate:
        log.warning("capacity boundary point is degenerate (active links %s, duals %s)", active, duals)
    return CapacityResult(
        theta=theta, direction=direction, boundary=theta * direction, link_demand=d,
        link_duals=duals, psi_flow=fweight / np.linalg.norm(fweight),
        psi_queue=qweight / np.linalg.norm(qweight), queue_weight=qweight,
        active_links=active, degenerate=degenerate,
    )


@dataclass
class HeavyTrafficParams:
    mode: str
    psi: np.ndarray
    boundary: np.ndarray
    rates: np.ndarray
    n: int
    b_star: float
    mu: np.ndarray
    mu_hat: float
    sigma_hat_sq: float
    sigma_hat_sq_computed: float
    arrival_var: float
    sigma_sq: float
    queue_coeff: np.ndarray = field(repr=False)
    phi: np.ndarray | None = None

    @property
    def psi_boundary(self) -> float:
        """<psi, lambda*>; equals ``mu_hat`` when the normal is exact."""
        return float(self.psi @ self.boundary)


def queue_coefficients(spec: NetworkSpec, cap: CapacityResult, mode: str) -> np.ndarray:
    """Weight of each queue in the workload for the chosen coordinate mode.

    In aggregate mode a flow's normal component is spread along its route in
    proportion to the link duals still ahead of each queue.
    """
    if mode == "queue":
        return cap.psi_queue.copy()
    if mode != "aggregate":
        raise ValueError(f"unknown mode {mode!r}")
    out = np.zeros(spec.n_queues)
    for qi, (_, f) in enumerate(spec.queues):
        src = spec.queues.index((spec.flows[f].source, f))
        total = cap.queue_weight[src]
        out[qi] = cap.psi_flow[f] * cap.queue_weight[qi] / total if total > 0 else 0.0
    return out


def max_directional_service(spec: NetworkSpec, channel: ChannelModel, coeff, *,
                            rate_table=None, schedules=None) -> np.ndarray:
    """mu_h: largest one-slot workload reduction in each channel state.

    Serving ``r`` packets of flow f on link (i, j) lowers the workload by
    ``r * (coeff[Q_i^f] - coeff[Q_j^f])``; the best schedule and flow choice
    are found by enumeration.
    """
    schedules = enumerate_schedules(spec) if schedules is None else schedules
    rates = _rates(channel, rate_table)
    gain = np.zeros(spec.n_links)
    for link, f, up, down in spec.hops:
        g = coeff[up] - (coeff[down] if down >= 0 else 0.0)
        gain[link] = max(gain[link], g)
    if not schedules:
        return np.zeros(channel.n_states)
    member = np.zeros((len(schedules), spec.n_links))
    for s, sched in enumerate(schedules):
        member[s, list(sched)] = 1.0
    per_sched = (rates * gain[None, :]) @ member.T
    return per_sched.max(axis=1)


def ht_params(spec: NetworkSpec, channel: ChannelModel, cap: CapacityResult, n: int, rates,
              arrivals: ArrivalModel | None = None, *, mode: str = "aggregate",
              sigma_hat_sq: float | None = None, rate_table=None, schedules=None) -> HeavyTrafficParams:
    """Brownian-limit parameters for the ``n``-th system with per-flow ``rates``.

    ``b_star = n <psi, rates - lambda*>`` and ``sigma_sq`` adds the summed
    arrival variances to the service variance. ``sigma_hat_sq`` pins the
    service variance (the computed value is kept alongside).
    """
    rates = np.asarray(rates, dtype=float)
    if rates.shape != cap.boundary.shape:
        raise ValueError("rates must have one entry per flow")
    coeff = queue_coefficients(spec, cap, mode)
    mu = max_directional_service(spec, channel, coeff, rate_table=rate_table, schedules=schedules)
    gamma = channel.probs
    mu_hat = float(mu @ gamma)
    computed = max(float((mu**2) @ gamma) - mu_hat**2, 0.0)
    used = computed if sigma_hat_sq is None else float(sigma_hat_sq)
    if arrivals is not None:
        arrival_var = float(arrivals.variances.sum())
    else:
        arrival_var = float(rates.sum())  # Poisson: variance equals mean
    if mode == "aggregate":
        psi, lam_n, lam_star = cap.psi_flow, rates, cap.boundary
    else:
        psi = cap.psi_queue
        lam_n = np.zeros(spec.n_queues)
        lam_star = np.zeros(spec.n_queues)
        for f, fl in enumerate(spec.flows):
            q = spec.queues.index((fl.source, f))
            lam_n[q] = rates[f]
            lam_star[q] = cap.boundary[f]
    b = n * float(psi @ (lam_n - lam_star))
    return HeavyTrafficParams(
        mode=mode, psi=psi, boundary=lam_star, rates=lam_n, n=n, b_star=b, mu=mu,
        mu_hat=mu_hat, sigma_hat_sq=used, sigma_hat_sq_computed=computed,
        arrival_var=arrival_var, sigma_sq=arrival_var + used, queue_coeff=coeff,
    )


def invariant_point(params: PolicyParams, psi, coord_flow=None, *, tol: float = 1e-10,
                    maxiter: int = 200) -> tuple[np.ndarray, float]:
    """Solve ``alpha(phi_j) phi_j = k psi_j`` with ``<psi, phi> = 1``.

    ``coord_flow[j]`` names the flow whose weight parameters apply to
    coordinate ``j`` (identity by default). Returns ``(phi, k)``.
    """
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise ValueError("psi must be nonnegative")
    norm2 = float(psi @ psi)
    if norm2 == 0:
        raise ValueError("psi must be nonzero")
    coord_flow = np.arange(len(psi)) if coord_flow is None else np.asarray(coord_flow)
    a1 = np.array([params.a1[f] for f in coord_flow])
    a2 = np.array([params.a2[f] for f in coord_flow])
    tg = np.array([params.target[f] for f in coord_flow])

    def alpha(j, x):
        return weight(x, tg[j], a1[j], a2[j])

    def solve_coord(j, k):
        rhs = k * psi[j]
        if rhs == 0:
            return 0.0
        lo, hi = rhs / (1.0 + a1[j]), rhs
        if alpha(j, hi) * hi - rhs <= 0:
            return hi
        return brentq(lambda x: alpha(j, x) * x - rhs, lo, hi, xtol=1e-15, rtol=_RTOL,
                      maxiter=maxiter)

    def phi_of(k):
        return np.array([solve_coord(j, k) for j in range(len(psi))])

    k_lo = 1.0 / norm2
    k_hi = (1.0 + a1.max()) / norm2
    g = lambda k: float(psi @ phi_of(k)) - 1.0
    if abs(g(k_lo)) <= tol:
        k = k_lo
    elif abs(g(k_hi)) <= tol:
        k = k_hi
    else:
        try:
            k = brentq(g, k_lo, k_hi, xtol=1e-15, rtol=_RTOL, maxiter=maxiter)
        except (ValueError, RuntimeError) as exc:
            raise CapacityError(f"invariant point search did not converge: {exc}") from exc
    phi = phi_of(k)
    resid = max(abs(alpha(j, phi[j]) * phi[j] - k * psi[j]) for j in range(len(psi)))
    if resid > tol:
        raise CapacityError(f"invariant point residual {resid:.3g} exceeds {tol}")
    return phi, float(k)
