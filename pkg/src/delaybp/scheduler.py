"""Per-slot delay-aware backpressure policy.

Every slot the controller maximises ``sum alpha(Q^f, Qbar^f) * Q_ij^f * mu_ij^f``
over feasible allocations, where ``Q_ij^f`` is the (clipped) queue
differential across link (i, j) and ``alpha`` is a logistic weight that grows
once the flow's total backlog passes its target.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .topology import DEFAULT_SCHEDULE_CAP, NetworkSpec, enumerate_schedules

EXP_CLAMP = 700.0
ORACLE_CAP = 10**5


def weight(x: float, xbar: float, a1: float, a2: float) -> float:
    """Logistic priority weight ``1 + a1 / (1 + exp(-a2 (x - xbar)))``.

    The exponent is clamped to +-700 so the result saturates at 1 or ``1 + a1``
    instead of overflowing.
    """
    z = -a2 * (x - xbar)
    if z > EXP_CLAMP:
        z = EXP_CLAMP
    elif z < -EXP_CLAMP:
        z = -EXP_CLAMP
    return 1.0 + a1 / (1.0 + math.exp(z))


def target_queue_from_delay(rate: float, delay: float) -> float:
    """Little's law: target backlog for mean arrival ``rate`` and mean ``delay``."""
    if rate < 0 or delay < 0:
        raise ValueError("rate and delay must be nonnegative")
    return rate * delay


@dataclass(frozen=True)
class PolicyParams:
    """Per-flow weight parameters, indexed like ``NetworkSpec.flows``."""

    a1: tuple[float, ...]
    a2: tuple[float, ...]
    target: tuple[float, ...]

    def __post_init__(self):
        if not len(self.a1) == len(self.a2) == len(self.target):
            raise ValueError("a1, a2 and target need one entry per flow")
        if any(a < 0 for a in self.a1):
            raise ValueError("a1 must be >= 0")
        if any(a <= 0 for a in self.a2):
            raise ValueError("a2 must be > 0")
        if any(q < 0 for q in self.target):
            raise ValueError("target queue must be >= 0")

    @classmethod
    def uniform(cls, n_flows: int, a1=1.0, a2=1.0, target=100.0) -> "PolicyParams":
        return cls((float(a1),) * n_flows, (float(a2),) * n_flows, (float(target),) * n_flows)

    @classmethod
    def from_delays(cls, rates: Sequence[float], delays: Sequence[float], a1, a2) -> "PolicyParams":
        targets = tuple(target_queue_from_delay(r, d) for r, d in zip(rates, delays))
        return cls(tuple(map(float, a1)), tuple(map(float, a2)), targets)

    def weights(self, flow_totals: Sequence[float]) -> np.ndarray:
        return np.array([
            weight(x, qb, a1, a2)
            for x, qb, a1, a2 in zip(flow_totals, self.target, self.a1, self.a2)
        ])


@dataclass
class Allocation:
    """One slot's decision.

    ``assignments`` maps each serving link to ``(flow index, offered rate)``.
    ``served`` is filled in by the engine once packets actually move.
    """

    schedule: tuple[int, ...] = ()
    schedule_index: int = -1
    assignments: dict[int, tuple[int, int]] = field(default_factory=dict)
    served: dict[int, int] = field(default_factory=dict)
    objective: float = 0.0

    @property
    def empty(self) -> bool:
        return not self.assignments


class Plan:
    """Flattened index arrays for one network, shared by the solvers and kernels."""

    def __init__(self, spec: NetworkSpec, schedules=None, cap: int = DEFAULT_SCHEDULE_CAP):
        self.spec = spec
        self.schedules = list(schedules) if schedules is not None else enumerate_schedules(spec, cap)
        dest = [fl.dest for fl in spec.flows]
        # hops grouped by link, then by flow id so ties resolve to the lowest id
        hops = sorted(spec.hops, key=lambda h: (h[0], dest[h[1]], h[1]))
        self.hops = hops
        self.hop_link = np.array([h[0] for h in hops], dtype=np.int64)
        self.hop_flow = np.array([h[1] for h in hops], dtype=np.int64)
        self.hop_up = np.array([h[2] for h in hops], dtype=np.int64)
        self.hop_down = np.array([h[3] for h in hops], dtype=np.int64)
        ptr = np.zeros(spec.n_links + 1, dtype=np.int64)
        for link in self.hop_link:
            ptr[link + 1] += 1
        self.link_ptr = np.cumsum(ptr)
        sptr = [0]
        slinks = []
        for s in self.schedules:
            slinks.extend(sorted(s))
            sptr.append(len(slinks))
        self.sched_ptr = np.array(sptr, dtype=np.int64)
        self.sched_links = np.array(slinks, dtype=np.int64)
        self.queue_flow = spec.flow_of_queue().astype(np.int64)

    @property
    def n_schedules(self) -> int:
        return len(self.schedules)


def backpressure(Q: Sequence[int], spec: NetworkSpec):
    """Clipped differentials per hop and total backlog per flow.

    Returns ``(diffs, totals)``: ``diffs`` maps ``(link, flow index)`` to
    ``max(Q_i^f - Q_j^f, 0)`` (destination queues count as 0) and ``totals``
    is ``Q^f = sum_i Q_i^f``.
    """
    Q = np.asarray(Q)
    totals = np.zeros(spec.n_flows, dtype=Q.dtype if Q.size else np.int64)
    for q, (_, f) in zip(Q, spec.queues):
        totals[f] += q
    diffs = {}
    for link, f, up, down in spec.hops:
        qi = Q[up] if up >= 0 else 0
        qj = Q[down] if down >= 0 else 0
        diffs[link, f] = max(qi - qj, 0)
    return diffs, totals


def _flow_weights(Q, plan: Plan, params: PolicyParams) -> list[float]:
    totals = [0] * plan.spec.n_flows
    for q, f in zip(Q, plan.queue_flow):
        totals[f] += int(q)
    return [weight(totals[f], params.target[f], params.a1[f], params.a2[f])
            for f in range(plan.spec.n_flows)]


def _rates(h, plan: Plan, rate_table=None) -> list[int]:
    h = [int(x) for x in h]
    if len(h) != plan.spec.n_links:
        raise ValueError("channel state must give one gain per link")
    if rate_table is not None:
        return [int(rate_table[g]) for g in h]
    return h


def solve_schedule(Q, h, spec_or_plan, params: PolicyParams, rate_table=None) -> Allocation:
    """Maximise the weighted backpressure objective for one slot.

    Each link of a schedule serves the eligible flow with the largest
    ``alpha * differential``; schedules are compared by the summed
    ``alpha * differential * rate``. Ties go to the lowest schedule index,
    then the lowest flow id. An all-zero objective yields the empty allocation.
    """
    plan = spec_or_plan if isinstance(spec_or_plan, Plan) else Plan(spec_or_plan)
    spec = plan.spec
    rates = _rates(h, plan, rate_table)
    w = _flow_weights(Q, plan, params)

    best_hop = [-1] * spec.n_links
    link_val = [0.0] * spec.n_links
    for link in range(spec.n_links):
        best = 0.0
        for k in range(plan.link_ptr[link], plan.link_ptr[link + 1]):
            up, down = plan.hop_up[k], plan.hop_down[k]
            qi = int(Q[up]) if up >= 0 else 0
            qj = int(Q[down]) if down >= 0 else 0
            d = qi - qj
            if d <= 0:
                continue
            v = w[plan.hop_flow[k]] * d
            if v > best:
                best = v
                best_hop[link] = k
        link_val[link] = best * rates[link]

    best_obj = 0.0
    best_s = -1
    for s in range(plan.n_schedules):
        obj = 0.0
        for p in range(plan.sched_ptr[s], plan.sched_ptr[s + 1]):
            obj += link_val[plan.sched_links[p]]
        if obj > best_obj:
            best_obj = obj
            best_s = s
    if best_s < 0:
        return Allocation()
    alloc = Allocation(schedule=plan.schedules[best_s], schedule_index=best_s, objective=best_obj)
    for link in plan.schedules[best_s]:
        if link_val[link] > 0:
            alloc.assignments[link] = (int(plan.hop_flow[best_hop[link]]), rates[link])
    return alloc


def oracle_solve_schedule(Q, h, spec_or_plan, params: PolicyParams, rate_table=None,
                          cap: int = ORACLE_CAP) -> tuple[Allocation, float]:
    """Exhaustive search over every (schedule, per-link flow choice) pair.

    Test oracle for :func:`solve_schedule`; the objective of each candidate is
    evaluated from scratch with terms summed in ascending link order.
    """
    plan = spec_or_plan if isinstance(spec_or_plan, Plan) else Plan(spec_or_plan)
    spec = plan.spec
    if plan.n_schedules * max(spec.n_flows, 1) > cap:
        raise ValueError("instance too large for the exhaustive oracle")
    rates = _rates(h, plan, rate_table)
    diffs, totals = backpressure(np.asarray(Q, dtype=np.int64), spec)
    w = [weight(int(totals[f]), params.target[f], params.a1[f], params.a2[f])
         for f in range(spec.n_flows)]
    dest = [fl.dest for fl in spec.flows]

    best = (0.0, None, None)
    for s, sched in enumerate(plan.schedules):
        links = sorted(sched)
        # None means the link carries nothing
        choices = [[None] + sorted(spec.link_flows(l), key=lambda f: dest[f]) for l in links]
        for combo in itertools.product(*choices):
            obj = 0.0
            for link, f in zip(links, combo):
                if f is None:
                    continue
                obj += w[f] * diffs[link, f] * rates[link]
            if obj > best[0]:
                best = (obj, s, combo)
    obj, s, combo = best
    if s is None:
        return Allocation(), 0.0
    alloc = Allocation(schedule=plan.schedules[s], schedule_index=s, objective=obj)
    for link, f in zip(sorted(plan.schedules[s]), combo):
        if f is not None and diffs[link, f] > 0 and rates[link] > 0:
            alloc.assignments[link] = (f, rates[link])
    return alloc, obj
