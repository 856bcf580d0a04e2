"""Discrete-time simulation with exact cumulative bookkeeping.

Within slot ``t`` the order is fixed: the scheduler looks at slot-start
queues, transfers are taken from those queues, routed packets are credited
downstream, then exogenous arrivals land. A packet sent in slot ``t`` can
therefore be forwarded again at ``t + 1`` at the earliest.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .scheduler import Allocation, Plan, PolicyParams
from .stochastic import ArrivalModel, ChannelModel, RngStream, sample_arrivals, sample_channel
from .topology import NetworkSpec, is_feasible

# arrivals and channel states are drawn in fixed-size blocks; part of the
# reproducibility contract, do not change without bumping TRAJECTORY_VERSION
CHUNK = 1 << 16
TRAJECTORY_VERSION = 1


class InfeasibleAllocation(RuntimeError):
    """The scheduler produced a decision the network cannot carry out."""


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    seed: int = 0
    replications: int = 1
    stride: int = 1
    psi: tuple[float, ...] | None = None
    initial: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.replications < 1:
            raise ValueError("replication count must be >= 1")


@dataclass
class SlotState:
    """Cumulative counters at a slot boundary (``Q`` is instantaneous)."""

    Q: np.ndarray
    A: np.ndarray
    D: np.ndarray
    R: np.ndarray
    S: np.ndarray

    @classmethod
    def initial(cls, spec: NetworkSpec, Q0=None) -> "SlotState":
        nq, nh = spec.n_queues, len(spec.hops)
        Q = np.zeros(nq, dtype=np.int64) if Q0 is None else np.array(Q0, dtype=np.int64)
        z = np.zeros(nq, dtype=np.int64)
        return cls(Q, z.copy(), z.copy(), z.copy(), np.zeros(nh, dtype=np.int64))

    def copy(self) -> "SlotState":
        return SlotState(self.Q.copy(), self.A.copy(), self.D.copy(), self.R.copy(), self.S.copy())


@dataclass
class StepIncrements:
    A: np.ndarray
    D: np.ndarray
    R: np.ndarray
    S: np.ndarray
    E: int
    G: dict


def step(spec: NetworkSpec, state: SlotState, arrivals, h_index: int, h,
         allocation: Allocation) -> tuple[SlotState, StepIncrements]:
    """Advance one slot. ``arrivals`` holds exogenous packets per queue.

    Raises :class:`InfeasibleAllocation` if the allocation breaks an
    interference constraint, serves a flow off its route, or offers more than
    the channel allows.
    """
    if allocation.assignments and not is_feasible(spec, allocation.assignments):
        raise InfeasibleAllocation("allocation violates an interference set")
    hop_of = {(link, f): k for k, (link, f, _, _) in enumerate(spec.hops)}
    nxt = state.copy()
    inc = StepIncrements(np.zeros_like(state.A), np.zeros_like(state.D),
                         np.zeros_like(state.R), np.zeros_like(state.S), h_index, {})
    moves = []
    for link, (f, rate) in sorted(allocation.assignments.items()):
        if (link, f) not in hop_of:
            raise InfeasibleAllocation(f"flow {f} is not routed over link {link}")
        if rate > h[link] or rate < 0:
            raise InfeasibleAllocation(f"link {link}: offered rate {rate} exceeds channel {h[link]}")
        k = hop_of[link, f]
        _, _, up, down = spec.hops[k]
        served = min(rate, int(state.Q[up]))
        moves.append((k, up, down, served))
        allocation.served[link] = served
        key = (h_index, allocation.schedule_index, link, f)
        inc.G[key] = inc.G.get(key, 0) + 1
    for k, up, down, served in moves:
        nxt.Q[up] -= served
        inc.D[up] += served
        inc.S[k] += served
        if down >= 0:
            nxt.Q[down] += served
            inc.R[down] += served
    arrivals = np.asarray(arrivals, dtype=np.int64)
    if arrivals.shape != state.Q.shape:
        raise ValueError("one arrival count per queue required")
    for src, x in enumerate(arrivals):
        if x < 0:
            raise ValueError("negative arrival count")
        nxt.Q[src] += x
        inc.A[src] += x
    nxt.A += inc.A
    nxt.D += inc.D
    nxt.R += inc.R
    nxt.S += inc.S
    if np.any(nxt.Q < 0):
        raise InfeasibleAllocation("queue went negative")
    return nxt, inc


@dataclass
class SystemTrajectory:
    """Recorded process (A, E, G, D, R, S, Q) at the slots in ``times``.

    ``channel[t-1]`` is the channel state index of slot ``t`` for every slot,
    so E can be rebuilt at any time. ``G`` maps
    ``(state index, schedule index, link, flow index)`` to the slot count at
    the horizon.
    """

    spec: NetworkSpec
    times: np.ndarray
    Q: np.ndarray
    A: np.ndarray
    D: np.ndarray
    R: np.ndarray
    S: np.ndarray
    qf_sum: np.ndarray
    qf_sq: np.ndarray
    channel: np.ndarray
    n_states: int
    G: dict = field(default_factory=dict)
    hop_counts: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.times[-1])

    @property
    def Q0(self) -> np.ndarray:
        return self.Q[0]

    def flow_totals(self) -> np.ndarray:
        """Q^f at each recorded slot, shape ``(n_rec, n_flows)``."""
        out = np.zeros((len(self.times), self.spec.n_flows), dtype=np.int64)
        for col, (_, f) in enumerate(self.spec.queues):
            out[:, f] += self.Q[:, col]
        return out

    def E(self, times=None) -> np.ndarray:
        """E_h(t) for each requested slot (default: recorded slots)."""
        times = self.times if times is None else np.asarray(times)
        counts = np.zeros((len(times) + 1, self.n_states), dtype=np.int64)
        slots = np.arange(1, len(self.channel) + 1)
        pos = np.searchsorted(times, slots, side="left")
        np.add.at(counts, (pos, self.channel), 1)
        return np.cumsum(counts, axis=0)[:-1]

    def workload(self, psi) -> np.ndarray:
        return workload(self, psi)


def _record_times(horizon: int, stride: int) -> np.ndarray:
    times = np.arange(0, horizon + 1, stride, dtype=np.int64)
    if times[-1] != horizon:
        times = np.append(times, horizon)
    return times


def _rate_matrix(channel: ChannelModel, n_links: int, rate_table=None) -> np.ndarray:
    if channel.n_links != n_links:
        raise ValueError(f"channel gives {channel.n_links} gains, network has {n_links} links")
    rates = np.asarray(channel.states, dtype=np.int64)
    if rate_table is not None:
        rates = np.asarray(rate_table, dtype=np.int64)[rates]
    return np.ascontiguousarray(rates)


def run(spec: NetworkSpec, params: PolicyParams, arrivals: ArrivalModel, channel: ChannelModel,
        config: SimConfig, stream: RngStream | int = 0, *, plan: Plan | None = None,
        rate_table=None, kernel: str | None = None) -> SystemTrajectory:
    """Simulate one replication; deterministic in its inputs."""
    if isinstance(stream, int):
        stream = RngStream(config.seed, stream)
    plan = plan or Plan(spec)
    backend, run_chunk = kernels.get_kernel(kernel)
    src_nodes = [(s.node, s.flow) for s in arrivals.sources]
    src_queue = np.array([spec.queue_index(n, f) for n, f in src_nodes], dtype=np.int64)
    rates = _rate_matrix(channel, spec.n_links, rate_table)
    a1 = np.array(params.a1, dtype=float)
    a2 = np.array(params.a2, dtype=float)
    target = np.array(params.target, dtype=float)
    if len(a1) != spec.n_flows:
        raise ValueError("policy parameters must cover every flow")

    T, stride = config.horizon, config.stride
    times = _record_times(T, stride)
    n_rows = T // stride + 1
    nq, nh, nf, nl = spec.n_queues, len(plan.hops), spec.n_flows, spec.n_links
    state = SlotState.initial(spec, config.initial)
    # state.S is indexed by spec.hops; the kernel uses plan order
    S = np.zeros(nh, dtype=np.int64)
    qsum = np.zeros(nf, dtype=np.int64)
    qsq = np.zeros(nf, dtype=np.int64)
    rec = {k: np.zeros((n_rows, n), dtype=np.int64)
           for k, n in (("Q", nq), ("A", nq), ("D", nq), ("R", nq), ("S", nh), ("qs", nf), ("qq", nf))}
    rec["Q"][0] = state.Q
    ch_all = np.empty(T, dtype=np.int64)
    hop_counts = np.zeros(nh, dtype=np.int64)
    G: Counter = Counter()
    rng_a, rng_c = stream.arrivals(), stream.channel()

    for start in range(0, T, CHUNK):
        n = min(CHUNK, T - start)
        arr = np.ascontiguousarray(sample_arrivals(arrivals, rng_a, size=n), dtype=np.int64)
        ch = np.ascontiguousarray(sample_channel(channel, rng_c, size=n), dtype=np.int64)
        ch_all[start:start + n] = ch
        out_sched = np.empty(n, dtype=np.int64)
        out_hop = np.empty((n, nl), dtype=np.int64)
        run_chunk(state.Q, state.A, state.D, state.R, S, qsum, qsq,
                  arr, ch, rates,
                  src_queue, plan.hop_link, plan.hop_flow, plan.hop_up, plan.hop_down,
                  plan.link_ptr, plan.sched_ptr, plan.sched_links, plan.queue_flow,
                  a1, a2, target, start, stride,
                  rec["Q"], rec["A"], rec["D"], rec["R"], rec["S"], rec["qs"], rec["qq"],
                  out_sched, out_hop)
        _accumulate_G(G, hop_counts, ch, out_sched, out_hop, plan)

    if times[-1] != (n_rows - 1) * stride:
        final = {"Q": state.Q, "A": state.A, "D": state.D, "R": state.R, "S": S, "qs": qsum, "qq": qsq}
        for k in rec:
            rec[k] = np.vstack([rec[k], final[k][None, :]])
    # back to spec.hops order for S and hop counts
    order = [spec.hops.index(h) for h in plan.hops]
    inv = np.empty(nh, dtype=np.int64)
    inv[order] = np.arange(nh)
    return SystemTrajectory(
        spec=spec, times=times, Q=rec["Q"], A=rec["A"], D=rec["D"], R=rec["R"],
        S=rec["S"][:, inv], qf_sum=rec["qs"], qf_sq=rec["qq"], channel=ch_all,
        n_states=channel.n_states, G=dict(sorted(G.items())), hop_counts=hop_counts[inv],
        meta={"seed": stream.seed, "stream": stream.stream, "kernel": backend,
              "horizon": T, "stride": stride},
    )


def _accumulate_G(G: Counter, hop_counts, ch, out_sched, out_hop, plan: Plan):
    slots, links = np.nonzero(out_hop >= 0)
    if slots.size == 0:
        return
    hops = out_hop[slots, links]
    np.add.at(hop_counts, hops, 1)
    keys = np.stack([ch[slots], out_sched[slots], links, plan.hop_flow[hops]], axis=1)
    uniq, cnt = np.unique(keys, axis=0, return_counts=True)
    for key, c in zip(uniq.tolist(), cnt.tolist()):
        G[tuple(key)] += c


def run_replications(spec, params, arrivals, channel, config: SimConfig, jobs: int = 1,
                     **kw) -> list[SystemTrajectory]:
    """``config.replications`` runs with stream ids 0..R-1, returned in stream order."""
    plan = kw.pop("plan", None) or Plan(spec)
    streams = [RngStream(config.seed, r) for r in range(config.replications)]
    if jobs <= 1:
        return [run(spec, params, arrivals, channel, config, s, plan=plan, **kw) for s in streams]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(run, spec, params, arrivals, channel, config, s, plan=plan, **kw)
                for s in streams]
        return [f.result() for f in futs]


def workload(traj: SystemTrajectory, psi) -> np.ndarray:
    """W(t) = <psi, Q(t)> at each recorded slot."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (traj.Q.shape[1],):
        raise ValueError(f"psi has shape {psi.shape}, queue vector has {traj.Q.shape[1]} entries")
    return traj.Q @ psi


@dataclass
class StationaryStats:
    mean: np.ndarray
    variance: np.ndarray
    ci_halfwidth: np.ndarray
    replication_means: np.ndarray


def stationary_stats(trajectories, burn_in: float = 0.0, z: float = 1.96) -> StationaryStats:
    """Per-flow time-average of Q^f over ``[burn_in*T, T]``, pooled across replications.

    Uses the running per-slot sums kept by the kernel, so the average covers
    every slot in the window regardless of the record stride. The window
    starts at the first recorded slot at or after ``burn_in*T``.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    if not 0 <= burn_in < 1:
        raise ValueError("burn_in must lie in [0, 1)")
    means, second = [], []
    for tr in trajectories:
        T = tr.horizon
        k0 = int(np.searchsorted(tr.times, math.ceil(burn_in * T), side="left"))
        t0 = int(tr.times[k0])
        span = T - t0
        if span <= 0:
            raise ValueError("burn-in leaves no slots")
        s = (tr.qf_sum[-1] - tr.qf_sum[k0]).astype(float)
        ss = (tr.qf_sq[-1] - tr.qf_sq[k0]).astype(float)
        means.append(s / span)
        second.append(ss / span)
    rep = np.array(means)
    mean = rep.mean(axis=0)
    var = np.array(second).mean(axis=0) - mean**2
    if len(rep) > 1:
        half = z * rep.std(axis=0, ddof=1) / math.sqrt(len(rep))
    else:
        half = np.zeros_like(mean)
    return StationaryStats(mean, np.maximum(var, 0.0), half, rep)


def check_invariants(traj: SystemTrajectory) -> list[str]:
    """Every conservation identity on the recorded slots; returns violations."""
    spec = traj.spec
    bad = []
    Q0 = traj.Q[0]
    lhs = Q0[None, :] + traj.A + traj.R - traj.D
    if not np.array_equal(lhs, traj.Q):
        bad.append("queue balance Q = Q0 + A + R - D broken")
    R = np.zeros_like(traj.R)
    D = np.zeros_like(traj.D)
    for k, (_, _, up, down) in enumerate(spec.hops):
        D[:, up] += traj.S[:, k]
        if down >= 0:
            R[:, down] += traj.S[:, k]
    if not np.array_equal(R, traj.R):
        bad.append("routed arrivals R != sum of incoming S")
    if not np.array_equal(D, traj.D):
        bad.append("departures D != sum of outgoing S")
    if np.any(traj.Q < 0):
        bad.append("negative queue")
    E = traj.E()
    if not np.array_equal(E.sum(axis=1), traj.times):
        bad.append("sum_h E_h(t) != t")
    for name in ("A", "D", "R", "S", "qf_sum"):
        if np.any(np.diff(getattr(traj, name), axis=0) < 0):
            bad.append(f"{name} is not nondecreasing")
    if traj.hop_counts is not None:
        per_hop = Counter()
        for (_, _, link, f), c in traj.G.items():
            per_hop[link, f] += c
        for k, (link, f, _, _) in enumerate(spec.hops):
            if per_hop[link, f] != traj.hop_counts[k]:
                bad.append(f"G totals disagree with schedule count on hop {k}")
        states_seen = set(np.unique(traj.channel).tolist())
        if any(h not in states_seen for h, _, _, _ in traj.G):
            bad.append("G increments for a channel state that never occurred")
    return bad
