"""Network description: nodes, directed links, fixed-route flows, interference sets.

Nodes are dense integers ``0..n_nodes-1``; a flow is identified by its
destination node. Queues exist for every (node, flow) pair on the flow's
route except the destination, where packets leave the network.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import networkx as nx
import numpy as np

DEFAULT_SCHEDULE_CAP = 10**6


class ScheduleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Flow:
    """One flow: traffic from ``source`` to ``dest`` along ``route`` (link ids)."""

    source: int
    dest: int
    route: tuple[int, ...]

    @property
    def id(self) -> int:
        return self.dest


@dataclass(frozen=True)
class NetworkSpec:
    n_nodes: int
    links: tuple[tuple[int, int], ...]
    interference_sets: tuple[frozenset[int], ...]
    flows: tuple[Flow, ...]
    name: str = ""
    # derived indexing, filled in __post_init__
    queues: tuple[tuple[int, int], ...] = field(init=False, repr=False)
    hops: tuple[tuple[int, int, int, int], ...] = field(init=False, repr=False)

    def __post_init__(self):
        queues = []
        hops = []
        qindex = {}
        for fi, flow in enumerate(self.flows):
            for link in flow.route:
                if not 0 <= link < len(self.links):
                    continue
                node = self.links[link][0]
                if node != flow.dest and (node, fi) not in qindex:
                    qindex[node, fi] = len(queues)
                    queues.append((node, fi))
        for fi, flow in enumerate(self.flows):
            for link in flow.route:
                if not 0 <= link < len(self.links):
                    continue
                i, j = self.links[link]
                up = qindex.get((i, fi), -1)
                down = qindex.get((j, fi), -1) if j != flow.dest else -1
                hops.append((link, fi, up, down))
        object.__setattr__(self, "queues", tuple(queues))
        object.__setattr__(self, "hops", tuple(hops))

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_flows(self) -> int:
        return len(self.flows)

    @property
    def n_queues(self) -> int:
        return len(self.queues)

    def queue_index(self, node: int, flow: int) -> int:
        """Index of queue Q_node^flow; ``flow`` is the position in ``self.flows``."""
        try:
            return self.queues.index((node, flow))
        except ValueError:
            raise KeyError(f"no queue for node {node}, flow {flow}") from None

    def flow_of_queue(self) -> np.ndarray:
        return np.array([f for _, f in self.queues], dtype=np.intp)

    def source_queues(self) -> np.ndarray:
        """Queue index receiving each flow's exogenous arrivals."""
        return np.array(
            [self.queues.index((fl.source, fi)) for fi, fl in enumerate(self.flows)],
            dtype=np.intp,
        )

    def link_flows(self, link: int) -> list[int]:
        return [fi for fi, fl in enumerate(self.flows) if link in fl.route]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(self.violations)


def validate_network(spec: NetworkSpec) -> ValidationReport:
    """Check every structural invariant; violations are collected, never raised."""
    rep = ValidationReport()
    v = rep.violations
    n = spec.n_nodes
    if n < 1:
        v.append("network has no nodes")
    seen = set()
    for lid, (i, j) in enumerate(spec.links):
        if not (0 <= i < n and 0 <= j < n):
            v.append(f"link {lid} ({i}->{j}): endpoint outside 0..{n - 1}")
        if i == j:
            v.append(f"link {lid} ({i}->{j}): self-loop")
        if (i, j) in seen:
            v.append(f"link {lid} ({i}->{j}): duplicate link")
        seen.add((i, j))

    covered = set()
    for k, iset in enumerate(spec.interference_sets):
        for lid in iset:
            if not 0 <= lid < spec.n_links:
                v.append(f"interference set {k}: unknown link {lid}")
            covered.add(lid)
    for lid in range(spec.n_links):
        if lid not in covered:
            i, j = spec.links[lid]
            v.append(f"uninterfered link {lid} ({i}->{j}): not in any interference set")

    dests = set()
    for fi, fl in enumerate(spec.flows):
        tag = f"flow {fi} ({fl.source}->{fl.dest})"
        if fl.dest in dests:
            v.append(f"{tag}: destination {fl.dest} shared with another flow")
        dests.add(fl.dest)
        if fl.source == fl.dest:
            v.append(f"{tag}: source equals destination")
        if not fl.route:
            v.append(f"{tag}: empty route")
            continue
        bad = [lid for lid in fl.route if not 0 <= lid < spec.n_links]
        if bad:
            v.append(f"{tag}: route uses unknown link {bad}")
            continue
        path = [spec.links[lid] for lid in fl.route]
        if path[0][0] != fl.source:
            v.append(f"{tag}: route does not start at source")
        if path[-1][1] != fl.dest:
            v.append(f"{tag}: route does not end at destination")
        for (a, b), (c, d) in zip(path, path[1:]):
            if b != c:
                v.append(f"{tag}: route is disconnected between {a}->{b} and {c}->{d}")
        nodes = [path[0][0]] + [b for _, b in path]
        if len(set(nodes)) != len(nodes):
            v.append(f"{tag}: route visits a node twice")
    return rep


def node_exclusive_interference(links: Sequence[tuple[int, int]]) -> tuple[frozenset[int], ...]:
    """One interference set per node: all links touching that node."""
    by_node: dict[int, set[int]] = {}
    for lid, (i, j) in enumerate(links):
        by_node.setdefault(i, set()).add(lid)
        by_node.setdefault(j, set()).add(lid)
    return tuple(frozenset(s) for _, s in sorted(by_node.items()))


def conflict_graph(spec: NetworkSpec) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(spec.n_links))
    for iset in spec.interference_sets:
        g.add_edges_from(combinations(sorted(iset), 2))
    return g


def is_feasible(spec: NetworkSpec, schedule) -> bool:
    s = set(schedule)
    return all(len(s & iset) <= 1 for iset in spec.interference_sets)


def enumerate_schedules(spec: NetworkSpec, cap: int = DEFAULT_SCHEDULE_CAP) -> list[tuple[int, ...]]:
    """All inclusion-maximal feasible schedules, sorted lexicographically.

    Maximal feasible link sets are the maximal independent sets of the
    conflict graph, i.e. the maximal cliques of its complement.
    """
    if spec.n_links == 0:
        return []
    comp = nx.complement(conflict_graph(spec))
    out = []
    for clique in nx.find_cliques(comp):
        out.append(tuple(sorted(clique)))
        if len(out) > cap:
            raise ScheduleCapExceeded(f"more than {cap} maximal schedules")
    out.sort()
    return out
