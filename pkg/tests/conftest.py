import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from delaybp.presets import star_network, table2_scenario  # noqa: E402
from delaybp.scheduler import PolicyParams  # noqa: E402
from delaybp.topology import Flow, NetworkSpec, node_exclusive_interference  # noqa: E402

SCENARIOS = Path(__file__).parent.parent / "src" / "delaybp" / "scenarios"


@pytest.fixture
def star():
    return star_network()


@pytest.fixture
def star_scenario():
    return table2_scenario()


@pytest.fixture
def scenario_dir():
    return SCENARIOS


def line_network(n_hops: int = 1) -> NetworkSpec:
    """Nodes 0..n_hops in a line, one flow 0 -> n_hops."""
    links = tuple((k, k + 1) for k in range(n_hops))
    isets = tuple(node_exclusive_interference(links))
    return NetworkSpec(n_hops + 1, links, isets, (Flow(0, n_hops, tuple(range(n_hops))),))


def random_instance(rng: np.random.Generator):
    """Small random network with 2..5 links, 1..3 flows, random interference."""
    n_nodes = int(rng.integers(3, 6))
    pairs = [(i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j]
    k = int(rng.integers(2, min(6, len(pairs)) + 1))
    links = tuple(pairs[i] for i in sorted(rng.choice(len(pairs), size=k, replace=False)))
    flows, dests = [], set()
    for lid, (i, j) in enumerate(links):
        if j in dests or len(flows) >= 3:
            continue
        route = [lid]
        # extend by one hop when possible
        nxt = [m for m, (a, b) in enumerate(links) if a == j and b not in (i,) and b not in dests]
        if nxt and rng.random() < 0.6:
            route.append(int(nxt[0]))
        dest = links[route[-1]][1]
        if dest in dests:
            continue
        dests.add(dest)
        flows.append(Flow(i, dest, tuple(route)))
    isets = [frozenset([l]) for l in range(k)]
    for _ in range(int(rng.integers(0, 3))):
        size = int(rng.integers(2, k + 1))
        isets.append(frozenset(int(x) for x in rng.choice(k, size=size, replace=False)))
    spec = NetworkSpec(n_nodes, links, tuple(isets), tuple(flows))
    params = PolicyParams(
        tuple(float(x) for x in rng.uniform(0, 3, len(flows))),
        tuple(float(x) for x in rng.uniform(0.05, 4, len(flows))),
        tuple(float(x) for x in rng.uniform(0, 20, len(flows))),
    )
    Q = rng.integers(0, 15, spec.n_queues)
    h = rng.integers(0, 4, k)
    return spec, params, Q, h
