"""Scenario files: one YAML document describing network, traffic, channel and policy.

Example (the five-node star)::

    name: star
    nodes: 6
    links: [[1, 3], [2, 3], [3, 4], [3, 5]]
    interference: node-exclusive
    flows:
      - {source: 1, dest: 4, route: [1, 3, 4], rate: 0.64, a1: 1, a2: 1, target: 100}
      - {source: 2, dest: 5, route: [2, 3, 5], rate: 0.64, a1: 1, a2: 1, target: 100}
    channel: {type: product, gains: [0, 1, 2, 3]}
    analysis: {sigma_hat_sq: 8, mode: aggregate, boundary: [0.65, 0.65]}
    experiment: {horizon: 100000, replications: 20, seed: 0, stride: 100,
                 rates: [0.640, 0.641]}

``analysis.sigma_hat_sq`` and ``analysis.boundary`` pin the service variance
and the boundary point used by the closed-form queue estimate; the computed
values are always reported next to them. Routes are node sequences. Flow arrival rates are packets per slot, targets
are packets, target delays are slots. Unknown keys are an error.
"""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .presets import Scenario
from .scheduler import PolicyParams, target_queue_from_delay
from .stochastic import ArrivalModel, ChannelModel, SourceArrivals, make_product_channel
from .topology import Flow, NetworkSpec, node_exclusive_interference

SCHEMA_VERSION = 1

TOP_KEYS = {"version", "name", "nodes", "links", "interference", "flows", "channel",
            "rate_table", "analysis", "experiment"}
FLOW_KEYS = {"source", "dest", "route", "rate", "family", "batch", "a1", "a2", "target",
             "target_delay"}
CHANNEL_KEYS = {"type", "gains", "probs", "states"}
ANALYSIS_KEYS = {"sigma_hat_sq", "mode", "direction", "boundary"}
EXPERIMENT_KEYS = {"horizon", "replications", "seed", "stride", "rates"}


class ScenarioError(ValueError):
    pass


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(extra)}")


def _require(d, key, where):
    if key not in d:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return d[key]


def parse_scenario(doc: dict) -> Scenario:
    _check_keys(doc, TOP_KEYS, "scenario")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario version {version}")
    n_nodes = int(_require(doc, "nodes", "scenario"))
    links = tuple((int(i), int(j)) for i, j in _require(doc, "links", "scenario"))
    link_id = {l: k for k, l in enumerate(links)}

    inter = doc.get("interference", "node-exclusive")
    if inter == "node-exclusive":
        isets = tuple(s for s in node_exclusive_interference(links) if len(s) > 1)
        covered = set().union(*isets) if isets else set()
        # a link sharing no node still needs its own set
        isets += tuple(frozenset([k]) for k in range(len(links)) if k not in covered)
    elif isinstance(inter, list):
        isets = []
        for k, s in enumerate(inter):
            ids = set()
            for item in s:
                if isinstance(item, list):
                    key = (int(item[0]), int(item[1]))
                    if key not in link_id:
                        raise ScenarioError(f"interference set {k}: unknown link {key}")
                    ids.add(link_id[key])
                else:
                    ids.add(int(item))
            isets.append(frozenset(ids))
        isets = tuple(isets)
    else:
        raise ScenarioError("interference must be 'node-exclusive' or a list of link sets")

    flows, sources, a1, a2, targets = [], [], [], [], []
    for k, fd in enumerate(_require(doc, "flows", "scenario")):
        where = f"flows[{k}]"
        _check_keys(fd, FLOW_KEYS, where)
        src, dst = int(_require(fd, "source", where)), int(_require(fd, "dest", where))
        nodes = [int(x) for x in _require(fd, "route", where)]
        route = []
        for hop in zip(nodes, nodes[1:]):
            # undeclared hops keep an out-of-range id so validation reports them
            route.append(link_id.get(hop, len(links) + len(route)))
        if not nodes or nodes[0] != src or nodes[-1] != dst:
            raise ScenarioError(f"{where}: route must run from source to dest")
        flows.append(Flow(src, dst, tuple(route)))
        rate = float(fd.get("rate", 0.0))
        sources.append(SourceArrivals(src, k, fd.get("family", "poisson"), rate, int(fd.get("batch", 1))))
        a1.append(float(fd.get("a1", 1.0)))
        a2.append(float(fd.get("a2", 1.0)))
        if "target" in fd and "target_delay" in fd:
            raise ScenarioError(f"{where}: give target or target_delay, not both")
        if "target_delay" in fd:
            targets.append(target_queue_from_delay(rate, float(fd["target_delay"])))
        else:
            targets.append(float(fd.get("target", 100.0)))
    spec = NetworkSpec(n_nodes, links, isets, tuple(flows), name=str(doc.get("name", "")))

    ch = _require(doc, "channel", "scenario")
    _check_keys(ch, CHANNEL_KEYS, "channel")
    kind = ch.get("type", "product")
    if kind == "product":
        gains = _require(ch, "gains", "channel")
        per_link = isinstance(gains[0], list)
        probs = ch.get("probs")
        if per_link:
            channel = make_product_channel(gains, probs)
        else:
            channel = make_product_channel(gains, probs, n_links=len(links))
    elif kind == "table":
        channel = ChannelModel(np.array(_require(ch, "states", "channel")),
                               np.array(_require(ch, "probs", "channel")))
    elif kind == "constant":
        channel = ChannelModel(np.array([_require(ch, "gains", "channel")]), np.array([1.0]))
    else:
        raise ScenarioError(f"channel: unknown type {kind!r}")

    an = doc.get("analysis", {})
    _check_keys(an, ANALYSIS_KEYS, "analysis")
    ex = doc.get("experiment", {})
    _check_keys(ex, EXPERIMENT_KEYS, "experiment")
    rt = doc.get("rate_table")
    sc = Scenario(
        spec=spec, arrivals=ArrivalModel(tuple(sources)), channel=channel,
        params=PolicyParams(tuple(a1), tuple(a2), tuple(targets)),
        rate_table=tuple(int(x) for x in rt) if rt is not None else None,
        sigma_hat_sq=float(an["sigma_hat_sq"]) if "sigma_hat_sq" in an else None,
        horizon=int(ex.get("horizon", 100_000)), replications=int(ex.get("replications", 20)),
        seed=int(ex.get("seed", 0)), stride=int(ex.get("stride", 100)),
        rates=tuple(float(x) for x in ex.get("rates", ())),
        mode=str(an.get("mode", "aggregate")),
        direction=tuple(float(x) for x in an["direction"]) if "direction" in an else None,
        boundary=tuple(float(x) for x in an["boundary"]) if "boundary" in an else None,
    )
    if sc.mode not in ("aggregate", "queue"):
        raise ScenarioError(f"analysis.mode must be 'aggregate' or 'queue', got {sc.mode!r}")
    return sc


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not valid YAML: {exc}") from exc
    return parse_scenario(doc)


def with_rate(sc: Scenario, rate) -> Scenario:
    """Same scenario with every flow's arrival rate set to ``rate`` (scalar or per flow)."""
    rates = [rate] * sc.spec.n_flows if np.isscalar(rate) else list(rate)
    return replace(sc, arrivals=sc.arrivals.with_means(rates))
