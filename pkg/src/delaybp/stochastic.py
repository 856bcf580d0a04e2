"""Exogenous arrivals, i.i.d. channel states, and seeded random streams."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FAMILIES = ("poisson", "bernoulli-batch", "deterministic")
DEFAULT_PRODUCT_CAP = 10**6


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream: one master seed, one stream per replication.

    Sub-streams for arrivals and channel draws are spawned separately so that
    changing the arrival rate leaves the channel sequence untouched.
    """

    seed: int
    stream: int = 0

    def generator(self, purpose: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, purpose))
        return np.random.Generator(np.random.PCG64(ss))

    def arrivals(self) -> np.random.Generator:
        return self.generator(0)

    def channel(self) -> np.random.Generator:
        return self.generator(1)


@dataclass(frozen=True)
class SourceArrivals:
    """Arrival law for one (source node, flow) pair.

    ``bernoulli-batch`` delivers ``batch`` packets with probability
    ``mean / batch``; ``deterministic`` needs an integer mean.
    """

    node: int
    flow: int
    family: str = "poisson"
    mean: float = 0.0
    batch: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported arrival family {self.family!r}")
        if self.mean < 0:
            raise ValueError("arrival mean must be >= 0")
        if self.family == "deterministic" and self.mean != int(self.mean):
            raise ValueError("deterministic arrivals need an integer mean")
        if self.family == "bernoulli-batch":
            if self.batch < 1:
                raise ValueError("batch size must be >= 1")
            if self.mean > self.batch:
                raise ValueError("bernoulli-batch mean exceeds batch size")

    @property
    def variance(self) -> float:
        if self.family == "poisson":
            return self.mean
        if self.family == "deterministic":
            return 0.0
        p = self.mean / self.batch
        return p * (1 - p) * self.batch**2

    def with_mean(self, mean: float) -> "SourceArrivals":
        return SourceArrivals(self.node, self.flow, self.family, mean, self.batch)

    def sample(self, rng: np.random.Generator, size=None):
        if self.family == "poisson":
            return rng.poisson(self.mean, size=size)
        if self.family == "deterministic":
            return np.full(size, int(self.mean), dtype=np.int64) if size is not None else int(self.mean)
        hits = rng.random(size) < self.mean / self.batch
        return hits.astype(np.int64) * self.batch if size is not None else int(hits) * self.batch


@dataclass(frozen=True)
class ArrivalModel:
    sources: tuple[SourceArrivals, ...]

    @property
    def means(self) -> np.ndarray:
        return np.array([s.mean for s in self.sources], dtype=float)

    @property
    def variances(self) -> np.ndarray:
        return np.array([s.variance for s in self.sources], dtype=float)

    def with_means(self, means: Sequence[float]) -> "ArrivalModel":
        if len(means) != len(self.sources):
            raise ValueError("one mean per source required")
        return ArrivalModel(tuple(s.with_mean(float(m)) for s, m in zip(self.sources, means)))


def sample_arrivals(model: ArrivalModel, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Packet counts per source; shape ``(n_sources,)`` or ``(size, n_sources)``."""
    if size is None:
        return np.array([s.sample(rng) for s in model.sources], dtype=np.int64)
    out = np.empty((size, len(model.sources)), dtype=np.int64)
    for k, s in enumerate(model.sources):
        out[:, k] = s.sample(rng, size)
    return out


@dataclass(frozen=True)
class ChannelModel:
    """Finite channel state space; ``states[h, link]`` is the gain of ``link`` in state ``h``."""

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=np.int64))
        probs = np.asarray(self.probs, dtype=float).ravel()
        if states.shape[0] == 0:
            raise ValueError("channel state space is empty")
        if probs.shape[0] != states.shape[0]:
            raise ValueError("one probability per channel state required")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("channel probabilities must be nonnegative and sum to 1")
        if np.any(states < 0):
            raise ValueError("channel gains must be nonnegative")
        states.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_links(self) -> int:
        return self.states.shape[1]


def sample_channel(model: ChannelModel, rng: np.random.Generator, size: int | None = None):
    """Channel state index (or indices) drawn i.i.d. from ``model.probs``."""
    if model.n_states == 1:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    cdf = np.cumsum(model.probs)
    cdf[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return int(idx) if size is None else idx.astype(np.int64)


def constant_channel(gains: Sequence[int]) -> ChannelModel:
    return ChannelModel(np.asarray([gains]), np.array([1.0]))


def make_product_channel(gain_sets, distributions=None, n_links: int | None = None,
                         cap: int = DEFAULT_PRODUCT_CAP) -> ChannelModel:
    """Independent per-link gains; the state space is the Cartesian product.

    ``gain_sets`` is either one gain set shared by ``n_links`` links or a list
    with one set per link. ``distributions`` mirrors it (uniform if omitted).
    """
    if n_links is not None:
        gain_sets = [gain_sets] * n_links
        if distributions is not None:
            distributions = [distributions] * n_links
    gain_sets = [list(g) for g in gain_sets]
    if distributions is None:
        distributions = [[1.0 / len(g)] * len(g) for g in gain_sets]
    distributions = [np.asarray(d, dtype=float) for d in distributions]
    size = 1
    for g, d in zip(gain_sets, distributions):
        if len(g) == 0 or len(g) != len(d):
            raise ValueError("each link needs a nonempty gain set with matching probabilities")
        size *= len(g)
    if size > cap:
        raise ValueError(f"product channel has {size} states, cap is {cap}")
    states = np.array(list(itertools.product(*gain_sets)), dtype=np.int64).reshape(size, len(gain_sets))
    probs = np.ones(size)
    for combo_idx, combo in enumerate(itertools.product(*[range(len(g)) for g in gain_sets])):
        probs[combo_idx] = np.prod([d[k] for d, k in zip(distributions, combo)])
    probs = probs / probs.sum() if abs(probs.sum() - 1.0) > 1e-15 else probs
    return ChannelModel(states, probs)
