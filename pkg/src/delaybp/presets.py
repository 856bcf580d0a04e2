"""Built-in scenarios: the five-node star and the settings of its two experiments.

Node ``k`` here is node ``k`` of the star drawing (1..5); node 0 is an unused
placeholder so the labels line up. Links touching a common node interfere.
"""
from __future__ import annotations

from dataclasses import dataclass

from .scheduler import PolicyParams
from .stochastic import ArrivalModel, ChannelModel, SourceArrivals, make_product_channel
from .topology import Flow, NetworkSpec, node_exclusive_interference

STAR_LINKS = ((1, 3), (2, 3), (3, 4), (3, 5))
STAR_GAINS = (0, 1, 2, 3)

TABLE2_RATES = (0.640, 0.641, 0.642, 0.643, 0.644, 0.645, 0.646, 0.647)
TABLE2_SIM = (233, 263, 319, 367, 381, 479, 517, 568)
TABLE2_APPROX = (232, 258, 290, 332, 387, 465, 581, 775)
TABLE3_RATES = (0.63, 0.64, 0.641)
TABLE3_TARGETS = (250.0, 100.0)
TABLE3_A2 = (1.0, 4.0)
TABLE3_OBTAINED = ((213, 98), (264, 110), (292, 120))

BOUNDARY = (0.65, 0.65)
SIGMA_HAT_SQ = 8.0
HORIZON = 100_000
REPLICATIONS = 20


def star_network() -> NetworkSpec:
    links = STAR_LINKS
    iset = tuple(s for s in node_exclusive_interference(links) if len(s) > 1)
    flows = (Flow(1, 4, (0, 2)), Flow(2, 5, (1, 3)))
    return NetworkSpec(6, links, iset, flows, name="star")


def star_channel() -> ChannelModel:
    return make_product_channel(STAR_GAINS, n_links=len(STAR_LINKS))


def star_arrivals(rate: float | tuple[float, float]) -> ArrivalModel:
    r1, r2 = (rate, rate) if isinstance(rate, (int, float)) else rate
    return ArrivalModel((SourceArrivals(1, 0, "poisson", r1), SourceArrivals(2, 1, "poisson", r2)))


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one experiment."""

    spec: NetworkSpec
    arrivals: ArrivalModel
    channel: ChannelModel
    params: PolicyParams
    rate_table: tuple[int, ...] | None = None
    sigma_hat_sq: float | None = None
    horizon: int = HORIZON
    replications: int = REPLICATIONS
    seed: int = 0
    stride: int = 100
    rates: tuple[float, ...] = ()
    mode: str = "aggregate"
    direction: tuple[float, ...] | None = None
    boundary: tuple[float, ...] | None = None

    def ray(self) -> tuple[float, ...]:
        return self.direction or (1.0,) * self.spec.n_flows


def table2_scenario(rate: float = TABLE2_RATES[0]) -> Scenario:
    spec = star_network()
    return Scenario(spec, star_arrivals(rate), star_channel(),
                    PolicyParams.uniform(2, a1=1.0, a2=1.0, target=100.0),
                    sigma_hat_sq=SIGMA_HAT_SQ, rates=TABLE2_RATES, boundary=BOUNDARY)


def table3_scenario(rate: float = TABLE3_RATES[0]) -> Scenario:
    spec = star_network()
    params = PolicyParams((1.0, 1.0), TABLE3_A2, TABLE3_TARGETS)
    return Scenario(spec, star_arrivals(rate), star_channel(), params, rates=TABLE3_RATES,
                    boundary=BOUNDARY)
