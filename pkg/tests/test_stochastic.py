import math

import numpy as np
import pytest
from scipy import stats

from delaybp.stochastic import (
    ArrivalModel,
    ChannelModel,
    RngStream,
    SourceArrivals,
    constant_channel,
    make_product_channel,
    sample_arrivals,
    sample_channel,
)


def test_deterministic_and_zero():
    rng = RngStream(1).arrivals()
    m = ArrivalModel((SourceArrivals(0, 0, "deterministic", 1.0), SourceArrivals(1, 1, "poisson", 0.0)))
    x = sample_arrivals(m, rng, 1000)
    assert np.all(x[:, 0] == 1)
    assert np.all(x[:, 1] == 0)


def test_poisson_mean_clt():
    rng = RngStream(7).arrivals()
    x = SourceArrivals(0, 0, "poisson", 0.64).sample(rng, 10**6)
    assert abs(x.mean() - 0.64) <= 3 * math.sqrt(0.64 / 10**6)


def test_unknown_family():
    with pytest.raises(ValueError):
        SourceArrivals(0, 0, "pareto", 1.0)


@pytest.mark.parametrize("src", [
    SourceArrivals(0, 0, "poisson", 0.8),
    SourceArrivals(0, 0, "bernoulli-batch", 1.5, batch=3),
    SourceArrivals(0, 0, "deterministic", 2.0),
])
def test_chi_square_fit(src):
    rng = RngStream(11).arrivals()
    x = src.sample(rng, 10**5)
    assert abs(x.var() - src.variance) < 0.05 + 0.05 * src.variance
    if src.family == "deterministic":
        assert np.all(x == 2)
        return
    if src.family == "poisson":
        top = 5
        pmf = stats.poisson.pmf(np.arange(top), src.mean)
        exp = np.append(pmf, 1 - pmf.sum()) * len(x)
        obs = np.append(np.bincount(np.minimum(x, top), minlength=top + 1)[:top],
                        (x >= top).sum())
    else:
        p = src.mean / src.batch
        exp = np.array([1 - p, p]) * len(x)
        obs = np.array([(x == 0).sum(), (x == src.batch).sum()])
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_streams_independent():
    a = RngStream(5, 0).arrivals().random(10**5)
    b = RngStream(5, 1).arrivals().random(10**5)
    c = RngStream(5, 0).channel().random(10**5)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01
    assert np.array_equal(a, RngStream(5, 0).arrivals().random(10**5))


def test_single_state_and_point_mass():
    assert np.all(sample_channel(constant_channel([2, 3]), RngStream(0).channel(), 100) == 0)
    m = ChannelModel(np.array([[1], [2], [3]]), np.array([1.0, 0.0, 0.0]))
    assert np.all(sample_channel(m, RngStream(0).channel(), 1000) == 0)


def test_uniform_gain_frequency():
    ch = make_product_channel((0, 1, 2, 3), n_links=4)
    idx = sample_channel(ch, RngStream(3).channel(), 10**6)
    g = ch.states[idx, 0]
    for v in range(4):
        assert abs((g == v).mean() - 0.25) <= 0.0013


def test_product_sizes():
    ch = make_product_channel((0, 1, 2, 3), n_links=4)
    assert ch.n_states == 256
    assert np.allclose(ch.probs, 1 / 256)
    one = make_product_channel([[1]])
    assert one.n_states == 1 and one.probs[0] == 1.0
    two = make_product_channel((0, 1), n_links=2)
    assert two.n_states == 4 and np.allclose(two.probs, 0.25)
    with pytest.raises(ValueError):
        make_product_channel((0, 1), n_links=30)


def test_probability_validation():
    with pytest.raises(ValueError):
        ChannelModel(np.array([[1], [2]]), np.array([0.5, 0.49]))
