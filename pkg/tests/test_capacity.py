import math

import numpy as np
import pytest

import oracles
from delaybp.capacity import (
    capacity_scale,
    ht_params,
    invariant_point,
    max_directional_service,
    queue_coefficients,
)
from delaybp.presets import star_arrivals, star_channel
from delaybp.scheduler import PolicyParams, weight
from delaybp.stochastic import constant_channel, make_product_channel
from delaybp.topology import enumerate_schedules
from conftest import line_network


def test_single_link_unit():
    spec = line_network(1)
    cap = capacity_scale(spec, constant_channel([1]), [1.0])
    assert cap.theta == pytest.approx(1.0)
    hp = ht_params(spec, constant_channel([1]), cap, 1, [0.5])
    assert np.allclose(hp.mu, 1.0) and hp.mu_hat == pytest.approx(1.0) and hp.sigma_hat_sq == 0


def test_star_exact(star):
    cap = capacity_scale(star, star_channel(), [1, 1])
    exact = oracles.star_capacity_exact()
    assert exact == pytest.approx(335 / 512, abs=0)
    assert abs(cap.theta - float(exact)) < 1e-9
    assert round(cap.theta, 2) == 0.65
    assert np.allclose(cap.psi_flow, [1 / math.sqrt(2)] * 2)
    assert np.isclose(np.linalg.norm(cap.psi_queue), 1) and np.all(cap.psi_queue >= 0)
    assert not cap.degenerate


@pytest.mark.parametrize("direction", [(1, 2), (3, 1), (1, 0)])
def test_star_vs_primal_oracle(star, direction):
    ch = star_channel()
    cap = capacity_scale(star, ch, direction)
    demand = [direction[0], direction[1], direction[0], direction[1]]
    ref = oracles.timeshare_capacity(ch.states, ch.probs, enumerate_schedules(star), demand)
    assert cap.theta == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_random_small_vs_oracle(seed):
    from conftest import random_instance

    rng = np.random.default_rng(100 + seed)
    spec, *_ = random_instance(rng)
    while spec.n_flows == 0:
        spec, *_ = random_instance(rng)
    ch = make_product_channel([(0, 1, 2)] * 2 + [(1, 2)] * (spec.n_links - 2))
    assert ch.n_states <= 64 or spec.n_links > 4
    d = rng.uniform(0.2, 1.0, spec.n_flows)
    cap = capacity_scale(spec, ch, d)
    demand = np.zeros(spec.n_links)
    for f, fl in enumerate(spec.flows):
        demand[list(fl.route)] += d[f]
    ref = oracles.timeshare_capacity(ch.states, ch.probs, enumerate_schedules(spec), demand)
    assert cap.theta == pytest.approx(ref, abs=1e-6)


def test_homogeneous(star):
    a = capacity_scale(star, star_channel(), [1, 1]).theta
    b = capacity_scale(star, star_channel(), [2, 2]).theta
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_bad_direction(star):
    with pytest.raises(ValueError):
        capacity_scale(star, star_channel(), [0, 0])
    with pytest.raises(ValueError):
        capacity_scale(star, star_channel(), [1, -1])


def test_ht_params_star(star):
    ch = star_channel()
    cap = capacity_scale(star, ch, [1, 1])
    hp = ht_params(star, ch, cap, 100, [0.64, 0.64], star_arrivals(0.64), sigma_hat_sq=8.0)
    assert hp.sigma_sq == pytest.approx(2 * 0.64 + 8)
    assert hp.sigma_hat_sq_computed >= 0 and np.all(hp.mu >= 0)
    # exact normal: the mean directional service equals <psi, lambda*>
    assert hp.mu_hat == pytest.approx(hp.psi_boundary, rel=1e-12)
    assert hp.b_star == pytest.approx(100 * math.sqrt(2) * (0.64 - cap.theta))
    q = ht_params(star, ch, cap, 100, [0.64, 0.64], mode="queue")
    assert q.psi.shape == (4,) and q.sigma_hat_sq >= 0
    with pytest.raises(ValueError):
        ht_params(star, ch, cap, 1, [0.6])


def test_mu_is_maximal(star):
    """No feasible one-slot allocation beats mu_h in the workload direction."""
    ch = star_channel()
    cap = capacity_scale(star, ch, [1, 1])
    coeff = queue_coefficients(star, cap, "aggregate")
    mu = max_directional_service(star, ch, coeff)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        h = int(rng.integers(ch.n_states))
        link = int(rng.integers(4))
        hop = next(x for x in star.hops if x[0] == link)
        _, _, up, down = hop
        gain = coeff[up] - (coeff[down] if down >= 0 else 0)
        assert mu[h] >= gain * ch.states[h, link] - 1e-12


def test_invariant_point_cases():
    psi = np.array([1, 1]) / math.sqrt(2)
    phi, k = invariant_point(PolicyParams.uniform(2, a1=1.0, a2=1.0, target=100.0), psi)
    assert np.allclose(phi, psi, atol=1e-12)
    flat = PolicyParams.uniform(3, a1=0.0)
    psi3 = np.array([1.0, 2.0, 2.0]) / 3
    phi3, _ = invariant_point(flat, psi3)
    assert np.allclose(phi3, psi3)


def test_invariant_point_residual_and_continuity():
    params = PolicyParams((1.0, 2.0), (1.0, 4.0), (0.2, 0.5))
    psi = np.array([0.6, 0.8])
    phi, k = invariant_point(params, psi)
    for j in range(2):
        assert abs(weight(phi[j], params.target[j], params.a1[j], params.a2[j]) * phi[j] - k * psi[j]) <= 1e-10
    assert phi @ psi == pytest.approx(1.0)
    psi2 = psi + np.array([1e-6, -1e-6])
    phi2, _ = invariant_point(params, psi2)
    assert np.linalg.norm(phi2 - phi) < 1e-4
