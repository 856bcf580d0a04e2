"""Heavy-traffic analysis of recorded trajectories.

Fluid scaling compresses time and space by ``n`` (``Z(floor(n t)) / n``),
diffusion scaling compresses time by ``n**2`` and space by ``n``. Everything
here works on the discrete records directly: floor indexing, no smoothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .engine import SystemTrajectory
from .scheduler import PolicyParams, weight


class HorizonTooShort(ValueError):
    pass


class DrainTimeExceeded(RuntimeError):
    pass


@dataclass
class ScaledPath:
    n: int
    kind: str
    times: np.ndarray
    values: np.ndarray
    component: str = ""

    def at(self, t: float) -> np.ndarray:
        """Value at continuous time ``t`` (floor lookup on the sample grid)."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k < 0:
            raise ValueError("time before path start")
        return self.values[k]


def _time_factor(n: int, kind: str) -> int:
    if n < 1:
        raise ValueError("scale index n must be >= 1")
    if kind == "fluid":
        return n
    if kind == "diffusion":
        return n * n
    raise ValueError(f"kind must be 'fluid' or 'diffusion', got {kind!r}")


def scale(source, n: int, kind: str = "fluid", component: str = "Q", times=None,
          slots=None) -> ScaledPath:
    """Rescale a recorded component.

    ``source`` is a :class:`SystemTrajectory` (``component`` picks A, D, R, S,
    Q or E) or a raw array whose row ``k`` is the value at slot ``slots[k]``
    (default ``slots = 0, 1, 2, ...``). With ``times`` given, the path is
    evaluated there as ``Z(floor(c t)) / n`` with ``c = n`` or ``n**2``;
    otherwise at every recorded slot.
    """
    c = _time_factor(n, kind)
    if isinstance(source, SystemTrajectory):
        slots = source.times
        raw = source.E() if component == "E" else getattr(source, component)
    else:
        raw = np.asarray(source)
        slots = np.arange(len(raw)) if slots is None else np.asarray(slots)
    if times is None:
        return ScaledPath(n, kind, slots / c, raw / n, component)
    times = np.asarray(times, dtype=float)
    # decimal times such as 0.29 * 100 land just below the integer in binary
    idx = np.floor(times * c + 1e-9).astype(np.int64)
    if idx.max(initial=0) > slots[-1]:
        raise HorizonTooShort(f"need slot {idx.max()}, trajectory ends at {slots[-1]}")
    pos = np.searchsorted(slots, idx)
    if np.any(slots[np.minimum(pos, len(slots) - 1)] != idx):
        raise ValueError("requested slots were not recorded; rerun with a finer stride")
    return ScaledPath(n, kind, times, raw[pos] / n, component)


def _dyadic(values) -> tuple[list[int], int]:
    """Exact integer numerators over a common power-of-two denominator."""
    fr = [Fraction(float(v)) for v in np.ravel(values)]
    den = 1
    for f in fr:
        den = max(den, f.denominator)
    return [int(f * den) for f in fr], den


@dataclass
class UVDecomposition:
    """Exact U/V/W split: numerators over a shared denominator ``den``."""

    times: np.ndarray
    X_num: np.ndarray
    U_num: np.ndarray
    V_num: np.ndarray
    W_num: np.ndarray
    den: int

    def _f(self, arr):
        return np.array([float(Fraction(int(x), self.den)) for x in arr])

    @property
    def X(self):
        return self._f(self.X_num)

    @property
    def U(self):
        return self._f(self.U_num)

    @property
    def V(self):
        return self._f(self.V_num)

    @property
    def W(self):
        return self._f(self.W_num)

    def max_identity_error(self) -> int:
        """``max |W - U - V|`` in exact arithmetic (numerator units)."""
        return int(max((abs(w - u - v) for w, u, v in zip(self.W_num, self.U_num, self.V_num)),
                       default=0))


def uv_decompose(traj: SystemTrajectory, coeff, mu) -> UVDecomposition:
    """Split the workload ``W = <coeff, Q>`` into a free part U and a regulator V.

    ``X(t)`` sums ``mu[H(k)]`` over slots ``k <= t``; ``U = W(0) + <coeff, A> - X``
    and ``V = X + <coeff, R> - <coeff, D>``. All arithmetic is exact.
    """
    coeff = np.asarray(coeff, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if coeff.shape != (traj.Q.shape[1],):
        raise ValueError("coefficient vector must have one entry per queue")
    if len(mu) < traj.n_states:
        raise ValueError(f"missing mu for channel states {len(mu)}..{traj.n_states - 1}")
    if traj.channel.size and traj.channel.max() >= len(mu):
        raise ValueError("missing mu for a realized channel state")
    c_num, c_den = _dyadic(coeff)
    m_num, m_den = _dyadic(mu)
    den = max(c_den, m_den)
    c_num = np.array([x * (den // c_den) for x in c_num], dtype=object)
    m_num = np.array([x * (den // m_den) for x in m_num], dtype=object)

    per_slot = m_num[traj.channel] if traj.channel.size else np.zeros(0, dtype=object)
    cum = np.concatenate([np.array([0], dtype=object), np.cumsum(per_slot)]) if per_slot.size \
        else np.zeros(1, dtype=object)
    X = cum[traj.times]

    def dot(M):
        return M.astype(object) @ c_num if M.shape[1] else np.zeros(M.shape[0], dtype=object)

    W = dot(traj.Q)
    U = W[0] + dot(traj.A) - X
    V = X + dot(traj.R) - dot(traj.D)
    return UVDecomposition(traj.times, X, U, V, W, den)


def skorokhod_regulator(u) -> tuple[np.ndarray, np.ndarray]:
    """One-sided reflection at zero: ``v(t) = max(0, -min_{s<=t} u(s))``, ``w = u + v``."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("empty path")
    if u[0] < 0:
        raise ValueError("path must start at a nonnegative value")
    v = np.maximum(0.0, -np.minimum.accumulate(u))
    return v, u + v


def regulator_complementarity(v, w) -> float:
    """``sum_t w(t) * (v(t) - v(t-1))``: zero when v only grows where w = 0."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return float(np.sum(w[1:] * np.diff(v)))


@dataclass(frozen=True)
class RBMStationary:
    """Exponential stationary law of a reflected Brownian motion with negative drift."""

    drift: float
    variance: float

    @property
    def rate(self) -> float:
        return 2 * abs(self.drift) / self.variance

    @property
    def mean(self) -> float:
        return self.variance / (2 * abs(self.drift))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = -np.expm1(2 * self.drift * np.maximum(y, 0.0) / self.variance)
        return np.where(y < 0, 0.0, out) if out.ndim else (0.0 if y < 0 else float(out))

    def survival(self, y):
        return 1 - self.cdf(y)


def rbm_stationary(b_star: float, sigma_sq: float) -> RBMStationary:
    if b_star >= 0:
        raise ValueError("no stationary law unless the drift b* is negative")
    if sigma_sq <= 0:
        raise ValueError("sigma^2 must be positive")
    return RBMStationary(float(b_star), float(sigma_sq))


def queue_approx(phi, sigma_sq: float, rates, boundary) -> np.ndarray:
    """Stationary queue estimate ``phi * sigma^2 / (2 |rates - boundary|)``."""
    gap = float(np.linalg.norm(np.asarray(rates, dtype=float) - np.asarray(boundary, dtype=float)))
    if gap == 0:
        raise ValueError("approximation undefined on the capacity boundary")
    if sigma_sq <= 0:
        raise ValueError("sigma^2 must be positive")
    return np.asarray(phi, dtype=float) * sigma_sq / (2 * gap)


def policy_alpha(params: PolicyParams, queue_flow) -> Callable[[np.ndarray], np.ndarray]:
    """Per-queue weights alpha(q^f) computed from a (scaled) queue vector."""
    queue_flow = np.asarray(queue_flow)
    n_f = len(params.a1)

    def alpha(q):
        tot = np.bincount(queue_flow, weights=q, minlength=n_f)
        w = np.array([weight(tot[f], params.target[f], params.a1[f], params.a2[f]) for f in range(n_f)])
        return w[queue_flow]

    return alpha


def lyapunov_L1(times, q, alpha: Callable | None = None, t: float = 0.0) -> tuple[float, float]:
    """Truncated ``-int_t^T e^(t - tau) sum alpha q qdot dtau`` on a sampled path.

    ``q`` has one row per sample time; ``qdot`` uses forward differences and
    the integral the trapezoid rule. Returns ``(value, tail_bound)`` where the
    bound covers the part of the integral beyond the last sample.
    """
    times = np.asarray(times, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    if times[-1] < t:
        raise HorizonTooShort("path ends before t")
    k0 = int(np.searchsorted(times, t, side="left"))
    tt = times[k0:]
    qq = q[k0:]
    if len(tt) < 2:
        return 0.0, 0.0
    qdot = np.empty_like(qq)
    qdot[:-1] = np.diff(qq, axis=0) / np.diff(tt)[:, None]
    qdot[-1] = qdot[-2]
    if alpha is None:
        a = np.ones_like(qq)
    else:
        a = np.array([alpha(row) for row in qq])
    integrand = np.exp(t - tt) * np.sum(a * qq * qdot, axis=1)
    value = -float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(tt)))
    tail = math.exp(t - tt[-1]) * float(np.max(np.abs(np.sum(a * qq * qdot, axis=1))))
    return value, tail


def lyapunov_L3(L1: float, L_star: float) -> float:
    if L_star <= 0:
        raise ValueError("L* must be positive")
    return L1 / L_star - 1.0


def ssc_distance(qhat, psi, phi) -> float:
    """Relative distance of a queue vector from the collapse ray through ``phi``."""
    qhat = np.asarray(qhat, dtype=float)
    w = float(np.dot(psi, qhat))
    if w <= 0:
        raise ValueError("zero workload: distance undefined")
    return float(np.linalg.norm(qhat - np.asarray(phi) * w) / np.linalg.norm(qhat))


def ssc_series(Qvecs, psi, phi) -> np.ndarray:
    """Distance at every row; NaN where the workload vanishes."""
    Qvecs = np.asarray(Qvecs, dtype=float)
    w = Qvecs @ np.asarray(psi, dtype=float)
    norm = np.linalg.norm(Qvecs, axis=1)
    out = np.full(len(Qvecs), np.nan)
    ok = w > 0
    out[ok] = np.linalg.norm(Qvecs[ok] - np.outer(w[ok], phi), axis=1) / norm[ok]
    return out


@dataclass
class FSLLNResult:
    n: int
    T: float
    arrival_dev: np.ndarray
    channel_dev: np.ndarray

    @property
    def max_arrival_dev(self) -> float:
        return float(self.arrival_dev.max(initial=0.0))

    @property
    def max_channel_dev(self) -> float:
        return float(self.channel_dev.max(initial=0.0))


def _window_dev(cum: np.ndarray, rate: float, n: int, windows: int) -> float:
    """``max_l max_k |(c(n l + k) - c(n l))/n - rate k/n|`` over integer l < windows, k <= n.

    The sup over the window is taken on the slot grid, matching the floor
    indexing used everywhere else; a unit counter therefore deviates by 0.
    """
    base = np.arange(windows)[:, None] * n
    k = np.arange(n + 1)[None, :]
    inc = (cum[base + k] - cum[base]) / n
    return float(np.abs(inc - rate * k / n).max())


def fslln_check(traj: SystemTrajectory, n: int, T: float, rates=None, probs=None) -> FSLLNResult:
    """Windowed deviation of fluid-scaled arrivals and channel occupation from linear.

    Windows have unit fluid length and start at integer fluid times
    ``0..floor(n T)``, so the trajectory must cover ``n (floor(n T) + 1)``
    slots with every slot recorded. ``rates`` defaults to each source's
    empirical rate and ``probs`` to the empirical state frequencies.
    """
    windows = int(math.floor(n * T)) + 1
    need = n * windows
    if traj.horizon < need:
        raise HorizonTooShort(f"need {need} slots, trajectory has {traj.horizon}")
    if not np.array_equal(traj.times[:need + 1], np.arange(need + 1)):
        raise ValueError("fslln_check needs every slot recorded (stride 1)")
    src = np.flatnonzero(traj.A[-1] > 0) if rates is None else np.arange(traj.A.shape[1])
    if rates is None:
        rates = traj.A[-1, src] / traj.horizon
    rates = np.asarray(rates, dtype=float)
    a_dev = np.array([_window_dev(traj.A[:, q].astype(float), r, n, windows)
                      for q, r in zip(src, rates)])
    E = np.zeros((need + 1, traj.n_states))
    ch = traj.channel[:need]
    E[np.arange(1, need + 1), ch] = 1
    E = np.cumsum(E, axis=0)
    if probs is None:
        probs = np.bincount(traj.channel, minlength=traj.n_states) / len(traj.channel)
    seen = np.flatnonzero(np.asarray(probs) > 0)
    c_dev = np.array([_window_dev(E[:, h], probs[h], n, windows) for h in seen])
    return FSLLNResult(n, T, a_dev, c_dev)


def drain_time(times, norms, threshold: float = 1e-3) -> float:
    """First time the (initially unit) norm falls to ``threshold`` or below."""
    norms = np.asarray(norms, dtype=float)
    times = np.asarray(times, dtype=float)
    if norms[0] == 0:
        return float(times[0])
    hit = np.flatnonzero(norms <= threshold)
    if hit.size == 0:
        raise DrainTimeExceeded(f"norm never fell to {threshold} within t <= {times[-1]}")
    return float(times[hit[0]])


def fluid_norms(traj: SystemTrajectory, n: int, normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Fluid-scaled time grid and queue norm ``|Q(t)| / n`` (optionally divided by its start)."""
    norms = np.linalg.norm(traj.Q.astype(float), axis=1) / n
    if normalize and norms[0] > 0:
        norms = norms / norms[0]
    return traj.times / n, norms


def deviation_growth(paths, rate: float, times) -> tuple[np.ndarray, float]:
    """Second moment of ``sup_{s<=t} |X(s) - rate s|`` across replications and its log-log slope.

    ``paths`` is a list of cumulative series sampled at ``times``.
    """
    times = np.asarray(times, dtype=float)
    sq = []
    for x in paths:
        dev = np.abs(np.asarray(x, dtype=float) - rate * times)
        sq.append(np.maximum.accumulate(dev) ** 2)
    m2 = np.mean(sq, axis=0)
    ok = (times > 0) & (m2 > 0)
    slope = float(np.polyfit(np.log(times[ok]), np.log(m2[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return m2, slope
