"""Memoryless belief-update rules.

Each named rule is the generic kernel :func:`memoryless_update` with a
particular choice of time-varying priors (``documented_priors``). Every rule
is log-linear: in log space a network round is

    log mu_t = normalize(log l(s_t) + W_t log mu_{t-1})

with a rule-specific weight matrix ``W_t`` (``weights``). The engine uses
that form; the per-agent functions here are the belief-domain reference.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import IncompatibleRuleError, NumericalFailure
from .graph import Network, SpectralData
from .model import SignalModel


def log_normalize(logits: np.ndarray) -> np.ndarray:
    """Subtract log-sum-exp along the last axis."""
    top = logits.max(axis=-1, keepdims=True)
    if not np.isfinite(top).all():
        raise NumericalFailure("zero normalizer in belief update")
    shifted = logits - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _finish(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_normalize(logits))


def _signal_loglik(sig: SignalModel, agent: int, signal: int) -> np.ndarray:
    col = sig.log_likelihoods[agent][:, signal]
    if not np.isfinite(col).all():
        raise NumericalFailure(f"agent {agent}: signal {signal} has zero likelihood under some state")
    return col


def _log(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if (p <= 0).any():
        raise NumericalFailure("beliefs and priors must be strictly positive")
    return np.log(p)


def memoryless_update(agent: int, prior_self, priors_nbrs: Mapping, signal: int,
                      nbr_beliefs: Mapping, sig: SignalModel) -> np.ndarray:
    """One-step Bayesian map with arbitrary priors for self and neighbors.

    ``mu(k) ~ xi_self(k) * l(signal|k) * prod_j mu_j(k) / xi_j(k)``. Neighbor
    terms are accumulated in ascending agent order.
    """
    if set(priors_nbrs) != set(nbr_beliefs):
        raise ValueError("priors and beliefs must cover the same neighbors")
    acc = _log(prior_self) + _signal_loglik(sig, agent, signal)
    for j in sorted(nbr_beliefs):
        acc = acc + (_log(nbr_beliefs[j]) - _log(priors_nbrs[j]))
    return _finish(acc)


def circle_update(agent: int, nbr_beliefs: Mapping, signal: int, sig: SignalModel) -> np.ndarray:
    """Bayes update of the unique neighbor's belief on the agent's own signal."""
    if len(nbr_beliefs) != 1:
        raise IncompatibleRuleError(
            f"agent {agent} has {len(nbr_beliefs)} neighbors; circle update needs exactly one")
    (belief,) = nbr_beliefs.values()
    return _finish(_log(belief) + _signal_loglik(sig, agent, signal))


def random_walk_update(agent: int, chosen_nbr: int, nbr_beliefs: Mapping, signal: int,
                       sig: SignalModel) -> np.ndarray:
    if chosen_nbr not in nbr_beliefs:
        raise ValueError(f"agent {agent}: {chosen_nbr} is not a neighbor")
    return circle_update(agent, {chosen_nbr: nbr_beliefs[chosen_nbr]}, signal, sig)


def geometric_average_update(agent: int, nbr_beliefs: Mapping, signal: int,
                             sig: SignalModel) -> np.ndarray:
    if not nbr_beliefs:
        raise IncompatibleRuleError(f"agent {agent} has no neighbors")
    d = len(nbr_beliefs)
    acc = np.zeros(sig.n_states)
    for j in sorted(nbr_beliefs):
        acc = acc + _log(nbr_beliefs[j])
    return _finish(_signal_loglik(sig, agent, signal) + acc / d)


def time_varying_update(agent: int, self_belief, nbr_beliefs: Mapping, signal: int,
                        x_t: float, rho: float, sig: SignalModel) -> np.ndarray:
    """Belief-domain form: self prior is the own belief, neighbor priors are
    ``mu_j^eta_t / zeta_j`` with ``eta_t = 1 - x_t / rho``."""
    eta = eta_from_weight(x_t, rho)
    priors = {}
    for j, mu in nbr_beliefs.items():
        powered = np.asarray(mu, dtype=float) ** eta
        priors[j] = powered / powered.sum()
    return memoryless_update(agent, self_belief, priors, signal, nbr_beliefs, sig)


def time_varying_log_ratio(phi_self: np.ndarray, phi_nbrs: Mapping, lam: np.ndarray,
                           x_t: float, rho: float) -> np.ndarray:
    """Log-ratio form ``phi + lam + (1 - eta_t) * sum_j phi_j``."""
    weight = 1.0 - eta_from_weight(x_t, rho)
    acc = np.zeros_like(np.asarray(phi_self, dtype=float))
    for j in sorted(phi_nbrs):
        acc = acc + phi_nbrs[j]
    return phi_self + lam + weight * acc


def weighted_self_update(agent: int, self_belief, nbr_beliefs: Mapping, signal: int,
                         eta: float, sig: SignalModel) -> np.ndarray:
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if not nbr_beliefs:
        raise IncompatibleRuleError(f"agent {agent} has no neighbors")
    d = len(nbr_beliefs)
    acc = np.zeros(sig.n_states)
    for j in sorted(nbr_beliefs):
        acc = acc + _log(nbr_beliefs[j])
    logits = _signal_loglik(sig, agent, signal) + eta * _log(self_belief) + (1.0 - eta) / d * acc
    return _finish(logits)


def eta_from_weight(x_t: float, rho: float) -> float:
    if x_t < 0:
        raise ValueError(f"neighbor weight must be nonnegative, got {x_t}")
    if x_t >= rho:
        raise IncompatibleRuleError(f"neighbor weight x_t={x_t} must stay below rho={rho}")
    return 1.0 - x_t / rho


# ---------------------------------------------------------------------------
# weight schedules for the time-varying rule

_SHAPES = {
    "power": lambda t, p: 1.0 / t ** p,
    "log_power": lambda t, p: 1.0 / (t * np.log(t + 2.0) ** p),
    "geometric": lambda t, p: p ** t,
    "constant": lambda t, p: np.ones_like(t),
}
_DEFAULT_P = {"power": 2.0, "log_power": 2.0, "geometric": 0.5, "constant": 0.0}


@dataclass(frozen=True)
class Schedule:
    """``x_t`` for t >= 1.

    kinds: ``power`` c/t^p, ``log_power`` c/(t ln^p(t+2)), ``geometric``
    c*p^t, ``constant`` c. With ``c=None`` the scale is picked so that
    ``x_1 = rho / 2`` (see :meth:`resolve`).
    """

    kind: str = "log_power"
    c: float | None = None
    p: float | None = None

    def __post_init__(self):
        if self.kind not in _SHAPES:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.p is None:
            object.__setattr__(self, "p", _DEFAULT_P[self.kind])
        if self.c is not None and self.c < 0:
            raise ValueError("schedule scale c must be nonnegative")

    def resolve(self, rho: float) -> "Schedule":
        if self.c is not None:
            return self
        unit = float(_SHAPES[self.kind](np.array([1.0]), self.p)[0])
        return Schedule(self.kind, 0.5 * rho / unit, self.p)

    def values(self, t_max: int) -> np.ndarray:
        """Array ``x`` of length ``t_max + 1`` with ``x[0] = 0``."""
        if self.c is None:
            raise ValueError("unresolved schedule; call resolve(rho) first")
        t = np.arange(1, t_max + 1, dtype=float)
        out = np.zeros(t_max + 1)
        out[1:] = self.c * _SHAPES[self.kind](t, self.p)
        return out

    def __call__(self, t: int) -> float:
        if self.c is None:
            raise ValueError("unresolved schedule; call resolve(rho) first")
        return float(self.c * _SHAPES[self.kind](np.float64(t), self.p))


# ---------------------------------------------------------------------------
# rule variants


def _static_block(w: np.ndarray, ts) -> np.ndarray:
    return np.broadcast_to(w, (len(ts),) + w.shape)


def _uniform_rows(net: Network) -> np.ndarray:
    return net.adjacency / net.degrees[:, None]


@dataclass(frozen=True)
class CommonFixedPrior:
    """Circle rule: every prior is the same fixed distribution."""

    prior: tuple | None = None
    name = "common_prior"

    def common(self, n_states: int) -> np.ndarray:
        if self.prior is None:
            return np.full(n_states, 1.0 / n_states)
        return np.asarray(self.prior, dtype=float)

    def validate(self, net: Network, spectral: SpectralData, horizon: int):
        if not net.is_cycle():
            raise IncompatibleRuleError("common_prior rule requires a directed cycle")

    def documented_priors(self, agent, self_belief, nbr_beliefs, t=None, chosen=None, rho=None):
        nu = self.common(len(self_belief))
        return nu, {j: nu for j in nbr_beliefs}

    def update(self, agent, self_belief, nbr_beliefs, signal, sig, t=None, chosen=None, rho=None):
        return circle_update(agent, nbr_beliefs, signal, sig)

    def weights(self, net, spectral, t, choices=None):
        return net.adjacency.astype(float)

    def weight_block(self, net, spectral, ts, choices=None):
        return _static_block(self.weights(net, spectral, 1), ts)

    def prior_log_ratios(self, phi_prev, net, spectral, t, truth, choices=None):
        lg = np.log(self.common(phi_prev.shape[-1] + 1))
        gamma = np.delete(lg - lg[truth], truth)
        g_self = np.broadcast_to(gamma, phi_prev.shape)
        g_nbr = net.adjacency[:, :, None] * gamma[None, None, :]
        return g_self, g_nbr


@dataclass(frozen=True)
class RandomWalkNeighbor:
    """Each round agent i applies the circle rule to one neighbor drawn from row i of P.

    As a kernel instance: common prior for self and the chosen neighbor, and
    each other neighbor's prior equal to its current belief, so its factor
    cancels.
    """

    P: tuple | None = None
    prior: tuple | None = None
    name = "random_walk"

    def matrix(self, net: Network) -> np.ndarray:
        return _uniform_rows(net) if self.P is None else np.asarray(self.P, dtype=float)

    def common(self, n_states: int) -> np.ndarray:
        if self.prior is None:
            return np.full(n_states, 1.0 / n_states)
        return np.asarray(self.prior, dtype=float)

    def validate(self, net: Network, spectral: SpectralData, horizon: int):
        p = self.matrix(net)
        if p.shape != (net.n, net.n):
            raise IncompatibleRuleError(f"P must be {net.n}x{net.n}")
        if (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > 1e-9:
            raise IncompatibleRuleError("P must be row-stochastic")
        if not np.array_equal(p > 0, net.adjacency > 0):
            raise IncompatibleRuleError("P must be positive exactly on the neighborhoods")

    def documented_priors(self, agent, self_belief, nbr_beliefs, t=None, chosen=None, rho=None):
        nu = self.common(len(self_belief))
        priors = {j: (nu if j == chosen else np.asarray(mu, dtype=float))
                  for j, mu in nbr_beliefs.items()}
        return nu, priors

    def update(self, agent, self_belief, nbr_beliefs, signal, sig, t=None, chosen=None, rho=None):
        return random_walk_update(agent, chosen, nbr_beliefs, signal, sig)

    def weights(self, net, spectral, t, choices=None):
        w = np.zeros((net.n, net.n))
        w[np.arange(net.n), choices] = 1.0
        return w

    def weight_block(self, net, spectral, ts, choices=None):
        steps = len(ts)
        w = np.zeros((steps, net.n, net.n))
        w[np.arange(steps)[:, None], np.arange(net.n)[None, :], choices] = 1.0
        return w

    def prior_log_ratios(self, phi_prev, net, spectral, t, truth, choices=None):
        lg = np.log(self.common(phi_prev.shape[-1] + 1))
        gamma = np.delete(lg - lg[truth], truth)
        g_self = np.broadcast_to(gamma, phi_prev.shape)
        g_nbr = net.adjacency[:, :, None] * phi_prev[..., None, :, :]
        chosen = np.asarray(choices)[..., :, None] == np.arange(net.n)
        return g_self, np.where(chosen[..., None], gamma, g_nbr)


@dataclass(frozen=True)
class GeometricAveragePrior:
    """All priors set to the normalized geometric mean of neighbor beliefs."""

    name = "geometric"

    def validate(self, net: Network, spectral: SpectralData, horizon: int):
        if (net.degrees == 0).any():
            raise IncompatibleRuleError("every agent needs a neighbor")

    def documented_priors(self, agent, self_belief, nbr_beliefs, t=None, chosen=None, rho=None):
        d = len(nbr_beliefs)
        acc = np.zeros(len(self_belief))
        for j in sorted(nbr_beliefs):
            acc = acc + np.log(nbr_beliefs[j])
        g = _finish(acc / d)
        return g, {j: g for j in nbr_beliefs}

    def update(self, agent, self_belief, nbr_beliefs, signal, sig, t=None, chosen=None, rho=None):
        return geometric_average_update(agent, nbr_beliefs, signal, sig)

    def weights(self, net, spectral, t, choices=None):
        return spectral.t_matrix

    def weight_block(self, net, spectral, ts, choices=None):
        return _static_block(self.weights(net, spectral, 1), ts)

    def prior_log_ratios(self, phi_prev, net, spectral, t, truth, choices=None):
        g = spectral.t_matrix @ phi_prev
        return g, net.adjacency[:, :, None] * g[..., :, None, :]


@dataclass(frozen=True)
class TimeVaryingLogLinear:
    """Self prior = own belief; neighbor priors ``mu_j^eta_t`` with ``eta_t = 1 - x_t/rho``."""

    schedule: Schedule = Schedule()
    name = "time_varying"

    def x(self, t: int, rho: float) -> float:
        return self.schedule.resolve(rho)(t)

    def validate(self, net: Network, spectral: SpectralData, horizon: int):
        xs = self.schedule.resolve(spectral.rho).values(max(horizon, 1))[1:]
        bad = np.flatnonzero(xs >= spectral.rho)
        if bad.size:
            t = int(bad[0]) + 1
            raise IncompatibleRuleError(f"x_{t}={xs[bad[0]]:.6g} is not below rho={spectral.rho:.6g}")

    def documented_priors(self, agent, self_belief, nbr_beliefs, t=None, chosen=None, rho=None):
        eta = eta_from_weight(self.x(t, rho), rho)
        priors = {}
        for j, mu in nbr_beliefs.items():
            powered = np.asarray(mu, dtype=float) ** eta
            priors[j] = powered / powered.sum()
        return np.asarray(self_belief, dtype=float), priors

    def update(self, agent, self_belief, nbr_beliefs, signal, sig, t=None, chosen=None, rho=None):
        return time_varying_update(agent, self_belief, nbr_beliefs, signal, self.x(t, rho), rho, sig)

    def weights(self, net, spectral, t, choices=None):
        x_t = self.x(t, spectral.rho)
        return np.eye(net.n) + (x_t / spectral.rho) * net.adjacency

    def weight_block(self, net, spectral, ts, choices=None):
        xs = self.schedule.resolve(spectral.rho).values(int(max(ts)))[np.asarray(ts)]
        return np.eye(net.n)[None] + (xs / spectral.rho)[:, None, None] * net.adjacency[None]

    def prior_log_ratios(self, phi_prev, net, spectral, t, truth, choices=None):
        rho = spectral.rho
        ts = np.asarray(t)
        xs = self.schedule.resolve(rho).values(int(ts.max()))[ts]
        if (xs >= rho).any():
            raise IncompatibleRuleError(f"x_t must stay below rho={rho:.6g}")
        eta = (1.0 - xs / rho)[..., None, None]
        return phi_prev, net.adjacency[:, :, None] * (eta * phi_prev)[..., None, :, :]


@dataclass(frozen=True)
class WeightedSelfBelief:
    """Self prior ``~ mu_i^eta``, neighbor priors ``~ mu_j^(1 - (1-eta)/d_i)``."""

    eta: float = 0.5
    name = "weighted_self"

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")

    def validate(self, net: Network, spectral: SpectralData, horizon: int):
        if (net.degrees == 0).any():
            raise IncompatibleRuleError("every agent needs a neighbor")

    def documented_priors(self, agent, self_belief, nbr_beliefs, t=None, chosen=None, rho=None):
        d = len(nbr_beliefs)
        expo = 1.0 - (1.0 - self.eta) / d
        own = _finish(self.eta * np.log(self_belief))
        return own, {j: _finish(expo * np.log(mu)) for j, mu in nbr_beliefs.items()}

    def update(self, agent, self_belief, nbr_beliefs, signal, sig, t=None, chosen=None, rho=None):
        return weighted_self_update(agent, self_belief, nbr_beliefs, signal, self.eta, sig)

    def weights(self, net, spectral, t, choices=None):
        return self.eta * np.eye(net.n) + (1.0 - self.eta) * spectral.t_matrix

    def weight_block(self, net, spectral, ts, choices=None):
        return _static_block(self.weights(net, spectral, 1), ts)

    def prior_log_ratios(self, phi_prev, net, spectral, t, truth, choices=None):
        expo = 1.0 - (1.0 - self.eta) / net.degrees
        g_nbr = net.adjacency[:, :, None] * expo[:, None, None] * phi_prev[..., None, :, :]
        return self.eta * phi_prev, g_nbr


RULES = {
    cls.name: cls
    for cls in (CommonFixedPrior, RandomWalkNeighbor, GeometricAveragePrior,
                TimeVaryingLogLinear, WeightedSelfBelief)
}


def neighbor_choices(p: np.ndarray, net: Network, u: np.ndarray) -> np.ndarray:
    """Map uniforms ``(..., n)`` to neighbors drawn from the rows of ``p``."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape, dtype=np.int64)
    for i, nbrs in enumerate(net.neighborhoods):
        nbrs = np.asarray(nbrs)
        cdf = np.cumsum(p[i, nbrs])
        k = np.minimum(np.searchsorted(cdf, u[..., i], side="right"), nbrs.size - 1)
        out[..., i] = nbrs[k]
    return out


def network_step(log_beliefs: np.ndarray, loglik: np.ndarray, w: np.ndarray) -> np.ndarray:
    """One synchronous round in log space for all agents.

    The neighbor sum reduces a non-last axis, which numpy accumulates in
    ascending index order, so results do not depend on BLAS threading.
    """
    return log_normalize(loglik + (w[:, :, None] * log_beliefs[None, :, :]).sum(axis=1))


__all__ = [
    "CommonFixedPrior", "GeometricAveragePrior", "RULES", "RandomWalkNeighbor", "Schedule",
    "TimeVaryingLogLinear", "WeightedSelfBelief", "circle_update", "eta_from_weight",
    "geometric_average_update", "log_normalize", "memoryless_update", "network_step",
    "random_walk_update", "time_varying_log_ratio", "time_varying_update",
    "weighted_self_update",
]
