"""Belief snapshots, log-ratio views, and network-wide aggregates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SpectralData
from .model import InitialPriors, SignalModel
from .rules import log_normalize


@dataclass(frozen=True)
class BeliefState:
    """Per-agent beliefs at time ``t``, stored as log-probabilities (n, n_states)."""

    log_probs: np.ndarray
    t: int = 0

    def __post_init__(self):
        lp = np.array(self.log_probs, dtype=float)
        lp.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)

    @classmethod
    def from_probs(cls, probs, t: int = 0) -> "BeliefState":
        probs = np.asarray(probs, dtype=float)
        if (probs <= 0).any():
            raise ValueError("beliefs must be strictly positive")
        return cls(log_normalize(np.log(probs)), t)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def n_agents(self) -> int:
        return self.log_probs.shape[0]


@dataclass(frozen=True)
class LogRatios:
    """``phi[i, m] = log(mu_i(k_m) / mu_i(truth))`` over false states ``k_m``."""

    values: np.ndarray
    truth: int
    n_states: int

    @property
    def false_states(self) -> list:
        return [k for k in range(self.n_states) if k != self.truth]

    def column(self, state: int) -> np.ndarray:
        return self.values[:, self.false_states.index(state)]

    def to_beliefs(self, t: int = 0) -> BeliefState:
        full = np.insert(self.values, self.truth, 0.0, axis=1)
        return BeliefState(log_normalize(full), t)


def bayes_init(priors: InitialPriors, sig: SignalModel, signals) -> BeliefState:
    """Posterior of each agent after its first private signal."""
    logits = np.log(priors.priors).copy()
    for i, s in enumerate(signals):
        logits[i] += sig.log_likelihoods[i][:, s]
    return BeliefState(log_normalize(logits), 0)


def log_linearize(beliefs: BeliefState, truth: int) -> LogRatios:
    lp = beliefs.log_probs
    if not np.isfinite(lp).all():
        raise ValueError("log-ratios need strictly positive beliefs")
    ratios = np.delete(lp - lp[:, [truth]], truth, axis=1)
    return LogRatios(ratios, truth, lp.shape[1])


def signal_log_ratios(sig: SignalModel, signals, truth: int) -> np.ndarray:
    """``lambda_{i,t}(k) = log l_i(s_i|k) - log l_i(s_i|truth)`` over false states.

    ``signals`` is one row ``(n,)`` or a stack ``(..., n)``.
    """
    signals = np.asarray(signals)
    n = signals.shape[-1]
    ll = sig.padded_log_likelihoods()                       # (n, K, S)
    cols = ll[np.arange(n), :, signals]                     # (..., n, K)
    return np.delete(cols - cols[..., [truth]], truth, axis=-1)


@dataclass(frozen=True)
class NetworkAggregates:
    """Centrality-weighted sums for one step, one entry per false state."""

    phi: np.ndarray      # Phi_t
    lam: np.ndarray      # Lambda_t
    xi: np.ndarray       # Xi_t, shape (n, n, false states); diagonal holds self priors
    beta: np.ndarray     # alpha^T psi


def network_aggregates(traj, spectral: SpectralData, t: int) -> NetworkAggregates:
    """``Phi_t``, ``Lambda_t``, the step-t priors and the network bias of a recorded run."""
    cfg = traj.config
    if traj.log_ratios is None or traj.signals is None:
        raise ValueError("trajectory lacks log-ratios or signals")
    truth, alpha = cfg.truth, spectral.alpha
    phi = alpha @ traj.log_ratios[t]
    lam = alpha @ signal_log_ratios(cfg.signal_model, traj.signals[t], truth)
    n, m = traj.log_ratios.shape[1:]
    xi = np.zeros((n, n, m))
    if t >= 1:
        choices = None if traj.choices is None else traj.choices[t]
        g_self, g_nbr = cfg.rule.prior_log_ratios(traj.log_ratios[t - 1], cfg.network,
                                                   spectral, t, truth, choices)
        xi = np.array(np.broadcast_to(g_nbr, (n, n, m)))
        xi[np.arange(n), np.arange(n)] = g_self
    return NetworkAggregates(phi, lam, xi, prior_bias(alpha, cfg.priors, truth))


def prior_bias(alpha: np.ndarray, priors: InitialPriors, truth: int) -> np.ndarray:
    """Network bias ``beta(k) = sum_i alpha_i psi_i(k)`` over false states."""
    return np.delete(alpha @ priors.psi(truth), truth)


@dataclass(frozen=True)
class IdentityReport:
    residuals: np.ndarray           # (T, false states), steps 1..T
    neighbor_residuals: np.ndarray  # (T, false states)

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max(initial=0.0))

    @property
    def max_neighbor_residual(self) -> float:
        return float(self.neighbor_residuals.max(initial=0.0))


IDENTITY_CHUNK = 1024


def aggregate_identity(traj, spectral: SpectralData, theta_check=None) -> IdentityReport:
    """Check the centrality-weighted recursion on a recorded trajectory.

    For every step ``t >= 1`` compares ``Phi_t`` (from the recorded beliefs)
    against ``sum_i alpha_i gamma_ii + Lambda_t + rho Phi_{t-1}
    - sum_i alpha_i sum_{j in N(i)} gamma_ij``, where the priors ``gamma``
    are reconstructed from the rule and the step-(t-1) snapshot. Also checks
    ``sum_i alpha_i sum_{j in N(i)} phi_j = rho Phi``. ``theta_check``
    restricts the report to one false state.
    """
    cfg = traj.config
    if traj.log_ratios is None or traj.signals is None:
        raise ValueError("trajectory lacks log-ratios or signals; record them to check the identity")
    if cfg.rule.name == "random_walk" and traj.choices is None:
        raise ValueError("random-walk trajectory lacks neighbor choices")
    net, truth, alpha, rho = cfg.network, cfg.truth, spectral.alpha, spectral.rho
    adj = net.adjacency.astype(float)
    phi = traj.log_ratios
    horizon = phi.shape[0] - 1
    res = np.zeros((horizon, phi.shape[2]))
    nres = np.zeros_like(res)
    for t0 in range(1, horizon + 1, IDENTITY_CHUNK):
        ts = np.arange(t0, min(t0 + IDENTITY_CHUNK, horizon + 1))
        prev, cur = phi[ts - 1], phi[ts]
        choices = None if traj.choices is None else traj.choices[ts]
        g_self, g_nbr = cfg.rule.prior_log_ratios(prev, net, spectral, ts, truth, choices)
        lam = signal_log_ratios(cfg.signal_model, traj.signals[ts], truth)
        phi_prev = prev.transpose(0, 2, 1) @ alpha
        lhs = cur.transpose(0, 2, 1) @ alpha
        rhs = (np.broadcast_to(g_self, prev.shape).transpose(0, 2, 1) @ alpha
               + lam.transpose(0, 2, 1) @ alpha + rho * phi_prev
               - np.broadcast_to(g_nbr.sum(axis=-2), prev.shape).transpose(0, 2, 1) @ alpha)
        nbr_sum = (adj @ prev).transpose(0, 2, 1) @ alpha
        res[ts - 1] = np.abs(lhs - rhs)
        nres[ts - 1] = np.abs(nbr_sum - rho * phi_prev)
    if theta_check is not None:
        col = [k for k in range(cfg.signal_model.n_states) if k != truth].index(theta_check)
        res, nres = res[:, [col]], nres[:, [col]]
    return IdentityReport(res, nres)
