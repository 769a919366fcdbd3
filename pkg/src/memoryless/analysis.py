"""Rate predictions, weight-schedule coefficients and empirical rate estimates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleRuleError
from .graph import Network, SpectralData, perron_vector, stationary_distribution
from .model import SignalModel, is_globally_identifiable, lambda_matrix
from .rules import Schedule


@dataclass(frozen=True)
class RatePrediction:
    rule: str
    false_states: tuple
    rates: np.ndarray | None      # one rate per false state; None without a closed form
    weights: np.ndarray | None    # 1/n, pi or s, whichever the rule uses
    identifiable: bool
    note: str = ""

    @property
    def closed_form(self) -> bool:
        return self.rates is not None

    @property
    def overall(self) -> float | None:
        return None if self.rates is None else float(self.rates.min())

    @property
    def slowest_state(self) -> int | None:
        return None if self.rates is None else self.false_states[int(np.argmin(self.rates))]


def theoretical_rate(rule, net: Network, spectral: SpectralData, sig: SignalModel,
                     truth: int) -> RatePrediction:
    """Asymptotic exponential learning rate per false state.

    circle: mean of the KL divergences; random walk: weighted by the
    stationary law of the neighbor-choice matrix; geometric and weighted
    self: weighted by the stationary law of the normalized adjacency. The
    time-varying rule has no closed form.
    """
    false = tuple(k for k in range(sig.n_states) if k != truth)
    ident = is_globally_identifiable(sig, truth).identifiable
    if rule.name == "time_varying":
        return RatePrediction(rule.name, false, None, None, ident,
                              "no closed-form exponential rate; see the coefficient report")
    if rule.name == "common_prior":
        if not net.is_cycle():
            raise IncompatibleRuleError("the common-prior rate needs a directed cycle")
        w = np.full(net.n, 1.0 / net.n)
    elif rule.name == "random_walk":
        w = stationary_distribution(rule.matrix(net))
    elif rule.name == "geometric":
        if not spectral.aperiodic:
            raise IncompatibleRuleError("the geometric-average rate needs an aperiodic network")
        w = spectral.s_vec
    elif rule.name == "weighted_self":
        w = spectral.s_vec
    else:
        raise ValueError(f"unknown rule {rule.name!r}")
    lam = lambda_matrix(sig, truth)[:, list(false)]
    rates = -(w @ lam) + 0.0
    return RatePrediction(rule.name, false, rates, w, ident)


# ---------------------------------------------------------------------------
# coefficients of the time-varying rule

TABLE_LIMIT = 100


def _schedule_array(x, t_max: int) -> np.ndarray:
    if isinstance(x, Schedule):
        return x.values(t_max)
    if callable(x):
        out = np.zeros(t_max + 1)
        out[1:] = [x(u) for u in range(1, t_max + 1)]
        return out
    arr = np.asarray(x, dtype=float)
    if arr.size < t_max + 1:
        raise ValueError(f"need x_0..x_{t_max}, got {arr.size} values")
    out = arr[: t_max + 1].copy()
    out[0] = 0.0
    return out


@dataclass(frozen=True)
class MCoefficients:
    """Elementary symmetric sums ``M_j^(t,tau)`` of ``x_{tau+1}, ..., x_t``.

    ``table[tau, t, j]`` is filled for ``tau <= t <= table horizon``; it is
    zero where ``j > t - tau`` or ``tau > t``. Sums over the whole horizon
    (``m1_partial``, ``tail_sums``) work from ``x`` directly.
    """

    x: np.ndarray
    t_max: int
    table: np.ndarray

    def m1_partial(self) -> np.ndarray:
        """``sum_{u <= t} x_u`` for t = 0..t_max."""
        return np.cumsum(self.x)

    def row(self, t: int, tau: int = 0) -> np.ndarray:
        """``M_j^(t,tau)`` for j = 0..t-tau."""
        m = np.zeros(t - tau + 1)
        m[0] = 1.0
        for u in range(tau + 1, t + 1):
            m[1:] = m[1:] + self.x[u] * m[:-1]
        return m

    def sweep(self, tau: int = 0):
        """Yield ``(t, M_.^(t,tau))`` for t = tau..t_max in one pass."""
        m = np.zeros(self.t_max - tau + 1)
        m[0] = 1.0
        yield tau, m[:1].copy()
        for u in range(tau + 1, self.t_max + 1):
            k = u - tau
            m[1:k + 1] = m[1:k + 1] + self.x[u] * m[:k]
            yield u, m[:k + 1].copy()

    def tail_sums(self, j_min: int) -> np.ndarray:
        """``S(t) = sum_{tau <= t} sum_{j_min <= j <= t - tau} M_j^(t,tau)``.

        Carries ``R_k(tau) = sum_{j >= k} M_j^(t,tau)`` for k <= j_min, which
        obeys the same recursion as ``M`` and only ever adds positive terms.
        """
        n = self.t_max + 1
        r = np.zeros((j_min + 1, n))
        out = np.zeros(n)
        r[0, 0] = 1.0
        out[0] = 1.0 if j_min == 0 else 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(1, n):
                xt = self.x[t]
                for k in range(j_min, 0, -1):
                    r[k, :t] += xt * r[k - 1, :t]
                r[0, :t] *= 1.0 + xt
                r[0, t] = 1.0
                out[t] = r[j_min, : t + 1].sum()
        return out


def m_coefficients(x, t_max: int, tau_max: int | None = None) -> MCoefficients:
    """Build the coefficient table by ``M_j^(t,tau) = M_j^(t-1,tau) + x_t M_{j-1}^(t-1,tau)``."""
    xs = _schedule_array(x, t_max)
    if (xs[1:] < 0).any():
        raise ValueError("schedule values must be nonnegative")
    horizon = min(t_max, TABLE_LIMIT)
    tau_max = horizon if tau_max is None else min(tau_max, horizon)
    table = np.zeros((tau_max + 1, horizon + 1, horizon + 1))
    for tau in range(tau_max + 1):
        table[tau, tau, 0] = 1.0
        for t in range(tau + 1, horizon + 1):
            table[tau, t, 0] = 1.0
            table[tau, t, 1:] = table[tau, t - 1, 1:] + xs[t] * table[tau, t - 1, :-1]
    table.setflags(write=False)
    return MCoefficients(xs, t_max, table)


def decade_trend(series: np.ndarray, threshold: float = 0.9):
    """Heuristic verdict on whether partial sums keep growing.

    Compares the increment over the last decade ``(t/10, t]`` with the one
    over ``(t/100, t/10]``; a ratio at or above ``threshold`` reads as
    diverging. Needs t >= 100, otherwise ``inconclusive``.
    """
    t = len(series) - 1
    if t < 100:
        return "inconclusive", None
    last = series[t] - series[t // 10]
    prev = series[t // 10] - series[t // 100]
    if not np.isfinite(series[t]):
        return "diverging", float("inf")
    if prev <= 0:
        return ("diverging", float("inf")) if last > 0 else ("converging", 0.0)
    ratio = float(last / prev)
    return ("diverging" if ratio >= threshold else "converging"), ratio


@dataclass(frozen=True)
class LearningReport:
    """Finite-horizon diagnostics for the time-varying rule; not proofs."""

    horizon: int
    d: int
    m1_partial: float
    m1_trend: str
    m1_ratio: float | None
    s_d: float
    s_d_trend: str
    s_d_ratio: float | None
    s_full: float
    s_full_trend: str
    s_j1: float
    s_j1_trend: str
    bias_bound: float
    k1: float | None
    k2: float | None
    label: str = "finite-horizon diagnostic (heuristic trends, not a proof)"

    @property
    def necessary_condition_violated(self) -> bool:
        return self.m1_trend == "diverging"

    @property
    def learning_trend(self) -> bool:
        return self.m1_trend == "converging" and self.s_d_trend == "diverging"

    @property
    def non_learning_trend(self) -> bool:
        return self.m1_trend == "converging" and self.s_d_trend == "converging"

    @property
    def verdict(self) -> str:
        if self.necessary_condition_violated:
            return "necessary condition violated: sum of x_t grows without plateau"
        if self.learning_trend:
            return "learning trend: sum of x_t converges while S_d keeps growing"
        if self.non_learning_trend:
            return "non-learning trend: S_d plateaus"
        return "inconclusive at this horizon"


def learning_condition_report(coeffs: MCoefficients, spectral: SpectralData,
                              psi=None) -> LearningReport:
    """Trend diagnostics for the learning / non-learning conditions.

    ``psi`` (prior log-ratios, one column per false state) scales the bias
    bound ``||psi|| exp(sum x)``; without it the bound is the bare factor.
    """
    d = spectral.d_const
    m1 = coeffs.m1_partial()
    s_d = coeffs.tail_sums(d)
    s_full = coeffs.tail_sums(0)
    s_j1 = coeffs.tail_sums(1)
    m1_trend, m1_ratio = decade_trend(m1)
    sd_trend, sd_ratio = decade_trend(s_d)
    psi_norm = 1.0
    if psi is not None:
        psi = np.asarray(psi, dtype=float)
        psi_norm = float(np.linalg.norm(psi.reshape(psi.shape[0], -1), axis=0).max())
    with np.errstate(over="ignore"):
        bias = psi_norm * float(np.exp(m1[-1]))
    t = coeffs.t_max
    k1 = k2 = None
    if t >= 2:
        ts = np.arange(t // 2, t + 1)
        ts = ts[ts > 0]
        per_t = s_d[ts] / ts
        k1, k2 = float(per_t.min()), float(per_t.max())
    return LearningReport(
        horizon=t, d=d,
        m1_partial=float(m1[-1]), m1_trend=m1_trend, m1_ratio=m1_ratio,
        s_d=float(s_d[-1]), s_d_trend=sd_trend, s_d_ratio=sd_ratio,
        s_full=float(s_full[-1]), s_full_trend=decade_trend(s_full)[0],
        s_j1=float(s_j1[-1]), s_j1_trend=decade_trend(s_j1)[0],
        bias_bound=bias, k1=k1, k2=k2,
    )


# ---------------------------------------------------------------------------
# empirical rates


@dataclass(frozen=True)
class EmpiricalRate:
    slopes: np.ndarray   # one least-squares slope per agent

    @property
    def mean(self) -> float:
        return float(self.slopes.mean())

    @property
    def dispersion(self) -> float:
        return float(self.slopes.std())


MIN_STEPS = 100


def slope_estimates(phi: np.ndarray, window: float = 0.5) -> EmpiricalRate:
    """Least-squares slope of each column of ``phi`` (rows are t = 0..T) over
    the trailing ``window`` fraction."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    horizon = phi.shape[0] - 1
    if horizon < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps to estimate a rate, got {horizon}")
    if not 0.0 < window <= 1.0:
        raise ValueError("window must lie in (0, 1]")
    count = max(2, int(np.ceil(window * (horizon + 1))))
    t = np.arange(horizon + 1 - count, horizon + 1, dtype=float)
    y = phi[-count:]
    tc = t - t.mean()
    slopes = tc @ (y - y.mean(axis=0)) / (tc @ tc)
    return EmpiricalRate(slopes)


def empirical_rate(traj, theta_check: int, window: float = 0.5) -> EmpiricalRate:
    """Per-agent slope of ``phi_{i,t}(theta_check)`` against t."""
    if traj.log_ratios is None:
        raise ValueError("trajectory was recorded without log-ratios")
    col = traj.false_states.index(theta_check)
    return slope_estimates(traj.log_ratios[:, :, col], window)


@dataclass(frozen=True)
class PowerDiagnostic:
    d_eps: int | None    # None when the cap is reached first
    target: float
    errors: np.ndarray   # max_i |[B^j lambda]_i - target| for j = 1..cap

    @property
    def reached(self) -> bool:
        return self.d_eps is not None


def power_convergence_diagnostic(b: np.ndarray, lambda_bar, eps: float,
                                 cap: int = 10_000) -> PowerDiagnostic:
    """Smallest ``j`` after which ``B^j lambda`` stays within ``eps`` of the
    centrality-weighted mean of ``lambda``."""
    b = np.asarray(b, dtype=float)
    lam = np.asarray(lambda_bar, dtype=float)
    _, alpha = perron_vector(b)
    target = float(alpha @ lam)
    errors = np.empty(cap)
    v = lam.copy()
    for j in range(cap):
        v = b @ v
        errors[j] = np.abs(v - target).max()
    bad = np.flatnonzero(errors >= eps)
    if bad.size == 0:
        return PowerDiagnostic(1, target, errors)
    last = int(bad[-1]) + 1  # errors[j] belongs to power j + 1
    d_eps = last + 1 if last < cap else None
    return PowerDiagnostic(d_eps, target, errors)
