"""State space, signal structures, KL machinery and signal sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _as_distribution(p, name="distribution", strict=True) -> np.ndarray:
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must be nonnegative and sum to 1")
    if strict and (p <= 0).any():
        raise ValueError(f"{name} must be strictly positive")
    return p


@dataclass(frozen=True)
class StateSpace:
    states: tuple
    truth_index: int
    nature_prior: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        k = len(self.states)
        if k < 2:
            raise ValueError("need at least two states")
        if len(set(self.states)) != k:
            raise ValueError("state labels must be unique")
        if not 0 <= self.truth_index < k:
            raise ValueError(f"truth index {self.truth_index} out of range")
        prior = np.full(k, 1.0 / k) if self.nature_prior is None else _as_distribution(
            self.nature_prior, "nature prior")
        if prior.size != k:
            raise ValueError("nature prior length must match the number of states")
        object.__setattr__(self, "nature_prior", prior)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def false_states(self) -> list:
        return [k for k in range(self.size) if k != self.truth_index]

    def draw_truth(self, rng: np.random.Generator) -> int:
        """Sample a realized state from nature's prior."""
        return int(rng.choice(self.size, p=self.nature_prior))


@dataclass(frozen=True)
class SignalModel:
    """Per-agent likelihood tables, one ``|states| x |signals_i|`` matrix each.

    Zero entries are rejected unless ``allow_zeros`` is set; with zeros
    allowed, drawing a signal that some state assigns zero probability is a
    hard error at update time.
    """

    likelihoods: tuple
    allow_zeros: bool = False
    log_likelihoods: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tables = []
        for i, table in enumerate(self.likelihoods):
            table = np.array(table, dtype=float)
            if table.ndim != 2 or table.shape[1] == 0:
                raise ValueError(f"agent {i}: likelihood table must be 2-d")
            if (table < 0).any() or np.abs(table.sum(axis=1) - 1.0).max() > 1e-9:
                raise ValueError(f"agent {i}: likelihood rows must be distributions")
            if not self.allow_zeros and (table <= 0).any():
                raise ValueError(f"agent {i}: likelihoods must have full support")
            table.setflags(write=False)
            tables.append(table)
        if not tables:
            raise ValueError("need at least one agent")
        if len({t.shape[0] for t in tables}) != 1:
            raise ValueError("every agent's table must have one row per state")
        object.__setattr__(self, "likelihoods", tuple(tables))
        with np.errstate(divide="ignore"):
            logs = tuple(np.log(t) for t in tables)
        object.__setattr__(self, "log_likelihoods", logs)

    @property
    def n_agents(self) -> int:
        return len(self.likelihoods)

    @property
    def n_states(self) -> int:
        return self.likelihoods[0].shape[0]

    def signal_counts(self) -> list:
        return [t.shape[1] for t in self.likelihoods]

    def padded_log_likelihoods(self) -> np.ndarray:
        """Array ``(n, n_states, max_signals)``; padding columns are 0."""
        smax = max(self.signal_counts())
        out = np.zeros((self.n_agents, self.n_states, smax))
        for i, lg in enumerate(self.log_likelihoods):
            out[i, :, : lg.shape[1]] = lg
        return out


@dataclass(frozen=True)
class InitialPriors:
    priors: np.ndarray

    def __post_init__(self):
        p = np.array(self.priors, dtype=float)
        if p.ndim != 2:
            raise ValueError("priors must be an (agents x states) array")
        for i, row in enumerate(p):
            _as_distribution(row, f"prior of agent {i}")
        p.setflags(write=False)
        object.__setattr__(self, "priors", p)

    @classmethod
    def uniform(cls, n_agents: int, n_states: int) -> "InitialPriors":
        return cls(np.full((n_agents, n_states), 1.0 / n_states))

    def psi(self, truth: int) -> np.ndarray:
        """Prior log-ratios ``log(nu_i(k) / nu_i(truth))``, shape (n, n_states)."""
        lp = np.log(self.priors)
        return lp - lp[:, [truth]]


def kl_divergence(p, q) -> float:
    """KL divergence ``D(p || q)`` in nats."""
    p = _as_distribution(p, "p", strict=False)
    q = _as_distribution(q, "q", strict=False)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if (q[mask] <= 0).any():
        raise ValueError("q vanishes where p is positive")
    return float(max(0.0, np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask])))))


def lambda_matrix(sig: SignalModel, truth: int) -> np.ndarray:
    """Negative KL divergences, entry ``(i, k) = -D(l_i(.|truth) || l_i(.|k))``."""
    out = np.zeros((sig.n_agents, sig.n_states))
    for i, table in enumerate(sig.likelihoods):
        for k in range(sig.n_states):
            if k != truth:
                out[i, k] = -kl_divergence(table[truth], table[k])
    return out


@dataclass(frozen=True)
class Identifiability:
    identifiable: bool
    witnesses: dict  # false state index -> agents with lambda < 0

    def __bool__(self):
        return self.identifiable


def is_globally_identifiable(sig: SignalModel, truth: int) -> Identifiability:
    lam = lambda_matrix(sig, truth)
    witnesses = {
        k: [int(i) for i in np.flatnonzero(lam[:, k] < 0)]
        for k in range(sig.n_states) if k != truth
    }
    return Identifiability(all(witnesses.values()), witnesses)


def _inverse_cdf(row: np.ndarray, u):
    cdf = np.cumsum(row)
    idx = np.searchsorted(cdf, u, side="right")
    # guard against cdf[-1] rounding just below 1
    return np.minimum(idx, row.size - 1)


def sample_signal(sig: SignalModel, agent: int, truth: int, rng: np.random.Generator) -> int:
    """One draw from ``l_agent(. | truth)`` using ``rng``."""
    return int(_inverse_cdf(sig.likelihoods[agent][truth], rng.random()))


class UniformStream:
    """Counter-based uniforms indexed by ``(t, agent)``.

    Step ``t`` lives in block ``b = t // block_size``. Block ``b`` is the
    output of a Philox generator keyed by ``SeedSequence([seed, stream])``
    with its counter started at ``(0, 0, 0, b)``; inside a block the draws are
    laid out row-major as ``(t % block_size, agent)``. Any ``(t, agent)`` draw
    can therefore be regenerated without touching earlier ones.
    """

    def __init__(self, seed: int, n_agents: int, stream: int = 0, block_size: int = 1024):
        self.n_agents = n_agents
        self.block_size = block_size
        ss = np.random.SeedSequence([int(seed), int(stream)])
        self._key = ss.generate_state(2, np.uint64)
        self._cache = (None, None)

    def block(self, b: int) -> np.ndarray:
        if self._cache[0] != b:
            bitgen = np.random.Philox(key=self._key, counter=[0, 0, 0, b])
            draws = np.random.Generator(bitgen).random((self.block_size, self.n_agents))
            self._cache = (b, draws)
        return self._cache[1]

    def at(self, t: int) -> np.ndarray:
        return self.block(t // self.block_size)[t % self.block_size]

    def span(self, t0: int, t1: int) -> np.ndarray:
        """Uniforms for steps ``t0 <= t < t1``, shape ``(t1 - t0, n_agents)``."""
        rows = []
        t = t0
        while t < t1:
            b, off = divmod(t, self.block_size)
            take = min(self.block_size - off, t1 - t)
            rows.append(self.block(b)[off:off + take])
            t += take
        if not rows:
            return np.empty((0, self.n_agents))
        return np.concatenate(rows)


def signals_from_uniforms(sig: SignalModel, truth: int, u: np.ndarray) -> np.ndarray:
    """Map uniforms ``(steps, n)`` to signal indices by inverse CDF per agent."""
    out = np.empty(u.shape, dtype=np.int64)
    for i, table in enumerate(sig.likelihoods):
        out[:, i] = _inverse_cdf(table[truth], u[:, i])
    return out
