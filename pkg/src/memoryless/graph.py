"""Directed networks and the spectral quantities the rate theory depends on.

Edge convention: ``adjacency[i, j] == 1`` means agent ``i`` observes the
belief of agent ``j`` (an edge ``j -> i``), so row ``i`` lists the
neighborhood of ``i``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import gcd
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, NotStronglyConnectedError, ReducibleChainError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class Network:
    adjacency: np.ndarray
    neighborhoods: tuple = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.int64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in a)
        object.__setattr__(self, "neighborhoods", nbrs)

    @classmethod
    def from_neighbors(cls, neighbors: Sequence[Sequence[int]]) -> "Network":
        """Build from per-agent lists of observed agents (0-based)."""
        n = len(neighbors)
        a = np.zeros((n, n), dtype=np.int64)
        for i, nbrs in enumerate(neighbors):
            for j in nbrs:
                if not 0 <= j < n:
                    raise ValueError(f"agent {i}: neighbor index {j} out of range")
                a[i, j] = 1
        return cls(a)

    @classmethod
    def cycle(cls, n: int) -> "Network":
        """Directed cycle 0 -> 1 -> ... -> n-1 -> 0."""
        return cls.from_neighbors([[(i - 1) % n] for i in range(n)])

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def is_cycle(self) -> bool:
        return bool((self.degrees == 1).all()) and is_strongly_connected(self)

    def to_neighbors(self) -> list:
        return [list(nb) for nb in self.neighborhoods]


def _reach(succ: list, start: int) -> list:
    """BFS distances from ``start``; -1 where unreachable."""
    dist = [-1] * len(succ)
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _successors(a: np.ndarray) -> list:
    # information flows j -> i whenever a[i, j] == 1
    return [list(np.flatnonzero(a[:, j])) for j in range(a.shape[0])]


def _support_strongly_connected(a: np.ndarray) -> bool:
    succ = _successors(a)
    pred = [list(np.flatnonzero(a[i, :])) for i in range(a.shape[0])]
    return min(_reach(succ, 0)) >= 0 and min(_reach(pred, 0)) >= 0


def is_strongly_connected(net: Network) -> bool:
    return _support_strongly_connected(net.adjacency)


def _require_strong(net: Network, what: str):
    if not is_strongly_connected(net):
        raise NotStronglyConnectedError(f"{what} requires a strongly connected network")


def period(net: Network) -> int:
    """GCD of all directed cycle lengths, from BFS level differences."""
    _require_strong(net, "period")
    succ = _successors(net.adjacency)
    level = _reach(succ, 0)
    g = 0
    for u, targets in enumerate(succ):
        for v in targets:
            g = gcd(g, level[u] + 1 - level[v])
    return g


def is_aperiodic(net: Network) -> bool:
    return period(net) == 1


def diameter(net: Network) -> int:
    """Longest shortest directed path over all ordered pairs."""
    _require_strong(net, "diameter")
    succ = _successors(net.adjacency)
    return max(max(_reach(succ, s)) for s in range(net.n))


def perron_vector(m: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  shift: float = 1.0):
    """Left Perron pair of an irreducible nonnegative matrix.

    Power iteration on ``(m + shift*I)^T``; the shift makes periodic
    matrices converge. Returns ``(rho, v)`` with ``v`` positive and summing
    to one, once ``max|v^T m - rho v^T| <= tol``.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    shifted = m.T + shift * np.eye(n)
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        w = shifted @ v
        w /= w.sum()
        vm = w @ m
        rho = vm.sum()
        if np.abs(vm - rho * w).max() <= tol:
            return float(rho), w
        v = w
    raise ConvergenceError(f"power iteration did not reach tol={tol} in {max_iter} iterations")


def perron(net: Network, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Spectral radius and normalized eigenvector centrality of ``net``."""
    _require_strong(net, "perron")
    return perron_vector(net.adjacency, tol=tol, max_iter=max_iter)


def normalized_adjacency(net: Network) -> np.ndarray:
    deg = net.degrees
    if (deg == 0).any():
        raise ValueError(f"agents {np.flatnonzero(deg == 0).tolist()} have no neighbors")
    return net.adjacency / deg[:, None]


def stationary_distribution(t_matrix: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Unique stationary row vector of an irreducible row-stochastic matrix.

    Solves ``(T^T - I) s = 0`` with one equation swapped for ``sum(s) = 1``,
    so periodic chains are handled.
    """
    t = np.asarray(t_matrix, dtype=float)
    n = t.shape[0]
    if t.ndim != 2 or t.shape[1] != n:
        raise ValueError("transition matrix must be square")
    if (t < 0).any() or np.abs(t.sum(axis=1) - 1.0).max() > 1e-12:
        raise ValueError("transition matrix must be row-stochastic")
    if not _support_strongly_connected((t > 0).astype(int)):
        raise ReducibleChainError("transition matrix is reducible")
    system = t.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    s = np.linalg.solve(system, rhs)
    residual = np.abs(s @ t - s).max()
    if residual > tol or (s <= 0).any():
        raise ConvergenceError(f"stationary solve residual {residual:.3g} exceeds tol={tol}")
    return s


@dataclass(frozen=True)
class SpectralData:
    rho: float
    alpha: np.ndarray
    t_matrix: np.ndarray
    s_vec: np.ndarray
    diameter: int
    aperiodic: bool

    @property
    def d_const(self) -> int:
        return self.diameter + 1


def spectral_data(net: Network, tol: float = DEFAULT_TOL) -> SpectralData:
    rho, alpha = perron(net, tol=tol)
    t = normalized_adjacency(net)
    return SpectralData(
        rho=rho,
        alpha=alpha,
        t_matrix=t,
        s_vec=stationary_distribution(t, tol=tol),
        diameter=diameter(net),
        aperiodic=is_aperiodic(net),
    )
