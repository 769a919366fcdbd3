"""Deterministic simulation driver and Monte Carlo ensembles.

Randomness: signals for run seed ``s`` come from ``UniformStream(s, n, 0)``
and random-walk neighbor choices from ``UniformStream(s, n, 1)``; draw
``(t, i)`` depends only on the seed, the stream id, ``t`` and ``i``. Seed
``k`` of an ensemble is ``master ^ k``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import empirical_rate
from .beliefs import BeliefState, LogRatios, aggregate_identity, bayes_init
from .errors import NotStronglyConnectedError, NumericalFailure
from .graph import Network, SpectralData, is_strongly_connected, spectral_data
from .model import InitialPriors, SignalModel, StateSpace, UniformStream, signals_from_uniforms
from ._kernel import run_block
from .rules import neighbor_choices

log = logging.getLogger(__name__)

# tight enough that rho * Phi_{t-1} matches the neighbor sum to ~1e-12 relative
SPECTRAL_TOL = 1e-14
BLOCK = 1024


@dataclass(frozen=True)
class RunConfig:
    network: Network
    states: StateSpace
    signal_model: SignalModel
    priors: InitialPriors
    rule: object
    horizon: int
    seed: int
    record_every: int = 1
    record_signals: bool = True
    record_log_ratios: bool = True

    @property
    def truth(self) -> int:
        return self.states.truth_index

    def validate(self, spectral: SpectralData | None = None) -> SpectralData:
        n = self.network.n
        if self.signal_model.n_agents != n:
            raise ValueError(f"{self.signal_model.n_agents} likelihood tables for {n} agents")
        if self.signal_model.n_states != self.states.size:
            raise ValueError("likelihood tables disagree with the number of states")
        if self.priors.priors.shape != (n, self.states.size):
            raise ValueError(f"priors must have shape ({n}, {self.states.size})")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if not is_strongly_connected(self.network):
            raise NotStronglyConnectedError("the network must be strongly connected")
        spectral = spectral or spectral_data(self.network, tol=SPECTRAL_TOL)
        self.rule.validate(self.network, spectral, self.horizon)
        return spectral

    def to_dict(self) -> dict:
        """Canonical plain-data form; the basis of :func:`config_hash`."""
        from .config import rule_to_dict  # local: config imports engine

        return {
            "network": self.network.to_neighbors(),
            "states": list(self.states.states),
            "truth": self.truth,
            "likelihoods": [t.tolist() for t in self.signal_model.likelihoods],
            "allow_zero_likelihoods": self.signal_model.allow_zeros,
            "priors": self.priors.priors.tolist(),
            "rule": rule_to_dict(self.rule),
            "horizon": self.horizon,
            "seed": self.seed,
            "record_every": self.record_every,
            "record_signals": self.record_signals,
            "record_log_ratios": self.record_log_ratios,
        }


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Trajectory:
    config: RunConfig
    config_hash: str
    snapshot_times: np.ndarray      # recorded steps, strictly increasing
    snapshots: np.ndarray           # (len(times), n, n_states) log-beliefs
    signals: np.ndarray | None      # (T+1, n)
    choices: np.ndarray | None      # (T+1, n); row 0 is -1
    log_ratios: np.ndarray | None   # (T+1, n, n_states - 1)
    false_states: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def beliefs_at(self, t: int) -> BeliefState:
        idx = np.searchsorted(self.snapshot_times, t)
        if idx == len(self.snapshot_times) or self.snapshot_times[idx] != t:
            raise KeyError(f"no snapshot recorded at t={t}")
        return BeliefState(self.snapshots[idx], t)

    @property
    def final_beliefs(self) -> BeliefState:
        return BeliefState(self.snapshots[-1], int(self.snapshot_times[-1]))

    def ratios_at(self, t: int) -> LogRatios:
        return LogRatios(self.log_ratios[t], self.config.truth, len(self.false_states) + 1)


def _block_inputs(cfg, sig_stream, choice_stream, loglik, t0, t1):
    truth = cfg.truth
    signals = signals_from_uniforms(cfg.signal_model, truth, sig_stream.span(t0, t1))
    if cfg.signal_model.allow_zeros:
        cols = np.stack([cfg.signal_model.likelihoods[i][:, signals[:, i]].min(axis=0)
                         for i in range(cfg.network.n)], axis=1)
        bad = np.argwhere(cols <= 0)
        if bad.size:
            step = t0 + int(bad[0, 0])
            raise NumericalFailure(f"agent {int(bad[0, 1])} drew a zero-likelihood signal", step)
    n = cfg.network.n
    lls = loglik[np.arange(n)[None, :], :, signals]
    picks = None
    if choice_stream is not None:
        picks = neighbor_choices(cfg.rule.matrix(cfg.network), cfg.network, choice_stream.span(t0, t1))
    return signals, lls, picks


def simulate(cfg: RunConfig, spectral: SpectralData | None = None) -> Trajectory:
    """Run one trajectory: Bayes initialization at t=0, then synchronous rounds."""
    spectral = cfg.validate(spectral)
    net, rule, truth = cfg.network, cfg.rule, cfg.truth
    n, k = net.n, cfg.states.size
    horizon = cfg.horizon
    false = [s for s in range(k) if s != truth]
    loglik = cfg.signal_model.padded_log_likelihoods()
    sig_stream = UniformStream(cfg.seed, n, stream=0, block_size=BLOCK)
    walk = rule.name == "random_walk"
    choice_stream = UniformStream(cfg.seed, n, stream=1, block_size=BLOCK) if walk else None

    signals = np.empty((horizon + 1, n), dtype=np.int64) if cfg.record_signals else None
    choices = np.full((horizon + 1, n), -1, dtype=np.int64) if walk and cfg.record_signals else None
    ratios = np.empty((horizon + 1, n, k - 1)) if cfg.record_log_ratios else None
    times, snaps = [], []

    current = None
    for t0 in range(0, horizon + 1, BLOCK):
        t1 = min(t0 + BLOCK, horizon + 1)
        blk_signals, lls, picks = _block_inputs(cfg, sig_stream, choice_stream, loglik, t0, t1)
        if signals is not None:
            signals[t0:t1] = blk_signals
        out = np.empty((t1 - t0, n, k))
        start = 0
        if t0 == 0:
            current = bayes_init(cfg.priors, cfg.signal_model, blk_signals[0]).log_probs
            out[0] = current
            start = 1
        if start < t1 - t0:
            ts = np.arange(t0 + start, t1)
            ch = picks[start:] if walk else None
            if choices is not None:
                choices[ts] = ch
            w = np.ascontiguousarray(rule.weight_block(net, spectral, ts, ch), dtype=float)
            failed = run_block(current, np.ascontiguousarray(lls[start:]), w, out[start:])
            if failed >= 0:
                raise NumericalFailure("belief normalizer is not finite", step=int(ts[failed]))
            current = out[-1].copy()
        if ratios is not None:
            ratios[t0:t1] = out[:, :, false] - out[:, :, [truth]]
        ts_all = np.arange(t0, t1)
        keep = (ts_all % cfg.record_every == 0) | (ts_all == horizon)
        times.extend(ts_all[keep].tolist())
        snaps.extend(out[keep])
    return Trajectory(
        config=cfg,
        config_hash=config_hash(cfg.to_dict()),
        snapshot_times=np.array(times, dtype=np.int64),
        snapshots=np.array(snaps),
        signals=signals,
        choices=choices,
        log_ratios=ratios,
        false_states=false,
    )


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class SeedResult:
    index: int
    seed: int
    slopes: np.ndarray | None         # (n, false states)
    identity_residual: float | None
    final_log_beliefs: np.ndarray | None
    error: str | None = None
    trajectory: Trajectory | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class EnsembleSummary:
    seeds: list
    false_states: list

    @property
    def successes(self) -> list:
        return [r for r in self.seeds if r.ok]

    @property
    def failures(self) -> dict:
        return {r.seed: r.error for r in self.seeds if not r.ok}

    def slopes(self) -> np.ndarray:
        """(successful seeds, n, false states)."""
        return np.array([r.slopes for r in self.successes])

    def mean_rates(self) -> np.ndarray:
        """Ensemble mean of the agent-averaged rate (minus the slope) per false state."""
        return -self.slopes().mean(axis=(0, 1))

    def rate_std(self) -> np.ndarray:
        """Across-seed standard deviation of the agent-averaged rate."""
        return self.slopes().mean(axis=1).std(axis=0)

    def agent_rates(self) -> np.ndarray:
        return -self.slopes().mean(axis=0)

    @property
    def max_identity_residual(self) -> float:
        vals = [r.identity_residual for r in self.successes if r.identity_residual is not None]
        return max(vals, default=0.0)


def seed_for(master: int, k: int) -> int:
    return int(master) ^ int(k)


def _run_seed(args) -> SeedResult:
    cfg, index, window, check_identity, keep = args
    seed = cfg.seed
    try:
        spectral = cfg.validate()
        traj = simulate(cfg, spectral)
        slopes = None
        if cfg.record_log_ratios and cfg.horizon >= 100:
            slopes = np.stack([empirical_rate(traj, s, window).slopes for s in traj.false_states],
                              axis=1)
        resid = None
        if check_identity and cfg.record_log_ratios and cfg.record_signals:
            resid = aggregate_identity(traj, spectral).max_residual
        return SeedResult(index, seed, slopes, resid, traj.snapshots[-1],
                          trajectory=traj if keep else None)
    except Exception as exc:  # isolate one seed's failure from the ensemble
        log.warning("seed %d failed: %s", seed, exc)
        return SeedResult(index, seed, None, None, None, error=f"{type(exc).__name__}: {exc}")


def monte_carlo(cfg: RunConfig, n_seeds: int, window: float = 0.5, workers: int = 1,
                check_identity: bool = False, keep_trajectories: bool = False) -> EnsembleSummary:
    """Independent runs with seeds ``cfg.seed ^ k``, k = 0..n_seeds-1.

    Results are ordered by k whatever ``workers`` is; each run owns its
    random streams, so the outcome does not depend on scheduling.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    jobs = [(replace(cfg, seed=seed_for(cfg.seed, k)), k, window, check_identity, keep_trajectories)
            for k in range(n_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(job) for job in jobs]
    false = [s for s in range(cfg.states.size) if s != cfg.truth]
    return EnsembleSummary(results, false)


__all__ = ["EnsembleSummary", "RunConfig", "SeedResult", "Trajectory",
           "config_hash", "monte_carlo", "seed_for", "simulate"]
