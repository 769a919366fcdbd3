"""Simulation and rate analysis for memoryless Bayesian (log-linear) learning on networks."""
from .analysis import (empirical_rate, learning_condition_report, m_coefficients,
                       power_convergence_diagnostic, theoretical_rate)
from .beliefs import BeliefState, LogRatios, aggregate_identity, bayes_init, log_linearize
from .engine import RunConfig, Trajectory, monte_carlo, simulate
from .graph import (Network, SpectralData, diameter, is_aperiodic, is_strongly_connected,
                    normalized_adjacency, perron, spectral_data, stationary_distribution)
from .model import (InitialPriors, SignalModel, StateSpace, is_globally_identifiable,
                    kl_divergence, lambda_matrix, sample_signal)
from .rules import (CommonFixedPrior, GeometricAveragePrior, RandomWalkNeighbor, Schedule,
                    TimeVaryingLogLinear, WeightedSelfBelief, memoryless_update)

__version__ = "0.1.0"
