"""Interacting diffusions on sparse random graphs: samplers, solvers, locality
checks, hydrodynamic-limit studies and Kuramoto synchronization surfaces."""

from .errors import ConfigError, EmptyLevelError, HypothesisViolation, InstabilityError, ResourceLimitError
from .graph_models import (Graph, OffspringLaw, RootedTree, Binomial, Deterministic, Empirical, Poisson,
                           sample_erdos_renyi, sample_gw_tree, sample_random_regular, size_biased_shift)
from .network import MarkedNetwork, MarkLaws, attach_iid_marks, rooted_ball_network
from .diffusion import DriftSpec, NoiseSource, TrajectoryEnsemble, simulate, simulate_truncated
from .kuramoto_experiments import SyncConfig, phase_diagram

__all__ = [
    "ConfigError", "EmptyLevelError", "HypothesisViolation", "InstabilityError", "ResourceLimitError",
    "Graph", "OffspringLaw", "RootedTree", "Binomial", "Deterministic", "Empirical", "Poisson",
    "sample_erdos_renyi", "sample_gw_tree", "sample_random_regular", "size_biased_shift",
    "MarkedNetwork", "MarkLaws", "attach_iid_marks", "rooted_ball_network",
    "DriftSpec", "NoiseSource", "TrajectoryEnsemble", "simulate", "simulate_truncated",
    "SyncConfig", "phase_diagram",
]
