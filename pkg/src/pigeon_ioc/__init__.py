"""Inverse optimal control for leader-follower flocks.

Recovers quadratic tracking-cost weights of double-integrator followers from
observed trajectories through the minimum-principle Gram matrix.
"""

from .flock import FlockHierarchy, LeaderFollowerPair, SampledTrajectory, WeightVector, default_hierarchy
from .forward import direct_qp_oracle, rollout_hierarchy, solve_tracking
from .ioc import (
    GramMatrix,
    IocSolution,
    assemble_gram_multi,
    assemble_gram_single,
    diagnose,
    recover_weights,
    solve_weights,
)
from .pipeline import build_pair_datasets, differentiate, load_tracks

__version__ = "0.1.0"

__all__ = [
    "FlockHierarchy",
    "GramMatrix",
    "IocSolution",
    "LeaderFollowerPair",
    "SampledTrajectory",
    "WeightVector",
    "assemble_gram_multi",
    "assemble_gram_single",
    "build_pair_datasets",
    "default_hierarchy",
    "diagnose",
    "differentiate",
    "direct_qp_oracle",
    "load_tracks",
    "recover_weights",
    "rollout_hierarchy",
    "solve_tracking",
    "solve_weights",
]
