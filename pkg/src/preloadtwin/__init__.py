"""Probabilistic digital twin for surcharge-preloaded embankments.

Maintains a particle belief over soil parameters, predicts settlement and
overconsolidation through a Terzaghi/Hansbo consolidation model, updates
the belief from weekly settlement measurements, and optimizes parametric
surcharge policies by cross-entropy search over Monte Carlo rollouts.
"""

from .belief import Belief, Measurement, ModelContext, init_belief, posterior_stats, update
from .consolidation import (
    ActionSchedule,
    EmbankmentGeometry,
    PvdDesign,
    Trajectory,
    simulate_trajectory,
)
from .policy import CostParams, HeuristicParams, Requirements
from .priors import LognormalDist, SoilPriorSet, SoilSample, fit_lognormal, from_moments
from .scenario import Scenario, load_bundled_scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "ActionSchedule",
    "Belief",
    "CostParams",
    "EmbankmentGeometry",
    "HeuristicParams",
    "LognormalDist",
    "Measurement",
    "ModelContext",
    "PvdDesign",
    "Requirements",
    "Scenario",
    "SoilPriorSet",
    "SoilSample",
    "Trajectory",
    "fit_lognormal",
    "from_moments",
    "init_belief",
    "load_bundled_scenario",
    "load_scenario",
    "posterior_stats",
    "save_scenario",
    "simulate_trajectory",
    "update",
    "__version__",
]
