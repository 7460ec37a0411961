"""Heterogeneous decentralized fusion for multi-robot SLAM and target tracking."""

from .agent import RobotAgent, TargetPrior, exchange
from .channel_filter import ChannelFilter
from .errors import (
    ChannelError,
    ConfigError,
    DimensionError,
    GraphError,
    HetDDFError,
    ImproperDensityError,
    NotPositiveDefiniteError,
    StepError,
    UnobservableEliminationError,
)
from .factor_graph import Factor, FactorGraph, FactorId, FactorOrigin, VariableId, VariablePartition
from .fusion import FusionMessage, fuse, prepare_message
from .gaussian import CanonicalGaussian, DimKey, divide, marginalize, multiply
from .harness import RunReport, Simulation, centralized_oracle, compare, run_scenario
from .metrics import chi2_bounds, nees, nees_report
from .models import TargetDynamics
from .network import Network, Topology
from .oracle import CentralizedFusion
from .scenario import Scenario, default_scenario, load_scenario
from .slam import LandmarkSlamEngine, OdometrySlamEngine, SlamEngine
from .world import World

__all__ = [
    "CanonicalGaussian",
    "CentralizedFusion",
    "ChannelError",
    "ChannelFilter",
    "ConfigError",
    "DimKey",
    "DimensionError",
    "Factor",
    "FactorGraph",
    "FactorId",
    "FactorOrigin",
    "FusionMessage",
    "GraphError",
    "HetDDFError",
    "ImproperDensityError",
    "LandmarkSlamEngine",
    "Network",
    "NotPositiveDefiniteError",
    "OdometrySlamEngine",
    "RobotAgent",
    "RunReport",
    "Scenario",
    "Simulation",
    "SlamEngine",
    "StepError",
    "TargetDynamics",
    "TargetPrior",
    "Topology",
    "UnobservableEliminationError",
    "VariableId",
    "VariablePartition",
    "World",
    "centralized_oracle",
    "chi2_bounds",
    "compare",
    "default_scenario",
    "divide",
    "exchange",
    "fuse",
    "load_scenario",
    "marginalize",
    "multiply",
    "nees",
    "nees_report",
    "prepare_message",
    "run_scenario",
]
