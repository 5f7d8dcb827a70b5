"""Sensor placement and outbreak source localization for wastewater networks."""

from .bayes import OrGateNet, ZeroProbabilityEvidence, build_bayes_net, posterior, posterior_bruteforce, predict
from .network import LeafAttributes, NetworkError, WastewaterGraph, load_network, reduce
from .objective import EvalReport, ObjectiveConfig, PlacementEvaluator, evaluate_placement
from .optimizer import Placement, exhaustive, greedy_lazy, greedy_naive
from .scenario import ScenarioBatch, sample_hydraulics, sample_scenarios

__version__ = "0.1.0"
