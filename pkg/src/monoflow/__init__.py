"""Nonlinear parabolic PDE systems on metric graphs and monotone-order verification."""

from .dissipation import DissipationSpec
from .netgraph import (
    EdgeSpec,
    MetricGraph,
    NodeSpec,
    ParseError,
    Scenario,
    ScenarioError,
    neighborhoods,
    parse_network,
    parse_scenario,
)
from .series import PiecewiseLinear

__version__ = "0.1.0"

__all__ = [
    "DissipationSpec",
    "EdgeSpec",
    "MetricGraph",
    "NodeSpec",
    "ParseError",
    "PiecewiseLinear",
    "Scenario",
    "ScenarioError",
    "neighborhoods",
    "parse_network",
    "parse_scenario",
]
