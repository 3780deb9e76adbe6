"""Mesoscopic arterial signal-control lab: Coordinated Max Pressure and benchmark policies."""

from .arterial import generate_arterial
from .config import ConfigError, ControllerSpec, DemandSpec, RunSpec, ScenarioConfig, build_network
from .network import Link, Movement, Network, NetworkError, Node, Phase

__all__ = [
    "ConfigError",
    "ControllerSpec",
    "DemandSpec",
    "Link",
    "Movement",
    "Network",
    "NetworkError",
    "Node",
    "Phase",
    "RunSpec",
    "ScenarioConfig",
    "build_network",
    "generate_arterial",
]
