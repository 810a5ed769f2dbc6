"""Desk-scale cloud-edge control stack: heartbeat command streaming over a
lossy link, a self-balancing wheeled robot, and visual-servoed box pickup."""

__version__ = "0.1.0"

from .config import Scenario, load_scenario, scenario_from_dict  # noqa: F401
from .nodes import Topology, run_topology  # noqa: F401
