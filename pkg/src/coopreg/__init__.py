"""coopreg: cooperative output regulation over constrained networks.

A library and CLI that synthesizes and simulates a distributed
observer-based regulation protocol for heterogeneous linear multi-agent
systems whose agents exchange data over intermittent, asynchronous,
delayed and lossy discrete-time links, and that checks every solvability
condition of the underlying theory as an executable certificate.
"""

from . import (cli, closedloop, comms, figures, graph, linalg, plant,
               presets, scenario, sim, tolerances)
from .comms import ChannelParams, EdgeState, Message
from .errors import CoopRegError
from .graph import LaplacianBlocks, Topology
from .plant import AgentModel, ExoSystem, GainSet, RegulatorSolution
from .scenario import Scenario, SimConfig, parse_scenario, write_scenario
from .sim import RunReport, SimTrace, run

__version__ = "0.1.0"

__all__ = [
    "AgentModel", "ChannelParams", "CoopRegError", "EdgeState", "ExoSystem",
    "GainSet", "LaplacianBlocks", "Message", "RegulatorSolution",
    "RunReport", "Scenario", "SimConfig", "SimTrace", "Topology",
    "cli", "closedloop", "comms", "figures", "graph", "linalg", "plant",
    "presets", "scenario", "sim", "tolerances",
    "parse_scenario", "run", "write_scenario",
]
