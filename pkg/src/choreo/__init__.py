"""Design-time toolkit for resource-oriented choreographies on sensor/actor networks.

Subpackages and modules:

- ``model``: resources, scopes, nodes, networks, communication cost
- ``expr`` / ``agent``: the PRE/POST/TARGET rule language and its firing rule
- ``design``: choreography documents and their instantiation on a placement
- ``petri``: state-space exploration and behavioural properties
- ``mapper``: pseudo-boolean encoding and exact solver for scope placement
- ``deploy``: direct, composed and self deployment plans
- ``sim``: deterministic discrete-event simulator
"""
from .agent import Agent, NodeContext, Request, ResourceStore, make_agent, parse_agent
from .deploy import DeploymentPlan, PlanError, make_plan
from .design import Design, InputSequence, instantiate, load_design
from .mapper import MappingAssignment, SolveConfig, brute_force_oracle, check_assignment, map_application
from .model import INF, CommLink, Network, Node, Resource, ResourceType, Scope, load_network
from .petri import Bounds, check_properties, compile_to_net, explore
from .sim import SimConfig, Simulation, replay_deployment, run_discovery

__all__ = [
    "Agent",
    "Bounds",
    "CommLink",
    "Design",
    "DeploymentPlan",
    "INF",
    "InputSequence",
    "MappingAssignment",
    "Network",
    "Node",
    "NodeContext",
    "PlanError",
    "Request",
    "Resource",
    "ResourceStore",
    "ResourceType",
    "Scope",
    "SimConfig",
    "Simulation",
    "SolveConfig",
    "brute_force_oracle",
    "check_assignment",
    "check_properties",
    "compile_to_net",
    "explore",
    "instantiate",
    "load_design",
    "load_network",
    "make_agent",
    "make_plan",
    "map_application",
    "parse_agent",
    "replay_deployment",
    "run_discovery",
]
