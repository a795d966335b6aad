from .problem import (
    BuildError,
    Constraint,
    MappabilityReport,
    MappingLiteral,
    PboInstance,
    build_pbo,
    check_application_mappable,
    expand_instances,
    mappable_nodes,
    to_opb,
)
from .solver import (
    INFEASIBLE,
    OPTIMAL,
    TIMEOUT,
    MappingAssignment,
    OracleTooLarge,
    SolveConfig,
    assignment_from_dict,
    brute_force_oracle,
    check_assignment,
    evaluate_cost,
    map_application,
    solve,
)

__all__ = [
    "BuildError",
    "Constraint",
    "INFEASIBLE",
    "MappabilityReport",
    "MappingAssignment",
    "MappingLiteral",
    "OPTIMAL",
    "OracleTooLarge",
    "PboInstance",
    "SolveConfig",
    "TIMEOUT",
    "assignment_from_dict",
    "brute_force_oracle",
    "build_pbo",
    "check_application_mappable",
    "check_assignment",
    "evaluate_cost",
    "expand_instances",
    "map_application",
    "mappable_nodes",
    "solve",
    "to_opb",
]
