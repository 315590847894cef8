"""Location maps and trajectories extracted from narrative corpora."""

from .model import (
    Document,
    Edge,
    LocationGraph,
    LocationKind,
    LocationNode,
    LocationType,
    Relation,
    Span,
    Trajectory,
    Visit,
    validate_graph,
    validate_trajectory,
)

__all__ = [
    "Document",
    "Edge",
    "LocationGraph",
    "LocationKind",
    "LocationNode",
    "LocationType",
    "Relation",
    "Span",
    "Trajectory",
    "Visit",
    "validate_graph",
    "validate_trajectory",
]
__version__ = "0.1.0"
