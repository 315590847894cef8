"""Domain types for location maps and trajectories, plus structural validation."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


class LocationKind(enum.Enum):
    CONTINENT = "Continent"
    COUNTRY = "Country"
    COUNTY = "County"
    REGION = "Region"
    CITY = "City"
    VILLAGE = "Village"
    GHETTO = "Ghetto"
    ARMY_CAMP = "Army Camp"
    CONCENTRATION_CAMP = "Concentration Camp"
    DEATH_CAMP = "Death Camp"
    NATURAL = "Natural"
    FACILITY = "Facility"
    UNKNOWN = "Unknown"

    @property
    def rank(self) -> int:
        return _RANKS[self]


_RANKS = {
    LocationKind.CONTINENT: 0,
    LocationKind.COUNTRY: 1,
    LocationKind.COUNTY: 2,
    LocationKind.REGION: 2,
    LocationKind.CITY: 3,
    LocationKind.VILLAGE: 3,
    LocationKind.GHETTO: 4,
    LocationKind.ARMY_CAMP: 4,
    LocationKind.CONCENTRATION_CAMP: 4,
    LocationKind.DEATH_CAMP: 4,
    LocationKind.NATURAL: 4,
    LocationKind.FACILITY: 4,
    LocationKind.UNKNOWN: 5,
}

# "Army Camp", "army_camp", "ArmyCamp" and "armycamp" all resolve to the same kind.
_KIND_LOOKUP = {re.sub(r"[\s_\-]+", "", k.value).casefold(): k for k in LocationKind}
_KIND_LOOKUP.update({k.name.replace("_", "").casefold(): k for k in LocationKind})

HOLOCAUST_KINDS = frozenset(
    {
        LocationKind.GHETTO,
        LocationKind.ARMY_CAMP,
        LocationKind.CONCENTRATION_CAMP,
        LocationKind.DEATH_CAMP,
    }
)


@dataclass(frozen=True)
class LocationType:
    """A location kind; ``raw`` keeps the original string only for Unknown."""

    kind: LocationKind
    raw: str | None = None

    @property
    def rank(self) -> int:
        return self.kind.rank

    @property
    def label(self) -> str:
        if self.kind is LocationKind.UNKNOWN and self.raw is not None:
            return self.raw
        return self.kind.value

    @classmethod
    def parse(cls, text: str | None) -> LocationType:
        if text is None:
            return cls(LocationKind.UNKNOWN)
        key = re.sub(r"[\s_\-]+", "", str(text)).casefold()
        kind = _KIND_LOOKUP.get(key)
        if kind is None:
            return cls(LocationKind.UNKNOWN, str(text).strip() or None)
        return cls(kind)


UNKNOWN_TYPE = LocationType(LocationKind.UNKNOWN)


class Relation(enum.Enum):
    INCLUSION = "inclusion"
    PROXIMITY = "proximity"


class Edge(NamedTuple):
    source: str
    target: str
    relation: Relation = Relation.INCLUSION


@dataclass(frozen=True)
class LocationNode:
    name: str
    loc_type: LocationType = UNKNOWN_TYPE
    aliases: frozenset[str] = frozenset()
    # Filled after merge; metadata only, so it does not take part in equality.
    degree: int = field(default=0, compare=False)

    @property
    def kind(self) -> LocationKind:
        return self.loc_type.kind

    @property
    def rank(self) -> int:
        return self.loc_type.rank


@dataclass(frozen=True)
class LocationGraph:
    """A directed location graph.

    Construction does not enforce the graph invariants so that model output can
    be represented and diagnosed; use :func:`validate_graph` to check them.
    Node and edge order is preserved for deterministic serialization.
    """

    nodes: tuple[LocationNode, ...] = ()
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def node_map(self) -> dict[str, LocationNode]:
        out: dict[str, LocationNode] = {}
        for n in self.nodes:
            out.setdefault(n.name, n)
        return out

    def node(self, name: str) -> LocationNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def __contains__(self, name: object) -> bool:
        return any(n.name == name for n in self.nodes)

    def degrees(self) -> dict[str, int]:
        deg = {n.name: 0 for n in self.nodes}
        for e in self.edges:
            if e.source in deg:
                deg[e.source] += 1
            if e.target in deg:
                deg[e.target] += 1
        return deg

    def with_degrees(self) -> LocationGraph:
        deg = self.degrees()
        nodes = tuple(
            LocationNode(n.name, n.loc_type, n.aliases, deg.get(n.name, 0)) for n in self.nodes
        )
        return LocationGraph(nodes, self.edges)

    def edge_pairs(self) -> set[tuple[str, str]]:
        return {(e.source, e.target) for e in self.edges}

    def subgraph(self, names: Iterable[str]) -> LocationGraph:
        keep = set(names)
        return LocationGraph(
            tuple(n for n in self.nodes if n.name in keep),
            tuple(e for e in self.edges if e.source in keep and e.target in keep),
        )


@dataclass(frozen=True)
class Document:
    doc_id: str
    segments: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        for i, seg in enumerate(self.segments, start=1):
            if not seg or not seg.strip():
                raise ValueError(f"{self.doc_id}: segment {i} is empty")

    def __len__(self) -> int:
        return len(self.segments)

    def numbered(self) -> str:
        return "\n".join(f"{i}. {s}" for i, s in enumerate(self.segments, start=1))


class Span(NamedTuple):
    start: int
    end: int


@dataclass(frozen=True)
class Visit:
    location: str
    span: Span

    def __post_init__(self):
        object.__setattr__(self, "span", Span(*self.span))


@dataclass(frozen=True)
class Trajectory:
    """Ordered visits of one document.

    ``transports`` holds one optional transport label per adjacent visit pair.
    Like :class:`LocationGraph`, invariants are checked by validation rather
    than at construction.
    """

    doc_id: str
    visits: tuple[Visit, ...] = ()
    transports: tuple[str | None, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))
        n_edges = max(0, len(self.visits) - 1)
        if self.transports is None:
            transports: tuple[str | None, ...] = (None,) * n_edges
        else:
            transports = tuple(self.transports)
        if len(transports) != n_edges:
            raise ValueError(
                f"{self.doc_id}: expected {n_edges} transport labels, got {len(transports)}"
            )
        object.__setattr__(self, "transports", transports)

    @property
    def locations(self) -> list[str]:
        return [v.location for v in self.visits]

    def __len__(self) -> int:
        return len(self.visits)

    def collapsed(self) -> Trajectory:
        """Merge adjacent visits to the same location; spans are unioned."""
        if not self.visits:
            return self
        visits = [self.visits[0]]
        transports: list[str | None] = []
        for visit, transport in zip(self.visits[1:], self.transports):
            prev = visits[-1]
            if visit.location == prev.location:
                span = Span(min(prev.span.start, visit.span.start), max(prev.span.end, visit.span.end))
                visits[-1] = Visit(prev.location, span)
            else:
                visits.append(visit)
                transports.append(transport)
        return Trajectory(self.doc_id, tuple(visits), tuple(transports))

    def renamed(self, mapping: dict[str, str]) -> Trajectory:
        visits = tuple(Visit(mapping.get(v.location, v.location), v.span) for v in self.visits)
        return Trajectory(self.doc_id, visits, self.transports)


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str

    @property
    def structural(self) -> bool:
        return self.kind in STRUCTURAL_KINDS

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


STRUCTURAL_KINDS = frozenset(
    {"empty_name", "duplicate_node", "alias_conflict", "dangling_edge", "self_loop", "duplicate_edge"}
)


def validate_graph(graph: LocationGraph) -> list[Violation]:
    """Return every invariant violation in ``graph``; empty when well formed.

    Besides the structural checks, an inclusion edge from a more general type
    to a more specific one (e.g. Country -> City) is reported as
    ``reversed_inclusion``. Unknown-typed endpoints are never judged.
    """
    out: list[Violation] = []
    seen: dict[str, LocationNode] = {}
    for node in graph.nodes:
        if not node.name or not node.name.strip():
            out.append(Violation("empty_name", repr(node.name), "node with empty name"))
            continue
        if node.name in seen:
            out.append(Violation("duplicate_node", node.name, f"node {node.name!r} appears more than once"))
            continue
        seen[node.name] = node
        if node.name in node.aliases:
            out.append(
                Violation("alias_conflict", node.name, f"node {node.name!r} lists its own name as alias")
            )

    triples: set[Edge] = set()
    for edge in graph.edges:
        label = f"{edge.source!r} -> {edge.target!r} ({edge.relation.value})"
        missing = [n for n in (edge.source, edge.target) if n not in seen]
        if missing:
            out.append(
                Violation("dangling_edge", label, f"edge {label} references absent node(s) {missing}")
            )
            continue
        if edge.source == edge.target:
            out.append(Violation("self_loop", label, f"self-loop {label}"))
            continue
        if edge in triples:
            out.append(Violation("duplicate_edge", label, f"duplicate edge {label}"))
            continue
        triples.add(edge)
        if edge.relation is Relation.INCLUSION:
            src, dst = seen[edge.source], seen[edge.target]
            unknown = LocationKind.UNKNOWN
            if src.kind is not unknown and dst.kind is not unknown and src.rank < dst.rank:
                out.append(
                    Violation(
                        "reversed_inclusion",
                        label,
                        f"inclusion {label} goes from {src.loc_type.label} to {dst.loc_type.label}",
                    )
                )
    return out


def validate_trajectory(
    traj: Trajectory, doc: Document, map_nodes: Iterable[str] | None = None
) -> list[Violation]:
    """Check adjacency, span order and bounds, and map membership of ``traj``."""
    if traj.doc_id != doc.doc_id:
        raise ValueError(f"trajectory for {traj.doc_id!r} checked against document {doc.doc_id!r}")
    members = None if map_nodes is None else set(map_nodes)
    out: list[Violation] = []
    n = len(doc.segments)
    prev: Visit | None = None
    for i, visit in enumerate(traj.visits):
        where = f"visit {i} ({visit.location!r} @ {visit.span.start}-{visit.span.end})"
        start, end = visit.span
        if start > end:
            out.append(Violation("span_inverted", where, f"{where} has start after end"))
        if not (1 <= start <= n and 1 <= end <= n):
            out.append(Violation("span_bounds", where, f"{where} lies outside segments 1-{n}"))
        if prev is not None:
            if visit.location == prev.location:
                out.append(Violation("adjacent_repeat", where, f"{where} repeats the previous location"))
            if start < prev.span.start:
                out.append(Violation("span_order", where, f"{where} starts before the previous visit"))
        if members is not None and visit.location not in members:
            out.append(Violation("not_in_map", where, f"{where} names a location absent from the map"))
        prev = visit
    return out
