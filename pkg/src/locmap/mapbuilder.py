"""Alias dictionary, graph union and sparsification of the combined map."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .gateway import Gateway, SchemaError, extract_json_block, render_prompt
from .model import Edge, LocationGraph, LocationNode, Relation, Trajectory

logger = logging.getLogger(__name__)


class UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def add(self, x: str) -> None:
        self.parent.setdefault(x, x)

    def find(self, x: str) -> str:
        self.add(x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def components(self) -> list[list[str]]:
        groups: dict[str, list[str]] = {}
        for x in sorted(self.parent):
            groups.setdefault(self.find(x), []).append(x)
        return sorted(groups.values())


def _representative(group: Iterable[str], counts: Counter) -> str:
    # most frequent surface form, then longest, then lexicographically first
    return min(group, key=lambda s: (-counts.get(s, 0), -len(s), s))


@dataclass
class AliasDictionary:
    """Groups of surface names denoting one place, closed under overlap.

    ``groups`` holds the model-proposed groups as received (after filtering),
    ``overrides`` the human-proofed groups. ``canonical`` maps every grouped
    name to its representative; names outside all groups are absent.
    """

    groups: list[list[str]] = field(default_factory=list)
    overrides: list[list[str]] = field(default_factory=list)
    canonical: dict[str, str] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        groups: Iterable[Iterable[str]] = (),
        overrides: Iterable[Iterable[str]] = (),
        counts: Counter | dict[str, int] | None = None,
    ) -> AliasDictionary:
        counts = Counter(counts or {})
        groups = [list(dict.fromkeys(g)) for g in groups]
        overrides = [list(dict.fromkeys(g)) for g in overrides]
        uf = UnionFind()
        for g in groups + overrides:
            for name in g:
                uf.add(name)
            for a, b in zip(g, g[1:]):
                uf.union(a, b)
        # an override's first member names the merged place
        pinned: dict[str, str] = {}
        for g in overrides:
            if g:
                pinned.setdefault(uf.find(g[0]), g[0])
        canonical: dict[str, str] = {}
        for comp in uf.components():
            if len(comp) < 2:
                continue
            rep = pinned.get(uf.find(comp[0])) or _representative(comp, counts)
            for name in comp:
                canonical[name] = rep
        return cls(groups, overrides, canonical)

    def resolve(self, name: str) -> str:
        return self.canonical.get(name, name)

    def closed_groups(self) -> list[list[str]]:
        by_rep: dict[str, list[str]] = {}
        for name, rep in self.canonical.items():
            by_rep.setdefault(rep, []).append(name)
        return sorted(sorted(g) for g in by_rep.values())

    def with_overrides(self, overrides: Iterable[Iterable[str]], counts=None) -> AliasDictionary:
        return AliasDictionary.build(self.groups, [*self.overrides, *overrides], counts)

    def __len__(self) -> int:
        return len(self.canonical)


def parse_alias_groups(obj, names: Iterable[str], diagnostics: list[str] | None = None) -> list[list[str]]:
    """Keep only input names in each group; drop groups left with one name."""
    notes = diagnostics if diagnostics is not None else []
    if isinstance(obj, dict):
        lists = [v for v in obj.values() if isinstance(v, list)]
        if len(lists) != 1:
            raise SchemaError("expected a JSON list of name lists")
        obj = lists[0]
    if not isinstance(obj, list) or not all(isinstance(g, list) for g in obj):
        raise SchemaError("expected a JSON list of name lists")
    known = set(names)
    out: list[list[str]] = []
    for group in obj:
        kept = []
        for member in group:
            member = str(member)
            if member not in known:
                notes.append(f"alias {member!r} is not an input name; dropped")
            elif member not in kept:
                kept.append(member)
        if len(kept) >= 2:
            out.append(kept)
    return out


def build_alias_dictionary(
    names: list[str],
    gateway: Gateway | None,
    counts: Counter | dict[str, int] | None = None,
    overrides: Iterable[Iterable[str]] = (),
    profile: str = "holocaust",
    diagnostics: list[str] | None = None,
) -> AliasDictionary:
    names = sorted(set(names))
    if not names:
        return AliasDictionary.build([], overrides, counts)
    if gateway is None:
        groups: list[list[str]] = []
    else:
        listing = json.dumps(names, ensure_ascii=False)
        prompt = render_prompt("alias_merge", {"locations": listing}, profile)
        text = gateway.ask([("user", prompt)])
        groups = parse_alias_groups(extract_json_block(text), names, diagnostics)
    return AliasDictionary.build(groups, overrides, counts)


def surface_counts(graphs: Iterable[LocationGraph]) -> Counter:
    """How many graphs each surface name appears in as a node."""
    counts: Counter = Counter()
    for g in graphs:
        counts.update({n.name for n in g.nodes})
    return counts


def _union_nodes(
    nodes: Iterable[LocationNode], aliases: AliasDictionary, diagnostics: list[str]
) -> dict[str, LocationNode]:
    merged: dict[str, LocationNode] = {}
    for node in nodes:
        name = aliases.resolve(node.name)
        extra = set(node.aliases)
        if node.name != name:
            extra.add(node.name)
        current = merged.get(name)
        if current is None:
            merged[name] = LocationNode(name, node.loc_type, frozenset(extra - {name}))
            continue
        loc_type = current.loc_type
        if node.loc_type != current.loc_type:
            # lower rank is more general and wins; ties keep the first seen
            if node.loc_type.rank < current.loc_type.rank:
                loc_type = node.loc_type
            diagnostics.append(
                f"type conflict for {name!r}: {current.loc_type.label} vs {node.loc_type.label};"
                f" kept {loc_type.label}"
            )
        merged[name] = LocationNode(name, loc_type, frozenset((current.aliases | extra) - {name}))
    return merged


def _rewrite_edges(edges: Iterable[Edge], aliases: AliasDictionary) -> tuple[Edge, ...]:
    out: dict[Edge, None] = {}
    for e in edges:
        edge = Edge(aliases.resolve(e.source), aliases.resolve(e.target), e.relation)
        if edge.source != edge.target:
            out.setdefault(edge)
    return tuple(out)


def apply_aliases(
    graph: LocationGraph, aliases: AliasDictionary, diagnostics: list[str] | None = None
) -> LocationGraph:
    notes = diagnostics if diagnostics is not None else []
    nodes = _union_nodes(graph.nodes, aliases, notes)
    return LocationGraph(tuple(nodes.values()), _rewrite_edges(graph.edges, aliases))


def merge_graphs(
    graphs: list[LocationGraph], aliases: AliasDictionary | None = None, diagnostics: list[str] | None = None
) -> LocationGraph:
    """Union of all graphs after renaming; degree metadata is filled in."""
    notes = diagnostics if diagnostics is not None else []
    aliases = aliases or AliasDictionary()
    nodes = _union_nodes((n for g in graphs for n in g.nodes), aliases, notes)
    edges = _rewrite_edges((e for g in graphs for e in g.edges), aliases)
    return LocationGraph(tuple(nodes.values()), edges).with_degrees()


def keeps_edge(src: LocationNode, dst: LocationNode, relation: Relation, prune_proximity: bool = False) -> bool:
    if relation is Relation.PROXIMITY:
        return not (prune_proximity and src.kind is dst.kind)
    if src.kind is dst.kind:
        return False
    return src.rank >= dst.rank


def sparsify(graph: LocationGraph, prune_proximity: bool = False) -> LocationGraph:
    """Drop same-kind inclusion edges and inclusion edges that point from a
    more general type to a more specific one.

    Kinds that share a rank (City/Village, Facility/Natural, ...) may still
    include one another. Proximity edges are kept unless ``prune_proximity``
    is set, in which case same-kind proximity edges are dropped too.
    """
    nodes = graph.node_map()
    kept = tuple(
        e
        for e in graph.edges
        if e.source in nodes
        and e.target in nodes
        and keeps_edge(nodes[e.source], nodes[e.target], e.relation, prune_proximity)
    )
    if len(kept) == len(graph.edges):
        return graph
    out = LocationGraph(graph.nodes, kept)
    return out.with_degrees() if any(n.degree for n in graph.nodes) else out


def trajectory_to_map(
    traj: Trajectory,
    map_graph: LocationGraph,
    aliases: AliasDictionary | None = None,
    diagnostics: list[str] | None = None,
) -> Trajectory:
    notes = diagnostics if diagnostics is not None else []
    aliases = aliases or AliasDictionary()
    renamed = traj.renamed(aliases.canonical).collapsed()
    known = set(map_graph.names)
    for v in renamed.visits:
        if v.location not in known:
            notes.append(f"{traj.doc_id}: visit {v.location!r} is not on the map")
    return renamed
