"""Per-document graph and trajectory extraction over one model conversation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .gateway import (
    Gateway,
    GatewayError,
    JsonRecoveryError,
    ReplayMiss,
    SchemaError,
    extract_json_block,
    render_prompt,
)
from .model import (
    Document,
    Edge,
    LocationGraph,
    LocationNode,
    LocationType,
    Relation,
    Span,
    Trajectory,
    Visit,
    validate_graph,
    validate_trajectory,
)

logger = logging.getLogger(__name__)

REFORMAT_PROMPT = "Give your answer as valid JSON only."


def _pair(item: Any) -> tuple[str, dict]:
    """Split a node entry into (name, attributes)."""
    if isinstance(item, str):
        return item, {}
    if isinstance(item, dict):
        if "name" not in item:
            raise SchemaError(f"node object without a name: {item!r}")
        return str(item["name"]), {k: v for k, v in item.items() if k != "name"}
    if isinstance(item, (list, tuple)) and item:
        attrs = item[1] if len(item) > 1 and isinstance(item[1], dict) else {}
        return str(item[0]), attrs
    raise SchemaError(f"cannot read node entry {item!r}")


def _edge_parts(item: Any) -> tuple[str, str, dict]:
    if isinstance(item, dict):
        src = item.get("source", item.get("from"))
        dst = item.get("target", item.get("to"))
        if src is None or dst is None:
            raise SchemaError(f"edge object without endpoints: {item!r}")
        return str(src), str(dst), item
    if isinstance(item, (list, tuple)) and len(item) >= 2:
        attrs = item[2] if len(item) > 2 and isinstance(item[2], dict) else {}
        return str(item[0]), str(item[1]), attrs
    raise SchemaError(f"cannot read edge entry {item!r}")


def _relation(attrs: dict) -> Relation:
    value = attrs.get("relation", attrs.get("type"))
    if isinstance(value, str) and value.strip().casefold() in ("proximity", "near"):
        return Relation.PROXIMITY
    return Relation.INCLUSION


def _require_lists(obj: Any) -> tuple[list, list]:
    if not isinstance(obj, dict) or "nodes" not in obj or "edges" not in obj:
        raise SchemaError('expected a JSON object with "nodes" and "edges"')
    nodes, edges = obj["nodes"], obj["edges"]
    if not isinstance(nodes, list) or not isinstance(edges, list):
        raise SchemaError('"nodes" and "edges" must be lists')
    return nodes, edges


def parse_graph(obj: Any, diagnostics: list[str] | None = None) -> LocationGraph:
    """Build a structurally clean graph from model JSON.

    Repeated nodes keep their first type; self-loops, duplicate edges and
    edges to undeclared nodes are dropped and noted in ``diagnostics``.
    """
    notes = diagnostics if diagnostics is not None else []
    raw_nodes, raw_edges = _require_lists(obj)
    nodes: dict[str, LocationNode] = {}
    for item in raw_nodes:
        name, attrs = _pair(item)
        name = name.strip()
        if not name:
            notes.append("dropped node with empty name")
            continue
        if name in nodes:
            notes.append(f"duplicate node {name!r} merged")
            continue
        loc_type = LocationType.parse(attrs.get("type"))
        if loc_type.raw is not None:
            notes.append(f"node {name!r} has unrecognised type {loc_type.raw!r}")
        nodes[name] = LocationNode(name, loc_type)
    edges: list[Edge] = []
    seen: set[Edge] = set()
    for item in raw_edges:
        src, dst, attrs = _edge_parts(item)
        edge = Edge(src.strip(), dst.strip(), _relation(attrs))
        if edge.source not in nodes or edge.target not in nodes:
            notes.append(f"dropped edge {edge.source!r} -> {edge.target!r}: endpoint not among nodes")
        elif edge.source == edge.target:
            notes.append(f"dropped self-loop on {edge.source!r}")
        elif edge in seen:
            notes.append(f"dropped duplicate edge {edge.source!r} -> {edge.target!r}")
        else:
            seen.add(edge)
            edges.append(edge)
    return LocationGraph(tuple(nodes.values()), tuple(edges))


def _span(value: Any) -> Span | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        k = int(value)
        return Span(k, k)
    if isinstance(value, str) and value.strip():
        parts = [p for p in value.replace("–", "-").split("-") if p.strip()]
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            return None
        return Span(min(nums), max(nums)) if nums else None
    if isinstance(value, (list, tuple)) and value:
        try:
            nums = [int(v) for v in value]
        except (TypeError, ValueError):
            return None
        return Span(min(nums), max(nums))
    return None


def parse_trajectory(obj: Any, doc_id: str, diagnostics: list[str] | None = None) -> Trajectory:
    """Read trajectory JSON into a raw (uncollapsed) trajectory.

    Transport labels come from edges joining consecutive visits; visits with
    no usable sentence label inherit the previous visit's end.
    """
    notes = diagnostics if diagnostics is not None else []
    raw_nodes, raw_edges = _require_lists(obj)
    visits: list[Visit] = []
    for item in raw_nodes:
        name, attrs = _pair(item)
        name = name.strip()
        if not name:
            notes.append("dropped visit with empty name")
            continue
        fallback = visits[-1].span.end if visits else 1
        span = _span(attrs.get("sentences", attrs.get("sentence")))
        if span is None:
            notes.append(f"visit {name!r} has no usable sentence label; using {fallback}")
            span = Span(fallback, fallback)
        visits.append(Visit(name, span))
    labels: dict[tuple[str, str], list[str | None]] = {}
    for item in raw_edges:
        src, dst, attrs = _edge_parts(item)
        transport = attrs.get("transport", attrs.get("method"))
        labels.setdefault((src.strip(), dst.strip()), []).append(
            None if transport in (None, "") else str(transport)
        )
    transports: list[str | None] = []
    for a, b in zip(visits, visits[1:]):
        queue = labels.get((a.location, b.location))
        if queue:
            transports.append(queue.pop(0))
        else:
            transports.append(None)
            if a.location != b.location:
                notes.append(f"no edge between adjacent visits {a.location!r} and {b.location!r}")
    return Trajectory(doc_id, tuple(visits), tuple(transports))


@dataclass
class DocumentResult:
    doc_id: str
    graph: LocationGraph
    trajectory: Trajectory
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class FailureReport:
    failures: list[tuple[str, str]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.failures)

    def to_json(self) -> dict:
        return {"failed": [{"doc_id": d, "error": e} for d, e in self.failures]}


class DocumentSession:
    """One document's conversation: graph, revision, trajectory, revision."""

    def __init__(self, gateway: Gateway, doc: Document, profile: str = "holocaust"):
        self.gateway = gateway
        self.doc = doc
        self.profile = profile
        self.messages: list[tuple[str, str]] = []
        self.diagnostics: list[str] = []
        self.graph: LocationGraph | None = None

    def _ask(self, prompt: str) -> str:
        self.messages.append(("user", prompt))
        text = self.gateway.ask(self.messages)
        self.messages.append(("assistant", text))
        return text

    def _ask_json(self, prompt: str) -> Any:
        text = self._ask(prompt)
        try:
            return extract_json_block(text)
        except JsonRecoveryError:
            self.diagnostics.append("response was not valid JSON; asked for a reformat")
        return extract_json_block(self._ask(REFORMAT_PROMPT))

    def extract_location_graph(self) -> LocationGraph:
        prompt = render_prompt("graph_extraction", {"testimony": self.doc.numbered()}, self.profile)
        graph = parse_graph(self._ask_json(prompt), self.diagnostics)
        for v in validate_graph(graph):
            self.diagnostics.append(f"graph: {v}")
        self.graph = graph
        return graph

    def revise_graph(self, draft: LocationGraph) -> LocationGraph:
        before = len(validate_graph(draft))
        notes: list[str] = []
        try:
            revised = parse_graph(self._ask_json(render_prompt("graph_revision", {}, self.profile)), notes)
        except ReplayMiss:
            raise
        except GatewayError as exc:
            logger.warning("%s: graph revision unusable (%s); keeping draft", self.doc.doc_id, exc)
            self.diagnostics.append(f"graph revision rejected: {exc}")
            self.graph = draft
            return draft
        after = validate_graph(revised)
        if revised == draft:
            result = draft
        elif len(after) <= before:
            self.diagnostics.extend(notes)
            result = revised
        else:
            self.diagnostics.append(
                f"graph revision rejected: {len(after)} violations vs {before} in draft"
            )
            result = draft
        self.graph = result
        return result

    def _traj_violations(self, traj: Trajectory, graph: LocationGraph | None) -> list:
        names = None if graph is None else graph.names
        return validate_trajectory(traj, self.doc, names)

    def extract_trajectory(self, graph: LocationGraph | None = None) -> Trajectory:
        graph = graph if graph is not None else self.graph
        prompt = render_prompt("trajectory_extraction", {}, self.profile)
        raw = parse_trajectory(self._ask_json(prompt), self.doc.doc_id, self.diagnostics)
        for v in self._traj_violations(raw, graph):
            self.diagnostics.append(f"trajectory: {v}")
        return raw.collapsed()

    def revise_trajectory(self, draft: Trajectory, graph: LocationGraph | None = None) -> Trajectory:
        graph = graph if graph is not None else self.graph
        before = len(self._traj_violations(draft, graph))
        notes: list[str] = []
        try:
            obj = self._ask_json(render_prompt("trajectory_revision", {}, self.profile))
            raw = parse_trajectory(obj, self.doc.doc_id, notes)
        except ReplayMiss:
            raise
        except GatewayError as exc:
            logger.warning("%s: trajectory revision unusable (%s); keeping draft", self.doc.doc_id, exc)
            self.diagnostics.append(f"trajectory revision rejected: {exc}")
            return draft
        after = len(self._traj_violations(raw, graph))
        if after <= before:
            self.diagnostics.extend(notes)
            return raw.collapsed()
        self.diagnostics.append(f"trajectory revision rejected: {after} violations vs {before} in draft")
        return draft

    def run(self, revise: bool = True) -> DocumentResult:
        graph = self.extract_location_graph()
        if revise:
            graph = self.revise_graph(graph)
        traj = self.extract_trajectory(graph)
        if revise:
            traj = self.revise_trajectory(traj, graph)
        return DocumentResult(self.doc.doc_id, graph, traj, list(self.diagnostics))


class Extractor:
    def __init__(self, gateway: Gateway, profile: str = "holocaust", revise: bool = True):
        self.gateway = gateway
        self.profile = profile
        self.revise = revise

    def session(self, doc: Document) -> DocumentSession:
        return DocumentSession(self.gateway, doc, self.profile)

    def extract_document(self, doc: Document) -> DocumentResult:
        return self.session(doc).run(revise=self.revise)

    def extract_corpus(self, docs: list[Document]) -> tuple[list[DocumentResult], FailureReport]:
        """Run every document; failed documents are reported and left out."""
        report = FailureReport()
        if not docs:
            return [], report

        def attempt(doc: Document):
            try:
                return self.extract_document(doc)
            except ReplayMiss:
                raise
            except (GatewayError, ValueError) as exc:
                logger.error("%s: extraction failed: %s", doc.doc_id, exc)
                return exc

        with ThreadPoolExecutor(max_workers=max(1, self.gateway.concurrency)) as pool:
            outcomes = list(pool.map(attempt, docs))
        results: list[DocumentResult] = []
        for doc, out in zip(docs, outcomes):
            if isinstance(out, Exception):
                report.failures.append((doc.doc_id, f"{type(out).__name__}: {out}"))
            else:
                results.append(out)
        return results, report
