"""Styled export of maps and trajectories to DOT, GraphML or JSON.

Only attributes are produced; layout and drawing are left to external tools.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass

import networkx as nx

from .model import LocationGraph, LocationKind, Relation, Trajectory

logger = logging.getLogger(__name__)

FORMATS = ("dot", "graphml", "json")


class UnknownFormat(ValueError):
    pass


# (shape, fill colour) per kind
_KIND_STYLE = {
    LocationKind.CONTINENT: ("circle", "#8c564b"),
    LocationKind.COUNTRY: ("circle", "#8c564b"),
    LocationKind.COUNTY: ("circle", "#8c564b"),
    LocationKind.REGION: ("circle", "#8c564b"),
    LocationKind.CITY: ("square", "#1f77b4"),
    LocationKind.VILLAGE: ("square", "#1f77b4"),
    LocationKind.GHETTO: ("triangle", "#2ca02c"),
    LocationKind.ARMY_CAMP: ("triangle", "#2ca02c"),
    LocationKind.CONCENTRATION_CAMP: ("triangle", "#2ca02c"),
    LocationKind.DEATH_CAMP: ("triangle", "#2ca02c"),
    LocationKind.NATURAL: ("triangle", "#2ca02c"),
    LocationKind.FACILITY: ("diamond", "#e6c619"),
    LocationKind.UNKNOWN: ("ellipse", "#c7c7c7"),
}

RAMP_LIGHT = (0xFC, 0xBB, 0xA1)
RAMP_DARK = (0x67, 0x00, 0x0D)


@dataclass(frozen=True)
class VisualStyle:
    min_degree: int = 0
    base_size: float = 0.3
    size_per_degree: float = 0.08
    map_edge_color: str = "#9e9e9e"
    trajectory_width: float = 2.5


def ramp_color(ordinal: int, total: int) -> str:
    """Colour of trajectory edge ``ordinal`` (0-based) of ``total``; darker later."""
    t = 1.0 if total <= 1 else ordinal / (total - 1)
    rgb = [round(lo + (hi - lo) * t) for lo, hi in zip(RAMP_LIGHT, RAMP_DARK)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _layers(graph: LocationGraph, traj: Trajectory | None, style: VisualStyle):
    degrees = graph.degrees()
    on_path = set()
    path: list[tuple[str, str, str | None]] = []
    if traj is not None:
        names = set(graph.names)
        kept = []
        for v, transport in zip(traj.visits, (None, *traj.transports)):
            if v.location not in names:
                logger.warning("%s: visit %r is not on the map; not drawn", traj.doc_id, v.location)
                continue
            if kept and kept[-1][0] == v.location:
                continue
            kept.append((v.location, transport))
        on_path = {name for name, _ in kept}
        path = [(a, b, t) for (a, _), (b, t) in zip(kept, kept[1:])]
    nodes = []
    for n in graph.nodes:
        deg = degrees[n.name]
        if deg < style.min_degree and n.name not in on_path:
            continue
        shape, color = _KIND_STYLE[n.kind]
        nodes.append(
            {
                "id": n.name,
                "kind": n.loc_type.label,
                "shape": shape,
                "color": color,
                "size": round(style.base_size + style.size_per_degree * deg, 4),
                "degree": deg,
            }
        )
    shown = {n["id"] for n in nodes}
    edges = [
        {"source": e.source, "target": e.target, "relation": e.relation.value}
        for e in graph.edges
        if e.source in shown and e.target in shown
    ]
    trajectory = [
        {
            "source": a,
            "target": b,
            "ordinal": i + 1,
            "color": ramp_color(i, len(path)),
            "transport": t,
        }
        for i, (a, b, t) in enumerate(path)
    ]
    return nodes, edges, trajectory


def _q(text: object) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _to_dot(nodes, edges, trajectory, style: VisualStyle) -> str:
    lines = ["digraph locmap {", '  node [style=filled, fontname="Helvetica"];']
    for n in nodes:
        lines.append(
            f"  {_q(n['id'])} [label={_q(n['id'])}, kind={_q(n['kind'])}, shape={n['shape']},"
            f" fillcolor={_q(n['color'])}, width={n['size']}, height={n['size']}, degree={n['degree']}];"
        )
    for e in edges:
        dashed = ", style=dashed" if e["relation"] == Relation.PROXIMITY.value else ""
        lines.append(
            f"  {_q(e['source'])} -> {_q(e['target'])} [relation={e['relation']},"
            f" color={_q(style.map_edge_color)}{dashed}];"
        )
    for t in trajectory:
        extra = f", label={_q(t['transport'])}" if t["transport"] else ""
        lines.append(
            f"  {_q(t['source'])} -> {_q(t['target'])} [layer=trajectory, ordinal={t['ordinal']},"
            f" color={_q(t['color'])}, penwidth={style.trajectory_width}{extra}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _to_graphml(nodes, edges, trajectory) -> str:
    g = nx.MultiDiGraph()
    for n in nodes:
        g.add_node(n["id"], kind=n["kind"], shape=n["shape"], color=n["color"], size=n["size"], degree=n["degree"])
    for i, e in enumerate(edges):
        g.add_edge(e["source"], e["target"], key=f"m{i}", layer="map", relation=e["relation"])
    for t in trajectory:
        attrs = {"layer": "trajectory", "ordinal": t["ordinal"], "color": t["color"]}
        if t["transport"]:
            attrs["transport"] = t["transport"]
        g.add_edge(t["source"], t["target"], key=f"t{t['ordinal']}", **attrs)
    buf = io.BytesIO()
    nx.write_graphml(g, buf, encoding="utf-8")
    return buf.getvalue().decode("utf-8")


def export_visualization(
    graph: LocationGraph,
    trajectory: Trajectory | None = None,
    fmt: str = "dot",
    style: VisualStyle | None = None,
) -> str:
    style = style or VisualStyle()
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise UnknownFormat(f"unknown export format {fmt!r}; choose from {', '.join(FORMATS)}")
    nodes, edges, path = _layers(graph, trajectory, style)
    if fmt == "dot":
        return _to_dot(nodes, edges, path, style)
    if fmt == "graphml":
        return _to_graphml(nodes, edges, path)
    return json.dumps({"nodes": nodes, "edges": edges, "trajectory": path}, ensure_ascii=False, indent=2) + "\n"
