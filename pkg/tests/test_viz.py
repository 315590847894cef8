from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import pydot
import pytest

from locmap.model import LocationGraph, Span, Trajectory, Visit
from locmap.viz import UnknownFormat, VisualStyle, export_visualization, ramp_color

from .conftest import graph

POLAND = graph({"Krakow": "City", "Poland": "Country", "Lodz": "City"}, [("Krakow", "Poland"), ("Lodz", "Poland")])
TRIP = Trajectory("d", (Visit("Krakow", Span(1, 2)), Visit("Lodz", Span(3, 3))), ("by train",))

GOLDEN_DOT = """\
digraph locmap {
  node [style=filled, fontname="Helvetica"];
  "Krakow" [label="Krakow", kind="City", shape=square, fillcolor="#1f77b4", width=0.38, height=0.38, degree=1];
  "Poland" [label="Poland", kind="Country", shape=circle, fillcolor="#8c564b", width=0.46, height=0.46, degree=2];
  "Lodz" [label="Lodz", kind="City", shape=square, fillcolor="#1f77b4", width=0.38, height=0.38, degree=1];
  "Krakow" -> "Poland" [relation=inclusion, color="#9e9e9e"];
  "Lodz" -> "Poland" [relation=inclusion, color="#9e9e9e"];
  "Krakow" -> "Lodz" [layer=trajectory, ordinal=1, color="#67000d", penwidth=2.5, label="by train"];
}
"""


def parse_dot(text):
    (g,) = pydot.graph_from_dot_data(text)
    return g


def test_empty_map_is_valid_dot():
    g = parse_dot(export_visualization(LocationGraph()))
    assert g.get_name() == "locmap"
    assert [n.get_name() for n in g.get_nodes()] == ["node"]


def test_golden_dot():
    text = export_visualization(POLAND, TRIP)
    assert text == GOLDEN_DOT
    g = parse_dot(text)
    assert len(g.get_edges()) == 3


def test_ramp_darkens():
    colors = [ramp_color(i, 4) for i in range(4)]
    assert colors[0] == "#fcbba1" and colors[-1] == "#67000d"
    assert [int(c[1:3], 16) for c in colors] == sorted((int(c[1:3], 16) for c in colors), reverse=True)


def test_degree_filter_on_star():
    star = graph({"hub": "Country", **{f"leaf{i}": "City" for i in range(5)}}, [(f"leaf{i}", "hub") for i in range(5)])
    out = json.loads(export_visualization(star, fmt="json", style=VisualStyle(min_degree=2)))
    assert [n["id"] for n in out["nodes"]] == ["hub"]
    assert out["edges"] == []


def test_trajectory_nodes_survive_filter():
    out = json.loads(export_visualization(POLAND, TRIP, "json", VisualStyle(min_degree=2)))
    assert {n["id"] for n in out["nodes"]} == {"Krakow", "Poland", "Lodz"}


def test_visit_off_map_is_skipped():
    trip = Trajectory("d", (Visit("Krakow", Span(1, 1)), Visit("Atlantis", Span(2, 2)), Visit("Lodz", Span(3, 3))))
    out = json.loads(export_visualization(POLAND, trip, "json"))
    assert [(t["source"], t["target"]) for t in out["trajectory"]] == [("Krakow", "Lodz")]


def test_graphml_parses():
    text = export_visualization(POLAND, TRIP, "graphml")
    root = ET.fromstring(text.encode("utf-8"))
    ns = {"g": "http://graphml.graphdrawing.org/xmlns"}
    assert len(root.findall(".//g:node", ns)) == 3
    assert len(root.findall(".//g:edge", ns)) == 3


def test_unknown_format():
    with pytest.raises(UnknownFormat):
        export_visualization(POLAND, fmt="svg")
