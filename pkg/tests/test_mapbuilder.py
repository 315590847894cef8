from __future__ import annotations

import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from locmap.gateway import SchemaError
from locmap.mapbuilder import (
    AliasDictionary,
    UnionFind,
    apply_aliases,
    build_alias_dictionary,
    keeps_edge,
    merge_graphs,
    parse_alias_groups,
    sparsify,
    surface_counts,
    trajectory_to_map,
)
from locmap.model import Edge, LocationGraph, LocationKind, LocationNode, LocationType, Relation, Span, Trajectory, Visit

from .conftest import graph
from .strategies import location_graphs


class TestUnionFind:
    def test_components(self):
        uf = UnionFind()
        for a, b in [("a", "b"), ("c", "d"), ("b", "c")]:
            uf.add(a)
            uf.add(b)
            uf.union(a, b)
        uf.add("e")
        assert uf.components() == [["a", "b", "c", "d"], ["e"]]


class TestAliasDictionary:
    def test_model_group(self, make_gateway):
        gw = make_gateway([json.dumps([["US", "USA", "America"]])])
        counts = {"USA": 3, "US": 1, "America": 1}
        d = build_alias_dictionary(["America", "US", "USA"], gw, counts)
        assert d.canonical == {"US": "USA", "USA": "USA", "America": "USA"}

    def test_foreign_member_dropped(self, make_gateway):
        gw = make_gateway(['[["US", "USA", "Atlantis"]]'])
        notes: list[str] = []
        d = build_alias_dictionary(["US", "USA"], gw, diagnostics=notes)
        assert d.groups == [["US", "USA"]]
        assert any("Atlantis" in n for n in notes)

    def test_empty_names_make_no_call(self, make_gateway):
        gw = make_gateway([])
        assert len(build_alias_dictionary([], gw)) == 0
        assert gw.transport.calls == 0

    def test_prompt_lists_sorted_names(self, make_gateway):
        seen = []

        def reply(req):
            seen.append(req.messages[-1][1])
            return "[]"

        build_alias_dictionary(["b", "a", "a"], make_gateway(reply))
        assert '["a", "b"]' in seen[0]

    def test_representative_rule(self):
        # frequency first, then length, then lexicographic
        assert AliasDictionary.build([["US", "USA"]], counts={"US": 2, "USA": 1}).resolve("USA") == "US"
        assert AliasDictionary.build([["US", "USA"]]).resolve("US") == "USA"
        assert AliasDictionary.build([["Lwow", "Lviv"]]).resolve("Lwow") == "Lviv"

    def test_transitive_closure(self):
        d = AliasDictionary.build([["a", "b"], ["c", "d"]], overrides=[["b", "c"]])
        assert len({d.resolve(x) for x in "abcd"}) == 1
        assert d.closed_groups() == [["a", "b", "c", "d"]]

    def test_override_pins_representative(self):
        d = AliasDictionary.build([["USA", "US"]], overrides=[["United States", "USA"]], counts={"USA": 9})
        assert {d.resolve(x) for x in ["USA", "US", "United States"]} == {"United States"}

    def test_with_overrides(self):
        d = AliasDictionary.build([["a", "b"]]).with_overrides([["b", "c"]])
        assert d.resolve("c") == d.resolve("a")

    def test_schema(self):
        with pytest.raises(SchemaError):
            parse_alias_groups({"a": 1}, ["a"])
        assert parse_alias_groups({"groups": [["a", "b"]]}, ["a", "b"]) == [["a", "b"]]

    @given(st.lists(st.lists(st.sampled_from("abcdefgh"), min_size=2, max_size=4), max_size=6))
    def test_canonical_is_closed_and_idempotent(self, groups):
        d = AliasDictionary.build(groups)
        for name, rep in d.canonical.items():
            assert d.resolve(rep) == rep
            assert any(name in g and rep in g for g in d.closed_groups())
        for g in groups:
            assert len({d.resolve(x) for x in g}) == 1


US = graph({"NY": "City", "US": "Country", "USA": "Country"}, [("NY", "US"), ("NY", "USA")])


class TestApplyAliases:
    def test_merges_nodes_and_edges(self):
        d = AliasDictionary.build([["US", "USA"]])
        out = apply_aliases(US, d)
        assert out.names == ["NY", "USA"]
        assert out.edges == (Edge("NY", "USA"),)
        assert out.node("USA").aliases == frozenset({"US"})

    def test_rank_tie_keeps_first(self):
        g = LocationGraph(
            (LocationNode("Bedzin", LocationType.parse("City")), LocationNode("Bendin", LocationType.parse("Village")))
        )
        notes: list[str] = []
        out = apply_aliases(g, AliasDictionary.build([["Bedzin", "Bendin"]], counts={"Bendin": 2}), notes)
        assert out.node("Bendin").kind is LocationKind.CITY
        assert notes and "type conflict" in notes[0]

    def test_more_general_type_wins(self):
        g = LocationGraph(
            (LocationNode("Berlin", LocationType.parse("City")), LocationNode("Berlin", LocationType.parse("Country")))
        )
        assert apply_aliases(g, AliasDictionary()).node("Berlin").kind is LocationKind.COUNTRY

    def test_empty_dictionary_is_identity(self):
        assert apply_aliases(US, AliasDictionary()) == US

    def test_collapsed_edge_becomes_self_loop_and_is_dropped(self):
        g = graph({"US": "Country", "USA": "Country"}, proximity=[("US", "USA")])
        assert apply_aliases(g, AliasDictionary.build([["US", "USA"]])).edges == ()


class TestMerge:
    def test_shared_node(self):
        a = graph({"Krakow": "City", "Poland": "Country"}, [("Krakow", "Poland")])
        b = graph({"Lodz": "City", "Poland": "Country"}, [("Lodz", "Poland")])
        m = merge_graphs([a, b])
        assert m.names == ["Krakow", "Poland", "Lodz"]
        assert m.node("Poland").degree == 2

    def test_self_merge(self):
        d = AliasDictionary.build([["US", "USA"]])
        assert merge_graphs([US, US], d) == apply_aliases(US, d)

    def test_empty(self):
        assert merge_graphs([]) == LocationGraph()

    def test_surface_counts(self):
        assert surface_counts([US, US, graph({"US": "Country"})]) == Counter({"US": 3, "NY": 2, "USA": 2})


class TestSparsify:
    def test_same_kind_removed(self):
        g = graph({"France": "Country", "Germany": "Country"}, [("France", "Germany")])
        assert sparsify(g).edges == ()

    def test_reversed_removed(self):
        g = graph({"Krakow": "City", "Poland": "Country"}, [("Poland", "Krakow")])
        assert sparsify(g).edges == ()

    def test_hierarchy_respecting_kept(self):
        g = graph({"Krakow": "City", "Poland": "Country"}, [("Krakow", "Poland")])
        assert sparsify(g) == g

    def test_rank_equal_different_kinds_kept(self):
        g = graph({"Boathouse": "Facility", "Windermere": "Natural"}, [("Boathouse", "Windermere")])
        assert sparsify(g).edges == g.edges

    def test_proximity_exempt_unless_flagged(self):
        g = graph({"Krakow": "City", "Lodz": "City"}, proximity=[("Krakow", "Lodz")])
        assert sparsify(g).edges == g.edges
        assert sparsify(g, prune_proximity=True).edges == ()

    def test_unknown_sorts_below_everything(self):
        nodes = {"Town near Cracow": "Unknown", "Cracow": "City"}
        assert sparsify(graph(nodes, [("Town near Cracow", "Cracow")])).edges
        assert not sparsify(graph(nodes, [("Cracow", "Town near Cracow")])).edges

    def test_keeps_edge_table(self):
        city = LocationNode("a", LocationType.parse("City"))
        village = LocationNode("b", LocationType.parse("Village"))
        assert keeps_edge(village, city, Relation.INCLUSION)
        assert keeps_edge(city, village, Relation.INCLUSION)
        assert not keeps_edge(city, city, Relation.INCLUSION)

    @given(location_graphs())
    def test_invariants(self, g):
        s = sparsify(g)
        assert sparsify(s) == s
        assert s.names == g.names
        nodes = s.node_map()
        for e in s.edges:
            if e.relation is Relation.INCLUSION:
                a, b = nodes[e.source], nodes[e.target]
                assert a.kind is not b.kind
                assert a.rank >= b.rank


class TestTrajectoryToMap:
    def test_alias_collapse(self):
        t = Trajectory("d", (Visit("US", Span(1, 2)), Visit("USA", Span(3, 5))))
        out = trajectory_to_map(t, apply_aliases(US, AliasDictionary.build([["US", "USA"]])), AliasDictionary.build([["US", "USA"]]))
        assert out.visits == (Visit("USA", Span(1, 5)),)

    def test_unmapped_flagged(self):
        t = Trajectory("d", (Visit("Atlantis", Span(1, 1)),))
        notes: list[str] = []
        out = trajectory_to_map(t, US, AliasDictionary(), notes)
        assert out == t
        assert "Atlantis" in notes[0]

    def test_identity(self):
        t = Trajectory("d", (Visit("NY", Span(1, 2)), Visit("US", Span(3, 3))), ("ship",))
        assert trajectory_to_map(t, US) == t
