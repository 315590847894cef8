"""Proximity-based reference maps from GIS labels, eval-time map
normalization, and the trajectory/map baselines."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .metrics import EmptyReference
from .model import Document, Edge, LocationGraph, LocationKind, LocationNode, LocationType, Relation

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0


class MissingParentLevel(ValueError):
    pass


class TaggerUnavailable(RuntimeError):
    pass


class GisLevel(enum.Enum):
    COUNTRY = "Country"
    COUNTY = "County"
    CITY = "City"
    NATURAL = "Natural"
    FACILITY = "Facility"


# child level -> parent level
PARENT_LEVEL = {
    GisLevel.NATURAL: GisLevel.CITY,
    GisLevel.FACILITY: GisLevel.CITY,
    GisLevel.CITY: GisLevel.COUNTY,
    GisLevel.COUNTY: GisLevel.COUNTRY,
}

_LEVEL_KIND = {
    GisLevel.COUNTRY: LocationKind.COUNTRY,
    GisLevel.COUNTY: LocationKind.COUNTY,
    GisLevel.CITY: LocationKind.CITY,
    GisLevel.NATURAL: LocationKind.NATURAL,
    GisLevel.FACILITY: LocationKind.FACILITY,
}

_KIND_LEVEL = {
    LocationKind.COUNTRY: GisLevel.COUNTRY,
    LocationKind.COUNTY: GisLevel.COUNTY,
    LocationKind.REGION: GisLevel.COUNTY,
    LocationKind.CITY: GisLevel.CITY,
    LocationKind.VILLAGE: GisLevel.CITY,
    LocationKind.NATURAL: GisLevel.NATURAL,
    LocationKind.FACILITY: GisLevel.FACILITY,
    LocationKind.GHETTO: GisLevel.FACILITY,
    LocationKind.ARMY_CAMP: GisLevel.FACILITY,
    LocationKind.CONCENTRATION_CAMP: GisLevel.FACILITY,
    LocationKind.DEATH_CAMP: GisLevel.FACILITY,
}


def level_of(kind: LocationKind) -> GisLevel | None:
    return _KIND_LEVEL.get(kind)


@dataclass(frozen=True)
class GisRecord:
    name: str
    level: GisLevel
    lat: float
    lon: float

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValueError("GIS record needs a name")
        if not isinstance(self.level, GisLevel):
            object.__setattr__(self, "level", GisLevel(str(self.level).strip().title()))
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"{self.name}: latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"{self.name}: longitude {self.lon} out of range")


def read_gis_csv(path: str | Path) -> list[GisRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            GisRecord(row["name"].strip(), GisLevel(row["level"].strip().title()), float(row["lat"]), float(row["lon"]))
            for row in csv.DictReader(fh)
        ]


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _distance(a: GisRecord, b: GisRecord) -> float:
    return haversine_km(a.lat, a.lon, b.lat, b.lon)


def nearest(child: GisRecord, candidates: Sequence[GisRecord]) -> GisRecord:
    """Closest candidate by great-circle distance; ties go to the smaller name."""
    return min(candidates, key=lambda c: (_distance(child, c), c.name))


def _by_level(records: Iterable[GisRecord]) -> dict[GisLevel, list[GisRecord]]:
    out: dict[GisLevel, list[GisRecord]] = {lvl: [] for lvl in GisLevel}
    seen: set[str] = set()
    for r in records:
        if r.name in seen:
            logger.warning("duplicate GIS record for %r ignored", r.name)
            continue
        seen.add(r.name)
        out[r.level].append(r)
    for lvl in out:
        out[lvl].sort(key=lambda r: r.name)
    return out


def _tree(records: Iterable[GisRecord], choose: Callable[[GisRecord, list[GisRecord]], GisRecord]) -> LocationGraph:
    levels = _by_level(records)
    for child, parent in PARENT_LEVEL.items():
        if levels[child] and not levels[parent] and parent is not GisLevel.COUNTRY:
            raise MissingParentLevel(f"{child.value} records need at least one {parent.value}")
    order = [GisLevel.COUNTRY, GisLevel.COUNTY, GisLevel.CITY, GisLevel.NATURAL, GisLevel.FACILITY]
    nodes = [LocationNode(r.name, LocationType(_LEVEL_KIND[lvl])) for lvl in order for r in levels[lvl]]
    edges = []
    for lvl in reversed(order):
        parent = PARENT_LEVEL.get(lvl)
        if parent is None or not levels[parent]:
            continue
        for r in levels[lvl]:
            edges.append(Edge(r.name, choose(r, levels[parent]).name, Relation.INCLUSION))
    return LocationGraph(tuple(nodes), tuple(edges))


def build_reference_map(records: Iterable[GisRecord]) -> LocationGraph:
    """Natural places and facilities -> nearest city -> nearest county -> nearest country."""
    return _tree(records, nearest)


def random_tree_baseline(records: Iterable[GisRecord], seed: int | None = 0) -> LocationGraph:
    """Same levels as the reference map with uniformly random parents."""
    rng = random.Random(seed)
    return _tree(records, lambda _child, parents: rng.choice(parents))


def normalize_map_for_eval(model_map: LocationGraph, gis: Iterable[GisRecord]) -> LocationGraph:
    """Bring a model map into the reference map's shape.

    Nodes without a GIS label are removed. An inclusion edge between two
    natural/facility-level nodes is replaced by edges from both endpoints to
    the city that contains the container (nearest GIS city as fallback).
    """
    records = {r.name: r for r in gis}
    graph = model_map.subgraph(records)
    nodes = graph.node_map()

    def level(name: str) -> GisLevel | None:
        lvl = level_of(nodes[name].kind)
        return lvl if lvl is not None else records[name].level

    def is_leaf_level(name: str) -> bool:
        return level(name) in (GisLevel.NATURAL, GisLevel.FACILITY)

    inclusion: dict[str, list[str]] = {}
    for e in graph.edges:
        if e.relation is Relation.INCLUSION:
            inclusion.setdefault(e.source, []).append(e.target)

    cities = [records[n] for n in nodes if level(n) is GisLevel.CITY]

    def city_of(name: str) -> str | None:
        stack, seen = [name], {name}
        while stack:
            cur = stack.pop(0)
            for parent in inclusion.get(cur, []):
                if level(parent) is GisLevel.CITY:
                    return parent
                if is_leaf_level(parent) and parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        if cities:
            return nearest(records[name], cities).name
        return None

    edges: dict[Edge, None] = {}
    for e in graph.edges:
        if e.relation is Relation.INCLUSION and is_leaf_level(e.source) and is_leaf_level(e.target):
            city = city_of(e.target)
            if city is None:
                logger.warning("no city to attach %r and %r to", e.source, e.target)
                continue
            edges.setdefault(Edge(e.source, city, Relation.INCLUSION))
            edges.setdefault(Edge(e.target, city, Relation.INCLUSION))
        else:
            edges.setdefault(e)
    return LocationGraph(graph.nodes, tuple(edges))


def random_trajectory_baseline(map_nodes: Iterable[str], ref_len: int, seed: int | None = 0) -> list[str]:
    """``ref_len`` independent uniform draws; repeats are allowed."""
    pool = sorted(set(map_nodes))
    if not pool:
        raise ValueError("need at least one map node")
    if ref_len < 1:
        raise ValueError("ref_len must be positive")
    rng = random.Random(seed)
    return [rng.choice(pool) for _ in range(ref_len)]


def frequent_location_baseline(ref: Sequence[str]) -> list[str]:
    if not ref:
        raise EmptyReference("reference sequence is empty")
    counts = Counter(ref)
    top = max(counts.values())
    modal = next(x for x in ref if counts[x] == top)
    return [modal] * len(ref)


class Tagger(Protocol):
    def tag(self, doc: Document) -> Iterable[tuple[str, str, int]]:
        """(entity text, label, 1-based segment index) in document order."""


NER_LABELS = frozenset({"GPE", "LOC", "LOCATION"})


def ner_sequence_baseline(doc: Document, tagger: Tagger | None) -> list[str]:
    if tagger is None:
        raise TaggerUnavailable("no entity tagger configured")
    try:
        entities = list(tagger.tag(doc))
    except TaggerUnavailable:
        raise
    except Exception as exc:
        raise TaggerUnavailable(f"tagger failed: {exc}") from exc
    out: list[str] = []
    for text, label, _seg in entities:
        if label.upper() not in NER_LABELS:
            continue
        if not out or out[-1] != text:
            out.append(text)
    return out


class GazetteerTagger:
    """Phrase-list tagger: longest gazetteer phrase wins at each position."""

    def __init__(self, entries: dict[str, str]):
        self.entries = dict(entries)
        self._phrases = sorted(self.entries, key=lambda p: (-len(p), p))

    @classmethod
    def from_file(cls, path: str | Path) -> GazetteerTagger:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def tag(self, doc: Document) -> list[tuple[str, str, int]]:
        out = []
        for idx, seg in enumerate(doc.segments, start=1):
            pos = 0
            found = []
            while pos < len(seg):
                for phrase in self._phrases:
                    end = pos + len(phrase)
                    if seg.startswith(phrase, pos) and _boundary(seg, pos, end):
                        found.append((phrase, self.entries[phrase], idx))
                        pos = end
                        break
                else:
                    pos += 1
            out.extend(found)
        return out


def _boundary(text: str, start: int, end: int) -> bool:
    before = start == 0 or not text[start - 1].isalnum()
    after = end == len(text) or not text[end].isalnum()
    return before and after
