"""JSON/CSV readers and writers for every artifact the pipeline produces."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

from .mapbuilder import AliasDictionary
from .metrics import EvalReport, EvalRow
from .model import Document, Edge, LocationGraph, LocationNode, LocationType, Relation, Span, Trajectory, Visit
from .similarity import TransitionCount


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, obj: Any) -> None:
    write_text_atomic(path, dumps(obj))


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# graphs


def graph_to_json(graph: LocationGraph) -> dict:
    nodes = []
    for n in graph.nodes:
        attrs: dict[str, Any] = {"type": n.loc_type.label}
        if n.aliases:
            attrs["aliases"] = sorted(n.aliases)
        if n.degree:
            attrs["degree"] = n.degree
        nodes.append([n.name, attrs])
    edges = [[e.source, e.target, {"relation": e.relation.value}] for e in graph.edges]
    return {"nodes": nodes, "edges": edges}


def graph_from_json(obj: dict) -> LocationGraph:
    """Strict reader for the graph schema; no cleaning is applied."""
    nodes = []
    for name, attrs in obj["nodes"]:
        nodes.append(
            LocationNode(
                name,
                LocationType.parse(attrs.get("type")),
                frozenset(attrs.get("aliases", ())),
                int(attrs.get("degree", 0)),
            )
        )
    edges = []
    for item in obj["edges"]:
        relation = Relation.INCLUSION
        if len(item) > 2 and item[2].get("relation"):
            relation = Relation(item[2]["relation"])
        edges.append(Edge(item[0], item[1], relation))
    return LocationGraph(tuple(nodes), tuple(edges))


# trajectories


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "doc_id": traj.doc_id,
        "nodes": [[v.location, {"sentences": [v.span.start, v.span.end]}] for v in traj.visits],
        "edges": [
            [a.location, b.location, {"transport": t}]
            for a, b, t in zip(traj.visits, traj.visits[1:], traj.transports)
        ],
    }


def trajectory_from_json(obj: dict, doc_id: str | None = None) -> Trajectory:
    visits = []
    for name, attrs in obj["nodes"]:
        s = attrs["sentences"]
        span = Span(s, s) if isinstance(s, int) else Span(int(s[0]), int(s[-1]))
        visits.append(Visit(name, span))
    transports = [item[2].get("transport") if len(item) > 2 else None for item in obj["edges"]]
    if len(transports) != max(0, len(visits) - 1):
        transports = [None] * max(0, len(visits) - 1)
    return Trajectory(doc_id or obj["doc_id"], tuple(visits), tuple(transports))


# alias dictionaries


def aliases_to_json(d: AliasDictionary) -> dict:
    return {
        "groups": d.groups,
        "overrides": d.overrides,
        "canonical": dict(sorted(d.canonical.items())),
    }


def aliases_from_json(obj: dict) -> AliasDictionary:
    return AliasDictionary(
        [list(g) for g in obj.get("groups", [])],
        [list(g) for g in obj.get("overrides", [])],
        dict(obj.get("canonical", {})),
    )


def read_overrides(path: str | Path) -> list[list[str]]:
    obj = read_json(path)
    if not isinstance(obj, list) or not all(isinstance(g, list) for g in obj):
        raise ValueError(f"{path}: overrides must be a JSON list of name lists")
    return [[str(x) for x in g] for g in obj]


# evaluation


def report_to_json(report: EvalReport) -> dict:
    return {
        "rows": [
            {"doc_id": r.doc_id, "edit": r.edit, "r_edit": r.r_edit, "pred_len": r.pred_len, "ref_len": r.ref_len}
            for r in report.rows
        ],
        "aggregate": report.aggregate(),
    }


def report_from_json(obj: dict) -> EvalReport:
    return EvalReport(
        [EvalRow(r["doc_id"], float(r["edit"]), float(r["r_edit"]), int(r["pred_len"]), int(r["ref_len"])) for r in obj["rows"]]
    )


def _csv(rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def report_to_csv(report: EvalReport) -> str:
    rows: list[Sequence[Any]] = [("doc_id", "edit", "r_edit", "pred_len", "ref_len")]
    rows += [(r.doc_id, repr(r.edit), repr(r.r_edit), r.pred_len, r.ref_len) for r in report.rows]
    return _csv(rows)


def report_from_csv(text: str) -> EvalReport:
    reader = csv.DictReader(io.StringIO(text))
    return EvalReport(
        [EvalRow(r["doc_id"], float(r["edit"]), float(r["r_edit"]), int(r["pred_len"]), int(r["ref_len"])) for r in reader]
    )


def read_references(path: str | Path) -> dict[str, list[str]]:
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected an object mapping doc_id to a list of names")
    return {str(k): [str(x) for x in v] for k, v in obj.items()}


def matrix_to_csv(matrix, ids: Sequence[str]) -> str:
    rows: list[Sequence[Any]] = [("doc_id", *ids)]
    rows += [(ids[i], *(repr(float(x)) for x in matrix[i])) for i in range(len(ids))]
    return _csv(rows)


def transitions_to_csv(rows: Iterable[TransitionCount]) -> str:
    return _csv([("from", "to", "count")] + [(t.source, t.target, t.document_count) for t in rows])


def transitions_from_csv(text: str) -> list[TransitionCount]:
    return [TransitionCount(r["from"], r["to"], int(r["count"])) for r in csv.DictReader(io.StringIO(text))]


# documents


def read_document(path: str | Path) -> Document:
    path = Path(path)
    if path.suffix == ".json":
        obj = read_json(path)
        return Document(str(obj["doc_id"]), tuple(obj["segments"]))
    lines = path.read_text(encoding="utf-8").splitlines()
    return Document(path.stem, tuple(line.strip() for line in lines if line.strip()))


def read_corpus(directory: str | Path) -> list[Document]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} not found")
    files = sorted(p for p in directory.iterdir() if p.suffix in (".txt", ".json"))
    return [read_document(p) for p in files]
