"""Command-line entry point: ``locmap <verb> ...``.

Exit codes: 0 success (possibly partial), 1 input error, 2 total failure,
3 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import serialize as io
from .config import Config, ConfigError
from .extraction import Extractor
from .gateway import GatewayError
from .mapbuilder import build_alias_dictionary, merge_graphs, sparsify, surface_counts, trajectory_to_map
from .metrics import evaluate_trajectories, map_accuracy
from .model import LocationKind, LocationType, Trajectory
from .refmap import (
    GazetteerTagger,
    build_reference_map,
    frequent_location_baseline,
    ner_sequence_baseline,
    normalize_map_for_eval,
    random_trajectory_baseline,
    random_tree_baseline,
    read_gis_csv,
)
from .similarity import DEFAULT_TRANSITION_KINDS, pairwise_matrix, top_k_pairs, transition_counts
from .viz import FORMATS, VisualStyle, export_visualization

logger = logging.getLogger("locmap")

OK, INPUT_ERROR, TOTAL_FAILURE, CONFIG_ERROR = 0, 1, 2, 3


class InputError(Exception):
    pass


def _config(args) -> Config:
    cfg = Config.load(args.config)
    overrides = {
        "transport": args.transport,
        "replay_dir": args.replay_dir,
        "cache_dir": args.cache_dir,
        "base_url": args.base_url,
        "model": args.model,
        "concurrency": args.concurrency,
        "profile": args.profile,
        "seed": getattr(args, "seed", None),
        "d_max": getattr(args, "d_max", None),
        "type_penalty": getattr(args, "type_penalty", None),
        "min_degree": getattr(args, "min_degree", None),
        "min_docs": getattr(args, "min_docs", None),
    }
    return cfg.updated(overrides)


def _require_dir(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise InputError(f"directory {p} not found")
    return p


def _require_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file {p} not found")
    return p


def _read_graphs(extract_dir: Path):
    files = sorted(extract_dir.glob("*.graph.json"))
    if not files:
        raise InputError(f"no *.graph.json files in {extract_dir}")
    return [io.graph_from_json(io.read_json(f)) for f in files]


def _read_trajectories(traj_dir: Path) -> list[Trajectory]:
    files = sorted(traj_dir.glob("*.trajectory.json"))
    if not files:
        raise InputError(f"no *.trajectory.json files in {traj_dir}")
    return [io.trajectory_from_json(io.read_json(f)) for f in files]


# commands


def run_extract(cfg: Config, corpus_dir, out_dir) -> int:
    try:
        docs = io.read_corpus(corpus_dir)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    out = Path(out_dir)
    extractor = Extractor(cfg.gateway(), profile=cfg.profile, revise=cfg.revise)
    results, failures = extractor.extract_corpus(docs)
    for r in results:
        io.write_json(out / f"{r.doc_id}.graph.json", io.graph_to_json(r.graph))
        io.write_json(out / f"{r.doc_id}.trajectory.json", io.trajectory_to_json(r.trajectory))
        io.write_json(out / f"{r.doc_id}.diagnostics.json", {"doc_id": r.doc_id, "diagnostics": r.diagnostics})
    if failures:
        io.write_json(out / "failures.json", failures.to_json())
    n_nodes = sum(len(r.graph.nodes) for r in results)
    n_edges = sum(len(r.graph.edges) for r in results)
    print(f"{len(results)} ok, {len(failures.failures)} failed; {n_nodes} nodes, {n_edges} edges")
    if docs and not results:
        return TOTAL_FAILURE
    return OK


def run_merge(cfg: Config, extract_dir, out_map, out_aliases, overrides=None, offline=False) -> int:
    graphs = _read_graphs(_require_dir(extract_dir))
    groups = io.read_overrides(_require_file(overrides)) if overrides else []
    counts = surface_counts(graphs)
    notes: list[str] = []
    gateway = None if offline else cfg.gateway(cfg.alias_model)
    aliases = build_alias_dictionary(sorted(counts), gateway, counts, groups, cfg.profile, notes)
    merged = sparsify(merge_graphs(graphs, aliases, notes), prune_proximity=cfg.prune_proximity)
    io.write_json(out_map, io.graph_to_json(merged))
    io.write_json(out_aliases, io.aliases_to_json(aliases))
    for note in notes:
        logger.info(note)
    print(f"map: {len(merged.nodes)} nodes, {len(merged.edges)} edges; {len(aliases)} aliased names")
    return OK


def run_trajectories(extract_dir, map_file, aliases_file, out_dir) -> int:
    graph = io.graph_from_json(io.read_json(_require_file(map_file)))
    aliases = io.aliases_from_json(io.read_json(_require_file(aliases_file)))
    trajs = _read_trajectories(_require_dir(extract_dir))
    out = Path(out_dir)
    for t in trajs:
        notes: list[str] = []
        mapped = trajectory_to_map(t, graph, aliases, notes)
        for note in notes:
            logger.warning(note)
        io.write_json(out / f"{t.doc_id}.trajectory.json", io.trajectory_to_json(mapped))
    print(f"{len(trajs)} trajectories mapped")
    return OK


def run_evaluate(
    cfg: Config, pred_dir, ref_file, out_prefix, mode="deterministic", map_file=None, reference_map=None
) -> int:
    trajs = _read_trajectories(_require_dir(pred_dir))
    refs = io.read_references(_require_file(ref_file))
    trajs = [t for t in trajs if t.doc_id in refs]
    if not trajs:
        raise InputError("no predicted trajectory has a reference")
    gateway = cfg.gateway(cfg.eval_model) if mode == "gateway" else None
    report = evaluate_trajectories(trajs, refs, gateway)
    payload = io.report_to_json(report)
    if map_file or reference_map:
        if not (map_file and reference_map):
            raise InputError("--map and --reference-map go together")
        model = io.graph_from_json(io.read_json(_require_file(map_file)))
        ref = io.graph_from_json(io.read_json(_require_file(reference_map)))
        s = map_accuracy(model, ref)
        payload["map"] = {"precision": s.precision, "recall": s.recall, "f1": s.f1, "flags": list(s.flags)}
        print(f"map: P {s.precision:.3f} R {s.recall:.3f} F1 {s.f1:.3f}")
    io.write_json(f"{out_prefix}.json", payload)
    io.write_text_atomic(f"{out_prefix}.csv", io.report_to_csv(report))
    agg = report.aggregate()
    print(
        f"{len(report.rows)} documents; Edit {agg['edit']['mean']:.3f}, R-Edit {agg['r_edit']['mean']:.3f},"
        f" length {agg['pred_len']['mean']:.2f} ± {agg['pred_len']['std']:.2f}"
    )
    return OK


def run_evaluate_map(cfg: Config, map_file, gis_file, out_file) -> int:
    model = io.graph_from_json(io.read_json(_require_file(map_file)))
    records = read_gis_csv(_require_file(gis_file))
    keep = set(model.names)
    shared = [r for r in records if r.name in keep]
    model_n = normalize_map_for_eval(model, records)
    reference = build_reference_map(shared)
    random_tree = random_tree_baseline(shared, cfg.seed)
    scores = {
        "model": map_accuracy(model_n, reference),
        "random_tree": map_accuracy(random_tree, reference),
    }
    out = {
        name: {"precision": s.precision, "recall": s.recall, "f1": s.f1, "flags": list(s.flags)}
        for name, s in scores.items()
    }
    io.write_json(out_file, out)
    for name, s in scores.items():
        print(f"{name}: P {s.precision:.3f} R {s.recall:.3f} F1 {s.f1:.3f}")
    return OK


def run_refmap(gis_file, out_file) -> int:
    ref = build_reference_map(read_gis_csv(_require_file(gis_file)))
    io.write_json(out_file, io.graph_to_json(ref))
    print(f"reference map: {len(ref.nodes)} nodes, {len(ref.edges)} edges")
    return OK


def run_baseline(cfg: Config, kind, ref_file, out_file, map_file=None, corpus_dir=None, gazetteer=None) -> int:
    refs = io.read_references(_require_file(ref_file))
    out: dict[str, list[str]] = {}
    if kind == "random":
        if not map_file:
            raise InputError("the random baseline needs --map")
        nodes = io.graph_from_json(io.read_json(_require_file(map_file))).names
        for i, (doc_id, ref) in enumerate(sorted(refs.items())):
            out[doc_id] = random_trajectory_baseline(nodes, len(ref), seed=cfg.seed + i)
    elif kind == "frequent":
        out = {doc_id: frequent_location_baseline(ref) for doc_id, ref in sorted(refs.items())}
    else:
        if not corpus_dir or not gazetteer:
            raise InputError("the ner baseline needs --corpus and --gazetteer")
        tagger = GazetteerTagger.from_file(_require_file(gazetteer))
        docs = {d.doc_id: d for d in io.read_corpus(_require_dir(corpus_dir))}
        out = {doc_id: ner_sequence_baseline(docs[doc_id], tagger) for doc_id in sorted(refs) if doc_id in docs}
    io.write_json(out_file, out)
    print(f"{kind} baseline for {len(out)} documents")
    return OK


def run_similarity(cfg: Config, map_file, traj_dir, out_file, measure="weighted_edit", top_k=5) -> int:
    graph = io.graph_from_json(io.read_json(_require_file(map_file)))
    known = set(graph.names)
    trajs = []
    for t in _read_trajectories(_require_dir(traj_dir)):
        kept = tuple(v for v in t.visits if v.location in known)
        if len(kept) < len(t.visits):
            logger.warning("%s: %d visits not on the map are ignored", t.doc_id, len(t.visits) - len(kept))
        trajs.append(Trajectory(t.doc_id, kept).collapsed())
    ids = [t.doc_id for t in trajs]
    matrix = pairwise_matrix(trajs, graph, cfg.distance(), measure)
    io.write_text_atomic(out_file, io.matrix_to_csv(matrix, ids))
    for a, b, d in top_k_pairs(matrix, ids, top_k):
        print(f"{a}\t{b}\t{d:.4f}")
    return OK


def _parse_kinds(text: str | None):
    if text is None or text == "holocaust":
        return DEFAULT_TRANSITION_KINDS
    if text == "none":
        return None
    kinds = []
    for part in text.split(","):
        t = LocationType.parse(part)
        if t.kind is LocationKind.UNKNOWN:
            raise InputError(f"unknown location kind {part!r}")
        kinds.append(t.kind)
    return frozenset(kinds)


def run_transitions(cfg: Config, traj_dir, out_file, map_file=None, kinds="holocaust") -> int:
    trajs = _read_trajectories(_require_dir(traj_dir))
    graph = io.graph_from_json(io.read_json(_require_file(map_file))) if map_file else None
    keep = _parse_kinds(kinds)
    if keep is not None and graph is None:
        raise InputError("a kind filter needs --map")
    rows = transition_counts(trajs, graph, keep, cfg.min_docs)
    io.write_text_atomic(out_file, io.transitions_to_csv(rows))
    print(f"{len(rows)} transitions in at least {cfg.min_docs} documents")
    return OK


def run_visualize(cfg: Config, map_file, out_file, traj_file=None, fmt="dot") -> int:
    graph = io.graph_from_json(io.read_json(_require_file(map_file)))
    traj = io.trajectory_from_json(io.read_json(_require_file(traj_file))) if traj_file else None
    text = export_visualization(graph, traj, fmt, VisualStyle(min_degree=cfg.min_degree))
    io.write_text_atomic(out_file, text)
    return OK


def run_pipeline(cfg: Config, corpus_dir, out_dir, refs=None, overrides=None, offline_aliases=False) -> int:
    out = Path(out_dir)
    status = run_extract(cfg, corpus_dir, out / "extract")
    if status != OK:
        return status
    run_merge(cfg, out / "extract", out / "map.json", out / "aliases.json", overrides, offline_aliases)
    run_trajectories(out / "extract", out / "map.json", out / "aliases.json", out / "trajectories")
    if refs:
        run_evaluate(cfg, out / "trajectories", refs, out / "report")
    graph = io.graph_from_json(io.read_json(out / "map.json"))
    trajs = _read_trajectories(out / "trajectories")
    rows = transition_counts(trajs, graph, None, cfg.min_docs)
    io.write_text_atomic(out / "transitions.csv", io.transitions_to_csv(rows))
    if len(trajs) >= 2:
        run_similarity(cfg, out / "map.json", out / "trajectories", out / "similarity.csv")
    first = sorted((out / "trajectories").glob("*.trajectory.json"))[0]
    run_visualize(cfg, out / "map.json", out / "map.dot", first, "dot")
    return OK


# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--transport", choices=["replay", "http"])
    p.add_argument("--replay-dir")
    p.add_argument("--cache-dir")
    p.add_argument("--base-url")
    p.add_argument("--model")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--profile")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locmap", description="Location maps and trajectories from narrative corpora.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="per-document graph and trajectory extraction")
    p.add_argument("corpus_dir")
    p.add_argument("out_dir")

    p = sub.add_parser("merge", help="alias dictionary, union and sparsification")
    p.add_argument("extract_dir")
    p.add_argument("--overrides")
    p.add_argument("--out-map", default="map.json")
    p.add_argument("--out-aliases", default="aliases.json")
    p.add_argument("--offline", action="store_true", help="skip the model; use overrides only")

    p = sub.add_parser("trajectories", help="position trajectories on the merged map")
    p.add_argument("extract_dir")
    p.add_argument("--map", required=True)
    p.add_argument("--aliases", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="Edit / R-Edit against reference trajectories")
    p.add_argument("pred_dir")
    p.add_argument("ref_file")
    p.add_argument("--mode", choices=["deterministic", "gateway"], default="deterministic")
    p.add_argument("--map", help="model map to score against --reference-map")
    p.add_argument("--reference-map")
    p.add_argument("--out", default="report", help="output prefix (.json and .csv are written)")

    p = sub.add_parser("evaluate-map", help="map precision/recall/F1 against a GIS reference map")
    p.add_argument("map_file")
    p.add_argument("gis_file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="map_scores.json")

    p = sub.add_parser("refmap", help="build the proximity reference map from GIS records")
    p.add_argument("gis_file")
    p.add_argument("--out", default="reference_map.json")

    p = sub.add_parser("baseline", help="random, most-frequent or NER-sequence trajectories")
    p.add_argument("kind", choices=["random", "frequent", "ner"])
    p.add_argument("ref_file")
    p.add_argument("--map")
    p.add_argument("--corpus")
    p.add_argument("--gazetteer")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="baseline.json")

    p = sub.add_parser("similarity", help="pairwise trajectory distance matrix")
    p.add_argument("map_file")
    p.add_argument("traj_dir")
    p.add_argument("--measure", choices=["weighted_edit", "dtw"], default="weighted_edit")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--d-max", type=float)
    p.add_argument("--type-penalty", type=float)
    p.add_argument("--out", default="similarity.csv")

    p = sub.add_parser("transitions", help="transitions shared by several documents")
    p.add_argument("traj_dir")
    p.add_argument("--map")
    p.add_argument("--filter", default="holocaust", help="'holocaust', 'none' or comma-separated kinds")
    p.add_argument("--min-docs", type=int)
    p.add_argument("--out", default="transitions.csv")

    p = sub.add_parser("visualize", help="export the map (and a trajectory) for rendering")
    p.add_argument("map_file")
    p.add_argument("--trajectory")
    p.add_argument("--format", choices=FORMATS, default="dot")
    p.add_argument("--min-degree", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run every stage")
    p.add_argument("corpus_dir")
    p.add_argument("out_dir")
    p.add_argument("--refs")
    p.add_argument("--overrides")
    p.add_argument("--offline-aliases", action="store_true")

    for sp in sub.choices.values():
        _common(sp)
    return parser


def _dispatch(args, cfg: Config) -> int:
    c = args.command
    if c == "extract":
        return run_extract(cfg, args.corpus_dir, args.out_dir)
    if c == "merge":
        return run_merge(cfg, args.extract_dir, args.out_map, args.out_aliases, args.overrides, args.offline)
    if c == "trajectories":
        return run_trajectories(args.extract_dir, args.map, args.aliases, args.out)
    if c == "evaluate":
        return run_evaluate(
            cfg, args.pred_dir, args.ref_file, args.out, args.mode, args.map, args.reference_map
        )
    if c == "evaluate-map":
        return run_evaluate_map(cfg, args.map_file, args.gis_file, args.out)
    if c == "refmap":
        return run_refmap(args.gis_file, args.out)
    if c == "baseline":
        return run_baseline(cfg, args.kind, args.ref_file, args.out, args.map, args.corpus, args.gazetteer)
    if c == "similarity":
        return run_similarity(cfg, args.map_file, args.traj_dir, args.out, args.measure, args.top_k)
    if c == "transitions":
        return run_transitions(cfg, args.traj_dir, args.out, args.map, args.filter)
    if c == "visualize":
        return run_visualize(cfg, args.map_file, args.out, args.trajectory, args.format)
    if c == "pipeline":
        return run_pipeline(cfg, args.corpus_dir, args.out_dir, args.refs, args.overrides, args.offline_aliases)
    raise AssertionError(c)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    try:
        return _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (InputError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except GatewayError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return TOTAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
