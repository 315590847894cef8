"""Trajectory and map evaluation: Edit, R-Edit, edge precision/recall/F1 and
alignment of predicted location names to reference names."""

from __future__ import annotations

import json
import logging
import re
import statistics
import unicodedata
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from .gateway import Gateway, extract_json_block, render_prompt
from .gateway import SchemaError
from .model import LocationGraph, Trajectory

logger = logging.getLogger(__name__)


class EmptyReference(ValueError):
    pass


class MissingReference(KeyError):
    pass


def edit_distance(pred: Sequence[Hashable], ref: Sequence[Hashable]) -> int:
    """Levenshtein distance with unit insertion, deletion and substitution."""
    prev = list(range(len(ref) + 1))
    for i, p in enumerate(pred, start=1):
        cur = [i]
        left = i
        for j, r in enumerate(ref):
            # inlined min() of substitution, deletion and insertion; this is the hot loop
            v = prev[j] if p == r else prev[j] + 1
            if prev[j + 1] + 1 < v:
                v = prev[j + 1] + 1
            if left + 1 < v:
                v = left + 1
            cur.append(v)
            left = v
        prev = cur
    return prev[-1]


def normalized_edit(pred: Sequence[Hashable], ref: Sequence[Hashable]) -> float:
    """Edit distance divided by the reference length; can exceed 1."""
    if not ref:
        raise EmptyReference("reference sequence is empty")
    return edit_distance(pred, ref) / len(ref)


def recall_edit_cost(pred: Sequence[Hashable], ref: Sequence[Hashable]) -> int:
    """Cheapest script turning ``pred`` into ``ref`` when deleting from ``pred`` is free."""
    prev = list(range(len(ref) + 1))
    for p in pred:
        cur = [0]
        left = 0
        for j, r in enumerate(ref):
            v = prev[j] if p == r else prev[j] + 1
            if prev[j + 1] < v:
                v = prev[j + 1]
            if left + 1 < v:
                v = left + 1
            cur.append(v)
            left = v
        prev = cur
    return prev[-1]


def r_edit(pred: Sequence[Hashable], ref: Sequence[Hashable]) -> float:
    if not ref:
        raise EmptyReference("reference sequence is empty")
    return recall_edit_cost(pred, ref) / len(ref)


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class MapScore:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    flags: tuple[str, ...] = ()

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


def map_accuracy(model: LocationGraph, reference: LocationGraph) -> MapScore:
    """Edge precision/recall/F1 on the shared node set.

    Edges are compared as unlabeled directed pairs. A zero denominator gives
    0.0 and a flag naming the undefined quantity.
    """
    common = set(model.names) & set(reference.names)
    e_m = {p for p in model.edge_pairs() if p[0] in common and p[1] in common}
    e_r = {p for p in reference.edge_pairs() if p[0] in common and p[1] in common}
    tp = len(e_m & e_r)
    fp = len(e_m - e_r)
    fn = len(e_r - e_m)
    flags = []
    if tp + fp == 0:
        flags.append("precision_undefined")
    if tp + fn == 0:
        flags.append("recall_undefined")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1_undefined")
    return MapScore(precision, recall, f1, tp, fp, fn, tuple(flags))


# Polish/Czech spellings rendered the way English sources tend to write them.
_TRANSLIT = [
    ("szcz", "shch"),
    ("sz", "sh"),
    ("cz", "ch"),
    ("rz", "zh"),
    ("ch", "kh"),
    ("c", "ts"),
    ("w", "v"),
    ("j", "y"),
]
_ARTICLES = {"the", "a", "an"}
_SPECIAL = str.maketrans({"ł": "l", "Ł": "L", "ø": "o", "Ø": "O", "ß": "ss", "đ": "d", "Đ": "D"})


def _fold(text: str) -> str:
    text = unicodedata.normalize("NFKD", text.translate(_SPECIAL))
    return "".join(c for c in text if not unicodedata.combining(c)).casefold()


def _tokens(text: str) -> list[str]:
    words = re.sub(r"[^\w\s]|_", " ", _fold(text)).split()
    # a lone article is the whole name, not a prefix
    while len(words) > 1 and words[0] in _ARTICLES:
        words = words[1:]
    return words


def _transliterate(word: str) -> str:
    out, i = [], 0
    while i < len(word):
        for src, dst in _TRANSLIT:
            if word.startswith(src, i):
                out.append(dst)
                i += len(src)
                break
        else:
            out.append(word[i])
            i += 1
    return "".join(out)


def normalize_name(name: str) -> str:
    """Casefolded, diacritic-free, punctuation-free, no leading article."""
    return " ".join(_tokens(name))


def name_keys(name: str) -> dict[str, str]:
    """Match keys for deterministic alignment.

    ``full`` unwraps parentheses, ``bare`` drops parenthesised text, and the
    ``*_tr`` variants apply the transliteration table.
    """
    full = _tokens(name)
    bare = _tokens(re.sub(r"\([^)]*\)|\[[^\]]*\]", " ", name))
    return {
        "full": " ".join(full),
        "full_tr": " ".join(_transliterate(w) for w in full),
        "bare": " ".join(bare),
        "bare_tr": " ".join(_transliterate(w) for w in bare),
    }


# (prediction key, gold keys it may equal), strictest first
_TIERS = (
    ("full", ("full",)),
    ("full_tr", ("full_tr",)),
    ("bare", ("full", "bare")),
    ("bare_tr", ("full_tr", "bare_tr")),
)


def align_deterministic(pred_names: Sequence[str], gold_names: Sequence[str]) -> list[int]:
    """Match each predicted name to the first gold name sharing a key.

    Every gold name is tried at one tier before moving to a looser one.
    """
    gold_keys = [name_keys(g) for g in gold_names]
    ids = []
    for name in pred_names:
        keys = name_keys(name)
        found = -1
        for pred_key, gold_fields in _TIERS:
            key = keys[pred_key]
            if not key:
                continue
            found = next(
                (gi for gi, gk in enumerate(gold_keys) if any(gk[f] == key for f in gold_fields)), -1
            )
            if found != -1:
                break
        ids.append(found)
    return ids


def parse_alignment(obj, n_pred: int, n_gold: int, diagnostics: list[str] | None = None) -> list[int]:
    notes = diagnostics if diagnostics is not None else []
    ids = obj.get("ids") if isinstance(obj, dict) else obj
    if not isinstance(ids, list):
        raise SchemaError('expected {"ids": [...]}')
    out = []
    for i in range(n_pred):
        try:
            v = int(ids[i])
        except (IndexError, TypeError, ValueError):
            notes.append(f"alignment id {i} missing or not an integer; using -1")
            v = -1
        if not -1 <= v < n_gold:
            notes.append(f"alignment id {v} out of range for {n_gold} gold names; using -1")
            v = -1
        out.append(v)
    if len(ids) != n_pred:
        notes.append(f"alignment returned {len(ids)} ids for {n_pred} predictions")
    return out


def align_locations(
    pred_names: Sequence[str],
    gold_names: Sequence[str],
    gateway: Gateway | None = None,
    diagnostics: list[str] | None = None,
) -> list[int]:
    """Index into ``gold_names`` for each prediction, or -1.

    With a gateway the alignment prompt decides; otherwise names are matched
    deterministically by :func:`align_deterministic`.
    """
    if not pred_names:
        return []
    if gateway is None:
        return align_deterministic(pred_names, gold_names)
    prompt = render_prompt(
        "eval_alignment",
        {
            "predicted": json.dumps(list(pred_names), ensure_ascii=False),
            "gold": json.dumps(list(gold_names), ensure_ascii=False),
        },
    )
    obj = extract_json_block(gateway.ask([("user", prompt)]))
    return parse_alignment(obj, len(pred_names), len(gold_names), diagnostics)


def _collapse(seq: list) -> list:
    out = []
    for x in seq:
        if not out or out[-1] != x:
            out.append(x)
    return out


def aligned_symbols(pred_names: Sequence[str], gold_names: Sequence[str], ids: Sequence[int]) -> tuple[list, list]:
    """Rewrite both sequences into gold ids; unmatched predictions get unique sentinels."""
    first = {}
    for i, g in enumerate(gold_names):
        first.setdefault(g, i)
    ref = _collapse([first[g] for g in gold_names])
    pred = _collapse([first[gold_names[k]] if k >= 0 else ("unmatched", i) for i, k in enumerate(ids)])
    return pred, ref


@dataclass(frozen=True)
class EvalRow:
    doc_id: str
    edit: float
    r_edit: float
    pred_len: int
    ref_len: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    COLUMNS = ("edit", "r_edit", "pred_len", "ref_len")

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def aggregate(self) -> dict[str, dict[str, float]]:
        out = {}
        for col in self.COLUMNS:
            values = self.column(col)
            out[col] = {
                "mean": statistics.fmean(values) if values else 0.0,
                "std": statistics.pstdev(values) if values else 0.0,
            }
        return out


def evaluate_trajectories(
    preds: Sequence[Trajectory],
    refs: dict[str, Sequence[str]],
    gateway: Gateway | None = None,
    diagnostics: list[str] | None = None,
) -> EvalReport:
    """Score each prediction against its reference after aligning names.

    Lengths are counted after collapsing adjacent duplicates.
    """
    rows = []
    for traj in preds:
        if traj.doc_id not in refs:
            raise MissingReference(traj.doc_id)
        gold = list(refs[traj.doc_id])
        names = traj.locations
        ids = align_locations(names, gold, gateway, diagnostics)
        pred_sym, ref_sym = aligned_symbols(names, gold, ids)
        rows.append(
            EvalRow(
                traj.doc_id,
                normalized_edit(pred_sym, ref_sym),
                r_edit(pred_sym, ref_sym),
                len(pred_sym),
                len(ref_sym),
            )
        )
    return EvalReport(rows)
