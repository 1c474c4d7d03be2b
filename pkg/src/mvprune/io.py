"""Bit-exact container for multi-view token dumps, plus canonical JSON schemas.

MVTK layout (all integers little-endian):

    magic   4 bytes  b"MVTK"
    version u32      = 1
    views   u32      view count
    per view, in order:
        label_len u16, label UTF-8 bytes, n_tokens u32, dim u32
    per view, same order:
        n_tokens * dim IEEE-754 binary32 values, row-major

The reader rejects wrong magic, unknown versions, truncation, and trailing
garbage, reporting the byte offset of the failure. JSON output is canonical:
object keys sorted, reals printed with 17 significant digits (lossless for
binary64), arrays in view order, and a ``schema_version`` field on every
document.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

from .allocator import OptimizerMethod, OptimizerRun, Trial
from .core import (
    DistanceMeasure,
    Selection,
    SelectionView,
    TokenMatrix,
    ViewTokenSet,
    validate_viewset,
)
from .efficiency import EfficiencyReport
from .errors import FormatError
from .oracle import SceneConfig, SceneTruth, ViewTruth

MVTK_MAGIC = b"MVTK"
MVTK_VERSION = 1
SCHEMA_VERSION = 1

_MAX_LABEL = 0xFFFF
_U32 = 0xFFFF_FFFF


def write_mvtk(vs: ViewTokenSet, sink: BinaryIO) -> int:
    """Serialize a validated view set; returns the number of bytes written."""
    validate_viewset(vs)
    written = 0

    def put(b: bytes) -> None:
        nonlocal written
        try:
            sink.write(b)
        except OSError as exc:
            raise FormatError("IO_ERROR", f"write failed: {exc}") from exc
        written += len(b)

    put(MVTK_MAGIC)
    put(struct.pack("<II", MVTK_VERSION, vs.n_views))
    for label, tm in vs.views:
        encoded = label.encode("utf-8")
        if len(encoded) > _MAX_LABEL:
            raise FormatError("IO_ERROR", f"label {label!r} longer than {_MAX_LABEL} bytes")
        if tm.n_tokens > _U32 or tm.dim > _U32:
            raise FormatError("IO_ERROR", "token matrix too large for u32 header")
        put(struct.pack("<H", len(encoded)))
        put(encoded)
        put(struct.pack("<II", tm.n_tokens, tm.dim))
    for _, tm in vs.views:
        payload = np.ascontiguousarray(tm.data, dtype="<f4").tobytes()
        put(payload)
    return written


def read_mvtk(source: BinaryIO) -> ViewTokenSet:
    """Parse and validate an MVTK stream.

    Raises FormatError MALFORMED (with the byte offset) on structural damage
    and ValidationError DIM_MISMATCH / NONFINITE_VALUE / DUPLICATE_LABEL when
    the decoded set breaks domain invariants.
    """
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        try:
            chunk = source.read(n)
        except OSError as exc:
            raise FormatError("IO_ERROR", f"read failed at byte {offset}: {exc}") from exc
        if len(chunk) != n:
            raise FormatError(
                "MALFORMED",
                f"truncated while reading {what} at byte {offset} "
                f"(wanted {n} bytes, got {len(chunk)})",
            )
        offset += n
        return chunk

    if take(4, "magic") != MVTK_MAGIC:
        raise FormatError("MALFORMED", "bad magic at byte 0, not an MVTK file")
    version, n_views = struct.unpack("<II", take(8, "header"))
    if version != MVTK_VERSION:
        raise FormatError("MALFORMED", f"unsupported version {version}")
    headers = []
    for i in range(n_views):
        (label_len,) = struct.unpack("<H", take(2, f"label length of view {i}"))
        label = take(label_len, f"label of view {i}").decode("utf-8", errors="strict")
        n_tokens, dim = struct.unpack("<II", take(8, f"shape of view {i}"))
        if dim == 0:
            raise FormatError("MALFORMED", f"view {i} declares dim 0 at byte {offset}")
        headers.append((label, n_tokens, dim))
    views = []
    for label, n_tokens, dim in headers:
        raw = take(4 * n_tokens * dim, f"payload of view {label!r}")
        data = np.frombuffer(raw, dtype="<f4").reshape(n_tokens, dim)
        views.append((label, TokenMatrix(data)))
    trailing = source.read(1)
    if trailing:
        raise FormatError("MALFORMED", f"trailing bytes after payload at byte {offset}")
    vs = ViewTokenSet(views)
    validate_viewset(vs)
    return vs


def load_mvtk(path) -> ViewTokenSet:
    with open(path, "rb") as fh:
        return read_mvtk(fh)


def save_mvtk(vs: ViewTokenSet, path) -> int:
    with open(path, "wb") as fh:
        return write_mvtk(vs, fh)


# ---------------------------------------------------------------------------
# canonical JSON


def _canon(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            raise FormatError("IO_ERROR", f"non-finite real {obj!r} has no JSON form")
        return format(obj, ".17g")
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_canon(v)}" for k, v in items) + "}"
    raise FormatError("IO_ERROR", f"cannot canonicalize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    """Deterministic JSON text: same object, same bytes."""
    return _canon(obj) + "\n"


def _parse(text: str, kind: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("MALFORMED", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("MALFORMED", "top-level JSON value must be an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(
            "MALFORMED", f"unsupported schema_version {doc.get('schema_version')!r}"
        )
    if doc.get("kind") != kind:
        raise FormatError("MALFORMED", f"expected kind {kind!r}, got {doc.get('kind')!r}")
    return doc


def write_selection_json(sel: Selection) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "selection",
        "metric": sel.metric.value,
        "strategy": sel.strategy,
        "seed": sel.seed,
        "ratios": list(sel.ratios),
        "views": [
            {
                "label": v.label,
                "n_tokens": v.n_tokens,
                "k": v.k,
                "kept": list(v.kept),
            }
            for v in sel.views
        ],
    }
    return dumps_canonical(doc)


def read_selection_json(text: str) -> Selection:
    doc = _parse(text, "selection")
    try:
        views = tuple(
            SelectionView(
                label=v["label"],
                n_tokens=int(v["n_tokens"]),
                k=int(v["k"]),
                kept=tuple(int(i) for i in v["kept"]),
            )
            for v in doc["views"]
        )
        return Selection(
            views=views,
            metric=DistanceMeasure(doc["metric"]),
            strategy=str(doc["strategy"]),
            seed=int(doc["seed"]),
            ratios=tuple(float(r) for r in doc["ratios"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("MALFORMED", f"selection document malformed: {exc!r}") from exc


def write_run_json(run: OptimizerRun) -> str:
    # wall_time is measurement noise, not part of the result; keeping it out
    # of the document makes reruns byte-identical.
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "optimizer_run",
        "method": run.method.value,
        "budget": run.budget,
        "seed": run.seed,
        "best_index": run.best.index,
        "trials": [
            {
                "index": t.index,
                "ratios": list(t.ratios),
                "reward": t.reward,
                "penalty": t.penalty,
                "score": None if t.failed else t.score,
                "failed": t.failed,
            }
            for t in run.trials
        ],
    }
    return dumps_canonical(doc)


def read_run_json(text: str) -> OptimizerRun:
    doc = _parse(text, "optimizer_run")
    try:
        trials = []
        for t in doc["trials"]:
            failed = bool(t["failed"])
            trials.append(
                Trial(
                    index=int(t["index"]),
                    ratios=tuple(float(r) for r in t["ratios"]),
                    reward=None if failed else float(t["reward"]),
                    penalty=float(t["penalty"]),
                    score=float("-inf") if failed else float(t["score"]),
                    failed=failed,
                )
            )
        best = trials[int(doc["best_index"])]
        return OptimizerRun(
            method=OptimizerMethod(doc["method"]),
            trials=tuple(trials),
            best=best,
            budget=int(doc["budget"]),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError("MALFORMED", f"run document malformed: {exc!r}") from exc


def write_report_json(rep: EfficiencyReport) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "efficiency_report",
        "n_visual_before": rep.n_visual_before,
        "n_visual_after": rep.n_visual_after,
        "n_text": rep.n_text,
        "flops_before": rep.flops_before,
        "flops_after": rep.flops_after,
        "flops_fraction": rep.flops_fraction,
        "kv_before_bytes": rep.kv_before_bytes,
        "kv_after_bytes": rep.kv_after_bytes,
        "kv_fraction_visual": rep.kv_fraction_visual,
        "kv_fraction_full": rep.kv_fraction_full,
        "token_fraction": rep.token_fraction,
    }
    return dumps_canonical(doc)


def read_report_json(text: str) -> EfficiencyReport:
    doc = _parse(text, "efficiency_report")
    try:
        return EfficiencyReport(
            n_visual_before=int(doc["n_visual_before"]),
            n_visual_after=int(doc["n_visual_after"]),
            n_text=int(doc["n_text"]),
            flops_before=float(doc["flops_before"]),
            flops_after=float(doc["flops_after"]),
            flops_fraction=float(doc["flops_fraction"]),
            kv_before_bytes=int(doc["kv_before_bytes"]),
            kv_after_bytes=int(doc["kv_after_bytes"]),
            kv_fraction_visual=float(doc["kv_fraction_visual"]),
            kv_fraction_full=float(doc["kv_fraction_full"]),
            token_fraction=float(doc["token_fraction"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("MALFORMED", f"report document malformed: {exc!r}") from exc


def write_scene_json(cfg: SceneConfig, seed: int) -> str:
    """Persist a scene as its config plus generator seed; regeneration is exact."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "scene",
        "seed": int(seed),
        "config": {
            "n_views": cfg.n_views,
            "tokens_per_view": cfg.tokens_per_view,
            "dim": cfg.dim,
            "clusters_per_view": list(cfg.clusters_per_view),
            "cluster_std": cfg.cluster_std,
            "background_std": cfg.background_std,
            "view_weights": list(cfg.view_weights),
            "cover_radius": cfg.cover_radius,
        },
    }
    return dumps_canonical(doc)


def read_scene_json(text: str) -> tuple[SceneConfig, int]:
    doc = _parse(text, "scene")
    try:
        c = doc["config"]
        cfg = SceneConfig(
            n_views=int(c["n_views"]),
            tokens_per_view=int(c["tokens_per_view"]),
            dim=int(c["dim"]),
            clusters_per_view=tuple(int(x) for x in c["clusters_per_view"]),
            cluster_std=float(c["cluster_std"]),
            background_std=float(c["background_std"]),
            view_weights=tuple(float(w) for w in c["view_weights"]),
            cover_radius=float(c["cover_radius"]),
        )
        return cfg, int(doc["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("MALFORMED", f"scene document malformed: {exc!r}") from exc


def write_truth_json(truth: SceneTruth) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "scene_truth",
        "view_weights": list(truth.view_weights),
        "cover_radius": truth.cover_radius,
        "views": [
            {
                "label": vt.label,
                "dim": int(vt.centers.shape[1]),
                "centers": [[float(x) for x in row] for row in vt.centers],
                "members": [list(m) for m in vt.members],
            }
            for vt in truth.views
        ],
    }
    return dumps_canonical(doc)


def read_truth_json(text: str) -> SceneTruth:
    doc = _parse(text, "scene_truth")
    try:
        views = tuple(
            ViewTruth(
                label=v["label"],
                centers=np.asarray(v["centers"], dtype=np.float64).reshape(
                    len(v["centers"]), int(v["dim"])
                ),
                members=tuple(tuple(int(i) for i in m) for m in v["members"]),
            )
            for v in doc["views"]
        )
        return SceneTruth(
            views=views,
            view_weights=tuple(float(w) for w in doc["view_weights"]),
            cover_radius=float(doc["cover_radius"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("MALFORMED", f"truth document malformed: {exc!r}") from exc
