"""Stage artifact files: detections / trajectories CSV and selection JSON.

Floats are written with ``repr`` so every stage can be re-read exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .preprocess import Detection
from .tracking import Trajectory
from .workspace import ConflictSet, SelectionResult, Transform, WorkspaceArray

DETECTION_HEADER = "t,x_mm,y_mm,value,prob"
TRAJECTORY_HEADER = "traj_id,t,x_mm,y_mm,value,prob"


class ArtifactError(ValueError):
    """A stage artifact file could not be parsed."""


def _det_fields(d: Detection) -> str:
    return f"{d.t},{d.x[0]!r},{d.x[1]!r},{d.value!r},{d.prob!r}"


def dump_detections(dets) -> str:
    return "\n".join([DETECTION_HEADER] + [_det_fields(d) for d in dets]) + "\n"


def _rows(path, header):
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != header:
        raise ArtifactError(f"{path}: expected header {header!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != header.count(",") + 1:
            raise ArtifactError(f"{path}: line {lineno}: expected {header.count(',') + 1} fields")
        yield lineno, fields


def _parse_det(fields, where):
    try:
        t, x, y, v, p = fields
        return Detection(int(t), (float(x), float(y)), float(v), float(p))
    except ValueError as exc:
        raise ArtifactError(f"{where}: {exc}") from None


def load_detections(path) -> list[Detection]:
    return [_parse_det(f, f"{path}: line {n}") for n, f in _rows(path, DETECTION_HEADER)]


def dump_trajectories(trajs) -> str:
    lines = [TRAJECTORY_HEADER]
    for tr in trajs:
        lines.extend(f"{tr.id},{_det_fields(d)}" for d in tr.detections)
    return "\n".join(lines) + "\n"


def load_trajectories(path) -> list[Trajectory]:
    groups: dict[int, list[Detection]] = {}
    for n, fields in _rows(path, TRAJECTORY_HEADER):
        try:
            tid = int(fields[0])
        except ValueError:
            raise ArtifactError(f"{path}: line {n}: bad trajectory id {fields[0]!r}") from None
        groups.setdefault(tid, []).append(_parse_det(fields[1:], f"{path}: line {n}"))
    return [Trajectory(tid, tuple(sorted(ds, key=lambda d: d.t))) for tid, ds in sorted(groups.items())]


def selection_to_dict(sel: SelectionResult, arr: WorkspaceArray, conflicts=()) -> dict:
    centers = sel.transform.apply(arr.centers)
    return {
        "transform": {"translation": list(sel.transform.translation)},
        "chosen": list(sel.chosen),
        "total_score": sel.total_score,
        "scores": [{"traj_id": k, "score": sel.scores[k]} for k in sorted(sel.scores)],
        "assignments": [
            {"traj_id": tid, "t": t, "row": ws[0], "col": ws[1]}
            for (tid, t), ws in sorted(sel.assignment.items())
        ],
        "workspaces": [
            {"row": w.index[0], "col": w.index[1], "center": [float(c[0]), float(c[1])], "radius": w.radius}
            for w, c in zip(arr.workspaces, centers)
        ],
        "conflicts": [{"ids": sorted(c.ids), "time": c.time} for c in conflicts],
    }


def dump_selection(sel: SelectionResult, arr: WorkspaceArray, conflicts=()) -> str:
    return json.dumps(selection_to_dict(sel, arr, conflicts), indent=1) + "\n"


def load_selection(path):
    """Returns (SelectionResult, list of ConflictSet, raw dict)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: {exc}") from None
    try:
        sel = SelectionResult(
            tuple(doc["chosen"]),
            Transform(tuple(doc["transform"]["translation"])),
            float(doc["total_score"]),
            {(a["traj_id"], a["t"]): (a["row"], a["col"]) for a in doc["assignments"]},
            {s["traj_id"]: s["score"] for s in doc.get("scores", [])},
        )
        conflicts = [ConflictSet(frozenset(c["ids"]), c["time"]) for c in doc.get("conflicts", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed selection: {exc!r}") from None
    return sel, conflicts, doc
