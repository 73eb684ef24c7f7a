"""Actuator workspace restriction: which trajectories to render, and where.

Workspaces are circles (cylindrical workspaces seen from above).  At every
timestep each active trajectory must be matched to a distinct workspace that
contains its point; sets of trajectories for which no such matching exists
are conflicts.  The best placement is found by scanning a grid of
translations and, for each, choosing the highest-scoring conflict-free subset.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .tracking import Trajectory

CONTAIN_TOL = 1e-9  # mm; boundary is inclusive
D_SCALE = 1.02
D_OFFSET = 1.04
D_FALLOFF = 0.04


class MultiContainmentError(ValueError):
    """A point lies in more than one workspace (overlapping or touching geometry)."""


@dataclass(frozen=True)
class Workspace:
    index: tuple[int, int]
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class WorkspaceArray:
    workspaces: tuple[Workspace, ...]
    rows: int = 2
    cols: int = 4
    row_pitch: float = 50.0
    col_pitch: float = 37.0

    def __post_init__(self):
        object.__setattr__(self, "workspaces", tuple(self.workspaces))
        idx = [w.index for w in self.workspaces]
        expected = [(r, c) for r in range(self.rows) for c in range(self.cols)]
        if sorted(idx) != expected:
            raise ValueError(f"workspace indices must cover the {self.rows}x{self.cols} grid once")

    @classmethod
    def grid(cls, rows=2, cols=4, row_pitch=50.0, col_pitch=37.0, radius=None):
        """Regular array with workspace (0, 0) centred at the origin.

        Columns advance along +x by ``col_pitch``, rows along +y by
        ``row_pitch``.  Default radius is half the smaller pitch.
        """
        if radius is None:
            radius = min(row_pitch, col_pitch) / 2.0
        ws = tuple(
            Workspace((r, c), (c * col_pitch, r * row_pitch), radius)
            for r in range(rows) for c in range(cols)
        )
        return cls(ws, rows, cols, row_pitch, col_pitch)

    @property
    def centers(self) -> np.ndarray:
        return np.array([w.center for w in self.workspaces], dtype=float)

    @property
    def radii(self) -> np.ndarray:
        return np.array([w.radius for w in self.workspaces], dtype=float)

    def by_index(self, index) -> Workspace:
        for w in self.workspaces:
            if w.index == tuple(index):
                return w
        raise KeyError(index)

    def overlapping(self) -> bool:
        """True if any two workspaces share interior area."""
        c, r = self.centers, self.radii
        for i, j in itertools.combinations(range(len(c)), 2):
            if np.hypot(*(c[i] - c[j])) < r[i] + r[j] - CONTAIN_TOL:
                return True
        return False


@dataclass(frozen=True)
class Transform:
    """Placement of the workspace array.  Only translation is supported;
    ``scale`` and ``rotation`` are reserved and must stay at identity."""

    translation: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    rotation: float = 0.0

    def __post_init__(self):
        tx, ty = self.translation
        if not (math.isfinite(tx) and math.isfinite(ty)):
            raise ValueError(f"non-finite translation {self.translation}")
        if self.scale != 1.0 or self.rotation != 0.0:
            raise NotImplementedError("only translations are supported")
        object.__setattr__(self, "translation", (float(tx), float(ty)))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) + np.asarray(self.translation)


@dataclass(frozen=True)
class ConflictSet:
    ids: frozenset
    time: int


@dataclass
class SelectionResult:
    chosen: tuple[int, ...]
    transform: Transform
    total_score: float
    assignment: dict = field(default_factory=dict)  # (traj id, t) -> (row, col)
    scores: dict = field(default_factory=dict)  # traj id -> score


# ------------------------------------------------------------------ geometry


def _geometry(points, arr: WorkspaceArray, m: Transform):
    """Containment mask and D weights, shape (n_points, n_workspaces)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    centers = m.apply(arr.centers)
    radii = arr.radii
    diff = pts[:, None, :] - centers[None, :, :]
    d2 = np.einsum("nkc,nkc->nk", diff, diff)
    inside = np.sqrt(d2) <= radii[None, :] + CONTAIN_TOL
    w = D_SCALE * (D_OFFSET - D_FALLOFF * np.minimum(d2, radii ** 2) / radii ** 2)
    return inside, w


def containing(point, arr: WorkspaceArray, m: Transform = Transform()) -> list[tuple[int, int]]:
    """Indices of every transformed workspace that contains ``point``."""
    inside, _ = _geometry(point, arr, m)
    return [arr.workspaces[k].index for k in np.flatnonzero(inside[0])]


def locate(point, arr: WorkspaceArray, m: Transform = Transform()):
    """The workspace containing ``point``, or None.

    Raises MultiContainmentError when more than one workspace contains it.
    """
    hits = containing(point, arr, m)
    if len(hits) > 1:
        raise MultiContainmentError(f"point {tuple(point)} lies in workspaces {hits}")
    return hits[0] if hits else None


def _has_saturating_matching(neighbours: list[set]) -> bool:
    """Hall's condition: every subset S of trajectories has |N(S)| >= |S|."""
    n = len(neighbours)
    for size in range(1, n + 1):
        for subset in itertools.combinations(neighbours, size):
            if len(set().union(*subset)) < size:
                return False
    return True


def feasible(active, arr: WorkspaceArray, m: Transform = Transform()) -> bool:
    """Can every (traj id, point) be given its own containing workspace?"""
    neighbours = [set(containing(p, arr, m)) for _, p in active]
    return _has_saturating_matching(neighbours)


def _match(neighbours: dict) -> dict | None:
    """Deterministic augmenting-path matching, traj id -> workspace index."""
    owner: dict = {}

    def try_assign(tid, seen):
        for ws in sorted(neighbours[tid]):
            if ws in seen:
                continue
            seen.add(ws)
            if ws not in owner or try_assign(owner[ws], seen):
                owner[ws] = tid
                return True
        return False

    for tid in sorted(neighbours):
        if not try_assign(tid, set()):
            return None
    return {tid: ws for ws, tid in owner.items()}


def _timesteps(trajs):
    times = sorted({d.t for tr in trajs for d in tr.detections})
    for tau in times:
        yield tau, [(tr.id, tr.at(tau).x) for tr in trajs if tr.at(tau) is not None]


def _conflicts_at(active_nbrs: dict) -> list[frozenset]:
    """Minimal Hall-violating trajectory sets at one timestep."""
    found = [frozenset([tid]) for tid, nb in active_nbrs.items() if not nb]
    rest = sorted(tid for tid, nb in active_nbrs.items() if nb)
    if all(len(active_nbrs[tid]) == 1 for tid in rest):
        by_ws: dict = {}
        for tid in rest:
            by_ws.setdefault(next(iter(active_nbrs[tid])), []).append(tid)
        for ids in by_ws.values():
            found.extend(frozenset(p) for p in itertools.combinations(ids, 2))
        return found
    for size in range(2, len(rest) + 1):
        for subset in itertools.combinations(rest, size):
            s = frozenset(subset)
            if any(f <= s for f in found):
                continue
            if len(set().union(*(active_nbrs[t] for t in subset))) < size:
                found.append(s)
    return found


def minimal_conflicts(trajs, arr: WorkspaceArray, m: Transform = Transform()) -> list[ConflictSet]:
    """Minimal invalid trajectory sets, deduplicated across timesteps.

    A set is reported once, at the earliest witnessing timestep; sets that
    contain another conflict are dropped since they are implied.
    """
    first_seen: dict = {}
    for tau, active in _timesteps(trajs):
        nbrs = {tid: set(containing(p, arr, m)) for tid, p in active}
        for s in _conflicts_at(nbrs):
            first_seen.setdefault(s, tau)
    sets = sorted(first_seen, key=lambda s: (len(s), sorted(s)))
    minimal = []
    for s in sets:
        if not any(k < s for k in minimal):
            minimal.append(s)
    out = [ConflictSet(s, first_seen[s]) for s in minimal]
    return sorted(out, key=lambda c: (c.time, sorted(c.ids)))


# ------------------------------------------------------------------- scoring


def weight_d(point, ws: Workspace, center=None) -> float:
    """Centre-preferring weight, 1.0608 at the centre down to 1.02 at the rim."""
    c = np.asarray(ws.center if center is None else center, dtype=float)
    d2 = float(np.sum((np.asarray(point, dtype=float) - c) ** 2))
    if math.sqrt(d2) > ws.radius + CONTAIN_TOL:
        raise ValueError(f"point {tuple(point)} lies outside workspace {ws.index}")
    d2 = min(d2, ws.radius ** 2)
    return D_SCALE * (D_OFFSET - D_FALLOFF * d2 / ws.radius ** 2)


def _log_weights(points, arr, m):
    """log of the largest D over containing workspaces; nan outside all."""
    inside, w = _geometry(points, arr, m)
    best = np.where(inside, w, -np.inf).max(axis=1)
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(best), np.log(np.where(np.isfinite(best), best, 1.0)), np.nan)


def score(traj: Trajectory, arr: WorkspaceArray, m: Transform = Transform()) -> float:
    """Sum of log(P/(1-P) * D) over the trajectory points inside a workspace.

    Where workspaces touch or overlap, D is taken from the nearest centre.
    """
    logw = _log_weights([d.x for d in traj.detections], arr, m)
    terms = [math.log(d.prob / (1.0 - d.prob)) + lw
             for d, lw in zip(traj.detections, logw.tolist()) if not math.isnan(lw)]
    return math.fsum(terms)


# ----------------------------------------------------------------- selection


def _branch_and_bound(ids, conflicts, scores):
    """Exact max-score subset of ``ids`` containing no complete conflict.

    Ties go to the lexicographically smallest sorted id tuple.
    """
    cands = sorted(i for i in ids if scores[i] > 0)
    cand_set = set(cands)
    live = [c for c in conflicts if c <= cand_set]
    touching = {i: [c for c in live if i in c] for i in cands}
    suffix = [0.0] * (len(cands) + 1)
    for k in range(len(cands) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + scores[cands[k]]

    best = [0.0, ()]
    chosen: list = []
    chosen_set: set = set()

    def total_of(sel):
        return math.fsum(scores[i] for i in sel)

    def visit(k, current):
        if k == len(cands):
            sel = tuple(chosen)
            tot = total_of(sel)
            if tot > best[0] or (tot == best[0] and sel < best[1]):
                best[0], best[1] = tot, sel
            return
        slack = 1e-9 * (1.0 + abs(best[0]))
        if current + suffix[k] < best[0] - slack:
            return
        i = cands[k]
        if all(not (c - {i}) <= chosen_set for c in touching[i]):
            chosen.append(i)
            chosen_set.add(i)
            visit(k + 1, current + scores[i])
            chosen.pop()
            chosen_set.discard(i)
        visit(k + 1, current)

    visit(0, 0.0)
    return best[1], best[0]


def select(trajs, conflicts, scores, arr: WorkspaceArray | None = None,
           transform: Transform = Transform()) -> SelectionResult:
    """Best conflict-free subset for a fixed placement.

    ``trajs`` may be Trajectory objects or plain ids; ``scores`` maps id to
    score.  When ``arr`` is given, chosen trajectories get per-timestep
    workspace assignments.
    """
    ids = [t.id if isinstance(t, Trajectory) else t for t in trajs]
    sets = [c.ids if isinstance(c, ConflictSet) else frozenset(c) for c in conflicts]
    chosen, total = _branch_and_bound(ids, sets, scores)
    result = SelectionResult(chosen, transform, total, {}, dict(scores))
    if arr is not None:
        by_id = {t.id: t for t in trajs if isinstance(t, Trajectory)}
        result.assignment = assign_workspaces([by_id[i] for i in chosen], arr, transform)
    return result


def assign_workspaces(trajs, arr: WorkspaceArray, m: Transform = Transform()) -> dict:
    """(traj id, t) -> workspace index for a conflict-free trajectory set."""
    out = {}
    for tau, active in _timesteps(trajs):
        nbrs = {tid: set(containing(p, arr, m)) for tid, p in active}
        matching = _match(nbrs)
        if matching is None:
            raise ValueError(f"trajectories {sorted(nbrs)} cannot share workspaces at t={tau}")
        for tid, ws in matching.items():
            out[(tid, tau)] = ws
    return out


# ----------------------------------------------------------- transform search


@dataclass(frozen=True)
class TransformGrid:
    """Translations to try.

    Either an explicit list, or a regular grid with spacing ``step`` whose
    points put workspace (0, 0)'s centre on ``anchor + k * step``.  Grid
    points are kept only if at least one workspace covers a valid pixel.
    """

    translations: tuple | None = None
    step: float | None = None
    anchor: tuple[float, float] = (0.0, 0.0)

    def resolve(self, arr: WorkspaceArray, valid_points=None) -> list[Transform]:
        if self.translations is not None:
            out = [Transform(tuple(t)) for t in self.translations]
        else:
            if valid_points is None or len(valid_points) == 0:
                raise ValueError("a regular transform grid needs the valid pixel centres")
            if not (self.step and self.step > 0):
                raise ValueError(f"grid step must be positive, got {self.step}")
            out = _regular_grid(arr, np.asarray(valid_points, dtype=float), self.step, self.anchor)
        if not out:
            raise ValueError("empty transform grid")
        return out


def _regular_grid(arr, valid_points, step, anchor):
    centers, radii = arr.centers, arr.radii
    lo = valid_points.min(axis=0) - centers.max(axis=0) - radii.max()
    hi = valid_points.max(axis=0) - centers.min(axis=0) + radii.max()
    ax, ay = anchor
    kx = np.arange(math.floor((lo[0] - ax) / step), math.ceil((hi[0] - ax) / step) + 1)
    ky = np.arange(math.floor((lo[1] - ay) / step), math.ceil((hi[1] - ay) / step) + 1)
    tx = ax + kx * step
    ty = ay + ky * step
    tree = cKDTree(valid_points)
    out = []
    for y in ty:
        row = np.column_stack([tx, np.full_like(tx, y)])
        placed = row[:, None, :] + centers[None, :, :]
        dist, _ = tree.query(placed.reshape(-1, 2))
        covers = (dist.reshape(len(tx), -1) <= radii[None, :] + CONTAIN_TOL).any(axis=1)
        out.extend(Transform((float(x), float(y))) for x in tx[covers])
    return out


class _PointTable:
    """Flat arrays over all trajectory points, for fast per-placement scoring."""

    def __init__(self, trajs):
        self.trajs = sorted(trajs, key=lambda t: t.id)
        pts, logit, owner, times = [], [], [], []
        for k, tr in enumerate(self.trajs):
            for d in tr.detections:
                pts.append(d.x)
                logit.append(math.log(d.prob / (1.0 - d.prob)))
                owner.append(k)
                times.append(d.t)
        self.points = np.array(pts, dtype=float).reshape(-1, 2)
        self.logit = np.array(logit)
        self.owner = np.array(owner, dtype=int)
        self.times = np.array(times, dtype=int)

    def evaluate(self, arr: WorkspaceArray, m: Transform) -> SelectionResult:
        if not self.trajs:
            return SelectionResult((), m, 0.0, {}, {})
        logw = _log_weights(self.points, arr, m)
        covered = ~np.isnan(logw)
        full = np.ones(len(self.trajs), dtype=bool)
        np.logical_and.at(full, self.owner, covered)
        if not full.any():
            return SelectionResult((), m, 0.0, {}, {})
        scores = {}
        for k in np.flatnonzero(full):
            sel = self.owner == k
            scores[self.trajs[k].id] = math.fsum((self.logit[sel] + logw[sel]).tolist())
        cands = [self.trajs[k] for k in np.flatnonzero(full) if scores[self.trajs[k].id] > 0]
        if not cands:
            return SelectionResult((), m, 0.0, {}, scores)
        conflicts = minimal_conflicts(cands, arr, m)
        return select(cands, conflicts, scores, arr, m)


def search_transforms(trajs, arr: WorkspaceArray, grid, valid_points=None, jobs: int = 1) -> SelectionResult:
    """Best placement over the grid; ties resolve to the first in scan order.

    ``grid`` is a TransformGrid or a sequence of Transforms.  Regular grids
    are scanned row-major (y outer, x inner).  Trajectories that leave every
    workspace at some timestep are unselectable and skipped early.
    """
    if isinstance(grid, TransformGrid):
        transforms = grid.resolve(arr, valid_points)
    else:
        transforms = list(grid)
    if not transforms:
        raise ValueError("empty transform grid")
    table = _PointTable(trajs)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda m: table.evaluate(arr, m), transforms))
    else:
        results = [table.evaluate(arr, m) for m in transforms]
    best = results[0]
    for res in results[1:]:
        if res.total_score > best.total_score:
            best = res
    # report scores of every trajectory (selectable or not) at the winner
    for t in table.trajs:
        best.scores.setdefault(t.id, score(t, arr, best.transform))
    return best
