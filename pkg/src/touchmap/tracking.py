"""MAP data association of detections into trajectories via min-cost flow.

Each detection i is split into u_i -> v_i with capacity 1 and cost
log((1 - P_i) / P_i).  Link arcs v_i -> u_j (t_j = t_i + 1, distance < k_d)
cost -log P_link; source and sink arcs cost ``entry_cost``.  Every unit of
flow is one trajectory, and the flow cost equals minus the log posterior up
to the constant sum of log(1 - P_i).
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .preprocess import Detection

# Augment only when the path is cheaper than this; avoids churn on
# rounding-level zero-cost paths.
_NEG_EPS = 1e-12
_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class TrackingParams:
    k_d: float = 50.0
    entry_cost: float = 8.0

    def __post_init__(self):
        if not self.k_d > 0:
            raise ValueError(f"k_d must be positive, got {self.k_d}")
        if not self.entry_cost >= 0:
            raise ValueError(f"entry_cost must be >= 0, got {self.entry_cost}")


@dataclass(frozen=True)
class Trajectory:
    id: int
    detections: tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))

    def __len__(self):
        return len(self.detections)

    @property
    def start(self) -> int:
        return self.detections[0].t

    @property
    def end(self) -> int:
        return self.detections[-1].t

    def at(self, t: int) -> Detection | None:
        k = t - self.start
        if 0 <= k < len(self.detections):
            return self.detections[k]
        return None


def _dist(a: Detection, b: Detection) -> float:
    return math.hypot(a.x[0] - b.x[0], a.x[1] - b.x[1])


def p_link(a: Detection, b: Detection, params: TrackingParams = TrackingParams()) -> float:
    """Linear fall-off transition probability from ``a`` to ``b``."""
    if b.t != a.t + 1:
        raise ValueError(f"link needs consecutive frames, got t={a.t} -> t={b.t}")
    d = _dist(a, b)
    if d > params.k_d:
        return 0.0
    return 1.0 - d / params.k_d


def detection_cost(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"detection probability must lie in (0, 1), got {p}")
    return math.log((1.0 - p) / p)


def detection_order(d: Detection):
    return (d.t, d.x[0], d.x[1], d.value, d.prob)


@dataclass
class FlowGraph:
    """Node 0 is the source, node 2n+1 the sink, detection i owns nodes
    2i+1 (u) and 2i+2 (v).  Detections are sorted by (t, x) so every arc goes
    from a lower to a higher node id."""

    detections: list[Detection]
    arcs: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return 2 * len(self.detections) + 2

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return 2 * len(self.detections) + 1

    @staticmethod
    def u(i: int) -> int:
        return 2 * i + 1

    @staticmethod
    def v(i: int) -> int:
        return 2 * i + 2

    def arc_cost(self, tail: int, head: int) -> float | None:
        for a, b, c in self.arcs:
            if a == tail and b == head:
                return c
        return None

    def link_arcs(self):
        return [(a, b, c) for a, b, c in self.arcs if a % 2 == 0 and a != 0 and b != self.sink]


def _link_pairs(dets: list[Detection], k_d: float):
    """(i, j) index pairs with t_j = t_i + 1 and distance < k_d, sorted."""
    by_t: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_t.setdefault(d.t, []).append(i)
    pairs = []
    for t in sorted(by_t):
        nxt = by_t.get(t + 1)
        if not nxt:
            continue
        cur = by_t[t]
        tree = cKDTree(np.array([dets[j].x for j in nxt], dtype=float))
        hits = tree.query_ball_point(np.array([dets[i].x for i in cur], dtype=float), k_d)
        for i, hit in zip(cur, hits):
            for k in sorted(hit):
                j = nxt[k]
                if p_link(dets[i], dets[j], TrackingParams(k_d)) > 0.0:
                    pairs.append((i, j))
    return pairs


def build_graph(dets, params: TrackingParams = TrackingParams()) -> FlowGraph:
    dets = sorted(dets, key=detection_order)
    for d in dets:
        if d.prob is None or not 0.0 < d.prob < 1.0:
            raise ValueError(f"detection probability must lie in (0, 1): {d}")
    g = FlowGraph(dets)
    sink = g.sink
    for i, d in enumerate(dets):
        g.arcs.append((0, g.u(i), params.entry_cost))
        g.arcs.append((g.u(i), g.v(i), detection_cost(d.prob)))
        g.arcs.append((g.v(i), sink, params.entry_cost))
    for i, j in _link_pairs(dets, params.k_d):
        g.arcs.append((g.v(i), g.u(j), -math.log(p_link(dets[i], dets[j], params))))
    g.arcs.sort(key=lambda a: (a[0], a[1]))
    return g


class _Residual:
    def __init__(self, n):
        self.adj = [[] for _ in range(n)]
        self.head = []
        self.cap = []
        self.cost = []

    def add(self, u, v, cost):
        self.adj[u].append(len(self.head))
        self.head.append(v)
        self.cap.append(1)
        self.cost.append(cost)
        self.adj[v].append(len(self.head))
        self.head.append(u)
        self.cap.append(0)
        self.cost.append(-cost)


def solve_flow(graph: FlowGraph):
    """Successive shortest paths with node potentials.

    Returns (chains, path_costs): chains are lists of detection indices,
    path_costs the true cost of each accepted augmenting path.
    """
    n = graph.n_nodes
    src, sink = graph.source, graph.sink
    res = _Residual(n)
    for a, b, c in graph.arcs:
        res.add(a, b, c)

    # Bellman-Ford pass; node ids are a topological order, so one sweep is exact.
    pot = [math.inf] * n
    pot[src] = 0.0
    for u in range(n):
        if pot[u] == math.inf:
            continue
        for e in res.adj[u]:
            if res.cap[e] > 0:
                v = res.head[e]
                nd = pot[u] + res.cost[e]
                if nd < pot[v]:
                    pot[v] = nd

    path_costs = []
    while True:
        dist = [math.inf] * n
        prev = [-1] * n
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            pu = pot[u]
            for e in res.adj[u]:
                if res.cap[e] <= 0:
                    continue
                v = res.head[e]
                rc = res.cost[e] + pu - pot[v]
                if rc < 0.0:
                    rc = 0.0
                nd = d + rc
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = e
                    heapq.heappush(heap, (nd, v))
        if dist[sink] == math.inf:
            break
        for v in range(n):
            if dist[v] < math.inf:
                pot[v] += dist[v]
        # true path cost, summed along the path to avoid potential drift
        true_cost = 0.0
        v = sink
        while v != src:
            e = prev[v]
            true_cost += res.cost[e]
            v = res.head[e ^ 1]
        if not true_cost < -_NEG_EPS:
            break
        v = sink
        while v != src:
            e = prev[v]
            res.cap[e] -= 1
            res.cap[e ^ 1] += 1
            v = res.head[e ^ 1]
        path_costs.append(true_cost)

    # decode unit flows: saturated forward arcs (even edge ids) carry flow
    n_det = len(graph.detections)
    succ = {}
    starts = []
    for e in range(0, len(res.head), 2):
        if res.cap[e] != 0:
            continue
        tail, head = res.head[e ^ 1], res.head[e]
        if tail == src:
            starts.append((head - 1) // 2)
        elif tail % 2 == 0 and head != sink:
            succ[(tail - 2) // 2] = (head - 1) // 2
    chains = []
    for i in sorted(starts):
        chain = [i]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        chains.append(chain)
    assert sum(len(c) for c in chains) <= n_det
    return chains, path_costs


def prune_detections(dets: list[Detection], params: TrackingParams) -> list[bool]:
    """Flag detections that can belong to some optimal trajectory set.

    Exact necessary condition.  Some optimum has trajectories whose endpoints
    have negative cost (dropping a non-negative endpoint never hurts), and any
    run of non-negative-cost detections inside a trajectory costs at most
    2 * entry_cost (splitting the trajectory around a dearer run is cheaper).
    So a non-negative detection survives only if it can sit in such a run
    flanked by frames holding negative-cost detections.
    """
    if not dets:
        return []
    costs = [detection_cost(d.prob) for d in dets]
    t0 = min(d.t for d in dets)
    t1 = max(d.t for d in dets)
    span = t1 - t0 + 1
    has_neg = [False] * span
    minpos = [math.inf] * span
    for d, c in zip(dets, costs):
        k = d.t - t0
        if c < 0:
            has_neg[k] = True
        elif c < minpos[k]:
            minpos[k] = c
    budget = 2.0 * params.entry_cost + _PRUNE_TOL
    # best_other[k]: cheapest sum of the other frames' minpos over admissible runs
    best_other = [math.inf] * span
    for r0 in range(1, span - 1):
        if not has_neg[r0 - 1]:
            continue
        total = 0.0
        biggest = 0.0
        for r1 in range(r0, span - 1):
            if minpos[r1] == math.inf:
                break
            total += minpos[r1]
            biggest = max(biggest, minpos[r1])
            if total - biggest > budget:
                break
            if has_neg[r1 + 1]:
                for k in range(r0, r1 + 1):
                    other = total - minpos[k]
                    if other < best_other[k]:
                        best_other[k] = other
    return [c < 0 or c + best_other[d.t - t0] <= budget for d, c in zip(dets, costs)]


def solve_tracking(dets, params: TrackingParams = TrackingParams(), prune: bool = True):
    """Globally optimal (MAP) trajectory set; ids follow the sorted start order."""
    dets = sorted(dets, key=detection_order)
    if not dets:
        return []
    if prune:
        keep = prune_detections(dets, params)
        dets = [d for d, k in zip(dets, keep) if k]
    graph = build_graph(dets, params)
    chains, _ = solve_flow(graph)
    return [
        Trajectory(k, tuple(graph.detections[i] for i in chain))
        for k, chain in enumerate(chains)
    ]


def check_trajectories(dets, trajs, params: TrackingParams = TrackingParams()) -> None:
    """Raise ValueError unless ``trajs`` is a disjoint, well-formed set over ``dets``."""
    available = Counter(dets)
    used = Counter()
    for traj in trajs:
        if not traj.detections:
            raise ValueError(f"trajectory {traj.id} is empty")
        for a, b in zip(traj.detections, traj.detections[1:]):
            if b.t != a.t + 1:
                raise ValueError(f"trajectory {traj.id}: non-consecutive times {a.t} -> {b.t}")
            if p_link(a, b, params) <= 0.0:
                raise ValueError(f"trajectory {traj.id}: link at t={a.t} exceeds k_d")
        used.update(traj.detections)
    for d, n in used.items():
        if n > available[d]:
            raise ValueError(f"detection {d} used {n} times but available {available[d]}")


def map_log_posterior(dets, trajs, params: TrackingParams = TrackingParams()) -> float:
    """log P(trajectories | detections) under the MAP factorisation."""
    check_trajectories(dets, trajs, params)
    used = Counter()
    terms = []
    for traj in trajs:
        used.update(traj.detections)
        terms.append(-2.0 * params.entry_cost)
        for a, b in zip(traj.detections, traj.detections[1:]):
            terms.append(math.log(p_link(a, b, params)))
    for d in dets:
        if used[d] > 0:
            used[d] -= 1
            terms.append(math.log(d.prob))
        else:
            terms.append(math.log1p(-d.prob))
    return math.fsum(terms)


def flow_cost(trajs, params: TrackingParams = TrackingParams()) -> float:
    """Network-flow cost of a trajectory set."""
    terms = []
    for traj in trajs:
        terms.append(2.0 * params.entry_cost)
        terms.extend(detection_cost(d.prob) for d in traj.detections)
        for a, b in zip(traj.detections, traj.detections[1:]):
            terms.append(-math.log(p_link(a, b, params)))
    return math.fsum(terms)
