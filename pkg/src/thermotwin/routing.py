"""Thermal-aware grid pathfinding.

Walkable cells (anything but buildings and water) form an 8-connected graph.
Edge cost blends normalized length against normalized heat exposure of the
edge's head node:

    cost(e) = alpha * len(e)/len_max
            + (1 - alpha) * (W(head) - W_min)/(W_max - W_min) * len(e)/len_max

so alpha=1 is the pure shortest path and alpha=0 the pure coolest path
(length still breaks ties through the len factor). Heat attribution to edge
heads keeps costs additive, which is what Dijkstra and A* need; the reported
per-route average UTCI is the plain node mean.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .scene import GridScene, LandCover

_NEIGHBORS = tuple((dr, dc, math.sqrt(2.0) if dr and dc else 1.0)
                   for dr in (-1, 0, 1) for dc in (-1, 0, 1)
                   if (dr, dc) != (0, 0))


class RouteError(ValueError):
    pass


@dataclass(frozen=True)
class GridGraph:
    nrows: int
    ncols: int
    cell_size: float
    walkable: np.ndarray    # (rows, cols) bool
    weights: np.ndarray     # (rows, cols) float64, UTCI degC (NaN where unwalkable)
    w_min: float
    w_max: float

    def node_count(self) -> int:
        return int(self.walkable.sum())

    def edges(self):
        """Yield (r, c, rr, cc, length_cells) once per direction."""
        nr, nc = self.nrows, self.ncols
        for r in range(nr):
            for c in range(nc):
                if not self.walkable[r, c]:
                    continue
                for dr, dc, length in _NEIGHBORS:
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < nr and 0 <= cc < nc and self.walkable[rr, cc]:
                        yield r, c, rr, cc, length

    def edge_count(self) -> int:
        return sum(1 for _ in self.edges()) // 2


@dataclass(frozen=True)
class RouteResult:
    path: tuple            # ((r, c), ...)
    length_m: float
    avg_utci: float
    alpha: float
    cost: float

    def to_dict(self) -> dict:
        return {"path": [list(p) for p in self.path],
                "length_m": self.length_m, "avg_utci": self.avg_utci,
                "alpha": self.alpha}


def build_grid_graph(scene: GridScene, utci_frame) -> GridGraph:
    """Join scene walkability with a UTCI frame into a routable graph."""
    frame = np.asarray(utci_frame, dtype=np.float64)
    if frame.shape != scene.shape:
        raise ValueError(f"frame {frame.shape} does not match scene {scene.shape}")
    walkable = scene.walkable() & np.isfinite(frame)
    weights = np.where(walkable, frame, np.nan)
    if walkable.any():
        w_min = float(np.nanmin(weights))
        w_max = float(np.nanmax(weights))
    else:
        w_min = w_max = 0.0
    return GridGraph(scene.nrows, scene.ncols, scene.cell_size,
                     walkable, weights, w_min, w_max)


def path_avg_utci(graph: GridGraph, path) -> float:
    """Mean node weight along the path (the per-route comfort score)."""
    if not path:
        raise RouteError("empty path")
    total = 0.0
    for r, c in path:
        w = graph.weights[r, c]
        if not np.isfinite(w):
            raise RouteError(f"node {(r, c)} is not walkable")
        total += float(w)
    return total / len(path)


def path_length_m(graph: GridGraph, path) -> float:
    length = 0.0
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        step = math.sqrt(2.0) if (r0 != r1 and c0 != c1) else 1.0
        length += step * graph.cell_size
    return length


def _edge_cost(graph: GridGraph, rr, cc, length_cells, alpha, w_span):
    norm_len = length_cells / math.sqrt(2.0)
    if w_span > 0.0:
        heat = (graph.weights[rr, cc] - graph.w_min) / w_span
    else:
        heat = 0.0
    return alpha * norm_len + (1.0 - alpha) * heat * norm_len


def shortest_path(graph: GridGraph, origin, destination, alpha: float = 0.5,
                  algorithm: str = "dijkstra") -> RouteResult | None:
    """Minimum-cost route, or None when the destination is unreachable.

    Both algorithms return identical costs; A* uses the admissible heuristic
    alpha * euclidean_distance / sqrt(2) (every edge costs at least its
    alpha-scaled normalized length). Ties break on lexicographic node order.
    """
    if not 0.0 <= alpha <= 1.0:
        raise RouteError(f"alpha must be in [0,1], got {alpha}")
    if algorithm not in ("dijkstra", "astar"):
        raise RouteError(f"unknown algorithm {algorithm!r}")
    for name, node in (("origin", origin), ("destination", destination)):
        r, c = node
        if not (0 <= r < graph.nrows and 0 <= c < graph.ncols):
            raise RouteError(f"{name} {node} outside the grid")
        if not graph.walkable[r, c]:
            raise RouteError(f"{name} {node} not walkable")
    origin = tuple(origin)
    destination = tuple(destination)
    w_span = graph.w_max - graph.w_min

    def heuristic(r, c):
        if algorithm == "dijkstra":
            return 0.0
        dist = math.hypot(r - destination[0], c - destination[1])
        return alpha * dist / math.sqrt(2.0)

    dist = {origin: 0.0}
    prev = {}
    heap = [(heuristic(*origin), origin, 0.0)]
    closed = set()
    while heap:
        _, node, d = heapq.heappop(heap)
        if node in closed:
            continue
        closed.add(node)
        if node == destination:
            break
        r, c = node
        for dr, dc, length in _NEIGHBORS:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < graph.nrows and 0 <= cc < graph.ncols):
                continue
            if not graph.walkable[rr, cc] or (rr, cc) in closed:
                continue
            nd = d + _edge_cost(graph, rr, cc, length, alpha, w_span)
            old = dist.get((rr, cc))
            if old is None or nd < old - 1e-15:
                dist[(rr, cc)] = nd
                prev[(rr, cc)] = (r, c)
                # heap orders ties by node index, so expansion is deterministic
                heapq.heappush(heap, (nd + heuristic(rr, cc), (rr, cc), nd))
    if destination not in closed and destination != origin:
        return None
    path = [destination]
    while path[-1] != origin:
        path.append(prev[path[-1]])
    path.reverse()
    return RouteResult(tuple(path), path_length_m(graph, path),
                       path_avg_utci(graph, path), alpha,
                       dist[destination])


DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def recommend_routes(graph: GridGraph, origin, destination,
                     alphas=DEFAULT_ALPHAS) -> list[RouteResult]:
    """One route per alpha, deduplicated by path, sorted by alpha."""
    routes = []
    seen = set()
    for alpha in sorted(alphas):
        route = shortest_path(graph, origin, destination, alpha)
        if route is None:
            raise RouteError(f"no route from {origin} to {destination}")
        if route.path not in seen:
            seen.add(route.path)
            routes.append(route)
    return routes
