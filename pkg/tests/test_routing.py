import itertools
import math

import numpy as np
import pytest

from thermotwin.routing import (RouteError, build_grid_graph, path_avg_utci,
                                recommend_routes, shortest_path)
from thermotwin.scene import GridScene, LandCover


def scene_from_landcover(lc, cell_size=1.0):
    lc = np.asarray(lc, np.uint8)
    z = np.zeros(lc.shape, np.float32)
    bh = np.where(lc == LandCover.BUILDING, 10.0, 0.0).astype(np.float32)
    return GridScene(lc.shape[0], lc.shape[1], cell_size, 30.6, -96.3,
                     z, bh, z.copy(), lc)


def uniform_graph(n, utci=30.0):
    scene = scene_from_landcover(np.ones((n, n)))
    return build_grid_graph(scene, np.full((n, n), utci))


def brute_force_best(graph, origin, destination, alpha):
    """Enumerate all simple paths (exponential; fine up to 4x4)."""
    best = None
    w_span = graph.w_max - graph.w_min

    def edge_cost(rr, cc, step):
        norm_len = step / math.sqrt(2.0)
        heat = ((graph.weights[rr, cc] - graph.w_min) / w_span) if w_span else 0.0
        return alpha * norm_len + (1 - alpha) * heat * norm_len

    stack = [(origin, {origin}, 0.0)]
    while stack:
        node, visited, cost = stack.pop()
        if best is not None and cost >= best - 1e-12:
            continue
        if node == destination:
            best = cost if best is None else min(best, cost)
            continue
        r, c = node
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if (dr, dc) == (0, 0):
                    continue
                rr, cc = r + dr, c + dc
                if not (0 <= rr < graph.nrows and 0 <= cc < graph.ncols):
                    continue
                if not graph.walkable[rr, cc] or (rr, cc) in visited:
                    continue
                step = math.sqrt(2.0) if dr and dc else 1.0
                stack.append(((rr, cc), visited | {(rr, cc)},
                              cost + edge_cost(rr, cc, step)))
    return best


class TestGraph:
    def test_3x3_grass_counts(self):
        g = uniform_graph(3)
        assert g.node_count() == 9
        assert g.edge_count() == 20  # 12 orthogonal + 8 diagonal

    def test_center_building_excluded(self):
        lc = np.ones((3, 3))
        lc[1, 1] = LandCover.BUILDING
        g = build_grid_graph(scene_from_landcover(lc), np.full((3, 3), 30.0))
        assert g.node_count() == 8
        assert not g.walkable[1, 1]

    def test_all_building_empty_graph(self):
        lc = np.full((3, 3), LandCover.BUILDING)
        g = build_grid_graph(scene_from_landcover(lc), np.full((3, 3), 30.0))
        assert g.node_count() == 0

    def test_water_not_walkable(self):
        lc = np.ones((3, 3))
        lc[0, 1] = LandCover.WATER
        g = build_grid_graph(scene_from_landcover(lc), np.full((3, 3), 30.0))
        assert not g.walkable[0, 1]


class TestAvgUtci:
    def test_single_node(self):
        g = uniform_graph(3, utci=33.0)
        assert path_avg_utci(g, [(1, 1)]) == 33.0

    def test_hand_mean(self):
        scene = scene_from_landcover(np.ones((1, 3)))
        frame = np.array([[30.0, 32.0, 34.0]])
        g = build_grid_graph(scene, frame)
        assert path_avg_utci(g, [(0, 0), (0, 1), (0, 2)]) == pytest.approx(32.0)

    def test_uniform_weights(self):
        g = uniform_graph(4, utci=29.5)
        path = [(0, 0), (1, 1), (2, 2), (3, 3)]
        assert path_avg_utci(g, path) == pytest.approx(29.5)


class TestShortestPath:
    def test_origin_equals_destination(self):
        g = uniform_graph(3)
        r = shortest_path(g, (1, 1), (1, 1), alpha=1.0)
        assert r.path == ((1, 1),)
        assert r.length_m == 0.0

    def test_diagonal_on_uniform_grid(self):
        g = uniform_graph(3)
        r = shortest_path(g, (0, 0), (2, 2), alpha=1.0)
        assert r.length_m == pytest.approx(2 * math.sqrt(2))
        assert brute_force_best(g, (0, 0), (2, 2), 1.0) == pytest.approx(r.cost)

    def test_hot_column_detour(self):
        lc = np.ones((4, 4))
        frame = np.full((4, 4), 30.0)
        frame[:3, 2] = 50.0  # hot column with a gap at the bottom
        g = build_grid_graph(scene_from_landcover(lc), frame)
        r = shortest_path(g, (0, 0), (0, 3), alpha=0.0)
        hot_cells = [(i, 2) for i in range(3)]
        assert not any(cell in r.path for cell in hot_cells)
        assert r.cost == pytest.approx(
            brute_force_best(g, (0, 0), (0, 3), 0.0), abs=1e-9)

    def test_dijkstra_matches_brute_force_random_4x4(self):
        rng = np.random.default_rng(9)
        for trial in range(25):
            lc = np.ones((4, 4))
            # sprinkle a building cell sometimes
            if trial % 3 == 0:
                lc[rng.integers(0, 4), rng.integers(0, 4)] = LandCover.BUILDING
            frame = rng.uniform(25, 45, (4, 4))
            g = build_grid_graph(scene_from_landcover(lc), frame)
            walk = np.argwhere(g.walkable)
            origin = tuple(walk[0])
            dest = tuple(walk[-1])
            alpha = float(rng.choice([0.0, 0.3, 0.7, 1.0]))
            r = shortest_path(g, origin, dest, alpha)
            want = brute_force_best(g, origin, dest, alpha)
            if want is None:
                assert r is None
            else:
                assert r.cost == pytest.approx(want, abs=1e-9), (trial, alpha)

    def test_astar_equals_dijkstra_random_8x8(self):
        rng = np.random.default_rng(10)
        for trial in range(60):
            lc = np.ones((8, 8))
            for _ in range(6):
                lc[rng.integers(0, 8), rng.integers(0, 8)] = LandCover.BUILDING
            frame = rng.uniform(25, 45, (8, 8))
            g = build_grid_graph(scene_from_landcover(lc), frame)
            walk = np.argwhere(g.walkable)
            origin = tuple(walk[rng.integers(0, len(walk))])
            dest = tuple(walk[rng.integers(0, len(walk))])
            alpha = float(rng.random())
            a = shortest_path(g, origin, dest, alpha, algorithm="dijkstra")
            b = shortest_path(g, origin, dest, alpha, algorithm="astar")
            if a is None or b is None:
                assert a is None and b is None
            else:
                assert a.cost == pytest.approx(b.cost, abs=1e-9)

    def test_unreachable_returns_none(self):
        lc = np.ones((3, 3))
        lc[:, 1] = LandCover.BUILDING
        g = build_grid_graph(scene_from_landcover(lc), np.full((3, 3), 30.0))
        assert shortest_path(g, (0, 0), (0, 2), 1.0) is None

    def test_non_walkable_origin_raises(self):
        lc = np.ones((3, 3))
        lc[0, 0] = LandCover.BUILDING
        g = build_grid_graph(scene_from_landcover(lc), np.full((3, 3), 30.0))
        with pytest.raises(RouteError, match="origin"):
            shortest_path(g, (0, 0), (2, 2), 1.0)

    def test_affine_weight_rescaling_keeps_alpha0_paths(self):
        rng = np.random.default_rng(11)
        lc = np.ones((6, 6))
        frame = rng.uniform(25, 45, (6, 6))
        g1 = build_grid_graph(scene_from_landcover(lc), frame)
        g2 = build_grid_graph(scene_from_landcover(lc), 2.5 * frame + 7.0)
        r1 = shortest_path(g1, (0, 0), (5, 5), 0.0)
        r2 = shortest_path(g2, (0, 0), (5, 5), 0.0)
        assert r1.path == r2.path
        assert r1.cost == pytest.approx(r2.cost, rel=1e-9)


class TestRecommend:
    def test_uniform_frame_dedups_to_one(self):
        g = uniform_graph(4)
        routes = recommend_routes(g, (0, 0), (3, 3))
        assert len(routes) == 1

    def test_hot_column_tradeoff(self):
        lc = np.ones((4, 4))
        frame = np.full((4, 4), 30.0)
        frame[:3, 2] = 50.0
        g = build_grid_graph(scene_from_landcover(lc), frame)
        routes = recommend_routes(g, (0, 0), (0, 3))
        fastest = max(routes, key=lambda r: r.alpha)
        coolest = min(routes, key=lambda r: r.alpha)
        assert fastest.length_m < coolest.length_m
        assert coolest.avg_utci < fastest.avg_utci

    def test_no_dominated_routes(self):
        rng = np.random.default_rng(12)
        lc = np.ones((8, 8))
        frame = rng.uniform(25, 45, (8, 8))
        frame[:6, 4] = 48.0
        g = build_grid_graph(scene_from_landcover(lc), frame)
        routes = recommend_routes(g, (0, 0), (0, 7))
        for a, b in itertools.permutations(routes, 2):
            dominated = (b.length_m < a.length_m - 1e-9
                         and b.avg_utci < a.avg_utci - 1e-9)
            assert not dominated

    def test_route_result_invariants(self):
        rng = np.random.default_rng(13)
        lc = np.ones((6, 6))
        frame = rng.uniform(25, 45, (6, 6))
        g = build_grid_graph(scene_from_landcover(lc), frame)
        for route in recommend_routes(g, (0, 0), (5, 2)):
            assert route.path[0] == (0, 0) and route.path[-1] == (5, 2)
            for (r0, c0), (r1, c1) in zip(route.path, route.path[1:]):
                assert max(abs(r0 - r1), abs(c0 - c1)) == 1
            assert route.avg_utci == pytest.approx(
                path_avg_utci(g, route.path))
