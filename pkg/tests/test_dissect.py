import numpy as np
import pytest

from src.models.dissect import (EliminationOrdering, LayeredGraph, _cut, _plane_layers, convex_truss_union_nd,
                                direction_candidates, direction_ok, elimination_flops, fillin_flop_simulate,
                                geometric_separator, glue_vertices, graph_from_edges, layered_graph_nd,
                                nested_dissection, pick_direction, preconditioner_tets, separator_planes,
                                symbolic_factor)
from src.models.errors import DirectionSearchError
from src.models.hollow import hollow
from src.models.mesh import bounding_box, edges_from_tets, generate_grid_truss
from src.models.solve import chunk_boxes
from src.utils.config import DIRECTION_CANDIDATES


def layered_graph(s: int, l: int) -> LayeredGraph:
    """l layers of s vertices: a cycle inside each layer, a matching plus a shifted matching between layers."""
    edges = []
    for layer in range(l):
        base = layer * s
        edges.extend((base + i, base + (i + 1) % s) for i in range(s) if s > 1)
        if layer + 1 < l:
            edges.extend((base + i, base + s + i) for i in range(s))
            edges.extend((base + i, base + s + (i + 1) % s) for i in range(s))
    edges = np.array([e for e in edges if e[0] != e[1]])
    adjacency = graph_from_edges(edges, s * l)
    return LayeredGraph([np.arange(j * s, (j + 1) * s) for j in range(l)], adjacency)


def test_layered_graph_rejects_far_edges():
    adjacency = graph_from_edges(np.array([[0, 1], [1, 2], [0, 2]]), 3)
    with pytest.raises(ValueError, match="more than one apart"):
        LayeredGraph([[0], [1], [2]], adjacency)


def test_layered_graph_rejects_overlap():
    with pytest.raises(ValueError, match="overlaps"):
        LayeredGraph([[0, 1], [1, 2]], graph_from_edges(np.array([[0, 1]]), 3))


def test_layered_nd_numbers_middle_layer_last():
    lg = layered_graph(2, 5)
    ordering = layered_graph_nd(lg)
    assert ordering.is_bijection(np.arange(10))
    assert sorted(ordering.order[-2:].tolist()) == [4, 5]
    assert ordering.nodes[-1].kind == 'top-separator'
    assert ordering.nodes[-1].level == 0


@pytest.mark.parametrize('s', [1, 4, 16, 32])
@pytest.mark.parametrize('l', [1, 4, 16, 32])
def test_layered_nd_fill_in_bound(s, l):
    lg = layered_graph(s, l)
    fill, _ = fillin_flop_simulate(lg.adjacency, layered_graph_nd(lg), block_size=1)
    assert fill <= 4 * s * s * l


def test_direction_ok_bounds():
    directions = np.eye(3)
    assert direction_ok(np.ones(3) / np.sqrt(3), directions)
    assert not direction_ok(np.array([1.0, 0.0, 0.0]), directions)


@pytest.mark.parametrize('k', [1, 5, 20])
def test_pick_direction_meets_angle_bounds(k):
    rng = np.random.default_rng(k)
    for trial in range(334):
        directions = rng.standard_normal((k, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        d = pick_direction(directions, seed=trial)
        assert np.linalg.norm(d) == pytest.approx(1.0)
        bound = 1.0 / (10 * k)
        dots = np.abs(directions @ d)
        assert np.all(dots >= bound) and np.all(dots <= 1.0 - bound)


def test_single_sample_failure_rate():
    rng = np.random.default_rng(7)
    k, trials = 20, 4000
    failures = 0
    for _ in range(trials):
        directions = rng.standard_normal((k, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        d = rng.standard_normal(3)
        failures += not direction_ok(d / np.linalg.norm(d), directions)
    assert failures / trials <= 0.2 + 0.05


def test_pick_direction_is_deterministic():
    directions = np.eye(3)
    assert np.array_equal(pick_direction(directions, seed=3), pick_direction(directions, seed=3))


def test_pick_direction_rejects_bad_input():
    with pytest.raises(ValueError):
        pick_direction(np.array([[2.0, 0.0, 0.0]]))


def test_direction_search_error_when_attempts_run_out(monkeypatch):
    monkeypatch.setattr('src.models.dissect.DIRECTION_ATTEMPTS', 0)
    with pytest.raises(DirectionSearchError):
        pick_direction(np.eye(3), seed=0)


def test_separator_planes_equal_parts(grid6):
    split = separator_planes(grid6, np.array([0.3, 0.2, 0.93]), 3)
    sizes = split.part_sizes()
    assert len(sizes) == 4
    assert sizes.sum() == grid6.n_tets
    assert sizes.max() - sizes.min() <= 1
    assert np.all(np.diff(split.offsets) >= 0)
    assert len(split.crossing_tets(grid6, 0)) > 0


def test_separator_planes_slide_to_thin_gaps(grid6):
    split = separator_planes(grid6, np.array([1.0, 0.0, 0.0]), 3, slack=0.5)
    sizes = split.part_sizes()
    assert len(sizes) == 4
    assert sizes.sum() == grid6.n_tets
    assert sizes.max() <= 2 * grid6.n_tets / 4
    assert np.all(np.diff(split.offsets) > 0)
    # Planes sit between vertex levels and cross a single layer of cubes
    assert np.allclose(split.offsets % 1.0, 0.5)
    for j in range(3):
        assert len(split.crossing_tets(grid6, j)) == 5 * 36


def neck_tets(mesh, lo, hi):
    """Tets of two full blocks joined by the column of cubes with 1 <= y, z < 2 between x = lo and hi."""
    cube = np.floor(mesh.points[mesh.tets].mean(axis=1)).astype(int)
    keep = (cube[:, 0] < lo) | (cube[:, 0] >= hi) | ((cube[:, 1] == 1) & (cube[:, 2] == 1))
    return np.nonzero(keep)[0]


def test_separator_planes_cut_through_neck():
    mesh = generate_grid_truss(9, 3, 3)
    tet_ids = neck_tets(mesh, 3, 6)
    split = separator_planes(mesh, np.array([1.0, 0.0, 0.0]), 1, tet_ids=tet_ids, slack=0.5)
    assert 3.0 < split.offsets[0] < 6.0
    assert len(split.crossing_tets(mesh, 0)) == 5
    assert split.part_sizes().max() <= 0.75 * len(tet_ids)


def test_geometric_separator_finds_off_center_neck():
    mesh = generate_grid_truss(9, 3, 3)
    tets = mesh.tets[neck_tets(mesh, 2, 4)]
    split = geometric_separator(mesh.points, np.unique(tets), edges_from_tets(tets))
    assert split.balanced
    assert len(split.separator) == 4
    assert np.allclose(mesh.points[split.separator, 0], 3.0)


def test_cut_between_vertex_levels_keeps_one_side(grid4):
    proj = grid4.points[:, 0]
    sep, part_a, part_b = _cut(proj, np.arange(grid4.n_vertices), grid4.edges, 1.5)
    assert np.all(proj[sep] == 1.0)
    assert len(sep) == 25
    assert len(part_a) + len(part_b) + len(sep) == grid4.n_vertices


def test_separator_planes_needs_enough_tets(grid2):
    with pytest.raises(ValueError):
        separator_planes(grid2, np.array([0.0, 0.0, 1.0]), grid2.n_tets)
    with pytest.raises(ValueError):
        separator_planes(grid2, np.array([0.0, 0.0, 1.0]), 0)
    with pytest.raises(ValueError, match="slack"):
        separator_planes(grid2, np.array([0.0, 0.0, 1.0]), 1, slack=0.75)


def test_geometric_separator_disconnects(grid6):
    split = geometric_separator(grid6)
    assert split.balanced
    parts = np.concatenate([split.separator, split.part_a, split.part_b])
    assert np.array_equal(np.sort(parts), np.arange(grid6.n_vertices))
    side = np.zeros(grid6.n_vertices, dtype=int)
    side[split.part_a] = 1
    side[split.part_b] = 2
    a, b = grid6.edges[:, 0], grid6.edges[:, 1]
    assert not np.any((side[a] * side[b]) == 2)
    assert max(len(split.part_a), len(split.part_b)) <= 0.75 * grid6.n_vertices


def test_geometric_separator_on_subset(grid6):
    W = np.nonzero(grid6.points[:, 0] <= 2)[0]
    split = geometric_separator(grid6.points, W, grid6.edges)
    assert set(split.separator) | set(split.part_a) | set(split.part_b) == set(W.tolist())


def test_nested_dissection_is_a_permutation(grid6):
    ordering = nested_dissection(grid6)
    assert ordering.is_bijection(np.arange(grid6.n_vertices))
    assert ordering.nodes[-1].kind == 'internal-separator'
    assert all(len(n.vertices) <= 48 for n in ordering.nodes if n.kind == 'leaf')
    covered = np.concatenate([n.vertices for n in ordering.nodes])
    assert np.array_equal(covered, ordering.order)


def test_symbolic_factor_small_graphs():
    clique = graph_from_edges(np.array([[i, j] for i in range(4) for j in range(i + 1, 4)]), 4)
    for order in ([0, 1, 2, 3], [3, 1, 0, 2]):
        assert symbolic_factor(clique, order, 1).fill_in == 0

    path = graph_from_edges(np.array([[0, 1], [1, 2], [2, 3]]), 4)
    assert symbolic_factor(path, [0, 1, 2, 3], 1).fill_in == 0

    star = graph_from_edges(np.array([[0, i] for i in range(1, 5)]), 5)
    assert symbolic_factor(star, [0, 1, 2, 3, 4], 1).fill_in == 6
    assert symbolic_factor(star, [1, 2, 3, 4, 0], 1).fill_in == 0
    assert symbolic_factor(star, [0, 1, 2, 3, 4], 3).fill_in == 6 * 9


def test_symbolic_factor_elimination_tree():
    path = graph_from_edges(np.array([[0, 1], [1, 2], [2, 3]]), 4)
    symbolic = symbolic_factor(path, [0, 1, 2, 3], 1)
    assert symbolic.parent.tolist() == [1, 2, 3, -1]
    assert [s.tolist() for s in symbolic.structs] == [[1], [2], [3], []]


def test_symbolic_factor_rejects_non_permutation():
    path = graph_from_edges(np.array([[0, 1]]), 2)
    with pytest.raises(ValueError):
        symbolic_factor(path, [0, 0], 1)


def test_elimination_flops_formula():
    # One pivot with c below-diagonal blocks: 1 + c + c(c+1)/2 block operations
    assert elimination_flops([0], 1) == 1
    assert elimination_flops([2], 1) == 1 + 2 + 3
    assert elimination_flops([2, 1, 0], 3) == 27 * (6 + 3 + 1)


def test_local_order_and_dof_permutation():
    ordering = EliminationOrdering(order=np.array([10, 4, 7]))
    assert ordering.local_order(np.array([4, 7, 10])).tolist() == [2, 0, 1]
    assert ordering.dof_permutation(2).tolist() == [20, 21, 8, 9, 14, 15]
    with pytest.raises(ValueError):
        ordering.local_order(np.array([4, 7]))


def _union_hollowings(mesh, r=8):
    hollowings = {}
    for i, box in enumerate(chunk_boxes(mesh)):
        sub, vertex_ids = mesh.submesh(mesh.chunks[i])
        hollowings[i] = hollow(sub, box, r).lift(mesh.chunks[i], vertex_ids)
    return hollowings


@pytest.mark.parametrize('l', [0, 1, 2])
def test_convex_truss_union_nd_orders_preconditioner(union44, l):
    hollowings = _union_hollowings(union44)
    tet_ids = preconditioner_tets(union44, [0, 1], hollowings)
    vertices = np.unique(union44.tets[tet_ids])
    ordering = convex_truss_union_nd(union44, chunk_boxes(union44), [0, 1], hollowings, l, seed=0)
    assert ordering.is_bijection(vertices)

    glue = glue_vertices(union44)
    assert set(ordering.order[-len(glue):].tolist()) == set(glue.tolist())
    assert ordering.nodes[-1].kind == 'top-separator'


def test_convex_truss_union_nd_without_hollowing(union44):
    ordering = convex_truss_union_nd(union44, chunk_boxes(union44), [], {}, 1, seed=0)
    assert ordering.is_bijection(np.arange(union44.n_vertices))


def test_preconditioner_tets_keep_excluded_chunks_whole(union44):
    hollowings = _union_hollowings(union44)
    tet_ids = preconditioner_tets(union44, [0], hollowings)
    assert set(union44.chunks[1].tolist()) <= set(tet_ids.tolist())
    assert set(hollowings[0].tets.tolist()) <= set(tet_ids.tolist())


def test_glue_vertices_of_single_chunk(grid3):
    assert len(glue_vertices(grid3)) == 0


def test_chunk_boxes_are_cubes(union44):
    for box in chunk_boxes(union44):
        assert box.half_lengths == pytest.approx([2.0, 2.0, 2.0])
    assert bounding_box(union44).aspect_ratio == pytest.approx(2.0)


def test_direction_candidates_start_near_box_axes(grid4):
    box = bounding_box(grid4)
    candidates = direction_candidates([box], seed=0)
    assert len(candidates) == 2 + DIRECTION_CANDIDATES
    assert all(direction_ok(d, box.longest_direction[None, :]) for d in candidates)
    assert abs(candidates[0] @ box.longest_direction) == pytest.approx(0.15)
    assert abs(candidates[0] @ box.axes[1]) == pytest.approx(np.sqrt(1 - 0.15 ** 2))


def test_direction_candidates_are_admissible_for_unions(union44):
    boxes = chunk_boxes(union44)
    longs = np.array([b.longest_direction for b in boxes])
    candidates = direction_candidates(boxes, seed=3, n_vertices=union44.n_vertices)
    assert len(candidates) >= DIRECTION_CANDIDATES
    for d in candidates:
        assert np.linalg.norm(d) == pytest.approx(1.0)
        assert direction_ok(d, longs)


def test_plane_layer_covers_crossing_edges(grid6):
    n = grid6.n_vertices
    d = direction_candidates([bounding_box(grid6)], seed=0)[0]
    split = separator_planes(grid6, d, 1, slack=0.5)
    layer, = _plane_layers(grid6.points, np.arange(n), grid6.edges, split, np.zeros(n, dtype=bool))
    crossing = np.unique(grid6.tets[split.crossing_tets(grid6, 0)])
    assert set(layer.tolist()) <= set(crossing.tolist())
    assert len(layer) < len(crossing)

    side = np.searchsorted(split.offsets, grid6.points @ d)
    free = np.ones(n, dtype=bool)
    free[layer] = False
    a, b = grid6.edges[:, 0], grid6.edges[:, 1]
    assert not np.any(free[a] & free[b] & (side[a] != side[b]))
