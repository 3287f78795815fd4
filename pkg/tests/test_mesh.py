import numpy as np
import pytest
from scipy.spatial import ConvexHull

from src.models.dissect import glue_vertices
from src.models.errors import DegenerateGeometryError
from src.models.mesh import (TrussMesh, bounding_box, edges_from_tets, generate_grid_truss, generate_union,
                             is_stiffly_connected, rigidity_graph, tet_aspect_ratio, validate_edge_simple)
from src.utils.config import BOX_HULL_RATIO


@pytest.mark.parametrize('dims, n_vertices', [((1, 1, 1), 8), ((4, 4, 4), 125), ((3, 2, 1), 24)])
def test_grid_sizes(dims, n_vertices):
    mesh = generate_grid_truss(*dims)
    assert mesh.n_vertices == n_vertices
    assert mesh.n_tets == 5 * int(np.prod(dims))
    assert mesh.k == 1


def test_single_tet_has_six_edges():
    assert edges_from_tets([[0, 1, 2, 3]]).tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]


def test_grid_is_edge_simple(grid3):
    report = validate_edge_simple(grid3)
    assert report.ok
    assert report.is_simplicial_complex
    assert report.max_aspect_ratio <= 8.0
    lo, hi = report.edge_length_range
    assert lo == pytest.approx(1.0)
    assert hi == pytest.approx(np.sqrt(2.0))


def test_regular_tet_aspect_ratio():
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    assert tet_aspect_ratio(*pts) == pytest.approx(3.0)


def test_flat_tet_is_degenerate():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(DegenerateGeometryError):
        tet_aspect_ratio(*pts)


def test_duplicate_tets_reported(grid2):
    tets = np.vstack([grid2.tets, grid2.tets[:1]])
    report = validate_edge_simple(TrussMesh(grid2.points, tets))
    assert report.duplicate_tets == [(0, len(tets) - 1)]
    assert not report.ok


def test_overlapping_tets_reported():
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                       [0.2, 0.2, 0.2], [1.2, 0.2, 0.2], [0.2, 1.2, 0.2], [0.2, 0.2, 1.2]], dtype=float)
    report = validate_edge_simple(TrussMesh(points, [[0, 1, 2, 3], [4, 5, 6, 7]]))
    assert report.overlapping_pairs == [(0, 1)]
    assert not report.is_simplicial_complex


def test_limits_flag_long_edges(grid2):
    report = validate_edge_simple(grid2, {'len_max': 1.2})
    assert report.bad_lengths
    assert report.is_simplicial_complex


def test_grid_is_stiffly_connected(grid3):
    assert is_stiffly_connected(grid3)
    assert rigidity_graph(grid3).is_connected()


def test_tets_sharing_an_edge_are_not_stiffly_connected(two_tets_on_edge):
    assert not rigidity_graph(two_tets_on_edge).is_connected()
    assert not is_stiffly_connected(two_tets_on_edge)


def test_pairs_meeting_at_a_vertex_are_not_stiffly_connected():
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1],
                       [-1, 0, 0], [0, -1, 0], [0, 0, -1], [-1, -1, -1]], dtype=float)
    mesh = TrussMesh(points, [[0, 1, 2, 3], [1, 2, 3, 4], [0, 5, 6, 7], [5, 6, 7, 8]])
    assert not is_stiffly_connected(mesh)


def test_mesh_rejects_repeated_vertex():
    with pytest.raises(ValueError, match="repeats a vertex"):
        TrussMesh(np.eye(4, 3), [[0, 1, 1, 2]])


def test_mesh_rejects_unused_vertex():
    points = np.vstack([np.eye(3), [[0, 0, 0], [5, 5, 5]]])
    with pytest.raises(ValueError, match="not used"):
        TrussMesh(points, [[0, 1, 2, 3]])


def test_mesh_is_immutable(grid2):
    with pytest.raises(ValueError):
        grid2.points[0, 0] = 10.0


def test_edge_gamma_overrides():
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    mesh = TrussMesh(points, [[0, 1, 2, 3]], gamma=1.0, edge_gamma={(2, 0): 1.5})
    assert mesh.gamma_of(0, 2) == 1.5
    assert mesh.gamma_of(1, 3) == 1.0

    # (0, 7) and (1, 3) share the key 0 * 4 + 7 == 1 * 4 + 3
    with pytest.raises(ValueError, match="outside"):
        mesh.edge_index(0, 7)
    with pytest.raises(ValueError, match="outside"):
        mesh.gamma_of(-1, 3)
    with pytest.raises(ValueError, match="distinct"):
        mesh.edge_index(2, 2)


def test_edge_index_rejects_non_edges(two_tets_on_edge):
    assert two_tets_on_edge.gamma_of(0, 1) == 1.0
    with pytest.raises(ValueError, match="not an edge"):
        two_tets_on_edge.edge_index(2, 4)
    with pytest.raises(ValueError, match="outside"):
        two_tets_on_edge.edge_index([0, 1], [1, 6])


@pytest.mark.parametrize('pair', [(0, 7), (3, 3), (-1, 2)])
def test_out_of_range_gamma_override_is_rejected(pair):
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    with pytest.raises(ValueError):
        TrussMesh(points, [[0, 1, 2, 3]], edge_gamma={pair: 1.5})


def test_bounding_box_of_slab():
    box = bounding_box(generate_grid_truss(4, 2, 1))
    assert box.half_lengths == pytest.approx([2.0, 1.0, 0.5])
    assert box.aspect_ratio == pytest.approx(4.0)
    assert abs(box.longest_direction @ [1.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert box.contains(generate_grid_truss(4, 2, 1).points).all()


@pytest.mark.parametrize('mesh', [generate_grid_truss(5, 3, 2), generate_union([(4, 4, 4), (12, 2, 2)])])
def test_bounding_box_volume_near_hull(mesh):
    ratio = bounding_box(mesh).volume / ConvexHull(mesh.points).volume
    assert 1.0 - 1e-9 <= ratio <= BOX_HULL_RATIO


def test_bounding_box_rejects_coplanar_points():
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0]], dtype=float)
    with pytest.raises(DegenerateGeometryError):
        bounding_box(points)


def test_union_merges_shared_face(union44):
    assert union44.k == 2
    assert union44.n_vertices == 9 * 5 * 5
    assert len(glue_vertices(union44)) == 25
    assert is_stiffly_connected(union44)
    assert validate_edge_simple(union44).ok


def test_union_placement_must_be_on_lattice():
    with pytest.raises(ValueError):
        generate_union([((2, 2, 2), (0, 0, 0)), ((2, 2, 2), (2.5, 0, 0))])


def test_submesh_maps_back(grid3):
    sub, vertex_ids = grid3.submesh(np.arange(10))
    assert sub.n_tets == 10
    assert np.allclose(sub.points, grid3.points[vertex_ids])
    assert np.array_equal(vertex_ids[sub.tets], grid3.tets[:10])


def test_diameter(grid3):
    assert grid3.diameter == pytest.approx(3.0 * np.sqrt(3.0))
