import numpy as np
import pytest

from src.models.mesh import TrussMesh, generate_grid_truss
from src.models.oracle import dense_eig, numerical_rank
from src.models.stiffness import (apply, assemble, edge_vector, project_out_null, rigid_body_basis,
                                  rotation_operator)


@pytest.mark.parametrize('side', [2, 3, 4, 5])
def test_rank_law(side):
    mesh = generate_grid_truss(side, side, side)
    assert numerical_rank(assemble(mesh)) == 3 * mesh.n_vertices - 6


def test_lambda_min_lower_bound_holds_across_sizes():
    scaled = []
    for side in (2, 3, 4, 5):
        mesh = generate_grid_truss(side, side, side)
        values, _ = dense_eig(assemble(mesh))
        scaled.append(values[6] * mesh.n_vertices * mesh.diameter ** 4)
    scaled = np.array(scaled)
    # The scaled value is bounded below by a constant and grows with size
    assert np.all(scaled > 0)
    assert np.all(scaled >= scaled[0] / 10.0)
    assert np.all(np.diff(scaled) > 0)


def test_matches_sum_of_edge_outer_products():
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1.5, 0], [0.2, 0.3, 1]], dtype=float)
    mesh = TrussMesh(points, [[0, 1, 2, 3]], edge_gamma={(0, 3): 2.0})
    expected = np.zeros((12, 12))
    for (i, j), gamma, length in zip(mesh.edges, mesh.gamma, mesh.edge_lengths):
        b = edge_vector(mesh, (i, j))
        expected += gamma / length * np.outer(b, b)
    assert np.allclose(assemble(mesh).to_dense(), expected)


def test_rigid_modes_are_the_null_space(grid3):
    A = assemble(grid3)
    basis = rigid_body_basis(grid3)
    assert np.abs(apply(A, basis.raw)).max() <= 1e-10 * abs(A.matrix).max()
    assert np.allclose(basis.orthonormal.T @ basis.orthonormal, np.eye(6))


def test_subset_stiffness_is_dominated(grid3):
    A = assemble(grid3).to_dense()
    A_H = assemble(grid3, tets=np.arange(0, grid3.n_tets, 2)).to_dense()
    assert A_H.shape == A.shape
    assert np.linalg.eigvalsh(A - A_H).min() >= -1e-10 * np.abs(A).max()


def test_rotation_operator_singular_values(rng):
    for _ in range(100):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        Q = rotation_operator(v)
        assert np.allclose(np.linalg.svd(Q, compute_uv=False), [1.0, 1.0, 0.0], atol=1e-12)
        assert np.allclose(Q @ v, 0.0, atol=1e-12)
        p = rng.standard_normal(3)
        assert np.allclose(Q @ p, np.cross(v, p))


def test_project_out_null(grid2, rng):
    basis = rigid_body_basis(grid2)
    x = rng.standard_normal(3 * grid2.n_vertices)
    y = project_out_null(x, basis)
    assert np.allclose(basis.orthonormal.T @ y, 0.0, atol=1e-12)
    assert np.allclose(apply(assemble(grid2), y), apply(assemble(grid2), x))


def test_apply_checks_dimensions(grid2):
    with pytest.raises(ValueError, match="Dimension mismatch"):
        apply(assemble(grid2), np.ones(5))


def test_non_edge_is_rejected(grid2):
    with pytest.raises(ValueError):
        edge_vector(grid2, (0, grid2.n_vertices - 1))


def test_relabeling_conjugates_the_matrix(grid3, rng):
    perm = rng.permutation(grid3.n_vertices)
    inverse = np.argsort(perm)
    relabeled = TrussMesh(grid3.points[perm], inverse[grid3.tets])
    dof_perm = (3 * perm[:, None] + np.arange(3)).ravel()
    A = assemble(grid3).to_dense()
    assert np.abs(assemble(relabeled).to_dense() - A[np.ix_(dof_perm, dof_perm)]).max() <= 1e-14 * np.abs(A).max()


def test_lambda_max_bounded_by_degree_across_sizes():
    largest = []
    for side in (2, 3, 4, 5, 6):
        mesh = generate_grid_truss(side, side, side)
        largest.append(dense_eig(assemble(mesh))[0][-1])
    weights = mesh.gamma / mesh.edge_lengths
    degree = np.bincount(mesh.edges.ravel(), weights=np.repeat(weights, 2), minlength=mesh.n_vertices)
    c_deg = 2.0 * degree.max()
    assert np.all(np.array(largest) <= c_deg)
    # A grid is a principal block of every larger grid
    assert np.all(np.diff(largest) >= -1e-10 * c_deg)


def test_rotation_center_keeps_null_space(grid3):
    A = assemble(grid3)
    first = rigid_body_basis(grid3).orthonormal
    last = rigid_body_basis(grid3, center=grid3.n_vertices - 1)
    assert last.center == grid3.n_vertices - 1
    assert np.abs(apply(A, last.raw)).max() <= 1e-10 * abs(A.matrix).max()
    assert np.abs(first @ first.T - last.orthonormal @ last.orthonormal.T).max() <= 1e-10
    with pytest.raises(ValueError, match="center"):
        rigid_body_basis(grid3, center=grid3.n_vertices)
