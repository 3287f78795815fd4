import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import sparse

from ..utils.config import GEOM_EPS
from .errors import DegenerateGeometryError
from .mesh import TrussMesh, edges_from_tets

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StiffnessMatrix:
    """Sparse symmetric 3n x 3n truss stiffness matrix, 3x3 block per vertex pair."""
    n: int
    matrix: sparse.csr_matrix

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, x):
        return apply(self, x)


@dataclass(frozen=True)
class RigidBodyBasis:
    """Three translations and three infinitesimal rotations about points[center]."""
    raw: np.ndarray  # (3n, 6)
    orthonormal: np.ndarray  # (3n, 6)
    center: int


def as_csr(A) -> sparse.csr_matrix:
    if isinstance(A, StiffnessMatrix):
        return A.matrix
    if sparse.issparse(A):
        return A.tocsr()
    return sparse.csr_matrix(np.asarray(A, dtype=float))


def edge_vector(mesh: TrussMesh, e: Tuple[int, int]) -> np.ndarray:
    """Unit direction (p_i - p_j)/|p_i - p_j| at block i, its negation at block j."""
    i, j = int(e[0]), int(e[1])
    mesh.edge_index(i, j)
    diff = mesh.points[i] - mesh.points[j]
    length = np.linalg.norm(diff)
    if length <= GEOM_EPS:
        raise DegenerateGeometryError(f"Edge ({i}, {j}) has zero length")
    b = np.zeros(3 * mesh.n_vertices)
    b[3 * i:3 * i + 3] = diff / length
    b[3 * j:3 * j + 3] = -diff / length
    return b


def _block_indices(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r = np.arange(3)
    rows = 3 * a[:, None, None] + r[None, :, None]
    cols = 3 * b[:, None, None] + r[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    return rows.ravel(), cols.ravel()


def assemble(mesh: TrussMesh, tets: Optional[Sequence[int]] = None) -> StiffnessMatrix:
    """
    Sum of gamma(e)/|p_i - p_j| * b b^T over the edges, optionally only over
    the edges of a tet subset (the matrix stays 3n x 3n).
    """
    if tets is None:
        edges, gamma = mesh.edges, mesh.gamma
    else:
        edges = edges_from_tets(mesh.tets[np.asarray(tets, dtype=np.int64)])
        gamma = mesh.gamma[mesh.edge_index(edges[:, 0], edges[:, 1])]
    if np.any(gamma <= 0):
        raise ValueError(f"Stiffness coefficients must be positive, got min {gamma.min()}")

    diff = mesh.points[edges[:, 0]] - mesh.points[edges[:, 1]]
    lengths = np.linalg.norm(diff, axis=1)
    if np.any(lengths <= GEOM_EPS):
        bad = edges[np.argmin(lengths)]
        raise DegenerateGeometryError(f"Edge ({bad[0]}, {bad[1]}) has coincident endpoints")

    u = diff / lengths[:, None]
    blocks = (gamma / lengths)[:, None, None] * u[:, :, None] * u[:, None, :]

    i, j = edges[:, 0], edges[:, 1]
    rows, cols, data = [], [], []
    for a, b, sign in ((i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)):
        r, c = _block_indices(a, b)
        rows.append(r)
        cols.append(c)
        data.append(sign * blocks.ravel())

    size = 3 * mesh.n_vertices
    matrix = sparse.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(size, size)).tocsr()
    matrix.sum_duplicates()
    return StiffnessMatrix(mesh.n_vertices, matrix)


def rotation_operator(v) -> np.ndarray:
    """Cross-product matrix: Q_v @ p == v x p."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rigid_body_basis(obj: Union[TrussMesh, np.ndarray], center: int = 0) -> RigidBodyBasis:
    points = obj.points if isinstance(obj, TrussMesh) else np.asarray(obj, dtype=float)
    n = len(points)
    if not 0 <= center < n:
        raise ValueError(f"center must be a vertex index in [0, {n}), got {center}")

    rel = points - points[center]
    raw = np.zeros((n, 3, 6))
    for axis in range(3):
        raw[:, axis, axis] = 1.0
    # Rotations in the xy, xz and yz planes
    raw[:, :, 3] = np.column_stack([-rel[:, 1], rel[:, 0], np.zeros(n)])
    raw[:, :, 4] = np.column_stack([rel[:, 2], np.zeros(n), -rel[:, 0]])
    raw[:, :, 5] = np.column_stack([np.zeros(n), -rel[:, 2], rel[:, 1]])
    raw = raw.reshape(3 * n, 6)

    q, r = scipy.linalg.qr(raw, mode='economic')
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return RigidBodyBasis(raw=raw, orthonormal=q, center=center)


def apply(A, x) -> np.ndarray:
    matrix = as_csr(A)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != matrix.shape[1]:
        raise ValueError(f"Dimension mismatch: matrix is {matrix.shape}, vector has {x.shape[0]} rows")
    return matrix @ x


def project_out_null(x, basis) -> np.ndarray:
    """Remove the component of x in the span of the basis columns."""
    q = basis.orthonormal if isinstance(basis, RigidBodyBasis) else np.asarray(basis, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != q.shape[0]:
        raise ValueError(f"Dimension mismatch: basis has {q.shape[0]} rows, vector has {x.shape[0]}")
    return x - q @ (q.T @ x)
