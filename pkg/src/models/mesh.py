import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist

from ..utils.config import DEFAULT_LIMITS, GEOM_EPS, VOL_EPS
from .errors import DegenerateGeometryError

logger = logging.getLogger(__name__)

# Vertex pairs of a tetrahedron, and the face opposite each slot
TET_PAIRS = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
TET_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])

# 5-tet cube decomposition: a central tet on one parity class of corners,
# one corner tet at each corner of the other class
_EVEN_CORNERS = [(0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)]
_ODD_CORNERS = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]


def edges_from_tets(tets, n_vertices: Optional[int] = None) -> np.ndarray:
    """Sorted (E, 2) array of vertex pairs that co-occur in some tetrahedron."""
    tets = np.asarray(tets, dtype=np.int64)
    if tets.ndim != 2 or tets.shape[1] != 4 or len(tets) == 0:
        raise ValueError(f"tets must be a non-empty (m, 4) array, got shape {tets.shape}")
    if tets.min() < 0:
        raise ValueError(f"Invalid vertex index {tets.min()} in tets")
    if n_vertices is not None and tets.max() >= n_vertices:
        raise ValueError(f"Invalid vertex index {tets.max()} for {n_vertices} vertices")

    pairs = np.sort(tets[:, TET_PAIRS].reshape(-1, 2), axis=1)
    return np.unique(pairs, axis=0)


def _circumcenter(pts: np.ndarray) -> Optional[np.ndarray]:
    """Center of the circumscribed sphere of 2-4 points within their affine hull."""
    base = pts[0]
    spans = pts[1:] - base
    gram = spans @ spans.T
    rhs = 0.5 * np.einsum('ij,ij->i', spans, spans)
    try:
        coeffs = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    return base + coeffs @ spans


def _enclosing_radius(pts: np.ndarray) -> float:
    # The smallest enclosing ball is the circumball of some 2-, 3- or 4-point subset
    best = np.inf
    for size in (2, 3, 4):
        for subset in combinations(range(4), size):
            center = _circumcenter(pts[list(subset)])
            if center is None:
                continue
            radius = np.linalg.norm(pts[subset[0]] - center)
            dist = np.linalg.norm(pts - center, axis=1)
            if np.all(dist <= radius * (1 + 1e-12) + GEOM_EPS) and radius < best:
                best = radius
    return float(best)


def tet_volume(pa, pb, pc, pd) -> float:
    """Signed volume of a tetrahedron."""
    pa = np.asarray(pa, dtype=float)
    return float(np.linalg.det(np.stack([np.asarray(pb) - pa,
                                         np.asarray(pc) - pa,
                                         np.asarray(pd) - pa])) / 6.0)


def tet_aspect_ratio(pa, pb, pc, pd) -> float:
    """
    Radius of the smallest enclosing ball divided by the inradius.

    The minimum over all tetrahedra is 3, attained by the regular one.
    """
    pts = np.array([pa, pb, pc, pd], dtype=float)
    volume = abs(tet_volume(*pts))
    if volume <= VOL_EPS:
        raise DegenerateGeometryError(f"Tetrahedron is degenerate (volume {volume:.3g})")

    area = 0.0
    for face in TET_FACES:
        a, b, c = pts[face]
        area += 0.5 * np.linalg.norm(np.cross(b - a, c - a))
    inradius = 3.0 * volume / area
    return _enclosing_radius(pts) / inradius


def tet_volume_ratio(pa, pb, pc, pd) -> float:
    """Volume over diameter cubed; a secondary shape metric."""
    pts = np.array([pa, pb, pc, pd], dtype=float)
    diameter = pdist(pts).max()
    return abs(tet_volume(*pts)) / diameter ** 3


def tet_neighbors(tets: np.ndarray) -> np.ndarray:
    """
    (m, 4) array: entry [t, s] is the tet sharing the face opposite slot s of t,
    or -1 when that face lies on the boundary.
    """
    tets = np.asarray(tets, dtype=np.int64)
    m = len(tets)
    faces = np.sort(tets[:, TET_FACES], axis=2).reshape(-1, 3)
    order = np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))
    ordered = faces[order]
    same = np.nonzero(np.all(ordered[1:] == ordered[:-1], axis=1))[0]

    neighbors = np.full(4 * m, -1, dtype=np.int64)
    first, second = order[same], order[same + 1]
    neighbors[first] = second // 4
    neighbors[second] = first // 4
    return neighbors.reshape(m, 4)


def boundary_faces(tets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Faces owned by a single tet, as sorted vertex triples, with their owning tet ids."""
    tets = np.asarray(tets, dtype=np.int64)
    owners, slots = np.nonzero(tet_neighbors(tets) < 0)
    faces = np.sort(tets[owners[:, None], TET_FACES[slots]], axis=1)
    return faces, owners


def _face_multiplicity(tets: np.ndarray) -> np.ndarray:
    faces = np.sort(tets[:, TET_FACES], axis=2).reshape(-1, 3)
    _, inverse, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    return counts[inverse.ravel()].reshape(-1, 4)


def vertex_tet_incidence(tets: np.ndarray, n_vertices: int) -> sparse.csr_matrix:
    """CSR (n_vertices x m) incidence; row v lists the tets containing v in index order."""
    m = len(tets)
    rows = np.asarray(tets, dtype=np.int64).ravel()
    cols = np.repeat(np.arange(m), 4)
    data = np.ones(len(rows), dtype=np.int8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(n_vertices, m))


class TrussMesh:
    """
    Truss on a tetrahedral mesh: vertices embedded at distinct points, edges
    between every pair of vertices sharing a tetrahedron, and a positive
    stiffness coefficient per edge. Immutable after construction.

    The optional chunk partition records the convex pieces of a union mesh.
    """

    def __init__(self, points, tets, gamma: float = 1.0,
                 edge_gamma: Optional[Union[Dict[Tuple[int, int], float], Iterable]] = None,
                 chunks: Optional[Sequence[Sequence[int]]] = None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"points must be an (n, 3) array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must have finite coordinates")

        tets = np.asarray(tets, dtype=np.int64)
        edges = edges_from_tets(tets, len(points))
        if np.any(np.diff(np.sort(tets, axis=1), axis=1) == 0):
            bad = int(np.nonzero(np.any(np.diff(np.sort(tets, axis=1), axis=1) == 0, axis=1))[0][0])
            raise ValueError(f"Tetrahedron {bad} repeats a vertex: {tets[bad].tolist()}")

        used = np.zeros(len(points), dtype=bool)
        used[tets.ravel()] = True
        if not used.all():
            raise ValueError(f"Vertex {int(np.argmin(used))} is not used by any tetrahedron")

        close = cKDTree(points).query_pairs(GEOM_EPS, output_type='ndarray')
        if len(close):
            i, j = close[0]
            raise ValueError(f"Vertices {i} and {j} are not distinct points")

        if gamma < 0 or not np.isfinite(gamma):
            raise ValueError(f"Default gamma must be finite and non-negative, got {gamma}")

        self._points = points
        self._tets = tets
        self._edges = edges
        self._edge_keys = edges[:, 0] * len(points) + edges[:, 1]
        self.gamma_default = float(gamma)

        gammas = np.full(len(edges), float(gamma))
        if edge_gamma is not None:
            items = edge_gamma.items() if isinstance(edge_gamma, dict) else (
                ((e[0], e[1]), e[2]) for e in edge_gamma)
            for (i, j), value in items:
                if value < 0 or not np.isfinite(value):
                    raise ValueError(f"gamma of edge ({i}, {j}) must be finite and non-negative, got {value}")
                gammas[self.edge_index(i, j)] = float(value)
        self._gamma = gammas

        if chunks is None:
            chunk_list = [np.arange(len(tets))]
        else:
            chunk_list = [np.asarray(c, dtype=np.int64) for c in chunks]
            if any(len(c) == 0 for c in chunk_list):
                raise ValueError("chunks must be non-empty")
            merged = np.sort(np.concatenate(chunk_list))
            if len(merged) != len(tets) or not np.array_equal(merged, np.arange(len(tets))):
                raise ValueError("chunks must partition the tetrahedra")
        self._chunks = chunk_list

        for arr in (self._points, self._tets, self._edges, self._gamma, *self._chunks):
            arr.setflags(write=False)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def tets(self) -> np.ndarray:
        return self._tets

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def gamma(self) -> np.ndarray:
        return self._gamma

    @property
    def chunks(self) -> List[np.ndarray]:
        return list(self._chunks)

    @property
    def n_vertices(self) -> int:
        return len(self._points)

    @property
    def n_tets(self) -> int:
        return len(self._tets)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def k(self) -> int:
        return len(self._chunks)

    @property
    def edge_lengths(self) -> np.ndarray:
        diff = self._points[self._edges[:, 0]] - self._points[self._edges[:, 1]]
        return np.linalg.norm(diff, axis=1)

    @property
    def diameter(self) -> float:
        """Largest pairwise vertex distance."""
        candidates = self._points
        try:
            candidates = self._points[ConvexHull(self._points).vertices]
        except QhullError:
            pass
        return float(pdist(candidates).max())

    def tet_points(self, tet_ids=None) -> np.ndarray:
        tets = self._tets if tet_ids is None else self._tets[np.asarray(tet_ids)]
        return self._points[tets]

    def edge_index(self, i, j) -> Union[int, np.ndarray]:
        """Index (or indices) into `edges` of the given vertex pairs."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        # Keys are only unique for in-range pairs
        flat_i, flat_j = (a.ravel() for a in np.broadcast_arrays(i, j))
        bad = (flat_i < 0) | (flat_i >= self.n_vertices) | (flat_j < 0) | (flat_j >= self.n_vertices)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(f"Pair ({flat_i[k]}, {flat_j[k]}) has a vertex outside [0, {self.n_vertices})")
        if np.any(flat_i == flat_j):
            k = int(np.argmax(flat_i == flat_j))
            raise ValueError(f"Pair ({flat_i[k]}, {flat_j[k]}) does not name two distinct vertices")
        keys = np.minimum(i, j) * self.n_vertices + np.maximum(i, j)
        idx = np.searchsorted(self._edge_keys, keys)
        idx_clipped = np.minimum(idx, len(self._edge_keys) - 1)
        missing = self._edge_keys[idx_clipped] != keys
        if np.any(missing):
            k = int(np.argmax(missing.ravel()))
            raise ValueError(f"Pair ({flat_i[k]}, {flat_j[k]}) is not an edge")
        return int(idx_clipped) if idx_clipped.ndim == 0 else idx_clipped

    def gamma_of(self, i, j):
        return self._gamma[self.edge_index(i, j)]

    def chunk_vertices(self, i: int) -> np.ndarray:
        return np.unique(self._tets[self._chunks[i]])

    def submesh(self, tet_ids) -> Tuple['TrussMesh', np.ndarray]:
        """Sub-truss on the given tets, reindexed; returns it with the global vertex ids."""
        tet_ids = np.asarray(tet_ids, dtype=np.int64)
        vertex_ids, local = np.unique(self._tets[tet_ids], return_inverse=True)
        local_tets = local.reshape(-1, 4)
        sub_edges = edges_from_tets(local_tets)
        gammas = self._gamma[self.edge_index(vertex_ids[sub_edges[:, 0]], vertex_ids[sub_edges[:, 1]])]
        overrides = {(int(a), int(b)): float(g) for (a, b), g in zip(sub_edges, gammas)
                     if g != self.gamma_default}
        sub = TrussMesh(self._points[vertex_ids], local_tets, gamma=self.gamma_default,
                        edge_gamma=overrides or None)
        return sub, vertex_ids

    def __repr__(self) -> str:
        return (f"TrussMesh(n={self.n_vertices}, tets={self.n_tets}, "
                f"edges={self.n_edges}, k={self.k})")


@dataclass(frozen=True)
class OrientedBox:
    center: np.ndarray
    axes: np.ndarray  # rows are unit directions
    half_lengths: np.ndarray  # descending

    @property
    def aspect_ratio(self) -> float:
        return float(self.half_lengths[0] / self.half_lengths[2])

    @property
    def longest_direction(self) -> np.ndarray:
        return self.axes[0]

    @property
    def side_lengths(self) -> np.ndarray:
        return 2.0 * self.half_lengths

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    def local_coordinates(self, points) -> np.ndarray:
        """Coordinates along the box axes, measured from the box center."""
        return (np.asarray(points, dtype=float) - self.center) @ self.axes.T

    def contains(self, points, eps: float = GEOM_EPS) -> np.ndarray:
        local = np.abs(self.local_coordinates(points))
        return np.all(local <= self.half_lengths + eps, axis=-1)


def _unit_perpendicular(u: np.ndarray) -> np.ndarray:
    helper = np.zeros(3)
    helper[np.argmin(np.abs(u))] = 1.0
    v = np.cross(u, helper)
    return v / np.linalg.norm(v)


def _box_around_axis(points: np.ndarray, u: np.ndarray) -> Tuple[float, np.ndarray]:
    """Minimum-area rectangle of the cross-section orthogonal to u, extruded along u."""
    e1 = _unit_perpendicular(u)
    e2 = np.cross(u, e1)
    planar = points @ np.column_stack([e1, e2])
    try:
        hull = ConvexHull(planar)
    except QhullError:
        raise DegenerateGeometryError("Point set is flat; no bounding box with positive volume")

    ring = planar[hull.vertices]
    directions = np.roll(ring, -1, axis=0) - ring
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    normals = np.column_stack([-directions[:, 1], directions[:, 0]])
    extent_a = np.ptp(ring @ directions.T, axis=0)
    extent_b = np.ptp(ring @ normals.T, axis=0)
    best = int(np.argmin(extent_a * extent_b))

    along = directions[best, 0] * e1 + directions[best, 1] * e2
    across = np.cross(u, along)
    axes = np.stack([u, along, across])
    extent_u = np.ptp(points @ u)
    volume = extent_u * extent_a[best] * extent_b[best]
    return volume, axes


def bounding_box(obj) -> OrientedBox:
    """
    Oriented bounding box of a mesh or point cloud.

    Candidate axes are the principal directions of the point cloud followed by
    the convex-hull facet normals; around each candidate the cross-section is
    fitted with its minimum-area rectangle. The candidate with the smallest
    volume wins, principal directions first on ties.
    """
    points = obj.points if isinstance(obj, TrussMesh) else np.asarray(obj, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 4:
        raise DegenerateGeometryError(f"Need at least 4 points in 3-D, got shape {points.shape}")

    centered = points - points.mean(axis=0)
    _, vectors = np.linalg.eigh(centered.T @ centered)
    candidates = [vectors[:, i] for i in (2, 1, 0)]

    try:
        hull = ConvexHull(points)
    except QhullError:
        raise DegenerateGeometryError("Points are coplanar; no bounding box with positive volume")
    normals = hull.equations[:, :3]
    signs = np.sign(normals[np.arange(len(normals)), np.argmax(np.abs(normals), axis=1)])
    normals = np.round(normals * signs[:, None], 9)
    _, first = np.unique(normals, axis=0, return_index=True)
    candidates.extend(hull.equations[np.sort(first)[:64], :3])

    best_volume, best_axes = np.inf, None
    for u in candidates:
        u = np.asarray(u, dtype=float) / np.linalg.norm(u)
        volume, axes = _box_around_axis(points, u)
        if volume < best_volume * (1.0 - 1e-9):
            best_volume, best_axes = volume, axes

    local = points @ best_axes.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    half = 0.5 * (hi - lo)
    order = np.argsort(-half, kind='stable')
    axes = best_axes[order]
    axes[2] = np.cross(axes[0], axes[1])
    half = half[order]
    if half[2] <= GEOM_EPS:
        raise DegenerateGeometryError("Point set has zero extent along one axis")
    center = (0.5 * (hi + lo))[order] @ best_axes[order]
    return OrientedBox(center=center, axes=axes, half_lengths=half)


@dataclass
class RigidityGraph:
    n_tets: int
    edges: np.ndarray  # (E, 2) tet index pairs
    faces: np.ndarray  # (E, 3) shared vertex triples

    def adjacency(self) -> sparse.csr_matrix:
        data = np.ones(len(self.edges), dtype=np.int8)
        graph = sparse.coo_matrix((data, (self.edges[:, 0], self.edges[:, 1])),
                                  shape=(self.n_tets, self.n_tets))
        return (graph + graph.T).tocsr()

    def is_connected(self) -> bool:
        n_comp, _ = csgraph.connected_components(self.adjacency(), directed=False)
        return n_comp == 1


def rigidity_graph(mesh: TrussMesh) -> RigidityGraph:
    neighbors = tet_neighbors(mesh.tets)
    tet_ids, slots = np.nonzero(neighbors >= 0)
    others = neighbors[tet_ids, slots]
    keep = tet_ids < others
    tet_ids, slots, others = tet_ids[keep], slots[keep], others[keep]
    faces = np.sort(mesh.tets[tet_ids[:, None], TET_FACES[slots]], axis=1)
    return RigidityGraph(mesh.n_tets, np.column_stack([tet_ids, others]), faces)


def is_stiffly_connected(mesh: TrussMesh) -> bool:
    """
    True iff the rigidity graph is connected and, around every vertex, the
    tets containing it are connected through faces containing it.
    """
    graph = rigidity_graph(mesh)
    if not graph.is_connected():
        return False

    # Nodes are (tet, slot) incidences; a shared face links the incidences
    # of each of its three vertices in both tets
    tets = mesh.tets
    t1, t2 = graph.edges[:, 0], graph.edges[:, 1]
    slots1 = np.argmax(tets[t1][:, None, :] == graph.faces[:, :, None], axis=2)
    slots2 = np.argmax(tets[t2][:, None, :] == graph.faces[:, :, None], axis=2)
    rows = (4 * t1[:, None] + slots1).ravel()
    cols = (4 * t2[:, None] + slots2).ravel()
    n_nodes = 4 * mesh.n_tets
    links = sparse.coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                              shape=(n_nodes, n_nodes))
    _, labels = csgraph.connected_components(links, directed=False)

    pairs = np.unique(np.column_stack([tets.ravel(), labels]), axis=0)
    return len(pairs) == mesh.n_vertices


@dataclass
class ValidationReport:
    duplicate_tets: List[Tuple[int, int]] = field(default_factory=list)
    nonmanifold_faces: int = 0
    overlapping_pairs: List[Tuple[int, int]] = field(default_factory=list)
    degenerate_tets: List[int] = field(default_factory=list)
    bad_aspect: List[int] = field(default_factory=list)
    bad_lengths: List[int] = field(default_factory=list)
    bad_gamma: List[int] = field(default_factory=list)
    max_aspect_ratio: float = 0.0
    edge_length_range: Tuple[float, float] = (0.0, 0.0)
    gamma_range: Tuple[float, float] = (0.0, 0.0)

    @property
    def is_simplicial_complex(self) -> bool:
        return not (self.duplicate_tets or self.nonmanifold_faces or
                    self.overlapping_pairs or self.degenerate_tets)

    @property
    def ok(self) -> bool:
        return (self.is_simplicial_complex and not self.bad_aspect and
                not self.bad_lengths and not self.bad_gamma)

    def to_dict(self) -> dict:
        return {
            'ok': self.ok,
            'simplicial_complex': self.is_simplicial_complex,
            'duplicate_tets': [list(map(int, p)) for p in self.duplicate_tets],
            'nonmanifold_faces': int(self.nonmanifold_faces),
            'overlapping_pairs': [list(map(int, p)) for p in self.overlapping_pairs],
            'degenerate_tets': [int(t) for t in self.degenerate_tets],
            'bad_aspect': [int(t) for t in self.bad_aspect],
            'bad_lengths': [int(e) for e in self.bad_lengths],
            'bad_gamma': [int(e) for e in self.bad_gamma],
            'max_aspect_ratio': float(self.max_aspect_ratio),
            'edge_length_range': [float(v) for v in self.edge_length_range],
            'gamma_range': [float(v) for v in self.gamma_range],
        }


def _penetrating(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Separating-axis test for batches of tetrahedron pairs, a and b of shape (p, 4, 3).
    True where no axis separates the pair, i.e. the interiors overlap.
    """
    def face_normals(v):
        f = TET_FACES
        return np.cross(v[:, f[:, 1]] - v[:, f[:, 0]], v[:, f[:, 2]] - v[:, f[:, 0]])

    def edge_dirs(v):
        return v[:, TET_PAIRS[:, 1]] - v[:, TET_PAIRS[:, 0]]

    ea, eb = edge_dirs(a), edge_dirs(b)
    crosses = np.cross(ea[:, :, None, :], eb[:, None, :, :]).reshape(len(a), 36, 3)
    axes = np.concatenate([face_normals(a), face_normals(b), crosses], axis=1)
    norms = np.linalg.norm(axes, axis=2)
    scale = np.max(norms, axis=1, keepdims=True)
    valid = norms > 1e-12 * scale
    axes = axes / np.where(valid, norms, 1.0)[:, :, None]

    pa = np.einsum('pvk,pak->pva', a, axes)
    pb = np.einsum('pvk,pak->pva', b, axes)
    overlap = np.minimum(pa.max(axis=1), pb.max(axis=1)) - np.maximum(pa.min(axis=1), pb.min(axis=1))
    separated = (overlap <= GEOM_EPS) & valid
    return ~np.any(separated, axis=1)


def validate_edge_simple(mesh: TrussMesh, limits: Optional[dict] = None) -> ValidationReport:
    """Check the edge-simple conditions; violations are collected, never raised."""
    limits = {**DEFAULT_LIMITS, **(limits or {})}
    report = ValidationReport()
    tets = mesh.tets
    tet_pts = mesh.tet_points()

    # Combinatorial checks
    sorted_tets = np.sort(tets, axis=1)
    _, inverse, counts = np.unique(sorted_tets, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    for group in np.nonzero(counts > 1)[0]:
        members = np.nonzero(inverse == group)[0]
        report.duplicate_tets.extend((int(members[0]), int(m)) for m in members[1:])
    multiplicity = _face_multiplicity(tets)
    report.nonmanifold_faces = int(np.count_nonzero(multiplicity > 2) // 3)

    # Shape
    ratios = np.empty(mesh.n_tets)
    for t, pts in enumerate(tet_pts):
        try:
            ratios[t] = tet_aspect_ratio(*pts)
        except DegenerateGeometryError:
            report.degenerate_tets.append(t)
            ratios[t] = np.inf
    report.max_aspect_ratio = float(ratios.max())
    report.bad_aspect = np.nonzero(ratios > limits['ar_max'])[0].tolist()

    # Geometric non-penetration among nearby tets
    centroids = tet_pts.mean(axis=1)
    reach = np.linalg.norm(tet_pts - centroids[:, None, :], axis=2).max()
    pairs = cKDTree(centroids).query_pairs(2.0 * reach + GEOM_EPS, output_type='ndarray')
    if len(pairs):
        shared = (sorted_tets[pairs[:, 0]][:, :, None] ==
                  sorted_tets[pairs[:, 1]][:, None, :]).sum(axis=(1, 2))
        pairs = pairs[shared < 4]
        batch = 20000
        for start in range(0, len(pairs), batch):
            chunk = pairs[start:start + batch]
            hits = _penetrating(tet_pts[chunk[:, 0]], tet_pts[chunk[:, 1]])
            report.overlapping_pairs.extend((int(i), int(j)) for i, j in chunk[hits])

    lengths = mesh.edge_lengths
    report.edge_length_range = (float(lengths.min()), float(lengths.max()))
    report.bad_lengths = np.nonzero((lengths < limits['len_min'] - GEOM_EPS) |
                                    (lengths > limits['len_max'] + GEOM_EPS))[0].tolist()
    gamma = mesh.gamma
    report.gamma_range = (float(gamma.min()), float(gamma.max()))
    report.bad_gamma = np.nonzero((gamma < limits['g_min']) | (gamma > limits['g_max']))[0].tolist()

    if not report.ok:
        logger.info("Mesh validation found %d overlaps, %d bad shapes, %d bad lengths, %d bad gammas",
                    len(report.overlapping_pairs), len(report.bad_aspect),
                    len(report.bad_lengths), len(report.bad_gamma))
    return report


def _cube_tets(parity: int) -> List[List[Tuple[int, int, int]]]:
    central, corners = (_EVEN_CORNERS, _ODD_CORNERS) if parity == 0 else (_ODD_CORNERS, _EVEN_CORNERS)
    tets = [list(central)]
    for corner in corners:
        adjacent = [c for c in central if sum(abs(a - b) for a, b in zip(c, corner)) == 1]
        tets.append([corner] + adjacent)
    return tets


_CUBE_TETS = (_cube_tets(0), _cube_tets(1))


def _grid_arrays(nx: int, ny: int, nz: int, origin=(0, 0, 0)) -> Tuple[np.ndarray, np.ndarray]:
    for name, value in (('nx', nx), ('ny', ny), ('nz', nz)):
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value}")
    origin = np.asarray(origin, dtype=float)
    if not np.allclose(origin, np.round(origin)):
        raise ValueError(f"Placement must lie on the unit lattice, got {origin.tolist()}")
    shift = int(np.round(origin).sum()) % 2

    ii, jj, kk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing='ij')
    points = np.column_stack([ii.ravel(order='F'), jj.ravel(order='F'), kk.ravel(order='F')]).astype(float)
    points += origin

    def vertex(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    tets = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                for tet in _CUBE_TETS[(i + j + k + shift) % 2]:
                    tets.append([vertex(i + a, j + b, k + c) for a, b, c in tet])
    return points, np.array(tets, dtype=np.int64)


def generate_grid_truss(nx: int, ny: int, nz: int, gamma: float = 1.0) -> TrussMesh:
    """Box of nx*ny*nz unit cubes, each split into 5 tets with alternating parity."""
    points, tets = _grid_arrays(nx, ny, nz)
    return TrussMesh(points, tets, gamma=gamma)


_AXES = {'x': 0, 'y': 1, 'z': 2}


def generate_union(chunk_shapes: Sequence, glue: str = 'x', gamma: float = 1.0) -> TrussMesh:
    """
    Glue grid-truss chunks into one mesh.

    Each entry of chunk_shapes is either dims (nx, ny, nz), stacked after the
    previous chunk along the glue axis, or (dims, placement) with an explicit
    lattice offset. Coincident vertices are merged.
    """
    if glue not in _AXES:
        raise ValueError(f"glue must be one of {sorted(_AXES)}, got {glue!r}")
    if len(chunk_shapes) == 0:
        raise ValueError("chunk_shapes must be non-empty")
    axis = _AXES[glue]

    all_points, all_tets, chunks = [], [], []
    cursor = 0.0
    offset, tet_offset = 0, 0
    for shape in chunk_shapes:
        if len(shape) == 2 and np.ndim(shape[0]) == 1:
            dims, placement = tuple(shape[0]), np.asarray(shape[1], dtype=float)
        else:
            dims, placement = tuple(shape), None
        if len(dims) != 3:
            raise ValueError(f"Chunk dims must have 3 entries, got {dims}")
        if placement is None:
            placement = np.zeros(3)
            placement[axis] = cursor
        cursor = max(cursor, placement[axis] + dims[axis])

        points, tets = _grid_arrays(*dims, origin=placement)
        all_points.append(points)
        all_tets.append(tets + offset)
        chunks.append(np.arange(tet_offset, tet_offset + len(tets)))
        offset += len(points)
        tet_offset += len(tets)

    points = np.vstack(all_points)
    tets = np.vstack(all_tets)

    close = cKDTree(points).query_pairs(GEOM_EPS, output_type='ndarray')
    if len(close):
        gaps = np.linalg.norm(points[close[:, 0]] - points[close[:, 1]], axis=1)
        if np.any(gaps > 0.0):
            i, j = close[np.argmax(gaps > 0.0)]
            raise ValueError(f"Incompatible placement: vertices {points[i].tolist()} and "
                             f"{points[j].tolist()} nearly coincide")
    merge = sparse.coo_matrix((np.ones(len(close)), (close[:, 0], close[:, 1])),
                              shape=(len(points), len(points)))
    n_unique, labels = csgraph.connected_components(merge, directed=False)

    # Number merged vertices in order of first occurrence
    first = np.full(n_unique, len(points))
    np.minimum.at(first, labels, np.arange(len(points)))
    rank = np.empty(n_unique, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(n_unique)

    logger.debug("Union of %d chunks merged %d coincident vertices", len(chunk_shapes),
                 len(points) - n_unique)
    return TrussMesh(points[np.sort(first)], rank[labels][tets], gamma=gamma, chunks=chunks)
