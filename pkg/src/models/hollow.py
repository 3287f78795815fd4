"""
Hollowing of a convex chunk: keep the tets near a grid of cutting planes and
near the outer surface, make that set stiffly connected, and split what is
left into small interior chunks.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

from ..utils.config import (CROSSING_ANGLES, GEOM_EPS, HOLLOW_DRIFT, HOLLOW_STATS_COLUMNS, KAPPA_MAX_DOF, MIN_R,
                            RANGES)
from .dissect import graph_from_edges
from .errors import NullSpaceMismatchError
from .mesh import OrientedBox, TrussMesh, bounding_box, boundary_faces, rigidity_graph, vertex_tet_incidence
from .oracle import dense_schur, generalized_eigenvalues
from .stiffness import assemble

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RDivision:
    """Axis-aligned (in box coordinates) grid of cutting planes with spacing about cell_scale * r^(1/3)."""
    box: OrientedBox
    r: float
    cuts: Tuple[np.ndarray, np.ndarray, np.ndarray]  # interior plane positions, box-local
    cells: np.ndarray
    spacing: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def n_planes(self) -> int:
        return sum(len(c) for c in self.cuts)

    def cell_of(self, points) -> np.ndarray:
        local = self.box.local_coordinates(points) + self.box.half_lengths
        cell = np.floor(local / self.spacing).astype(np.int64)
        return np.clip(cell, 0, self.cells - 1)

    def crossing(self, tet_points: np.ndarray) -> np.ndarray:
        """Mask of tets whose vertices straddle or touch some cutting plane."""
        local = self.box.local_coordinates(tet_points)  # (m, 4, 3)
        lo, hi = local.min(axis=1), local.max(axis=1)
        hit = np.zeros(len(tet_points), dtype=bool)
        for axis, cuts in enumerate(self.cuts):
            if len(cuts) == 0:
                continue
            first = np.searchsorted(cuts, lo[:, axis] - GEOM_EPS, side='left')
            last = np.searchsorted(cuts, hi[:, axis] + GEOM_EPS, side='right')
            hit |= last > first
        return hit

    def clear_of(self, points, eps: float = GEOM_EPS) -> 'RDivision':
        """
        The same division with each cut that passes through a vertex level
        moved halfway to the next level, so it is straddled by one layer of
        tets instead of touched from both sides.
        """
        local = self.box.local_coordinates(points)
        cuts = []
        for axis, axis_cuts in enumerate(self.cuts):
            levels = np.unique(local[:, axis])
            moved = np.array(axis_cuts, dtype=float)
            for i, c in enumerate(axis_cuts):
                k = np.searchsorted(levels, c - eps)
                if k == len(levels) or levels[k] > c + eps:
                    continue
                above = levels[levels > c + eps]
                below = levels[levels < c - eps]
                if len(above):
                    moved[i] = 0.5 * (levels[k] + above[0])
                elif len(below):
                    moved[i] = 0.5 * (levels[k] + below[-1])
            cuts.append(np.sort(moved))
        return replace(self, cuts=tuple(cuts))


def r_division(box: OrientedBox, r: float, cell_scale: float = 1.0) -> RDivision:
    """
    Uniform grid of cells of side at most cell_scale * r^(1/3) covering the box.
    The cell count per axis is ceil(side / (cell_scale * r^(1/3))).
    """
    if r < MIN_R:
        raise ValueError(f"r must be at least {MIN_R}, got {r}")
    lo, hi = RANGES['cell_scale']
    if not lo <= cell_scale <= hi:
        raise ValueError(f"cell_scale must be in [{lo}, {hi}], got {cell_scale}")
    side = float(np.cbrt(r))
    sides = box.side_lengths
    if sides.min() < side - GEOM_EPS:
        raise ValueError(f"r={r} too large for box: shortest side {sides.min():.4g} < r^(1/3) = {side:.4g}")

    cells = np.maximum(1, np.ceil(sides / (cell_scale * side) - 1e-9)).astype(np.int64)
    spacing = sides / cells
    cuts = tuple(-box.half_lengths[a] + spacing[a] * np.arange(1, cells[a]) for a in range(3))
    return RDivision(box=box, r=float(r), cuts=cuts, cells=cells, spacing=spacing)


def boundary_tets(mesh_chunk: TrussMesh) -> np.ndarray:
    """Tets owning a face not shared with another tet."""
    _, owners = boundary_faces(mesh_chunk.tets)
    return np.unique(owners)


def _join_components(graph: sparse.csr_matrix, inside: np.ndarray) -> List[int]:
    """
    Add nodes along shortest paths until the nodes marked inside are connected.
    Mutates `inside`; returns the added nodes.
    """
    added: List[int] = []
    while True:
        ids = np.nonzero(inside)[0]
        if len(ids) <= 1:
            return added
        n_comp, labels = csgraph.connected_components(graph[ids][:, ids], directed=False)
        if n_comp <= 1:
            return added
        sources = ids[labels == labels[0]]
        targets = ids[labels != labels[0]]
        dist, pred, _ = csgraph.dijkstra(graph, directed=False, indices=sources, unweighted=True,
                                         min_only=True, return_predecessors=True)
        reachable = targets[np.isfinite(dist[targets])]
        if len(reachable) == 0:
            return added
        node = pred[reachable[np.argmin(dist[reachable])]]
        while node >= 0 and not inside[node]:
            inside[node] = True
            added.append(int(node))
            node = pred[node]


def _star_graph(tets: np.ndarray) -> sparse.csr_matrix:
    # Tets of one vertex star are face-adjacent at that vertex iff they share 3 vertices
    shared = (tets[:, None, :, None] == tets[None, :, None, :]).sum(axis=(2, 3))
    return sparse.csr_matrix((shared == 3).astype(float))


def stiffen(mesh_chunk: TrussMesh, tet_subset) -> np.ndarray:
    """
    Grow a tet subset until it is stiffly connected.

    First the rigidity-graph components are joined along shortest face paths
    of the whole chunk, then every vertex star is made face-connected inside
    the vertex's full star. Both steps are greedy; the result is a superset.
    """
    tets = mesh_chunk.tets
    inside = np.zeros(mesh_chunk.n_tets, dtype=bool)
    inside[np.asarray(tet_subset, dtype=np.int64)] = True
    if not inside.any():
        raise ValueError("tet_subset must be non-empty")
    start = int(inside.sum())

    rigidity = rigidity_graph(mesh_chunk).adjacency()
    _join_components(rigidity, inside)
    ids = np.nonzero(inside)[0]
    n_comp, _ = csgraph.connected_components(rigidity[ids][:, ids], directed=False)
    if n_comp > 1:
        logger.warning("Stiffening left %d rigidity components; the chunk is not face-connected", n_comp)

    incidence = vertex_tet_incidence(tets, mesh_chunk.n_vertices)
    queue = deque(np.unique(tets[inside]).tolist())
    queued = set(queue)
    while queue:
        v = queue.popleft()
        queued.discard(v)
        star = incidence.indices[incidence.indptr[v]:incidence.indptr[v + 1]]
        local = inside[star]
        if local.sum() <= 1 or local.all():
            continue
        added = _join_components(_star_graph(tets[star]), local)
        if not added:
            continue
        new_tets = star[added]
        inside[new_tets] = True
        for w in np.unique(tets[new_tets]).tolist():
            if w not in queued:
                queued.add(w)
                queue.append(w)

    logger.debug("Stiffening added %d tets to %d", int(inside.sum()) - start, start)
    return np.nonzero(inside)[0]


@dataclass
class InteriorChunk:
    vertices: np.ndarray
    contacts: np.ndarray
    tets: np.ndarray


@dataclass
class Hollowing:
    """
    Hollowing tets H, their vertex set U, and the interior chunks left after
    removing H. Every tet is in H or in exactly one interior chunk.
    """
    tets: np.ndarray
    boundary_vertices: np.ndarray
    interior_chunks: List[InteriorChunk]
    r: float
    box: OrientedBox
    division: Optional[RDivision] = None
    stiffening_added: int = 0

    @property
    def interior_vertices(self) -> np.ndarray:
        if not self.interior_chunks:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([c.vertices for c in self.interior_chunks]))

    def lift(self, tet_ids, vertex_ids) -> 'Hollowing':
        """Same hollowing with chunk-local tet and vertex indices mapped to global ones."""
        tet_ids = np.asarray(tet_ids, dtype=np.int64)
        vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
        chunks = [InteriorChunk(vertices=vertex_ids[c.vertices], contacts=vertex_ids[c.contacts],
                                tets=tet_ids[c.tets]) for c in self.interior_chunks]
        return Hollowing(tets=np.sort(tet_ids[self.tets]),
                         boundary_vertices=np.sort(vertex_ids[self.boundary_vertices]),
                         interior_chunks=chunks, r=self.r, box=self.box,
                         division=self.division, stiffening_added=self.stiffening_added)


def _interior_chunks(mesh_chunk: TrussMesh, inside: np.ndarray, in_u: np.ndarray) -> List[InteriorChunk]:
    tets = mesh_chunk.tets
    interior = np.nonzero(~in_u)[0]
    if len(interior) == 0:
        return []
    edges = mesh_chunk.edges
    keep = ~in_u[edges[:, 0]] & ~in_u[edges[:, 1]]
    graph = graph_from_edges(edges[keep], mesh_chunk.n_vertices)
    _, labels = csgraph.connected_components(graph[interior][:, interior], directed=False)
    label_of = np.full(mesh_chunk.n_vertices, -1, dtype=np.int64)
    label_of[interior] = labels

    rest = np.nonzero(~inside)[0]
    # Each remaining tet has an interior vertex; all its interior vertices share a label
    tet_label = label_of[tets[rest]].max(axis=1)

    chunks = []
    for label in range(labels.max() + 1):
        chunk_tets = rest[tet_label == label]
        verts = np.unique(tets[chunk_tets])
        chunks.append(InteriorChunk(vertices=interior[labels == label],
                                    contacts=verts[in_u[verts]],
                                    tets=chunk_tets))
    return chunks


def hollow(mesh_chunk: TrussMesh, box: Optional[OrientedBox] = None, r: float = MIN_R,
           cell_scale: float = 1.0) -> Hollowing:
    """(box, r)-hollowing of a convex edge-simple chunk."""
    box = bounding_box(mesh_chunk) if box is None else box
    division = r_division(box, r, cell_scale).clear_of(mesh_chunk.points)

    crossing = division.crossing(mesh_chunk.tet_points())
    seed = np.union1d(np.nonzero(crossing)[0], boundary_tets(mesh_chunk))
    n_seed = len(seed)

    inside = np.zeros(mesh_chunk.n_tets, dtype=bool)
    inside[stiffen(mesh_chunk, seed)] = True
    while True:
        in_u = np.zeros(mesh_chunk.n_vertices, dtype=bool)
        in_u[mesh_chunk.tets[inside]] = True
        # Tets with every vertex in U belong to H
        orphans = ~inside & in_u[mesh_chunk.tets].all(axis=1)
        if not orphans.any():
            break
        inside |= orphans
        inside[stiffen(mesh_chunk, np.nonzero(inside)[0])] = True

    chunks = _interior_chunks(mesh_chunk, inside, in_u)
    hollowing = Hollowing(tets=np.nonzero(inside)[0], boundary_vertices=np.nonzero(in_u)[0],
                          interior_chunks=chunks, r=float(r), box=box, division=division,
                          stiffening_added=int(inside.sum()) - n_seed)
    logger.info("Hollowed %d tets with r=%g: |H|=%d, |U|=%d, %d interior chunks",
                mesh_chunk.n_tets, r, len(hollowing.tets), len(hollowing.boundary_vertices), len(chunks))
    drift = len(hollowing.boundary_vertices) * r ** (1 / 3) / mesh_chunk.n_vertices
    if drift > HOLLOW_DRIFT:
        logger.warning("Hollowing is larger than expected: |U| r^(1/3) / n = %.3g > %g", drift, HOLLOW_DRIFT)
    return hollowing


@dataclass
class CrossingPlane:
    angle: float
    direction: np.ndarray
    offset: float
    hollow_count: int
    mesh_count: int
    bound_shape: float


@dataclass
class HollowingMetrics:
    n: int
    r: float
    hollow_tets: int
    hollow_points: int
    n_chunks: int
    max_chunk_vertices: int
    max_chunk_contacts: int
    stiffening_added: int
    planes: List[CrossingPlane] = field(default_factory=list)
    kappa: Optional[float] = None
    min_generalized_eigenvalue: Optional[float] = None

    def to_row(self) -> dict:
        return {
            'n': self.n,
            'r': self.r,
            'hollow_tets': self.hollow_tets,
            'hollow_points': self.hollow_points,
            'max_chunk_vertices': self.max_chunk_vertices,
            'max_chunk_contacts': self.max_chunk_contacts,
            'kappa': np.nan if self.kappa is None else self.kappa,
        }


def _crossing_count(tet_points: np.ndarray, direction: np.ndarray, offset: float) -> int:
    proj = tet_points @ direction
    return int(np.count_nonzero((proj.min(axis=1) <= offset + GEOM_EPS) &
                                (proj.max(axis=1) >= offset - GEOM_EPS)))


def verify_hollowing(mesh_chunk: TrussMesh, hollowing: Hollowing,
                     plane_angles: Sequence[float] = CROSSING_ANGLES,
                     oracle: bool = True) -> HollowingMetrics:
    """
    Size metrics of a hollowing, crossing counts of sampled planes, and (for small
    chunks) the oracle generalized condition number of (Sc[A]_U, A_H).
    """
    chunks = hollowing.interior_chunks
    metrics = HollowingMetrics(
        n=mesh_chunk.n_vertices,
        r=hollowing.r,
        hollow_tets=len(hollowing.tets),
        hollow_points=len(hollowing.boundary_vertices),
        n_chunks=len(chunks),
        max_chunk_vertices=max((len(c.vertices) for c in chunks), default=0),
        max_chunk_contacts=max((len(c.contacts) for c in chunks), default=0),
        stiffening_added=hollowing.stiffening_added,
    )

    box = hollowing.box
    all_points = mesh_chunk.tet_points()
    hollow_points = all_points[hollowing.tets]
    alpha = box.aspect_ratio
    for angle in plane_angles:
        direction = math.cos(angle) * box.axes[0] + math.sin(angle) * box.axes[1]
        offset = float(box.center @ direction)
        bound = (metrics.n ** (2 / 3) * alpha ** (-1 / 3) * hollowing.r ** (-1 / 3)
                 / max(math.cos(angle), 1e-12) ** 2)
        metrics.planes.append(CrossingPlane(angle=float(angle), direction=direction, offset=offset,
                                         hollow_count=_crossing_count(hollow_points, direction, offset),
                                         mesh_count=_crossing_count(all_points, direction, offset),
                                         bound_shape=bound))

    if oracle and 3 * mesh_chunk.n_vertices <= KAPPA_MAX_DOF:
        dofs = (3 * hollowing.boundary_vertices[:, None] + np.arange(3)).ravel()
        schur = dense_schur(assemble(mesh_chunk).to_dense(), dofs)
        a_h = assemble(mesh_chunk, tets=hollowing.tets).matrix[dofs][:, dofs].toarray()
        try:
            values = generalized_eigenvalues(schur, a_h)
        except NullSpaceMismatchError as e:
            logger.warning("Oracle condition number skipped: %s", str(e))
        else:
            metrics.kappa = float(values[-1] / values[0])
            metrics.min_generalized_eigenvalue = float(values[0])
    return metrics


def hollow_stats_frame(metrics: Sequence[HollowingMetrics]) -> pd.DataFrame:
    return pd.DataFrame([m.to_row() for m in metrics], columns=HOLLOW_STATS_COLUMNS)
