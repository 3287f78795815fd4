import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from ..utils.config import (BALANCE, DIRECTION_ATTEMPTS, DIRECTION_CANDIDATES, GEOM_EPS, LEAF_SIZE, PLANE_SLACK,
                            SEPARATOR_OFFSETS)
from .errors import DirectionSearchError
from .mesh import OrientedBox, TrussMesh, edges_from_tets

logger = logging.getLogger(__name__)

NODE_KINDS = ('leaf', 'top-separator', 'internal-separator')


@dataclass
class SeparatorNode:
    vertices: np.ndarray
    level: int
    kind: str

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"Node kind must be one of {NODE_KINDS}, got {self.kind!r}")


@dataclass
class EliminationOrdering:
    """
    Vertex elimination sequence. Nodes are listed in elimination order and
    each node's vertices occupy a contiguous run of `order`.
    """
    order: np.ndarray
    nodes: List[SeparatorNode] = field(default_factory=list)
    fill_in: Optional[int] = None
    flops: Optional[int] = None

    def __len__(self) -> int:
        return len(self.order)

    def is_bijection(self, vertices) -> bool:
        vertices = np.asarray(vertices)
        return (len(self.order) == len(vertices) and
                np.array_equal(np.sort(self.order), np.sort(vertices)))

    def local_order(self, vertex_ids) -> np.ndarray:
        """The sequence as positions into the sorted array vertex_ids."""
        vertex_ids = np.asarray(vertex_ids)
        local = np.searchsorted(vertex_ids, self.order)
        if np.any(local >= len(vertex_ids)) or np.any(vertex_ids[np.minimum(local, len(vertex_ids) - 1)] != self.order):
            raise ValueError("Ordering contains vertices outside the given vertex set")
        return local

    def dof_permutation(self, block: int = 3) -> np.ndarray:
        return (block * self.order[:, None] + np.arange(block)).ravel()


@dataclass
class LayeredGraph:
    """Disjoint vertex layers with no edge between layers more than one apart."""
    layers: List[np.ndarray]
    adjacency: sparse.csr_matrix

    def __post_init__(self):
        self.layers = [np.sort(np.asarray(layer, dtype=np.int64)) for layer in self.layers]
        layer_of = np.full(self.adjacency.shape[0], -1, dtype=np.int64)
        for i, layer in enumerate(self.layers):
            if np.any(layer_of[layer] >= 0):
                raise ValueError(f"Layer {i} overlaps an earlier layer")
            layer_of[layer] = i
        far = _far_layer_edges(self.adjacency, layer_of)
        if far is not None:
            raise ValueError(f"Edge joins layers {far[0]} and {far[1]}, more than one apart")


def _far_layer_edges(adjacency: sparse.csr_matrix, layer_of: np.ndarray) -> Optional[Tuple[int, int]]:
    coo = adjacency.tocoo()
    a, b = layer_of[coo.row], layer_of[coo.col]
    bad = (a >= 0) & (b >= 0) & (np.abs(a - b) > 1)
    if not np.any(bad):
        return None
    idx = np.argmax(bad)
    return int(min(a[idx], b[idx])), int(max(a[idx], b[idx]))


def graph_from_edges(edges: np.ndarray, n: int) -> sparse.csr_matrix:
    """Symmetric 0/1 adjacency of an undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    data = np.ones(2 * len(edges), dtype=np.int8)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    graph = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    graph.data[:] = 1
    return graph


def vertex_adjacency(A, block: int = 3) -> sparse.csr_matrix:
    """Vertex graph of a block matrix: u ~ v iff block (u, v) has a nonzero, u != v."""
    coo = sparse.coo_matrix(A.matrix if hasattr(A, 'matrix') else A)
    if coo.shape[0] % block:
        raise ValueError(f"Matrix order {coo.shape[0]} is not a multiple of block size {block}")
    nz = coo.data != 0
    rows, cols = coo.row[nz] // block, coo.col[nz] // block
    off = rows != cols
    n = coo.shape[0] // block
    return graph_from_edges(np.column_stack([rows[off], cols[off]]), n)


def layered_graph_nd(layered_graph: LayeredGraph, base_kind: str = 'leaf') -> EliminationOrdering:
    """Number the middle layer last, recursing on the layers to either side."""
    layers = layered_graph.layers
    nodes: List[SeparatorNode] = []

    def recurse(lo: int, hi: int, level: int):
        if hi <= lo:
            return
        if hi - lo == 1:
            nodes.append(SeparatorNode(layers[lo], level, base_kind))
            return
        mid = lo + (hi - lo) // 2
        recurse(lo, mid, level + 1)
        recurse(mid + 1, hi, level + 1)
        nodes.append(SeparatorNode(layers[mid], level, 'top-separator'))

    recurse(0, len(layers), 0)
    order = np.concatenate([n.vertices for n in nodes]) if nodes else np.zeros(0, dtype=np.int64)
    return EliminationOrdering(order=order, nodes=nodes)


def direction_ok(d: np.ndarray, directions: np.ndarray) -> bool:
    """1/(10k) <= |d . d_i| <= 1 - 1/(10k) for every i."""
    directions = np.atleast_2d(directions)
    bound = 1.0 / (10 * len(directions))
    dots = np.abs(directions @ d)
    return bool(np.all((dots >= bound) & (dots <= 1.0 - bound)))


def pick_direction(directions, seed: Union[int, np.random.Generator] = 0,
                   n_vertices: Optional[int] = None) -> np.ndarray:
    """
    Sample unit vectors uniformly until one makes a moderate angle with every
    direction: neither nearly orthogonal nor nearly parallel.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[1] != 3 or len(directions) == 0:
        raise ValueError(f"directions must be a non-empty (k, 3) array, got {directions.shape}")
    norms = np.linalg.norm(directions, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("directions must be unit vectors")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(directions) if n_vertices is None else n_vertices
    attempts = DIRECTION_ATTEMPTS * math.ceil(math.log2(n + 2))
    for attempt in range(attempts):
        d = rng.standard_normal(3)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            continue
        d /= norm
        if direction_ok(d, directions):
            logger.debug("Direction accepted after %d samples", attempt + 1)
            return d
    raise DirectionSearchError(f"No admissible direction in {attempts} samples for k={len(directions)}")


def direction_candidates(boxes: Sequence[OrientedBox], seed: Union[int, np.random.Generator] = 0,
                         n_vertices: Optional[int] = None,
                         count: int = DIRECTION_CANDIDATES) -> List[np.ndarray]:
    """
    Admissible directions for the top-level planes: each box's short axes
    tilted toward its long axis just past the angle bound, then `count`
    random samples from pick_direction.
    """
    longs = np.array([b.longest_direction for b in boxes])
    tilt = 1.5 / (10 * len(longs))
    candidates = []
    for box in boxes:
        for axis in box.axes[1:]:
            d = math.sqrt(1.0 - tilt ** 2) * axis + tilt * box.longest_direction
            d /= np.linalg.norm(d)
            if direction_ok(d, longs):
                candidates.append(d)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(count):
        try:
            candidates.append(pick_direction(longs, rng, n_vertices=n_vertices))
        except DirectionSearchError:
            if not candidates:
                raise
            break
    return candidates


@dataclass
class PlaneSplit:
    direction: np.ndarray
    offsets: np.ndarray  # (l,) ascending
    parts: np.ndarray  # part id per tet, 0..l
    tet_ids: np.ndarray

    def part_sizes(self) -> np.ndarray:
        return np.bincount(self.parts, minlength=len(self.offsets) + 1)

    def crossing_tets(self, mesh: TrussMesh, j: int) -> np.ndarray:
        """Tets of the split that straddle or touch plane j."""
        proj = mesh.points[mesh.tets[self.tet_ids]] @ self.direction
        c = self.offsets[j]
        hit = (proj.min(axis=1) <= c + GEOM_EPS) & (proj.max(axis=1) >= c - GEOM_EPS)
        return self.tet_ids[hit]


def separator_planes(mesh: TrussMesh, d, l: int, tet_ids=None, slack: float = 0.0) -> PlaneSplit:
    """
    l parallel planes orthogonal to d splitting the tets into l+1 parts by centroid.

    With slack 0 the cuts sit at the count quantiles and part sizes differ by at
    most one. With slack s > 0 plane j may slide to any gap between vertex
    levels with between (j + 1 - s)/(l + 1) and (j + 1 + s)/(l + 1) of the
    centroids below it; it takes the gap touched by the fewest tets, nearest the
    quantile on ties, and stays at the quantile when the window has no gap.
    """
    if l < 1:
        raise ValueError(f"l must be at least 1, got {l}")
    if not 0.0 <= slack <= 0.5:
        raise ValueError(f"slack must be in [0, 0.5], got {slack}")
    d = np.asarray(d, dtype=float)
    tet_ids = np.arange(mesh.n_tets) if tet_ids is None else np.asarray(tet_ids, dtype=np.int64)
    m = len(tet_ids)
    if m < l + 1:
        raise ValueError(f"Cannot split {m} tets into {l + 1} parts")

    tet_proj = mesh.points[mesh.tets[tet_ids]] @ d
    score = tet_proj.mean(axis=1)
    order = np.lexsort((tet_ids, score))
    sorted_score = score[order]
    boundaries = (np.arange(1, l + 1) * m) // (l + 1)
    offsets = 0.5 * (sorted_score[boundaries - 1] + sorted_score[boundaries])

    if slack == 0.0:
        parts = np.empty(m, dtype=np.int64)
        parts[order] = np.searchsorted(boundaries, np.arange(m), side='right')
        return PlaneSplit(direction=d, offsets=offsets, parts=parts, tet_ids=tet_ids)

    levels = np.unique(tet_proj)
    gaps = 0.5 * (levels[:-1] + levels[1:])
    lo, hi = np.sort(tet_proj.min(axis=1)), np.sort(tet_proj.max(axis=1))
    crossing = (np.searchsorted(lo, gaps + GEOM_EPS, side='right') -
                np.searchsorted(hi, gaps - GEOM_EPS, side='left'))
    share = np.searchsorted(sorted_score, gaps, side='right') / m

    for j in range(l):
        target = (j + 1) / (l + 1)
        window = np.nonzero((share >= (j + 1 - slack) / (l + 1)) & (share <= (j + 1 + slack) / (l + 1)))[0]
        if len(window):
            best = np.lexsort((np.abs(share[window] - target), crossing[window]))[0]
            offsets[j] = gaps[window[best]]
    offsets = np.sort(offsets)
    parts = np.searchsorted(offsets, score, side='left')
    return PlaneSplit(direction=d, offsets=offsets, parts=parts, tet_ids=tet_ids)


@dataclass
class Separator:
    separator: np.ndarray
    part_a: np.ndarray
    part_b: np.ndarray
    axis: np.ndarray
    offset: float
    balanced: bool


def _cut(proj: np.ndarray, W: np.ndarray, edges: np.ndarray, c: float):
    on = np.abs(proj - c) <= GEOM_EPS
    left = proj < c - GEOM_EPS
    right = proj > c + GEOM_EPS
    a, b = edges[:, 0], edges[:, 1]
    crossing = (left[a] & right[b]) | (right[a] & left[b])
    a, b = a[crossing], b[crossing]
    # Cover each crossing edge by its endpoint nearer the plane, the lower one on ties
    da, db = np.abs(proj[a] - c), np.abs(proj[b] - c)
    pick_a = np.where(np.abs(da - db) <= GEOM_EPS, proj[a] < proj[b], da < db)
    in_sep = np.zeros(len(proj), dtype=bool)
    in_sep[W[on[W]]] = True
    in_sep[np.where(pick_a, a, b)] = True
    sep = W[in_sep[W]]
    part_a = W[left[W] & ~in_sep[W]]
    part_b = W[right[W] & ~in_sep[W]]
    return sep, part_a, part_b


def _principal_axes(P: np.ndarray) -> np.ndarray:
    centered = P - P.mean(axis=0)
    cov = centered.T @ centered
    # Rounding noise would otherwise rotate the axes of a near-isotropic cloud
    cov[np.abs(cov) <= 1e-12 * np.abs(cov).max()] = 0.0
    _, vectors = np.linalg.eigh(cov)
    return vectors[:, ::-1].T


def _scan_offsets(values: np.ndarray, balance: float,
                  limit: int = SEPARATOR_OFFSETS) -> List[Tuple[float, float]]:
    """
    Candidate plane offsets at vertex levels with between 1 - balance and
    balance of the values below them, median first, as (offset, share) pairs.
    """
    ranked = np.sort(values)
    median = ranked[len(ranked) // 2]
    levels = np.unique(ranked)
    share = np.searchsorted(ranked, levels, side='left') / len(ranked)
    window = np.nonzero((share >= 1.0 - balance) & (share <= balance))[0]
    if len(window) > limit:
        window = window[np.unique(np.linspace(0, len(window) - 1, limit).round().astype(np.int64))]
    offsets = [(float(median), 0.5)]
    offsets.extend((float(levels[i]), float(share[i])) for i in window if levels[i] != median)
    return offsets


def _graph_inputs(obj, vertices, edges) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(obj, TrussMesh):
        points = obj.points
        if edges is None:
            edges = obj.edges
    else:
        points = np.asarray(obj, dtype=float)
    W = np.arange(len(points)) if vertices is None else np.unique(np.asarray(vertices, dtype=np.int64))
    if edges is None:
        raise ValueError("edges are required when a point array is given")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    inside = np.zeros(len(points), dtype=bool)
    inside[W] = True
    edges = edges[inside[edges[:, 0]] & inside[edges[:, 1]]]
    return points, W, edges


def geometric_separator(obj, vertices=None, edges=None, balance: float = BALANCE) -> Separator:
    """
    Plane separator of the graph induced on `vertices`.

    Scans vertex levels inside the balance window along the three principal
    axes and keeps the balanced cut with the fewest separator vertices, the
    one nearest the median on ties. A cut is the vertices on the plane plus
    one endpoint of every edge crossing it. Falls back to a vertex-count
    bisection along the longest axis when no plane is balanced.
    """
    points, W, edges = _graph_inputs(obj, vertices, edges)
    if len(W) == 0:
        raise ValueError("Cannot separate an empty vertex set")

    axes = _principal_axes(points[W])
    proj = np.zeros(len(points))
    limit = balance * len(W)
    best, best_key = None, None

    def consider(axis_idx, c, share, rank):
        nonlocal best, best_key
        sep, part_a, part_b = _cut(proj, W, edges, c)
        balanced = max(len(part_a), len(part_b)) <= limit
        key = (not balanced, len(sep), abs(share - 0.5), rank)
        if best_key is None or key < best_key:
            best_key = key
            best = Separator(sep, part_a, part_b, axes[axis_idx].copy(), float(c), balanced)

    rank = 0
    for axis_idx in range(3):
        proj[W] = points[W] @ axes[axis_idx]
        for c, share in _scan_offsets(proj[W], balance):
            consider(axis_idx, c, share, rank)
            rank += 1

    if not best.balanced:
        # Perturbed offsets before giving up on planes
        for axis_idx in range(3):
            proj[W] = points[W] @ axes[axis_idx]
            for q in (0.4, 0.6, 0.3, 0.7):
                consider(axis_idx, np.quantile(proj[W], q), q, rank)
                rank += 1

    if not best.balanced:
        proj[W] = points[W] @ axes[0]
        ranked = W[np.lexsort((W, proj[W]))]
        first = np.zeros(len(points), dtype=bool)
        first[ranked[:len(W) // 2]] = True
        a, b = edges[:, 0], edges[:, 1]
        crossing = first[a] != first[b]
        in_sep = np.zeros(len(points), dtype=bool)
        in_sep[np.where(first[a[crossing]], a[crossing], b[crossing])] = True
        sep = W[in_sep[W]]
        part_a = W[first[W] & ~in_sep[W]]
        part_b = W[~first[W]]
        logger.debug("Plane separators unbalanced on %d vertices; using count bisection", len(W))
        best = Separator(sep, part_a, part_b, axes[0].copy(), float('nan'),
                         max(len(part_a), len(part_b)) <= limit)
    return best


def nested_dissection(obj, vertices=None, edges=None, leaf_size: int = LEAF_SIZE,
                      level: int = 0) -> EliminationOrdering:
    """Recursive geometric nested dissection: parts first, separator last."""
    points, W, edges = _graph_inputs(obj, vertices, edges)
    nodes: List[SeparatorNode] = []

    def recurse(W: np.ndarray, edges: np.ndarray, level: int):
        if len(W) == 0:
            return
        if len(W) <= leaf_size:
            nodes.append(SeparatorNode(W, level, 'leaf'))
            return
        split = geometric_separator(points, W, edges)
        if len(split.separator) == len(W):
            nodes.append(SeparatorNode(W, level, 'leaf'))
            return
        for part in (split.part_a, split.part_b):
            inside = np.zeros(len(points), dtype=bool)
            inside[part] = True
            recurse(part, edges[inside[edges[:, 0]] & inside[edges[:, 1]]], level + 1)
        if len(split.separator):
            nodes.append(SeparatorNode(split.separator, level, 'internal-separator'))

    recurse(W, edges, level)
    order = np.concatenate([n.vertices for n in nodes]) if nodes else np.zeros(0, dtype=np.int64)
    return EliminationOrdering(order=order, nodes=nodes)


def preconditioner_tets(mesh: TrussMesh, included: Sequence[int], hollowings: Dict) -> np.ndarray:
    """Hollowing tets of the included chunks plus every tet of the other chunks."""
    included = set(int(i) for i in included)
    pieces = []
    for i, chunk in enumerate(mesh.chunks):
        pieces.append(np.asarray(hollowings[i].tets) if i in included else chunk)
    return np.unique(np.concatenate(pieces))


def glue_vertices(mesh: TrussMesh) -> np.ndarray:
    """Vertices shared by tets of two or more chunks."""
    if mesh.k == 1:
        return np.zeros(0, dtype=np.int64)
    owners = np.full(mesh.n_vertices, -1, dtype=np.int64)
    shared = np.zeros(mesh.n_vertices, dtype=bool)
    for i, chunk in enumerate(mesh.chunks):
        verts = np.unique(mesh.tets[chunk])
        shared[verts[(owners[verts] >= 0) & (owners[verts] != i)]] = True
        owners[verts] = i
    return np.nonzero(shared)[0]


def _merge_far_layers(layers: List[np.ndarray], adjacency: sparse.csr_matrix) -> List[np.ndarray]:
    layers = [layer for layer in layers if len(layer)]
    while True:
        layer_of = np.full(adjacency.shape[0], -1, dtype=np.int64)
        for i, layer in enumerate(layers):
            layer_of[layer] = i
        far = _far_layer_edges(adjacency, layer_of)
        if far is None:
            return layers
        lo, hi = far
        logger.debug("Merging top-level layers %d..%d", lo, hi)
        layers = layers[:lo] + [np.concatenate(layers[lo:hi + 1])] + layers[hi + 1:]


def _plane_layers(points: np.ndarray, vertices: np.ndarray, edges: np.ndarray, split: PlaneSplit,
                  taken: np.ndarray) -> List[np.ndarray]:
    """Per plane, one endpoint of every edge crossing it, skipping vertices already taken."""
    taken = taken.copy()
    proj = np.zeros(len(points))
    proj[vertices] = points[vertices] @ split.direction
    layers = []
    for c in split.offsets:
        sep, _, _ = _cut(proj, vertices, edges, c)
        sep = sep[~taken[sep]]
        taken[sep] = True
        layers.append(sep)
    return layers


def convex_truss_union_nd(mesh: TrussMesh, boxes: Sequence[OrientedBox], included: Sequence[int],
                          hollowings: Dict, l: int, seed: int = 0,
                          leaf_size: int = LEAF_SIZE) -> EliminationOrdering:
    """
    Ordering of the preconditioner vertices of a union of convex chunks.

    Directions admissible against every chunk's long axis are tried and the
    one with the thinnest top-level layers is kept: l planes orthogonal to it
    cut the preconditioner tets into balanced parts, and a cover of the edges
    crossing each plane forms a layer. Layers are numbered last by layered
    nested dissection, glue vertices between chunks after them; the slabs
    between planes are ordered first by recursive geometric nested dissection.
    """
    if l < 0:
        raise ValueError(f"l must be non-negative, got {l}")
    tet_ids = preconditioner_tets(mesh, included, hollowings)
    tets = mesh.tets[tet_ids]
    vertices = np.unique(tets)
    edges = edges_from_tets(tets)
    adjacency = graph_from_edges(edges, mesh.n_vertices)
    points = mesh.points

    assigned = np.zeros(mesh.n_vertices, dtype=bool)
    glue = np.intersect1d(glue_vertices(mesh), vertices)
    assigned[glue] = True
    if len(glue):
        logger.info("Numbering %d glue vertices in the top-level separator", len(glue))

    nodes: List[SeparatorNode] = []

    if l == 0:
        rest = vertices[~assigned[vertices]]
        inner = nested_dissection(points, rest, edges, leaf_size=leaf_size, level=1 if len(glue) else 0)
        nodes.extend(inner.nodes)
    else:
        best = None
        for d in direction_candidates(boxes, seed, n_vertices=mesh.n_vertices):
            split = separator_planes(mesh, d, l, tet_ids=tet_ids, slack=PLANE_SLACK)
            layers = _plane_layers(points, vertices, edges, split, assigned)
            size = sum(len(layer) for layer in layers)
            if best is None or size < best[0]:
                best = (size, split, layers)
        _, split, layers = best
        d = split.direction
        for layer in layers:
            assigned[layer] = True
        layers = _merge_far_layers(layers, adjacency)
        top = layered_graph_nd(LayeredGraph(layers, adjacency), base_kind='top-separator')

        rest = vertices[~assigned[vertices]]
        slab = np.searchsorted(split.offsets, points[rest] @ d)
        for j in range(l + 1):
            inner = nested_dissection(points, rest[slab == j], edges, leaf_size=leaf_size, level=2)
            nodes.extend(inner.nodes)
        nodes.extend(top.nodes)
        logger.info("Top-level separators: %d layers, sizes %s", len(layers), [len(x) for x in layers])

    if len(glue):
        nodes.append(SeparatorNode(glue, 0, 'top-separator'))
    order = np.concatenate([n.vertices for n in nodes]) if nodes else np.zeros(0, dtype=np.int64)
    return EliminationOrdering(order=order, nodes=nodes)


@dataclass
class SymbolicFactor:
    """Row structure of each column of L, as sorted positions in the ordering."""
    structs: List[np.ndarray]
    parent: np.ndarray
    fill_in: int
    flops: int
    block_size: int

    @property
    def nnz_blocks(self) -> int:
        return int(sum(len(s) for s in self.structs)) + len(self.structs)


def elimination_flops(counts, block_size: int) -> int:
    """Multiply-adds for eliminating pivots with the given below-diagonal block counts."""
    counts = np.asarray(counts, dtype=np.int64)
    return int(block_size ** 3 * np.sum(1 + counts + counts * (counts + 1) // 2))


def symbolic_factor(adjacency, order, block_size: int = 3) -> SymbolicFactor:
    """
    Symbolic Gaussian elimination on a vertex graph.

    Column j's structure is its higher-numbered neighbours merged with the
    structures of its elimination-tree children.
    """
    adjacency = sparse.csr_matrix(adjacency)
    n = adjacency.shape[0]
    order = np.asarray(order, dtype=np.int64)
    if len(order) != n or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError(f"Ordering is not a permutation of {n} vertices")

    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    indptr, indices = adjacency.indptr, adjacency.indices

    children: List[List[int]] = [[] for _ in range(n)]
    structs: List[np.ndarray] = []
    parent = np.full(n, -1, dtype=np.int64)
    for j, v in enumerate(order):
        nbrs = pos[indices[indptr[v]:indptr[v + 1]]]
        struct = set(nbrs[nbrs > j].tolist())
        for c in children[j]:
            struct.update(structs[c].tolist())
        struct.discard(j)
        arr = np.array(sorted(struct), dtype=np.int64)
        structs.append(arr)
        if len(arr):
            parent[j] = arr[0]
            children[arr[0]].append(j)

    off_diagonal = adjacency.nnz - np.count_nonzero(adjacency.diagonal())
    counts = np.array([len(s) for s in structs], dtype=np.int64)
    fill_edges = int(counts.sum()) - off_diagonal // 2
    return SymbolicFactor(structs=structs, parent=parent,
                          fill_in=fill_edges * block_size ** 2,
                          flops=elimination_flops(counts, block_size),
                          block_size=block_size)


def fillin_flop_simulate(adjacency, ordering, block_size: int = 3) -> Tuple[int, int]:
    """Exact fill-in entries and multiply-adds of eliminating in the given order."""
    order = ordering.order if isinstance(ordering, EliminationOrdering) else ordering
    symbolic = symbolic_factor(adjacency, order, block_size)
    return symbolic.fill_in, symbolic.flops
