"""
Sparse block Cholesky factorization and partial (Schur) elimination.

The factor is computed row by row (up-looking) into the pattern given by the
symbolic pass. Scalar pivots below piv_eps times the largest diagonal entry
are dropped, so positive semidefinite matrices with a known null space
(rigid-body motions) factor without regularization; a dropped pivot keeps a
unit placeholder on the diagonal and its unknown is zeroed in every solve.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph

from ..utils.config import PIV_EPS
from .dissect import EliminationOrdering, SymbolicFactor, symbolic_factor, vertex_adjacency
from .errors import NotPositiveSemidefiniteError, SingularInteriorError
from .stiffness import as_csr

logger = logging.getLogger(__name__)


def _dofs(positions: np.ndarray, block: int) -> np.ndarray:
    return (block * np.asarray(positions, dtype=np.int64)[:, None] + np.arange(block)).ravel()


def _dense_cholesky(D: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Lower factor of a small PSD block; pivots at or below threshold are dropped."""
    try:
        L = scipy.linalg.cholesky(D, lower=True, check_finite=False)
        if np.all(np.diag(L) ** 2 > threshold):
            return L, np.zeros(len(D), dtype=bool)
    except np.linalg.LinAlgError:
        pass

    M = D.copy()
    size = len(M)
    L = np.zeros_like(M)
    zeroed = np.zeros(size, dtype=bool)
    for i in range(size):
        p = M[i, i]
        if p < -threshold:
            raise NotPositiveSemidefiniteError(f"Negative pivot {p:.3g} (threshold {threshold:.3g})")
        if p <= threshold:
            zeroed[i] = True
            L[i, i] = 1.0
            continue
        L[i:, i] = M[i:, i] / np.sqrt(p)
        M[i + 1:, i + 1:] -= np.outer(L[i + 1:, i], L[i + 1:, i])
    return L, zeroed


def _row_patterns(structs: List[np.ndarray], n: int) -> List[np.ndarray]:
    # Row k of L is nonzero in column i iff k is in struct(i)
    counts = np.array([len(s) for s in structs], dtype=np.int64)
    if counts.sum() == 0:
        return [np.zeros(0, dtype=np.int64) for _ in range(n)]
    rows = np.concatenate(structs)
    cols = np.repeat(np.arange(n), counts)
    order = np.argsort(rows, kind='stable')
    bounds = np.searchsorted(rows[order], np.arange(n + 1))
    return [cols[order[bounds[k]:bounds[k + 1]]] for k in range(n)]


@dataclass
class SparseFactor:
    """
    P A P^T = L L^T on the range of A, P the dof permutation of the ordering.

    L is stored by block column: `diag[i]` is the lower-triangular diagonal
    block of vertex position i, `columns[i]` the blocks at rows `structs[i]`.
    """
    n_dofs: int
    block_size: int
    perm: np.ndarray  # perm[i] = original dof at permuted position i
    diag: np.ndarray  # (n, b, b)
    columns: List[np.ndarray]  # (len(struct), b, b) each
    zeroed: np.ndarray  # (n, b) dropped pivots
    symbolic: SymbolicFactor

    @property
    def n_vertices(self) -> int:
        return len(self.diag)

    @property
    def fill_in(self) -> int:
        return self.symbolic.fill_in

    @property
    def flops(self) -> int:
        return self.symbolic.flops

    @property
    def n_zeroed(self) -> int:
        return int(np.count_nonzero(self.zeroed))

    @property
    def L(self) -> sparse.csr_matrix:
        """Lower factor in permuted order, unit placeholders on dropped pivots."""
        b = self.block_size
        n = self.n_vertices
        r, c = np.tril_indices(b)
        rows = [(b * np.arange(n)[:, None] + r).ravel()]
        cols = [(b * np.arange(n)[:, None] + c).ravel()]
        data = [self.diag[:, r, c].ravel()]
        for i, blocks in enumerate(self.columns):
            if len(blocks) == 0:
                continue
            ext = self.symbolic.structs[i]
            rr = b * ext[:, None, None] + np.arange(b)[None, :, None]
            cc = b * i + np.arange(b)[None, None, :]
            rr, cc = np.broadcast_arrays(rr, cc)
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            data.append(blocks.ravel())
        L = sparse.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.n_dofs, self.n_dofs)).tocsr()
        L.eliminate_zeros()
        return L

    def reconstruct(self) -> sparse.csr_matrix:
        """P^T L L^T P with the placeholders removed; equals A up to dropped pivots."""
        L = self.L.tolil()
        for i in np.nonzero(self.zeroed.ravel())[0]:
            L[i, i] = 0.0
        L = L.tocsr()
        product = (L @ L.T).tocoo()
        return sparse.csr_matrix((product.data, (self.perm[product.row], self.perm[product.col])),
                                 shape=(self.n_dofs, self.n_dofs))

    def forward(self, B) -> np.ndarray:
        """L^{-1} P B, returned in permuted order."""
        B = np.asarray(B, dtype=float)
        Y = B[self.perm].reshape(self.n_vertices, self.block_size, -1)
        structs = self.symbolic.structs
        for i in range(self.n_vertices):
            y = scipy.linalg.solve_triangular(self.diag[i], Y[i], lower=True, check_finite=False)
            y[self.zeroed[i]] = 0.0
            Y[i] = y
            if len(structs[i]):
                Y[structs[i]] -= self.columns[i] @ y
        return Y.reshape(B.shape)

    def backward(self, Z) -> np.ndarray:
        """P^T L^{-T} Z for Z in permuted order."""
        Z = np.asarray(Z, dtype=float)
        Y = Z.copy().reshape(self.n_vertices, self.block_size, -1)
        structs = self.symbolic.structs
        for i in reversed(range(self.n_vertices)):
            y = Y[i]
            if len(structs[i]):
                y = y - np.einsum('pab,pam->bm', self.columns[i], Y[structs[i]])
            y = scipy.linalg.solve_triangular(self.diag[i], y, lower=True, trans='T', check_finite=False)
            y[self.zeroed[i]] = 0.0
            Y[i] = y
        X = np.empty(Z.shape)
        X[self.perm] = Y.reshape(Z.shape)
        return X


def factor(A, ordering=None, block: int = 3, piv_eps: float = PIV_EPS) -> SparseFactor:
    """
    Up-looking block Cholesky of a symmetric PSD matrix under a vertex ordering.

    `ordering` lists vertex positions 0..n-1 of A (array or EliminationOrdering);
    the natural order is used when omitted.
    """
    A = as_csr(A)
    if A.shape[0] != A.shape[1] or A.shape[0] % block:
        raise ValueError(f"Matrix of shape {A.shape} is not square with block size {block}")
    n = A.shape[0] // block
    if ordering is None:
        order = np.arange(n)
    else:
        order = np.asarray(ordering.order if isinstance(ordering, EliminationOrdering) else ordering,
                           dtype=np.int64)

    symbolic = symbolic_factor(vertex_adjacency(A, block), order, block)
    structs = symbolic.structs
    perm = _dofs(order, block)
    Ap = A[perm][:, perm].tocsc()
    diagonal = Ap.diagonal()
    if np.any(diagonal < 0):
        raise NotPositiveSemidefiniteError(f"Negative diagonal entry {diagonal.min():.3g}")
    threshold = piv_eps * (diagonal.max() if len(diagonal) else 0.0)

    patterns = _row_patterns(structs, n)
    diag = np.zeros((n, block, block))
    columns = [np.zeros((len(s), block, block)) for s in structs]
    filled = np.zeros(n, dtype=np.int64)
    zeroed = np.zeros((n, block), dtype=bool)
    work = np.zeros((n, block, block))

    for k in range(n):
        # Scatter the upper part of block column k into the workspace
        col = Ap[:, k * block:(k + 1) * block].tocoo()
        upper = col.row < (k + 1) * block
        np.add.at(work, (col.row[upper] // block, col.row[upper] % block, col.col[upper]), col.data[upper])
        D = work[k].copy()
        work[k] = 0.0

        # Triangular solve L(:k, :k) y = C(:k, k) along the row pattern
        for i in patterns[k]:
            y = scipy.linalg.solve_triangular(diag[i], work[i], lower=True, check_finite=False)
            y[zeroed[i]] = 0.0
            work[i] = 0.0
            done = filled[i]
            if done:
                work[structs[i][:done]] -= columns[i][:done] @ y
            columns[i][done] = y.T
            filled[i] = done + 1
            D -= y.T @ y

        diag[k], zeroed[k] = _dense_cholesky(0.5 * (D + D.T), threshold)

    result = SparseFactor(n_dofs=n * block, block_size=block, perm=perm, diag=diag, columns=columns,
                          zeroed=zeroed, symbolic=symbolic)
    logger.debug("Factored %d dofs: fill %d, flops %d, %d dropped pivots",
                 n * block, result.fill_in, result.flops, result.n_zeroed)
    return result


def solve_factor(F: SparseFactor, b) -> np.ndarray:
    """x = P^T L^{-T} L^{-1} P b; a pseudo-inverse solve when pivots were dropped."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.n_dofs:
        raise ValueError(f"Dimension mismatch: factor has {F.n_dofs} dofs, rhs has {b.shape[0]}")
    return F.backward(F.forward(b))


@dataclass
class _Component:
    vertices: np.ndarray  # global vertex ids, sorted
    contacts: np.ndarray  # positions into kept
    factor: SparseFactor
    W: np.ndarray  # L^{-1} P A_{C,N}
    coupling: sparse.csr_matrix  # A_{C,N}


@dataclass
class PartialElimination:
    """
    Schur complement of A onto the kept vertices after eliminating a subset,
    with the per-component factors needed to reduce right-hand sides and
    recover the eliminated unknowns.
    """
    kept: np.ndarray
    eliminated: np.ndarray
    schur: sparse.csr_matrix
    block_size: int
    components: List[_Component] = field(default_factory=list)

    @property
    def schur_nnz(self) -> int:
        return self.schur.nnz

    @property
    def fill_in(self) -> int:
        return sum(c.factor.fill_in for c in self.components)

    @property
    def flops(self) -> int:
        return sum(c.factor.flops for c in self.components)

    def kept_dofs(self) -> np.ndarray:
        return _dofs(self.kept, self.block_size)

    def reduce_rhs(self, f) -> np.ndarray:
        """f_T - A_TS A_SS^{-1} f_S, indexed by the kept dofs."""
        f = np.asarray(f, dtype=float)
        b = self.block_size
        reduced = f[self.kept_dofs()].copy()
        for c in self.components:
            if len(c.contacts) == 0:
                continue
            y = c.factor.forward(f[_dofs(c.vertices, b)])
            reduced[_dofs(c.contacts, b)] -= c.W.T @ y
        return reduced

    def back_substitute(self, x_kept, f) -> np.ndarray:
        """Full solution vector from the kept unknowns: x_S = A_SS^{-1}(f_S - A_ST x_T)."""
        f = np.asarray(f, dtype=float)
        b = self.block_size
        x = np.zeros(len(f))
        x[self.kept_dofs()] = x_kept
        for c in self.components:
            rhs = f[_dofs(c.vertices, b)]
            if len(c.contacts):
                rhs = rhs - c.coupling @ x_kept[_dofs(c.contacts, b)]
            x[_dofs(c.vertices, b)] = solve_factor(c.factor, rhs)
        return x


def eliminate_subset(A, S: Sequence[int], ordering=None, block: int = 3,
                     piv_eps: float = PIV_EPS) -> PartialElimination:
    """
    Eliminate the vertex subset S of A, one connected component of S at a
    time. The optional ordering (over global vertex ids, covering S) fixes
    the elimination order inside each component.
    """
    A = as_csr(A)
    n = A.shape[0] // block
    S = np.unique(np.asarray(S, dtype=np.int64))
    if len(S) and (S[0] < 0 or S[-1] >= n):
        raise ValueError(f"Eliminated vertices must lie in [0, {n})")
    kept = np.setdiff1d(np.arange(n), S)
    position = np.full(n, -1, dtype=np.int64)
    position[kept] = np.arange(len(kept))

    kept_dofs = _dofs(kept, block)
    schur = A[kept_dofs][:, kept_dofs].tocoo()
    rows, cols, data = [schur.row], [schur.col], [schur.data]

    rank = np.full(n, -1, dtype=np.int64)
    if ordering is not None:
        order = np.asarray(ordering.order if isinstance(ordering, EliminationOrdering) else ordering)
        rank[order] = np.arange(len(order))
        if np.any(rank[S] < 0):
            raise ValueError("ordering does not cover every eliminated vertex")

    adjacency = vertex_adjacency(A, block)
    components: List[_Component] = []
    if len(S):
        n_comp, labels = csgraph.connected_components(adjacency[S][:, S], directed=False)
        for label in range(n_comp):
            verts = S[labels == label]
            contacts = np.setdiff1d(adjacency[verts].indices, verts)
            contacts = contacts[position[contacts] >= 0]

            local_order = None
            if ordering is not None:
                local_order = np.argsort(rank[verts], kind='stable')
            vdofs = _dofs(verts, block)
            F = factor(A[vdofs][:, vdofs], local_order, block, piv_eps)
            if F.n_zeroed:
                raise SingularInteriorError(
                    f"Eliminated component of {len(verts)} vertices is a mechanism ({F.n_zeroed} dropped pivots)")

            cdofs = _dofs(contacts, block)
            coupling = A[vdofs][:, cdofs]
            if len(contacts) == 0:
                # Decoupled block: nothing reaches the Schur complement
                components.append(_Component(verts, position[contacts], F, np.zeros((len(vdofs), 0)),
                                             coupling.tocsr()))
                continue
            W = F.forward(coupling.toarray())
            contribution = -(W.T @ W)
            target = _dofs(position[contacts], block)
            rr, cc = np.meshgrid(target, target, indexing='ij')
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            data.append(contribution.ravel())
            components.append(_Component(verts, position[contacts], F, W, coupling.tocsr()))

    size = len(kept_dofs)
    schur = sparse.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(size, size)).tocsr()
    schur.sum_duplicates()
    schur = 0.5 * (schur + schur.T)
    logger.info("Eliminated %d vertices in %d components; Schur complement on %d vertices, %d nonzeros",
                len(S), len(components), len(kept), schur.nnz)
    return PartialElimination(kept=kept, eliminated=S, schur=schur.tocsr(), block_size=block,
                              components=components)
