"""
Dense reference computations.

Everything here works on dense symmetric arrays through LAPACK and never
touches the sparse elimination code, so tests can cross-check the two.
"""

import logging
from collections import deque
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse

from ..utils.config import ORACLE_MAX_ORDER, RANK_TOL
from .errors import NullSpaceMismatchError

logger = logging.getLogger(__name__)


def dense_sym(M) -> np.ndarray:
    """Dense symmetric copy: (M + M^T) / 2."""
    if sparse.issparse(M):
        M = M.toarray()
    elif hasattr(M, 'to_dense'):
        M = M.to_dense()
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def _check_order(M: np.ndarray):
    if M.shape[0] > ORACLE_MAX_ORDER:
        raise ValueError(f"Oracle order limited to {ORACLE_MAX_ORDER}, got {M.shape[0]}")


def dense_eig(M) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a symmetric matrix."""
    M = dense_sym(M)
    _check_order(M)
    try:
        return scipy.linalg.eigh(M)
    except np.linalg.LinAlgError as e:
        raise RuntimeError(f"Eigensolver did not converge: {str(e)}")


def numerical_rank(M, tol: float = RANK_TOL) -> int:
    """Count of eigenvalues above tol * largest |eigenvalue|."""
    values, _ = dense_eig(M)
    scale = np.max(np.abs(values)) if len(values) else 0.0
    return int(np.count_nonzero(np.abs(values) > tol * scale))


def _null_basis(M: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    values, vectors = scipy.linalg.eigh(M)
    scale = max(np.max(np.abs(values)), np.finfo(float).tiny)
    null = np.abs(values) <= tol * scale
    return vectors[:, null], vectors[:, ~null]


def dense_schur(M, T: Sequence[int]) -> np.ndarray:
    """
    Schur complement onto the kept indices T:
    M_TT - M_ST^T M_SS^+ M_ST, with a pseudo-inverse for singular M_SS.
    """
    M = dense_sym(M)
    T = np.asarray(T, dtype=np.int64)
    if len(np.unique(T)) != len(T) or (len(T) and (T.min() < 0 or T.max() >= len(M))):
        raise ValueError("T must be distinct indices into M")
    S = np.setdiff1d(np.arange(len(M)), T)
    if len(S) == 0:
        return M[np.ix_(T, T)].copy()

    M_SS = M[np.ix_(S, S)]
    M_ST = M[np.ix_(S, T)]
    schur = M[np.ix_(T, T)] - M_ST.T @ scipy.linalg.pinvh(M_SS) @ M_ST
    return 0.5 * (schur + schur.T)


def generalized_eigenvalues(A, B, shared_null: Optional[np.ndarray] = None,
                            tol: float = RANK_TOL) -> np.ndarray:
    """
    Eigenvalues of the pencil (A, B) restricted to the common range.

    The two null spaces must coincide; when shared_null is given it must
    annihilate both matrices and is used as the common null space.
    """
    A = dense_sym(A)
    B = dense_sym(B)
    if A.shape != B.shape:
        raise ValueError(f"Pencil shapes differ: {A.shape} vs {B.shape}")

    null_a, _ = _null_basis(A, tol)
    null_b, range_b = _null_basis(B, tol)
    if null_a.shape[1] != null_b.shape[1]:
        raise NullSpaceMismatchError(
            f"Null space dimensions differ: {null_a.shape[1]} vs {null_b.shape[1]}")

    norm_a = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    norm_b = max(np.linalg.norm(B, 2), np.finfo(float).tiny)
    if null_b.shape[1]:
        if np.linalg.norm(A @ null_b) > tol * norm_a or np.linalg.norm(B @ null_a) > tol * norm_b:
            raise NullSpaceMismatchError("Null spaces of the pencil do not coincide")

    if shared_null is not None:
        shared_null = np.asarray(shared_null, dtype=float)
        q, _ = np.linalg.qr(shared_null)
        if (np.linalg.norm(A @ q) > tol * norm_a or np.linalg.norm(B @ q) > tol * norm_b
                or q.shape[1] != null_b.shape[1]):
            raise NullSpaceMismatchError("shared_null is not the null space of both matrices")

    A_r = range_b.T @ A @ range_b
    B_r = range_b.T @ B @ range_b
    try:
        return scipy.linalg.eigh(0.5 * (A_r + A_r.T), 0.5 * (B_r + B_r.T), eigvals_only=True)
    except np.linalg.LinAlgError as e:
        raise RuntimeError(f"Generalized eigensolver failed: {str(e)}")


def generalized_condition(A, B, shared_null: Optional[np.ndarray] = None) -> float:
    """kappa(A, B) = lambda_max / lambda_min of the pencil on the common range."""
    values = generalized_eigenvalues(A, B, shared_null)
    return float(values[-1] / values[0])


def pinv_solve(M, b) -> np.ndarray:
    """Minimum-norm least-squares solution of M x = b."""
    M = dense_sym(M)
    _check_order(M)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != M.shape[0]:
        raise ValueError(f"Dimension mismatch: matrix order {M.shape[0]}, rhs {b.shape[0]}")
    values, vectors = scipy.linalg.eigh(M)
    scale = np.max(np.abs(values)) if len(values) else 0.0
    keep = np.abs(values) > RANK_TOL * scale
    coeffs = (vectors[:, keep].T @ b) / values[keep]
    return vectors[:, keep] @ coeffs


def schur_path_violations(M, T: Sequence[int], schur: np.ndarray, block: int = 1,
                          tol: float = 1e-12) -> List[Tuple[int, int]]:
    """
    Block pairs (i, j) of kept indices with a nonzero Schur block but no path
    i -> k1 -> ... -> j in M whose interior steps are all eliminated blocks.
    """
    M = dense_sym(M)
    n_blocks = M.shape[0] // block
    T = np.asarray(T, dtype=np.int64)
    blocks = M.reshape(n_blocks, block, n_blocks, block)
    adjacent = np.abs(blocks).max(axis=(1, 3)) > tol
    eliminated = np.ones(n_blocks, dtype=bool)
    eliminated[T] = False

    scale = max(np.abs(schur).max(), np.finfo(float).tiny)
    schur_blocks = np.abs(schur.reshape(len(T), block, len(T), block)).max(axis=(1, 3))

    violations = []
    for a, i in enumerate(T):
        # Kept blocks reachable from i through eliminated blocks
        reach = set(np.nonzero(adjacent[i])[0].tolist())
        queue = deque(v for v in reach if eliminated[v])
        seen = set(queue)
        while queue:
            v = queue.popleft()
            for w in np.nonzero(adjacent[v])[0].tolist():
                reach.add(w)
                if eliminated[w] and w not in seen:
                    seen.add(w)
                    queue.append(w)
        for b_idx, j in enumerate(T):
            if a != b_idx and schur_blocks[a, b_idx] > tol * scale and j not in reach:
                violations.append((int(i), int(j)))
    return violations
