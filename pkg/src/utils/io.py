"""
File formats: mesh JSON, Matrix Market stiffness export, ordering files,
solution vectors and JSON reports.
"""

import json
import logging
import os
from typing import Union

import numpy as np
import scipy.io
from scipy import sparse

from ..models.dissect import EliminationOrdering
from ..models.errors import MeshFormatError
from ..models.mesh import TrussMesh
from ..models.stiffness import StiffnessMatrix, as_csr
from .config import SOLUTION_FORMATS

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def _array(data: dict, key: str, columns: int, dtype) -> np.ndarray:
    if key not in data:
        raise MeshFormatError(key, "missing")
    try:
        arr = np.asarray(data[key], dtype=dtype)
    except (TypeError, ValueError) as e:
        raise MeshFormatError(key, f"not a numeric array: {str(e)}")
    if arr.ndim != 2 or arr.shape[1] != columns or len(arr) == 0:
        raise MeshFormatError(key, f"expected a non-empty list of {columns}-element rows")
    return arr


def mesh_from_dict(data: dict) -> TrussMesh:
    if not isinstance(data, dict):
        raise MeshFormatError('mesh', "top level must be a JSON object")
    points = _array(data, 'vertices', 3, float)
    tets_raw = _array(data, 'tets', 4, float)
    if not np.all(tets_raw == np.round(tets_raw)):
        raise MeshFormatError('tets', "vertex indices must be integers")
    tets = tets_raw.astype(np.int64)
    if tets.min() < 0 or tets.max() >= len(points):
        raise MeshFormatError('tets', f"vertex index out of range [0, {len(points)})")

    gamma = data.get('gamma', {})
    if isinstance(gamma, (int, float)):
        gamma = {'default': gamma}
    if not isinstance(gamma, dict):
        raise MeshFormatError('gamma', "must be a number or an object with 'default' and 'edges'")
    default = gamma.get('default', 1.0)
    if not isinstance(default, (int, float)) or isinstance(default, bool):
        raise MeshFormatError('gamma.default', "must be a number")
    edge_gamma = gamma.get('edges', [])
    if not isinstance(edge_gamma, list) or any(not isinstance(e, list) or len(e) != 3 for e in edge_gamma):
        raise MeshFormatError('gamma.edges', "must be a list of [i, j, gamma] triples")

    chunks = data.get('chunks')
    if chunks is not None and (not isinstance(chunks, list) or
                               any(not isinstance(c, list) for c in chunks)):
        raise MeshFormatError('chunks', "must be a list of tet index lists")

    try:
        return TrussMesh(points, tets, gamma=float(default), edge_gamma=edge_gamma or None, chunks=chunks)
    except ValueError as e:
        raise MeshFormatError('mesh', str(e))


def mesh_to_dict(mesh: TrussMesh) -> dict:
    overrides = mesh.gamma != mesh.gamma_default
    edges = mesh.edges[overrides]
    return {
        'vertices': mesh.points.tolist(),
        'tets': mesh.tets.tolist(),
        'gamma': {
            'default': mesh.gamma_default,
            'edges': [[int(i), int(j), float(g)] for (i, j), g in zip(edges, mesh.gamma[overrides])],
        },
        'chunks': [c.tolist() for c in mesh.chunks],
    }


def load_mesh(path: PathLike) -> TrussMesh:
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise MeshFormatError('json', f"line {e.lineno}: {e.msg}")
    mesh = mesh_from_dict(data)
    logger.info("Loaded %r from %s", mesh, path)
    return mesh


def save_mesh(mesh: TrussMesh, path: PathLike):
    with open(path, 'w') as f:
        json.dump(mesh_to_dict(mesh), f)
        f.write('\n')


def write_matrix_market(A: Union[StiffnessMatrix, sparse.spmatrix], path: PathLike, comment: str = ''):
    scipy.io.mmwrite(path, sparse.tril(as_csr(A)).tocoo(), comment=comment, symmetry='symmetric')


def read_matrix_market(path: PathLike) -> sparse.csr_matrix:
    return sparse.csr_matrix(scipy.io.mmread(path))


def write_ordering(ordering: EliminationOrdering, path: PathLike):
    """One vertex per line; each tree node is introduced by a `# level k kind` comment."""
    with open(path, 'w') as f:
        for node in ordering.nodes:
            f.write(f"# level {node.level} {node.kind}\n")
            for v in node.vertices:
                f.write(f"{int(v)}\n")


def read_ordering(path: PathLike) -> np.ndarray:
    with open(path, 'r') as f:
        return np.array([int(line) for line in f if line.strip() and not line.startswith('#')],
                        dtype=np.int64)


def write_solution(x: np.ndarray, path: PathLike, fmt: str = 'bin'):
    """bin: little-endian u64 count followed by f64 values; txt: one value per line."""
    if fmt not in SOLUTION_FORMATS:
        raise ValueError(f"format must be one of {SOLUTION_FORMATS}, got {fmt!r}")
    x = np.asarray(x, dtype=float)
    if fmt == 'bin':
        with open(path, 'wb') as f:
            f.write(np.array([len(x)], dtype='<u8').tobytes())
            f.write(x.astype('<f8').tobytes())
    else:
        np.savetxt(path, x, fmt='%.17g')


def read_solution(path: PathLike, fmt: str = 'bin') -> np.ndarray:
    if fmt not in SOLUTION_FORMATS:
        raise ValueError(f"format must be one of {SOLUTION_FORMATS}, got {fmt!r}")
    if fmt == 'txt':
        return np.atleast_1d(np.loadtxt(path, dtype=float))
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: missing length header")
    count = int(np.frombuffer(raw[:8], dtype='<u8')[0])
    if len(raw) != 8 + 8 * count:
        raise ValueError(f"{path}: header says {count} values, file holds {(len(raw) - 8) / 8:g}")
    return np.frombuffer(raw[8:], dtype='<f8').astype(float)


def read_rhs(path: PathLike, n_dofs: int) -> np.ndarray:
    """Right-hand side in the solution formats, chosen by the .bin extension."""
    fmt = 'bin' if str(path).endswith('.bin') else 'txt'
    try:
        f = read_solution(path, fmt)
    except ValueError as e:
        raise MeshFormatError('rhs', str(e))
    if len(f) != n_dofs:
        raise MeshFormatError('rhs', f"expected {n_dofs} values, got {len(f)}")
    return f


def write_report(report: dict, path: PathLike):
    with open(path, 'w') as f:
        json.dump(report, f, indent=2, default=_json_default)
        f.write('\n')


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
