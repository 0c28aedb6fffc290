"""Weighted communication graphs, Laplacians and their eigenstructure.

Node indices in edge lists are 1-based, matching the platoon numbering
(vehicle 1 is the tail, vehicle n the leader).  Arrays are 0-based as usual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GraphConstructionError, InvalidParameterError, NumericalFailureError

Edge = tuple[int, int, float]

MAX_SWEEPS = 100
OFFDIAG_TOL = 1e-12


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected, connected graph with positive edge weights."""

    n: int
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidParameterError(f"node count must be an integer >= 2, got {self.n!r}")
        seen = set()
        clean = []
        for edge in self.edges:
            if len(edge) != 3:
                raise GraphConstructionError(f"edge {edge!r} is not an (i, j, weight) triple")
            i, j, w = edge
            if int(i) != i or int(j) != j:
                raise GraphConstructionError(f"non-integer node index in edge {edge!r}")
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise GraphConstructionError(f"self-loop at node {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GraphConstructionError(f"edge ({i}, {j}) has an index outside 1..{self.n}")
            if not (w > 0 and math.isfinite(w)):
                raise GraphConstructionError(f"edge ({i}, {j}) has non-positive weight {w}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise GraphConstructionError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            clean.append((i, j, w))
        clean.sort()
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(clean))
        if not self._connected():
            raise GraphConstructionError(f"graph on {self.n} nodes is disconnected")

    def _connected(self) -> bool:
        if not self.edges:
            return False
        rows = [i - 1 for i, _, _ in self.edges]
        cols = [j - 1 for _, j, _ in self.edges]
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j, _ in self.edges:
            deg[i - 1] += 1
            deg[j - 1] += 1
        return deg


@dataclass(frozen=True)
class EigenStructure:
    """Ascending Laplacian eigenvalues and the orthogonal matrix of eigenvectors.

    Column ``k`` of ``Q`` is the eigenvector of ``lambdas[k]``.
    """

    lambdas: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float)
        Q = np.array(self.Q, dtype=float)
        lam.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "Q", Q)

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def algebraic_connectivity(self) -> float:
        return float(self.lambdas[1])


def _check_family_args(n, w, n_min=2):
    if not isinstance(n, (int, np.integer)) or n < n_min:
        raise InvalidParameterError(f"n must be an integer >= {n_min}, got {n!r}")
    if not (w > 0 and math.isfinite(w)):
        raise InvalidParameterError(f"weight must be positive, got {w!r}")


def build_complete(n: int, w: float = 1.0) -> WeightedGraph:
    _check_family_args(n, w)
    edges = [(i, j, float(w)) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    return WeightedGraph(n, tuple(edges))


def build_path(n: int, w: float = 1.0) -> WeightedGraph:
    _check_family_args(n, w)
    return WeightedGraph(n, tuple((i, i + 1, float(w)) for i in range(1, n)))


def build_pcycle(n: int, p: int, w: float = 1.0) -> WeightedGraph:
    """Circulant graph: node i is joined to i+-1, ..., i+-p (mod n)."""
    _check_family_args(n, w, n_min=3)
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= (n - 1) // 2:
        raise InvalidParameterError(f"p must satisfy 1 <= p <= {(n - 1) // 2} for n = {n}, got {p!r}")
    edges = set()
    for i in range(n):
        for m in range(1, p + 1):
            a, b = sorted((i, (i + m) % n))
            edges.add((a + 1, b + 1, float(w)))
    return WeightedGraph(n, tuple(sorted(edges)))


def from_edge_list(n: int, edges: Iterable[Sequence]) -> WeightedGraph:
    return WeightedGraph(n, tuple(tuple(e) for e in edges))


def build_family(family: str, n: int, p: int | None = None, w: float = 1.0) -> WeightedGraph:
    if family == "complete":
        return build_complete(n, w)
    if family == "path":
        return build_path(n, w)
    if family == "pcycle":
        if p is None:
            raise InvalidParameterError("pcycle family needs p")
        return build_pcycle(n, p, w)
    raise InvalidParameterError(f"unknown graph family {family!r}")


def read_edge_list(path: str | Path) -> WeightedGraph:
    """Parse the ``n=<count>`` / ``i j weight`` text format."""
    from .errors import ScenarioParseError

    n = None
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if n is None:
                key, sep, value = line.partition("=")
                if not sep or key.strip() != "n":
                    raise ScenarioParseError("edge list must start with a 'n=<count>' header", lineno)
                try:
                    n = int(value)
                except ValueError:
                    raise ScenarioParseError(f"bad node count {value.strip()!r}", lineno) from None
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ScenarioParseError(f"expected 'i j weight', got {line!r}", lineno)
            try:
                edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError:
                raise ScenarioParseError(f"cannot parse edge {line!r}", lineno) from None
    if n is None:
        raise ScenarioParseError(f"{path}: missing 'n=<count>' header")
    return from_edge_list(n, edges)


def write_edge_list(graph: WeightedGraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"n={graph.n}\n")
        for i, j, w in graph.edges:
            fh.write(f"{i} {j} {w:.17g}\n")


def laplacian(graph: WeightedGraph) -> np.ndarray:
    """Dense weighted Laplacian; diagonal is the negative off-diagonal row sum."""
    L = np.zeros((graph.n, graph.n))
    for i, j, w in graph.edges:
        L[i - 1, j - 1] = -w
        L[j - 1, i - 1] = -w
    # exact zero row sums by construction of the diagonal
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint (p, q) pairings covering every index pair once per sweep."""
    m = n if n % 2 == 0 else n + 1
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps), np.array(qs)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _off_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def jacobi_eigh(A: np.ndarray, max_sweeps: int = MAX_SWEEPS, tol: float = OFFDIAG_TOL):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Rotations on disjoint index pairs commute, so each round of the
    round-robin ordering is applied as one vectorized update.  Stops when
    the off-diagonal Frobenius norm falls to ``tol * ||A||_F``.

    Returns unsorted ``(eigenvalues, V)`` with ``A = V diag(w) V^T``.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise InvalidParameterError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    rounds = _round_robin(n)
    off = _off_norm(A)
    for _ in range(max_sweeps):
        if off <= tol * scale:
            return np.diag(A).copy(), V
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            nz = apq != 0.0
            theta = np.where(nz, (aqq - app) / np.where(nz, 2.0 * apq, 1.0), 0.0)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(1.0 + theta * theta))
            t = np.where(nz, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            Ap, Aq = A[:, p], A[:, q]
            A[:, p], A[:, q] = c * Ap - s * Aq, s * Ap + c * Aq
            Ap, Aq = A[p, :], A[q, :]
            A[p, :], A[q, :] = c[:, None] * Ap - s[:, None] * Aq, s[:, None] * Ap + c[:, None] * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p], V[:, q]
            V[:, p], V[:, q] = c * Vp - s * Vq, s * Vp + c * Vq
        off = _off_norm(A)
    if off <= tol * scale:
        return np.diag(A).copy(), V
    raise NumericalFailureError(
        f"Jacobi iteration did not converge in {max_sweeps} sweeps", residual=off / scale
    )


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    Q = Q.copy()
    for k in range(Q.shape[1]):
        col = Q[:, k]
        big = np.flatnonzero(np.abs(col) > 1e-10 * np.abs(col).max())
        if col[big[0]] < 0:
            Q[:, k] = -col
    return Q


def _ordered(lambdas: np.ndarray, Q: np.ndarray) -> EigenStructure:
    order = np.argsort(lambdas, kind="stable")
    return EigenStructure(lambdas[order], _fix_signs(Q[:, order]))


def eigendecompose(L: np.ndarray) -> EigenStructure:
    """Eigenstructure of a Laplacian: ascending eigenvalues, sign-normalized columns."""
    w, V = jacobi_eigh(L)
    return _ordered(w, V)


def analytic_spectrum(family: str, n: int, p: int | None = None, w: float = 1.0) -> EigenStructure:
    """Closed-form Laplacian spectrum of the complete, path and p-cycle families."""
    build_family(family, n, p, w)  # parameter validation
    idx = np.arange(n)
    if family == "path":
        lam = 2.0 * w * (1.0 - np.cos(np.pi * idx / n))
        Q = np.cos(np.pi * np.outer(idx + 0.5, idx) / n)
        Q /= np.linalg.norm(Q, axis=0)
        return _ordered(lam, Q)
    if family == "complete":
        # any orthonormal basis of 1^perp works; reuse the cosine basis
        lam = np.full(n, n * float(w))
        lam[0] = 0.0
        Q = np.cos(np.pi * np.outer(idx + 0.5, idx) / n)
        Q /= np.linalg.norm(Q, axis=0)
        return _ordered(lam, Q)
    # circulant: real Fourier basis
    m = np.arange(1, p + 1)
    lam = np.empty(n)
    Q = np.empty((n, n))
    Q[:, 0] = 1.0 / math.sqrt(n)
    lam[0] = 0.0
    col = 1
    for k in range(1, n // 2 + 1):
        lk = w * np.sum(2.0 * (1.0 - np.cos(2.0 * np.pi * m * k / n)))
        if 2 * k == n:
            Q[:, col] = np.cos(np.pi * idx) / math.sqrt(n)
            lam[col] = lk
            col += 1
        else:
            Q[:, col] = np.cos(2.0 * np.pi * k * idx / n) * math.sqrt(2.0 / n)
            Q[:, col + 1] = np.sin(2.0 * np.pi * k * idx / n) * math.sqrt(2.0 / n)
            lam[col] = lam[col + 1] = lk
            col += 2
    return _ordered(lam, Q)


def graph_eigenstructure(graph: WeightedGraph) -> EigenStructure:
    return eigendecompose(laplacian(graph))
