"""Directed graphs with fuzzy edges and the Laplacians built from them.

Each undirected pair is stored once as ``(i, j, theta)`` with ``i < j``.
The reverse angle is never stored: ``theta_ji = pi/2 - theta_ij``.
Features sent from ``j`` to ``i`` are scaled by ``cos(theta_ij)``, features
sent from ``i`` to ``j`` by ``sin(theta_ij)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

HALF_PI = np.pi / 2
QUARTER_PI = np.pi / 4
DEFAULT_EPSILON = 1e-12


def fuzzy_weights(theta):
    """``(cos theta, sin theta)`` with the cosine taken as ``sin(pi/2 - theta)``.

    This makes the pair bitwise equal at ``pi/4`` and exactly ``(1, 0)`` or
    ``(0, 1)`` at the boundary angles, where ``np.cos(pi/2)`` would leave a
    spurious 6e-17 weight.
    """
    theta = np.asarray(theta, dtype=np.float64)
    return np.sin(HALF_PI - theta), np.sin(theta)


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


class BoundaryAngleError(GraphError):
    """Raised when the fuzzy magnetic map meets theta in {0, pi/2}."""


@dataclass(frozen=True, eq=False)
class FuzzyDiGraph:
    """Fixed topology with one continuous direction angle per edge.

    Attributes:
        n_nodes: number of nodes.
        src: (E,) int array, lower endpoint of each edge.
        dst: (E,) int array, upper endpoint (``src < dst``).
        theta: (E,) float array of angles in ``[0, pi/2]``.
        positions: optional (N, 2) node coordinates.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    theta: np.ndarray
    positions: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64).reshape(-1)
        dst = np.asarray(self.dst, dtype=np.int64).reshape(-1)
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if not (len(src) == len(dst) == len(theta)):
            raise GraphError("src, dst and theta must have equal length")
        if self.n_nodes < 0:
            raise GraphError("n_nodes must be nonnegative")
        if len(src):
            if np.any(src == dst):
                raise GraphError("self-loops are not allowed")
            if np.any(src > dst):
                raise GraphError("edges must be stored with i < j")
            if src.min() < 0 or dst.max() >= self.n_nodes:
                raise GraphError("edge endpoint out of range")
            if not np.all(np.isfinite(theta)) or theta.min() < 0 or theta.max() > HALF_PI:
                raise GraphError("theta must lie in [0, pi/2]")
            key = src * max(self.n_nodes, 1) + dst
            if len(np.unique(key)) != len(key):
                raise GraphError("duplicate edge")
            # canonical sorted order keeps every downstream iteration deterministic
            order = np.lexsort((dst, src))
            src, dst, theta = src[order], dst[order], theta[order]
        pos = self.positions
        if pos is not None:
            pos = np.asarray(pos, dtype=np.float64)
            if pos.shape != (self.n_nodes, 2):
                raise GraphError("positions must have shape (n_nodes, 2)")
            pos.setflags(write=False)
        for arr in (src, dst, theta):
            arr.setflags(write=False)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence[float]], positions=None):
        """Build from ``(i, j, theta_ij)`` triples in any orientation.

        An edge given as ``(j, i, t)`` with ``j > i`` is stored as
        ``(i, j, pi/2 - t)``.
        """
        src, dst, theta = [], [], []
        for i, j, t in edges:
            i, j, t = int(i), int(j), float(t)
            if i > j:
                i, j, t = j, i, HALF_PI - t
            src.append(i)
            dst.append(j)
            theta.append(t)
        return cls(n_nodes, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                   np.array(theta, dtype=np.float64), positions)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list:
        return [(int(i), int(j), float(t)) for i, j, t in zip(self.src, self.dst, self.theta)]

    def with_theta(self, theta) -> "FuzzyDiGraph":
        """Same topology and positions, new angles."""
        return FuzzyDiGraph(self.n_nodes, self.src, self.dst, np.asarray(theta, dtype=float),
                            self.positions)

    def mu(self) -> tuple:
        """Fuzzy edge weights ``(mu_ij, mu_ji) = (cos theta, sin theta)`` per stored edge."""
        return fuzzy_weights(self.theta)

    def directed_entries(self):
        """Rows, cols and angles of all 2E ordered pairs.

        The first E entries are the stored ``(i, j)`` pairs, the last E their
        reverses ``(j, i)`` with angle ``pi/2 - theta``.
        """
        rows = np.concatenate([self.src, self.dst])
        cols = np.concatenate([self.dst, self.src])
        return rows, cols

    def adjacency_01(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency of the underlying topology."""
        rows, cols = self.directed_entries()
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                             shape=(self.n_nodes, self.n_nodes))

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        n_comp, _ = sp.csgraph.connected_components(self.adjacency_01(), directed=False)
        return n_comp == 1

    def graph_hash(self, decimals: int = 9) -> str:
        """Stable hex digest over node count, edge list and quantized angles."""
        h = hashlib.blake2b(digest_size=16)
        h.update(np.int64(self.n_nodes).tobytes())
        h.update(np.ascontiguousarray(self.src, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.dst, dtype="<i8").tobytes())
        q = np.round(self.theta * 10**decimals).astype("<i8")
        h.update(q.tobytes())
        return h.hexdigest()


def undirected_phases(n_nodes: int, edges: Iterable[Sequence[int]], positions=None) -> FuzzyDiGraph:
    """Graph over an edge list with every angle set to pi/4 (undirected).

    Args:
        n_nodes: Number of nodes.
        edges: ``(i, j)`` pairs, either orientation, no self-loops.
        positions: Optional (N, 2) coordinates.

    Raises:
        GraphError: on duplicates (including ``(i, j)`` and ``(j, i)``) or self-loops.
    """
    pairs = [(min(int(i), int(j)), max(int(i), int(j))) for i, j in edges]
    if any(i == j for i, j in pairs):
        raise GraphError("self-loops are not allowed")
    if len(set(pairs)) != len(pairs):
        raise GraphError("duplicate edge")
    src = np.array([p[0] for p in pairs], dtype=np.int64)
    dst = np.array([p[1] for p in pairs], dtype=np.int64)
    return FuzzyDiGraph(n_nodes, src, dst, np.full(len(pairs), QUARTER_PI), positions)


def random_fuzzy_graph(n_nodes: int, p: float, rng: np.random.Generator,
                       theta: str = "uniform") -> FuzzyDiGraph:
    """Erdos-Renyi topology with angles sampled uniformly in [0, pi/2].

    ``theta="interior"`` keeps angles strictly inside (0, pi/2);
    ``theta="undirected"`` sets all to pi/4.
    """
    iu, ju = np.triu_indices(n_nodes, k=1)
    keep = rng.random(len(iu)) < p
    src, dst = iu[keep], ju[keep]
    if theta == "undirected":
        t = np.full(len(src), QUARTER_PI)
    elif theta == "interior":
        t = rng.uniform(0.05, HALF_PI - 0.05, size=len(src))
    else:
        t = rng.uniform(0.0, HALF_PI, size=len(src))
    return FuzzyDiGraph(n_nodes, src, dst, t)


def build_fuzzy_laplacian(graph: FuzzyDiGraph) -> sp.csr_matrix:
    """Complex fuzzy Laplacian, ``(L_F)_ij = exp(i theta_ij)`` on edges.

    The reverse entry is written as ``sin(theta) + i cos(theta)``, which equals
    ``exp(i (pi/2 - theta))`` and makes ``L_F = i L_F^H`` hold exactly.

    Returns:
        (N, N) complex CSR matrix with sorted column indices and zero diagonal.
    """
    c, s = fuzzy_weights(graph.theta)
    rows, cols = graph.directed_entries()
    vals = np.concatenate([c + 1j * s, s + 1j * c])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(graph.n_nodes, graph.n_nodes),
                      dtype=np.complex128)
    L.sort_indices()
    return L


def laplacian_identity_error(L) -> float:
    """max |L - i L^H| entrywise."""
    D = L - 1j * L.conj().T
    if sp.issparse(D):
        D = D.tocoo().data
    return float(np.max(np.abs(D))) if np.size(D) else 0.0


@dataclass(frozen=True)
class PropagationPair:
    """Degree-normalized in/out propagation operators.

    ``p_in = D_in^{-1/2} A_in D_out^{-1/2}`` and
    ``p_out = D_out^{-1/2} A_out D_in^{-1/2}`` with ``A_in = Re L_F``,
    ``A_out = Im L_F`` and degrees floored at ``epsilon``.
    """

    p_in: sp.csr_matrix
    p_out: sp.csr_matrix
    d_in: np.ndarray
    d_out: np.ndarray
    epsilon: float


def _rsqrt_floor(d, epsilon):
    return 1.0 / np.sqrt(np.maximum(d, epsilon))


def propagation_matrices(laplacian, epsilon: float = DEFAULT_EPSILON) -> PropagationPair:
    """Fuzzy propagation matrices from a fuzzy Laplacian.

    Isolated nodes and nodes whose fuzzy degree vanishes get all-zero rows.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    L = sp.csr_matrix(laplacian)
    a_in = L.real.tocsr()
    a_out = L.imag.tocsr()
    a_in.eliminate_zeros()
    a_out.eliminate_zeros()
    d_in = np.asarray(a_in.sum(axis=1)).ravel()
    d_out = np.asarray(a_out.sum(axis=1)).ravel()
    g_in = sp.diags(_rsqrt_floor(d_in, epsilon))
    g_out = sp.diags(_rsqrt_floor(d_out, epsilon))
    p_in = (g_in @ a_in @ g_out).tocsr()
    p_out = (g_out @ a_out @ g_in).tocsr()
    p_in.sort_indices()
    p_out.sort_indices()
    return PropagationPair(p_in, p_out, d_in, d_out, epsilon)


def graph_propagation(graph: FuzzyDiGraph, epsilon: float = DEFAULT_EPSILON) -> PropagationPair:
    return propagation_matrices(build_fuzzy_laplacian(graph), epsilon)


def magnetic_angle(theta) -> np.ndarray:
    """Magnetic phase for fuzzy angles: ``tan(2 t) = ln(cos theta / sin theta)``.

    Odd under ``theta -> pi/2 - theta`` and valued in ``(-pi/4, pi/4)``.

    Raises:
        BoundaryAngleError: if any angle is exactly 0 or pi/2.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or np.any(theta >= HALF_PI):
        raise BoundaryAngleError("fuzzy magnetic map is undefined at theta in {0, pi/2}")
    return 0.5 * np.arctan(np.log(np.divide(*fuzzy_weights(theta))))


def fuzzy_from_magnetic(t) -> np.ndarray:
    """Inverse of :func:`magnetic_angle` on ``(-pi/4, pi/4)``."""
    r = np.exp(np.tan(2.0 * np.asarray(t, dtype=float)))
    return np.arctan2(1.0, r)


def build_magnetic_laplacian(graph: FuzzyDiGraph, q: Optional[float] = None) -> sp.csr_matrix:
    """Hermitian magnetic Laplacian with zero diagonal.

    With ``q=None`` the fuzzy variant is used: each edge gets phase
    ``magnetic_angle(theta)`` above the diagonal and its conjugate below.
    With a numeric ``q`` the binary variant ``S * exp(i 2 pi q (A - A^T))`` is
    built; every angle must then be 0, pi/4 or pi/2, where ``theta_ij = 0``
    means an arc ``i -> j`` (``mu_ij = 1``).
    """
    N = graph.n_nodes
    if q is None:
        t = magnetic_angle(graph.theta)
        upper = np.exp(1j * t)
        vals = np.concatenate([upper, upper.conj()])
    else:
        th = graph.theta
        is_fwd = np.isclose(th, 0.0, atol=1e-12)
        is_bwd = np.isclose(th, HALF_PI, atol=1e-12)
        is_und = np.isclose(th, QUARTER_PI, atol=1e-12)
        if not np.all(is_fwd | is_bwd | is_und):
            raise GraphError("binary magnetic variant needs angles in {0, pi/4, pi/2}")
        a_ij = (is_fwd | is_und).astype(float)
        a_ji = (is_bwd | is_und).astype(float)
        s = 0.5 * (a_ij + a_ji)
        phase = 2 * np.pi * q * (a_ij - a_ji)
        upper = s * np.exp(1j * phase)
        vals = np.concatenate([upper, upper.conj()])
    rows, cols = graph.directed_entries()
    M = sp.csr_matrix((vals, (rows, cols)), shape=(N, N), dtype=np.complex128)
    M.sort_indices()
    return M
