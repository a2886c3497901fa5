"""Eigenstructure of the fuzzy Laplacian, positional encodings, Dirichlet energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fuzzy_graph import FuzzyDiGraph, fuzzy_weights, graph_propagation

_ROT = np.exp(-0.25j * np.pi)


class SpectralError(RuntimeError):
    """Decomposition failed its residual check; ``diagnostics`` holds details."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray   # (N,) complex, each of the form a + ia
    eigenvectors: np.ndarray  # (N, N) complex, column k pairs with eigenvalue k
    residual: float

    def unitarity_error(self) -> float:
        V = self.eigenvectors
        return float(np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1])))) if V.size else 0.0

    def form_error(self) -> float:
        """max |Re lambda - Im lambda|."""
        lam = self.eigenvalues
        return float(np.max(np.abs(lam.real - lam.imag))) if lam.size else 0.0


@dataclass(frozen=True)
class PositionalEncoding:
    matrix: np.ndarray       # (N, k) complex
    eigenvalues: np.ndarray  # (k,) eigenvalues of the retained columns

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    @property
    def magnitude(self):
        return np.abs(self.matrix)

    @property
    def phase(self):
        return np.angle(self.matrix)


def hermitian_reduction(L) -> np.ndarray:
    """Dense ``e^{-i pi/4} L_F``, Hermitian whenever ``L_F = i L_F^H``."""
    A = L.toarray() if sp.issparse(L) else np.asarray(L)
    return _ROT * A


def gauge_pivots(V: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Row index of each column's pivot: the first entry within ``rel_tol`` of the max magnitude.

    Taking the first of near-tied entries keeps the choice stable when a
    rotation perturbs the magnitudes by roundoff.
    """
    mag = np.abs(V)
    return np.argmax(mag >= mag.max(axis=0) * (1.0 - rel_tol), axis=0)


def fix_gauge(V: np.ndarray) -> np.ndarray:
    """Rotate each column so its pivot entry (see ``gauge_pivots``) is real and positive."""
    V = np.array(V, dtype=np.complex128, copy=True)
    if V.size == 0:
        return V
    cols = np.arange(V.shape[1])
    idx = gauge_pivots(V)
    pivot = V[idx, cols]
    V *= (np.abs(pivot) / pivot)[None, :]
    V[idx, cols] = np.abs(pivot)
    return V


def eigendecompose(laplacian, tolerance: float = 1e-9) -> SpectralDecomposition:
    """Full eigendecomposition through the Hermitian matrix ``e^{-i pi/4} L_F``.

    Eigenvalues are returned in ascending order of their Hermitian
    counterparts ``lambda_M`` and mapped back as ``lambda = e^{i pi/4} lambda_M``.

    Raises:
        SpectralError: if ``max |L v - lambda v|`` exceeds ``tolerance``.
    """
    M = hermitian_reduction(laplacian)
    # average with the adjoint so eigh sees an exactly Hermitian input
    M = 0.5 * (M + M.conj().T)
    lam_m, V = np.linalg.eigh(M)
    V = fix_gauge(V)
    lam = lam_m * np.conj(_ROT)
    L = laplacian.toarray() if sp.issparse(laplacian) else np.asarray(laplacian)
    resid = float(np.max(np.abs(L @ V - V * lam[None, :]))) if lam.size else 0.0
    if resid > tolerance:
        raise SpectralError(
            f"eigen residual {resid:.3e} exceeds tolerance {tolerance:.1e}",
            {"residual": resid, "tolerance": tolerance, "n": L.shape[0],
             "hermitian_error": float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0},
        )
    return SpectralDecomposition(lam, V, resid)


def encoding_order(dec: SpectralDecomposition, rel_tol: float = 1e-9) -> np.ndarray:
    """Column order: descending |lambda|, ties by first index of maximal |v|."""
    mag = np.abs(dec.eigenvalues)
    scale = max(float(mag.max(initial=0.0)), 1.0)
    # bucket magnitudes so numerically equal |lambda| compare as ties
    bucket = np.round(mag / (rel_tol * scale)).astype(np.int64)
    first_peak = np.argmax(np.abs(dec.eigenvectors), axis=0)
    return np.lexsort((first_peak, -bucket))


def positional_encoding(laplacian, k: int, tolerance: float = 1e-9) -> PositionalEncoding:
    """The ``k`` eigenvectors of largest |eigenvalue|.

    Raises:
        ValueError: if ``k`` is outside ``[1, N]``.
    """
    N = laplacian.shape[0]
    if not 1 <= k <= N:
        raise ValueError(f"k must be in [1, {N}], got {k}")
    dec = eigendecompose(laplacian, tolerance)
    order = encoding_order(dec)[:k]
    return PositionalEncoding(dec.eigenvectors[:, order], dec.eigenvalues[order])


def dirichlet_energy(features, graph: FuzzyDiGraph) -> float:
    """Direction-aware Dirichlet energy.

    ``sum_e (cos theta_e + sin theta_e) * ||f_i - f_j||^2 / E``; zero for a
    graph without edges.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != graph.n_nodes:
        raise ValueError(f"features have {F.shape[0]} rows, graph has {graph.n_nodes} nodes")
    if graph.n_edges == 0:
        return 0.0
    c, s = fuzzy_weights(graph.theta)
    w = c + s
    diff = F[graph.src] - F[graph.dst]
    return float(np.sum(w * np.sum(diff * diff, axis=1)) / graph.n_edges)


def propagation_operator(graph: FuzzyDiGraph, normalization: str = "symmetric"):
    """Operator used for repeated-convolution energy curves.

    ``"symmetric"`` is the in-propagation matrix of the fuzzy Laplacian;
    ``"row"`` is the row-stochastic ``D_in^{-1} A_in``.
    """
    if normalization == "symmetric":
        return graph_propagation(graph).p_in
    if normalization == "row":
        c, s = fuzzy_weights(graph.theta)
        rows, cols = graph.directed_entries()
        A = sp.csr_matrix((np.concatenate([c, s]), (rows, cols)),
                          shape=(graph.n_nodes, graph.n_nodes))
        d = np.asarray(A.sum(axis=1)).ravel()
        inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
        return (sp.diags(inv) @ A).tocsr()
    raise ValueError(f"unknown normalization {normalization!r}")


def energy_curve(features, graph: FuzzyDiGraph, operator, n_convolutions: int,
                 energy_graph: FuzzyDiGraph | None = None) -> np.ndarray:
    """Energies after 0..n applications of ``operator`` to ``features``.

    Energy is always measured on ``energy_graph`` (default: ``graph``), so two
    operators can be compared under one metric.
    """
    eg = graph if energy_graph is None else energy_graph
    F = np.asarray(features, dtype=float)
    out = [dirichlet_energy(F, eg)]
    for _ in range(n_convolutions):
        F = operator @ F
        out.append(dirichlet_energy(F, eg))
    return np.array(out)
