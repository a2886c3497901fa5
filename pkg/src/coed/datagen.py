"""Synthetic graph-ensemble generators.

Two benchmarks:

* directed flow on a triangular lattice whose edge angles follow a potential
  field; targets come from iterating the CoED map with fixed random weights;
* gene-regulatory-network knockouts simulated with Hill-type dynamics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import EnsembleDataset, seeded_split
from .fuzzy_graph import HALF_PI, QUARTER_PI, FuzzyDiGraph, GraphError, graph_propagation


class IntegrationError(FloatingPointError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


# -- lattice ------------------------------------------------------------------


@dataclass
class PotentialSpec:
    """Sum of quadratic bumps ``V(x) = sum_k a_k (x - mu_k)^T K_k (x - mu_k)``."""

    centers: np.ndarray      # (M, 2)
    stiffness: np.ndarray    # (M, 2, 2)
    magnitudes: np.ndarray   # (M,)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        self.stiffness = np.asarray(self.stiffness, dtype=float).reshape(-1, 2, 2)
        self.magnitudes = np.asarray(self.magnitudes, dtype=float).reshape(-1)
        if not (len(self.centers) == len(self.stiffness) == len(self.magnitudes)):
            raise ValueError("centers, stiffness and magnitudes disagree in length")
        if not np.allclose(self.stiffness, np.swapaxes(self.stiffness, 1, 2)):
            raise ValueError("stiffness matrices must be symmetric")

    @classmethod
    def source_sink(cls) -> "PotentialSpec":
        """Peak at (-1, 1), valley at (1, -1), identity stiffness."""
        return cls([[-1.0, 1.0], [1.0, -1.0]], [np.eye(2), np.eye(2)], [1.0, -1.0])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.zeros(x.shape[:-1])
        for mu, K, a in zip(self.centers, self.stiffness, self.magnitudes):
            d = x - mu
            v += a * np.einsum("...i,ij,...j->...", d, K, d)
        return v


def triangular_lattice(rows: int, cols: int, extent: float = 2.0) -> FuzzyDiGraph:
    """Triangular grid with every angle pi/4 and positions in ``[-extent, extent]^2``.

    Node ``(r, c)`` has index ``r * cols + c`` and sits at
    ``(c + (r % 2) / 2, r * sqrt(3) / 2)`` before each axis is rescaled.
    """
    if rows < 2 or cols < 2:
        raise ValueError("rows and cols must be at least 2")
    r, c = np.divmod(np.arange(rows * cols), cols)
    pos = np.stack([c + 0.5 * (r % 2), r * np.sqrt(3) / 2], axis=1)
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    pos = -extent + 2 * extent * (pos - lo) / (hi - lo)

    def idx(rr, cc):
        return rr * cols + cc

    edges = []
    for rr in range(rows):
        for cc in range(cols):
            if cc + 1 < cols:
                edges.append((idx(rr, cc), idx(rr, cc + 1)))
            if rr + 1 < rows:
                edges.append((idx(rr, cc), idx(rr + 1, cc)))
                cc2 = cc - 1 if rr % 2 == 0 else cc + 1
                if 0 <= cc2 < cols:
                    edges.append((idx(rr, cc), idx(rr + 1, cc2)))
    e = np.array(edges, dtype=np.int64)
    return FuzzyDiGraph(rows * cols, e[:, 0], e[:, 1], np.full(len(e), QUARTER_PI), pos)


def _require_positions(graph):
    if graph.positions is None:
        raise GraphError("graph has no node positions")
    return np.asarray(graph.positions, dtype=float)


def potential_field_phases(graph: FuzzyDiGraph, spec: Optional[PotentialSpec] = None) -> FuzzyDiGraph:
    """Angles from potential differences, ``theta = pi/4 + (pi/4) dV / max|dV|``.

    ``dV = V(x_j) - V(x_i)`` for the stored pair ``i < j``; the most negative
    difference maps to 0 and the map is odd, so the reverse angle stays
    ``pi/2 - theta``.
    """
    spec = PotentialSpec.source_sink() if spec is None else spec
    v = spec(_require_positions(graph))
    dv = v[graph.dst] - v[graph.src]
    scale = np.max(np.abs(dv)) if len(dv) else 0.0
    if scale == 0.0:
        warnings.warn("potential is constant over the edges; all angles set to pi/4")
        return graph.with_theta(np.full(graph.n_edges, QUARTER_PI))
    theta = QUARTER_PI + QUARTER_PI * dv / scale
    return graph.with_theta(np.clip(theta, 0.0, HALF_PI))


def solenoid_field(x) -> np.ndarray:
    """Four-vortex field ``(sin(pi x) cos(pi y), -cos(pi x) sin(pi y))``."""
    x = np.asarray(x, dtype=float)
    px, py = np.pi * x[..., 0], np.pi * x[..., 1]
    return np.stack([np.sin(px) * np.cos(py), -np.cos(px) * np.sin(py)], axis=-1)


def solenoidal_phases(graph: FuzzyDiGraph, field_fn=solenoid_field, tiny: float = 1e-12) -> FuzzyDiGraph:
    """Angles from the solenoidal field at edge midpoints.

    ``theta`` is half the angle between the i->j unit vector and the field, so
    alignment gives 0 and anti-alignment pi/2. Where the field vanishes the
    edge is left undirected.

    Raises:
        GraphError: on zero-length edges.
    """
    pos = _require_positions(graph)
    d = pos[graph.dst] - pos[graph.src]
    length = np.linalg.norm(d, axis=1)
    if np.any(length <= tiny):
        raise GraphError("zero-length edge")
    f = field_fn(0.5 * (pos[graph.dst] + pos[graph.src]))
    fn = np.linalg.norm(f, axis=1)
    cross = d[:, 0] * f[:, 1] - d[:, 1] * f[:, 0]
    dot = np.sum(d * f, axis=1)
    angle = np.arctan2(np.abs(cross), dot)
    theta = np.where(fn > tiny, 0.5 * angle, QUARTER_PI)
    return graph.with_theta(np.clip(theta, 0.0, HALF_PI))


def _rownorm(x, floor=1e-300):
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), floor)


def lattice_targets(x, true_graph: FuzzyDiGraph, w_self, w_in, w_out, hops: int) -> np.ndarray:
    """Iterate ``F <- rownorm(F W_self + P_in F W_in + P_out F W_out)`` on (S, N, D) features."""
    prop = graph_propagation(true_graph)
    S, N, D = x.shape
    f = np.ascontiguousarray(x.transpose(1, 0, 2))  # (N, S, D)
    for _ in range(hops):
        flat = f.reshape(N, -1)
        m_in = (prop.p_in @ flat).reshape(f.shape)
        m_out = (prop.p_out @ flat).reshape(f.shape)
        f = _rownorm(f @ w_self + m_in @ w_in + m_out @ w_out)
    return f.transpose(1, 0, 2).copy()


def generate_lattice_ensemble(graph: FuzzyDiGraph, n_realizations: int = 500, feature_dim: int = 10,
                              hops: int = 10, seed: int = 0,
                              fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> EnsembleDataset:
    """Feature/target ensemble over a lattice whose angles are ground truth.

    Draws, in order: the three (D, D) standard-normal weight matrices, the
    (S, N, D) standard-normal features (each node row scaled to unit norm),
    then the split labels. The returned dataset carries the undirected graph;
    true angles and weights go into ``metadata``.
    """
    if hops < 0:
        raise ValueError("hops must be nonnegative")
    rng = np.random.default_rng(seed)
    w_self, w_in, w_out = (rng.standard_normal((feature_dim, feature_dim)) for _ in range(3))
    x = _rownorm(rng.standard_normal((n_realizations, graph.n_nodes, feature_dim)))
    y = lattice_targets(x, graph, w_self, w_in, w_out, hops)
    split = seeded_split(n_realizations, rng, fractions)
    meta = {
        "task": "lattice",
        "seed": seed,
        "hops": hops,
        "feature_dim": feature_dim,
        "true_theta": graph.theta.tolist(),
        "w_self": w_self.tolist(),
        "w_in": w_in.tolist(),
        "w_out": w_out.tolist(),
    }
    undirected = graph.with_theta(np.full(graph.n_edges, QUARTER_PI))
    masks = np.ones((n_realizations, graph.n_nodes), dtype=bool)
    return EnsembleDataset(undirected, x, y, masks, split, meta)


# -- gene regulatory network --------------------------------------------------


@dataclass
class GrnSystem:
    """Regulatory edges ``j -> i`` with Hill-type activation or suppression.

    Attributes:
        n_genes: number of genes.
        adjacency: (G, G) 0/1 array, ``adjacency[i, j] = 1`` when j regulates i.
        edge_sign: (G, G) int array, +1 activating, -1 suppressing, 0 no edge.
        gamma: (G, G) interaction magnitudes (0 off the edge set).
        k_half: (G, G) half-saturation constants (0 off the edge set).
    """

    n_genes: int
    adjacency: np.ndarray
    edge_sign: np.ndarray
    gamma: np.ndarray
    k_half: np.ndarray
    _edges: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.int8)
        self.edge_sign = np.asarray(self.edge_sign, dtype=np.int8)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.k_half = np.asarray(self.k_half, dtype=float)
        G = self.n_genes
        for a in (self.adjacency, self.edge_sign, self.gamma, self.k_half):
            if a.shape != (G, G):
                raise ValueError("GRN arrays must be (n_genes, n_genes)")
        if np.any(np.diag(self.adjacency)):
            raise ValueError("self-regulation is not allowed")
        if np.any((self.edge_sign != 0) != (self.adjacency != 0)):
            raise ValueError("edge_sign must be nonzero exactly on the edge set")

    @property
    def edges(self):
        """``(target, regulator, scatter, k, activating)`` in row-major edge order.

        ``scatter`` is the (E, G) sparse map sending edge terms, scaled by gamma,
        to their target gene.
        """
        if self._edges is None:
            tgt, reg = np.nonzero(self.adjacency)
            scatter = sp.csr_matrix((self.gamma[tgt, reg], (np.arange(len(tgt)), tgt)),
                                    shape=(len(tgt), self.n_genes))
            self._edges = (tgt, reg, scatter, self.k_half[tgt, reg], self.edge_sign[tgt, reg] > 0)
        return self._edges

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def rate(self, c: np.ndarray) -> np.ndarray:
        """``dc/dt`` for concentrations of shape (..., G)."""
        _, reg, scatter, k, act = self.edges
        cj = c[..., reg]
        c2, k2 = cj * cj, k * k
        hill = np.where(act, c2, k2) / (k2 + c2)
        return np.asarray(scatter.T @ hill.T).T - c

    def topology(self) -> FuzzyDiGraph:
        """Undirected support of the regulatory graph with all angles pi/4."""
        sym = np.triu((self.adjacency + self.adjacency.T) > 0, k=1)
        src, dst = np.nonzero(sym)
        return FuzzyDiGraph(self.n_genes, src, dst, np.full(len(src), QUARTER_PI))


def grn_random(n_genes: int = 200, edge_prob: float = 0.03, seed: int = 0,
               gamma_range=(0.5, 1.5), k_range=(0.25, 0.75), max_retries: int = 100) -> GrnSystem:
    """Bernoulli regulatory graph, half activating, half suppressing."""
    if not 0.0 < edge_prob < 1.0:
        raise ValueError("edge_prob must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        adj = (rng.random((n_genes, n_genes)) < edge_prob).astype(np.int8)
        np.fill_diagonal(adj, 0)
        if adj.any():
            break
    else:
        raise RuntimeError("no edges sampled; raise edge_prob or n_genes")
    tgt, reg = np.nonzero(adj)
    E = len(tgt)
    signs = np.where(rng.permutation(E) < E // 2, 1, -1)
    sign = np.zeros_like(adj)
    sign[tgt, reg] = signs
    gamma = np.zeros((n_genes, n_genes))
    k = np.zeros((n_genes, n_genes))
    gamma[tgt, reg] = rng.uniform(*gamma_range, size=E)
    k[tgt, reg] = rng.uniform(*k_range, size=E)
    return GrnSystem(n_genes, adj, sign, gamma, k)


def grn_integrate(system: GrnSystem, c0, steps: int = 250, dt: float = 0.05, clamp=None):
    """Forward-Euler integration with optional knockout clamping.

    Args:
        system: the network.
        c0: (G,) or (B, G) nonnegative initial concentrations.
        steps: number of Euler steps.
        dt: step size.
        clamp: index list (for 1-D ``c0``) or boolean mask shaped like ``c0``;
            these genes are held at 0 throughout.

    Returns:
        ``(c_final, deriv_norm)`` where ``deriv_norm`` is the max-norm of
        ``dc/dt`` at the final state over unclamped genes.

    Raises:
        IntegrationError: on a negative or non-finite state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = np.array(c0, dtype=float)
    if np.any(c < 0):
        raise ValueError("initial concentrations must be nonnegative")
    keep = np.ones(c.shape, dtype=bool)
    if clamp is not None:
        cl = np.asarray(clamp)
        if cl.dtype == bool:
            keep = ~cl
        else:
            keep[..., cl.astype(int)] = False
    c = c * keep
    for step in range(steps):
        c = (c + dt * system.rate(c)) * keep
        if not np.all(np.isfinite(c)):
            raise IntegrationError(f"non-finite state at step {step}", step)
        if np.any(c < 0):
            raise IntegrationError(f"negative concentration at step {step}; dt too large?", step)
    d = system.rate(c) * keep
    return c, float(np.max(np.abs(d))) if d.size else 0.0


def grn_perturbation_ensemble(system: GrnSystem, n_doubles: int = 1000, seed: int = 0,
                              steps: int = 250, post_steps: int = 100, dt: float = 0.05,
                              val_fraction: float = 0.2, c_range=(0.1, 10.0)) -> EnsembleDataset:
    """Single and double knockout ensemble.

    All single knockouts form the training split; the doubles are shuffled and
    divided ``val_fraction : 1 - val_fraction`` into val and test. Inputs are
    the steady state with knocked-out genes zeroed, targets the state after
    ``post_steps`` further clamped steps, masks exclude the knocked-out genes.
    """
    G = system.n_genes
    rng = np.random.default_rng(seed)
    c0 = rng.uniform(*c_range, size=G)
    steady, resid = grn_integrate(system, c0, steps, dt)
    n_pairs = G * (G - 1) // 2
    if n_doubles > n_pairs:
        raise ValueError(f"only {n_pairs} distinct pairs exist")
    iu, ju = np.triu_indices(G, k=1)
    pick = np.sort(rng.choice(n_pairs, size=n_doubles, replace=False))
    perts = [(g,) for g in range(G)] + [(int(iu[k]), int(ju[k])) for k in pick]
    S = len(perts)
    knocked = np.zeros((S, G), dtype=bool)
    for s, genes in enumerate(perts):
        knocked[s, list(genes)] = True
    x = np.where(knocked, 0.0, steady[None, :])
    y, _ = grn_integrate(system, x, post_steps, dt, clamp=knocked)
    n_val = int(round(n_doubles * val_fraction))
    dbl = np.array(["val"] * n_val + ["test"] * (n_doubles - n_val), dtype=object)
    split = np.concatenate([np.array(["train"] * G, dtype=object), dbl[rng.permutation(n_doubles)]])
    meta = {
        "task": "grn",
        "seed": seed,
        "n_genes": G,
        "n_doubles": n_doubles,
        "steady_state_residual": resid,
        "perturbations": [list(p) for p in perts],
        "steady_state": steady.tolist(),
    }
    return EnsembleDataset(system.topology(), x[..., None], y[..., None], ~knocked, split, meta)
