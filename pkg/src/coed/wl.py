"""Weisfeiler-Leman color refinement for graphs with fuzzy edges.

Two signature forms are supported:

* ``"strong"``: the multiset of ``(mu_ij, color_j)`` over neighbors ``j``;
* ``"weak"``: for each neighbor color ``c`` the tuple
  ``(sum mu_ij, sum mu_ji, c)`` over neighbors of that color.

Edge weights are ``mu_ij = cos(theta_ij)`` and ``mu_ji = sin(theta_ij)``.
Weights and weight sums are quantized to integers on a ``10**-decimals`` grid
before comparison. New colors are assigned by sorting the distinct
``(previous color, signature)`` preimages, which makes color ids canonical:
relabeling the nodes never changes a histogram.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .fuzzy_graph import FuzzyDiGraph, build_magnetic_laplacian, fuzzy_from_magnetic, magnetic_angle

FORMS = ("strong", "weak")
NON_ISOMORPHIC = "NonIsomorphic"
POSSIBLY_ISOMORPHIC = "PossiblyIsomorphic"


class HashCollisionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Coloring:
    colors: np.ndarray
    iteration: int

    @property
    def n_colors(self) -> int:
        return int(self.colors.max()) + 1 if self.colors.size else 0

    @property
    def histogram(self) -> List[Tuple[int, int]]:
        vals, counts = np.unique(self.colors, return_counts=True)
        return [(int(v), int(c)) for v, c in zip(vals, counts)]


@dataclass
class RelabelTable:
    """Maps 128-bit signature hashes to their preimages and checks collisions."""

    preimages: Dict[bytes, tuple] = field(default_factory=dict)

    def key(self, preimage: tuple) -> bytes:
        h = hashlib.blake2b(repr(preimage).encode(), digest_size=16).digest()
        old = self.preimages.setdefault(h, preimage)
        if old != preimage:
            raise HashCollisionError(f"hash collision between {old!r} and {preimage!r}")
        return h


def _quantize(x, decimals):
    return np.rint(np.asarray(x, dtype=float) * 10.0**decimals).astype(np.int64)


def _neighbor_lists(graph: FuzzyDiGraph):
    """Per node: list of ``(neighbor, mu_ij, mu_ji)``."""
    mu_fwd, mu_bwd = graph.mu()
    out = [[] for _ in range(graph.n_nodes)]
    for i, j, a, b in zip(graph.src.tolist(), graph.dst.tolist(), mu_fwd.tolist(), mu_bwd.tolist()):
        out[i].append((j, a, b))
        out[j].append((i, b, a))
    return out


def _signature(nbrs, colors, form, decimals):
    if form == "strong":
        return tuple(sorted((int(_quantize(a, decimals)), int(colors[j])) for j, a, _ in nbrs))
    sums = defaultdict(lambda: [0.0, 0.0])
    for j, a, b in nbrs:
        s = sums[int(colors[j])]
        s[0] += a
        s[1] += b
    return tuple(sorted((int(_quantize(s[0], decimals)), int(_quantize(s[1], decimals)), c)
                        for c, s in sums.items()))


def _refine_joint(graphs: Sequence[FuzzyDiGraph], form: str, max_iter: int, decimals: int,
                  table: RelabelTable, on_round=None) -> List[List[Coloring]]:
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    lists, offsets = _union_neighbors(graphs)
    total = offsets[-1]
    colors = np.zeros(total, dtype=np.int64)
    rounds = [colors]
    if on_round is not None and on_round(0, colors) is False:
        return _split(rounds, offsets)
    for t in range(1, max_iter + 1):
        keys = []
        for v in range(total):
            pre = (int(colors[v]), _signature(lists[v], colors, form, decimals))
            keys.append((pre, table.key(pre)))
        distinct = sorted({k[0] for k in keys})
        rank = {p: r for r, p in enumerate(distinct)}
        new = np.array([rank[k[0]] for k in keys], dtype=np.int64)
        rounds.append(new)
        stable = len(distinct) == len(np.unique(colors))
        colors = new
        if on_round is not None and on_round(t, new) is False:
            break
        if stable:
            break
    return _split(rounds, offsets)


def _union_neighbors(graphs):
    lists, offsets = [], [0]
    for g in graphs:
        base = offsets[-1]
        for row in _neighbor_lists(g):
            lists.append([(base + j, a, b) for j, a, b in row])
        offsets.append(base + g.n_nodes)
    return lists, offsets


def _split(rounds, offsets):
    out = []
    for k in range(len(offsets) - 1):
        a, b = offsets[k], offsets[k + 1]
        out.append([Coloring(r[a:b].copy(), t) for t, r in enumerate(rounds)])
    return out


def wl_refine(graph: FuzzyDiGraph, form: str = "weak", max_iter: int = 100,
              decimals: int = 9) -> List[Coloring]:
    """Color refinement from the uniform coloring until the partition is stable.

    Returns:
        Colorings for rounds ``0..T``; the last round repeats the partition of
        the one before it unless ``max_iter`` was reached first.
    """
    return _refine_joint([graph], form, max_iter, decimals, RelabelTable())[0]


def wl_refine_joint(graphs: Sequence[FuzzyDiGraph], form: str = "weak", max_iter: int = 100,
                    decimals: int = 9) -> List[List[Coloring]]:
    """Refine several graphs in lockstep with one shared relabel table."""
    return _refine_joint(list(graphs), form, max_iter, decimals, RelabelTable())


@dataclass
class WLVerdict:
    verdict: str
    round: int
    rounds: List[Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]]

    @property
    def isomorphic_possible(self) -> bool:
        return self.verdict == POSSIBLY_ISOMORPHIC


def wl_isomorphism_test(g1: FuzzyDiGraph, g2: FuzzyDiGraph, form: str = "weak",
                        max_iter: int = 100, decimals: int = 9) -> WLVerdict:
    """Lockstep refinement; NonIsomorphic at the first round whose histograms differ."""
    if g1.n_nodes != g2.n_nodes or g1.n_edges != g2.n_edges:
        h1 = [(0, g1.n_nodes)] if g1.n_nodes else []
        h2 = [(0, g2.n_nodes)] if g2.n_nodes else []
        return WLVerdict(NON_ISOMORPHIC, 0, [(h1, h2)])
    n1 = g1.n_nodes
    state = {"round": None, "hist": []}

    def check(t, colors):
        a = Coloring(colors[:n1], t).histogram
        b = Coloring(colors[n1:], t).histogram
        state["hist"].append((a, b))
        if a != b:
            state["round"] = t
            return False
        return True

    _refine_joint([g1, g2], form, max_iter, decimals, RelabelTable(), on_round=check)
    if state["round"] is not None:
        return WLVerdict(NON_ISOMORPHIC, state["round"], state["hist"])
    return WLVerdict(POSSIBLY_ISOMORPHIC, len(state["hist"]) - 1, state["hist"])


def permute_graph(graph: FuzzyDiGraph, perm) -> FuzzyDiGraph:
    """Relabel node ``v`` as ``perm[v]``, keeping every edge weight."""
    perm = np.asarray(perm, dtype=np.int64)
    edges = [(int(perm[i]), int(perm[j]), float(t)) for i, j, t in graph.edges]
    pos = None
    if graph.positions is not None:
        pos = np.empty_like(graph.positions)
        pos[perm] = graph.positions
    return FuzzyDiGraph.from_edges(graph.n_nodes, edges, positions=pos)


# -- constructions -------------------------------------------------------------


def pair_with_resultant(resultant: complex) -> Tuple[float, float]:
    """Two angles whose unit vectors sum to ``resultant`` (needs ``|R| <= 2``)."""
    r = abs(resultant)
    if r > 2.0:
        raise ValueError("no pair of unit vectors has a resultant longer than 2")
    phi = float(np.angle(resultant))
    delta = float(np.arccos(r / 2.0))
    return phi + delta, phi - delta


def circulant_bipartite(triple: Sequence[float]) -> FuzzyDiGraph:
    """K_{3,3} with ``theta(u_i, w_j) = triple[(j - i) mod 3]``.

    Nodes 0-2 form one side, 3-5 the other. Every node sees each angle of the
    triple exactly once, so the three nodes of a side have the same
    neighborhood.
    """
    edges = [(i, 3 + j, float(triple[(j - i) % 3])) for i in range(3) for j in range(3)]
    return FuzzyDiGraph.from_edges(6, edges)


def weak_strong_pair(first=(np.deg2rad(60.0), np.deg2rad(70.0)), weight_sum: float = 0.9,
                     pivot: float = np.deg2rad(65.0)) -> Tuple[FuzzyDiGraph, FuzzyDiGraph]:
    """Two graphs that only the strong form tells apart.

    The first graph uses angles ``first`` plus a third angle chosen so the
    forward weights sum to ``weight_sum``. The second keeps the same sum of
    unit vectors ``(cos, sin)``, hence the same per-color forward and backward
    sums, but fixes one angle at ``pivot`` and solves for the other two.
    """
    a, b = first
    c = float(np.arccos(weight_sum - np.cos(a) - np.cos(b)))
    t1 = (a, b, c)
    total = sum(np.exp(1j * t) for t in t1)
    u, v = pair_with_resultant(total - np.exp(1j * pivot))
    t2 = (pivot, u, v)
    for t in t2:
        if not 0.0 <= t <= np.pi / 2:
            raise ValueError("pivot gives angles outside [0, pi/2]")
    return circulant_bipartite(t1), circulant_bipartite(t2)


def star_graph(theta) -> FuzzyDiGraph:
    """Center node 0 joined to nodes ``1..k`` with the given angles."""
    return FuzzyDiGraph.from_edges(len(theta) + 1, [(0, k + 1, float(t)) for k, t in enumerate(theta)])


@dataclass
class AliasingReport:
    magnetic_a: complex
    magnetic_b: complex
    fuzzy_a: Tuple[float, float]
    fuzzy_b: Tuple[float, float]
    perturbed_magnetic: complex
    perturbed_fuzzy: Tuple[float, float]
    perturbation: float

    @property
    def magnetic_gap(self) -> float:
        return abs(self.magnetic_a - self.magnetic_b)

    @property
    def fuzzy_gap(self) -> float:
        return float(np.hypot(self.fuzzy_a[0] - self.fuzzy_b[0], self.fuzzy_a[1] - self.fuzzy_b[1]))

    @property
    def perturbed_magnetic_shift(self) -> float:
        return abs(self.perturbed_magnetic - self.magnetic_a)

    @property
    def perturbed_fuzzy_shift(self) -> float:
        return float(np.hypot(self.perturbed_fuzzy[0] - self.fuzzy_a[0],
                              self.perturbed_fuzzy[1] - self.fuzzy_a[1]))

    def to_dict(self):
        c = lambda z: [float(z.real), float(z.imag)]
        return {
            "magnetic_a": c(self.magnetic_a), "magnetic_b": c(self.magnetic_b),
            "fuzzy_a": list(self.fuzzy_a), "fuzzy_b": list(self.fuzzy_b),
            "perturbed_magnetic": c(self.perturbed_magnetic),
            "perturbed_fuzzy": list(self.perturbed_fuzzy),
            "perturbation": self.perturbation,
            "magnetic_gap": self.magnetic_gap, "fuzzy_gap": self.fuzzy_gap,
        }


def _aggregates(theta):
    g = star_graph(theta)
    m = complex(build_magnetic_laplacian(g)[0].sum())
    mu_f, mu_b = g.mu()
    fwd = np.where(g.src == 0, mu_f, mu_b)
    bwd = np.where(g.src == 0, mu_b, mu_f)
    return m, (float(fwd.sum()), float(bwd.sum()))


def magnetic_aliasing_demo(perturbation: float = 1e-3) -> AliasingReport:
    """Two neighborhoods with equal magnetic aggregates but different fuzzy ones.

    Neighborhood A has five magnetic phases ``atan2(0.6, 0.8)`` and five
    ``-atan2(0.6, 0.8)``; neighborhood B has eight phases 0. Both sum to
    ``8 + 0i``. A third neighborhood shifts one forward weight of A by
    ``perturbation`` and re-solves two other phases so the magnetic sum is
    unchanged while the fuzzy sums move.
    """
    t = float(np.arctan2(0.6, 0.8))
    phases_a = np.array([t] * 5 + [-t] * 5)
    theta_a = fuzzy_from_magnetic(phases_a)
    theta_b = fuzzy_from_magnetic(np.zeros(8))
    mag_a, fz_a = _aggregates(theta_a)
    mag_b, fz_b = _aggregates(theta_b)

    theta_p = theta_a.copy()
    theta_p[0] = np.arccos(np.cos(theta_a[0]) - perturbation)
    phases_p = magnetic_angle(theta_p)
    # restore the magnetic sum with edges 1 (+t) and 5 (-t)
    lost = np.exp(1j * phases_a[0]) - np.exp(1j * phases_p[0])
    u, v = pair_with_resultant(np.exp(1j * phases_a[1]) + np.exp(1j * phases_a[5]) + lost)
    phases_p[1], phases_p[5] = u, v
    theta_p = fuzzy_from_magnetic(phases_p)
    mag_p, fz_p = _aggregates(theta_p)
    return AliasingReport(mag_a, mag_b, fz_a, fz_b, mag_p, fz_p, perturbation)
