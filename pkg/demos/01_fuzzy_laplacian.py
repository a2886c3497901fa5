"""
Fuzzy directed graphs and their spectrum
========================================

Every edge carries an angle theta in [0, pi/2]. The forward weight is
cos(theta) and the backward weight sin(theta), so theta = pi/4 is an
undirected edge and the two ends of the range are fully directed.
"""

import numpy as np

from coed.datagen import potential_field_phases, triangular_lattice
from coed.fuzzy_graph import QUARTER_PI, FuzzyDiGraph, build_fuzzy_laplacian, graph_propagation
from coed.fuzzy_graph import laplacian_identity_error
from coed.spectral import eigendecompose, positional_encoding

# A three-node path: one edge fully forward, one undirected.
g = FuzzyDiGraph.from_edges(3, [(0, 1, 0.0), (1, 2, QUARTER_PI)])
L = build_fuzzy_laplacian(g)
print("fuzzy Laplacian:\n", np.round(L.toarray(), 3))

# L is skew in a specific way: L = i * conj(L).T
print("identity error:", laplacian_identity_error(L))

# The real part aggregates in-neighbors, the imaginary part out-neighbors.
pp = graph_propagation(g)
print("P_in:\n", np.round(pp.p_in.toarray(), 3))
print("P_out:\n", np.round(pp.p_out.toarray(), 3))

# Eigenvalues all lie on the line Re = Im.
dec = eigendecompose(L)
print("eigenvalues:", np.round(dec.eigenvalues, 4))
print("max |Re - Im|:", dec.form_error())

# On a lattice with a peak at (-1, 1) and a valley at (1, -1), flow runs
# downhill. The phase of the leading eigenvector tells the two regions apart.
base = triangular_lattice(15, 15)
flow = potential_field_phases(base)
pe = positional_encoding(build_fuzzy_laplacian(flow), 1)
phase = np.angle(pe.matrix[:, 0])
pos = base.positions
peak = np.linalg.norm(pos - [-1, 1], axis=1) < 0.6
valley = np.linalg.norm(pos - [1, -1], axis=1) < 0.6
print("mean phase near peak:   %.3f" % np.angle(np.mean(np.exp(1j * phase[peak]))))
print("mean phase near valley: %.3f" % np.angle(np.mean(np.exp(1j * phase[valley]))))
