import numpy as np
import pytest
import scipy.linalg
from hypothesis import given

from coed.datagen import potential_field_phases, solenoidal_phases, triangular_lattice
from coed.fuzzy_graph import QUARTER_PI, FuzzyDiGraph, build_fuzzy_laplacian, random_fuzzy_graph
from coed.spectral import (SpectralError, dirichlet_energy, eigendecompose, energy_curve,
                           fix_gauge, gauge_pivots, hermitian_reduction, positional_encoding,
                           propagation_operator)

from strategies import fuzzy_graphs


def match_as_sets(a, b):
    """Greedy nearest matching; returns the max distance."""
    b = list(b)
    worst = 0.0
    for x in a:
        d = np.abs(np.array(b) - x)
        k = int(np.argmin(d))
        worst = max(worst, float(d[k]))
        b.pop(k)
    return worst


class TestEigendecompose:
    def test_two_node_closed_form(self):
        g = FuzzyDiGraph(2, np.array([0]), np.array([1]), np.array([QUARTER_PI]))
        dec = eigendecompose(build_fuzzy_laplacian(g))
        r = (1 + 1j) / np.sqrt(2)
        np.testing.assert_allclose(dec.eigenvalues, [-r, r], atol=1e-14)

    def test_random_fifty_node_against_dense_solver(self):
        g = random_fuzzy_graph(50, 0.15, np.random.default_rng(11))
        L = build_fuzzy_laplacian(g)
        dec = eigendecompose(L)
        assert dec.unitarity_error() < 1e-10
        ref = scipy.linalg.eigvals(L.toarray())
        assert match_as_sets(dec.eigenvalues, ref) < 1e-9

    def test_mapping_from_hermitian_eigenvalues(self):
        g = random_fuzzy_graph(30, 0.2, np.random.default_rng(5))
        L = build_fuzzy_laplacian(g)
        lam_m = np.sort(np.linalg.eigvalsh(hermitian_reduction(L)))
        dec = eigendecompose(L)
        np.testing.assert_allclose(dec.eigenvalues, np.exp(0.25j * np.pi) * lam_m, atol=1e-10)

    def test_residual_tolerance_raises(self):
        g = random_fuzzy_graph(10, 0.5, np.random.default_rng(0))
        with pytest.raises(SpectralError) as info:
            eigendecompose(build_fuzzy_laplacian(g), tolerance=0.0)
        assert "residual" in info.value.diagnostics

    @given(fuzzy_graphs(min_nodes=1, max_nodes=12))
    def test_invariants(self, g):
        L = build_fuzzy_laplacian(g)
        M = hermitian_reduction(L)
        assert np.max(np.abs(M - M.conj().T), initial=0.0) < 1e-13
        dec = eigendecompose(L)
        assert dec.form_error() < 1e-9
        assert dec.unitarity_error() < 1e-9
        assert dec.residual < 1e-9

    @given(fuzzy_graphs(min_nodes=1, max_nodes=10))
    def test_gauge_pivot_real_positive(self, g):
        V = eigendecompose(build_fuzzy_laplacian(g)).eigenvectors
        piv = V[gauge_pivots(V), np.arange(V.shape[1])]
        assert np.all(piv.real > 0)
        np.testing.assert_allclose(piv.imag, 0.0, atol=1e-15)

    def test_gauge_pivot_stable_under_ties(self):
        # single directed edge plus an isolated node: tied magnitudes 1/sqrt(2)
        g = FuzzyDiGraph(3, [0], [2], [0.0])
        V = eigendecompose(build_fuzzy_laplacian(g)).eigenvectors
        np.testing.assert_allclose(fix_gauge(V), V, atol=1e-15)
        piv = V[gauge_pivots(V), np.arange(3)]
        assert np.all(piv.real > 0) and np.all(piv.imag == 0)

    def test_gauge_undoes_global_phase(self, rng):
        V = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))[0]
        W = V * np.exp(1j * rng.uniform(0, 2 * np.pi, size=6))[None, :]
        np.testing.assert_allclose(fix_gauge(V), fix_gauge(W), atol=1e-12)


class TestPositionalEncoding:
    def test_full_basis_is_unitary(self):
        g = random_fuzzy_graph(12, 0.4, np.random.default_rng(2))
        pe = positional_encoding(build_fuzzy_laplacian(g), 12)
        np.testing.assert_allclose(pe.matrix.conj().T @ pe.matrix, np.eye(12), atol=1e-10)

    def test_descending_magnitude(self):
        g = random_fuzzy_graph(20, 0.3, np.random.default_rng(4))
        pe = positional_encoding(build_fuzzy_laplacian(g), 8)
        mags = np.abs(pe.eigenvalues)
        assert np.all(np.diff(mags) <= 1e-12)

    @pytest.mark.parametrize("k", [0, 13])
    def test_k_out_of_range(self, k):
        g = random_fuzzy_graph(12, 0.4, np.random.default_rng(2))
        with pytest.raises(ValueError):
            positional_encoding(build_fuzzy_laplacian(g), k)

    def test_deterministic(self):
        g = random_fuzzy_graph(25, 0.2, np.random.default_rng(9))
        a = positional_encoding(build_fuzzy_laplacian(g), 5).matrix
        b = positional_encoding(build_fuzzy_laplacian(g), 5).matrix
        assert np.array_equal(a, b)

    def test_source_sink_phase_separates_peak_and_valley(self):
        base = triangular_lattice(15, 15)
        pe = positional_encoding(build_fuzzy_laplacian(potential_field_phases(base)), 1)
        phase = np.angle(pe.matrix[:, 0])
        pos = base.positions
        peak = np.linalg.norm(pos - [-1.0, 1.0], axis=1) < 0.6
        valley = np.linalg.norm(pos - [1.0, -1.0], axis=1) < 0.6

        def circ(a):
            z = np.mean(np.exp(1j * a))
            return np.angle(z), np.sqrt(-2.0 * np.log(np.abs(z)))

        (m1, s1), (m2, s2) = circ(phase[peak]), circ(phase[valley])
        gap = np.abs(np.angle(np.exp(1j * (m1 - m2))))
        assert gap > max(s1, s2)

    def test_solenoid_magnitude_marks_central_vortices(self):
        n = 25
        base = triangular_lattice(n, n)
        pe = positional_encoding(build_fuzzy_laplacian(solenoidal_phases(base)), 1)
        mag = np.abs(pe.matrix[:, 0])
        nbrs = base.adjacency_01().tolil().rows
        extrema = [i for i in range(n * n) if len(nbrs[i]) == 6
                   and all(mag[i] < mag[j] for j in nbrs[i])]
        pos = base.positions[extrema]
        spacing = 4.0 / (n - 1)
        for c in [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]:
            assert np.min(np.linalg.norm(pos - c, axis=1)) <= spacing


class TestDirichlet:
    def test_constant_features(self):
        g = random_fuzzy_graph(10, 0.4, np.random.default_rng(0))
        assert dirichlet_energy(np.ones((10, 3)), g) == 0.0

    def test_single_edge(self):
        g = FuzzyDiGraph(2, np.array([0]), np.array([1]), np.array([QUARTER_PI]))
        assert dirichlet_energy(np.array([[0.0], [1.0]]), g) == pytest.approx(np.sqrt(2), abs=1e-15)

    def test_dimension_mismatch(self):
        g = random_fuzzy_graph(10, 0.4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            dirichlet_energy(np.ones((9, 2)), g)

    @given(fuzzy_graphs(min_nodes=2, max_nodes=10))
    def test_translation_invariant_and_nonnegative(self, g):
        rng = np.random.default_rng(g.n_nodes)
        f = rng.normal(size=(g.n_nodes, 3))
        e = dirichlet_energy(f, g)
        assert e >= 0.0
        assert dirichlet_energy(f + rng.normal(size=3), g) == pytest.approx(e, rel=1e-10, abs=1e-12)

    def test_energy_curve_length_and_start(self):
        g = random_fuzzy_graph(15, 0.3, np.random.default_rng(1))
        f = np.random.default_rng(2).normal(size=(15, 2))
        curve = energy_curve(f, g, propagation_operator(g), 4)
        assert curve.shape == (5,)
        assert curve[0] == dirichlet_energy(f, g)

    def test_row_operator_is_stochastic(self):
        g = random_fuzzy_graph(15, 0.4, np.random.default_rng(1))
        P = propagation_operator(g, "row")
        rows = np.asarray(P.sum(axis=1)).ravel()
        np.testing.assert_allclose(rows[rows > 0], 1.0, atol=1e-12)
        with pytest.raises(ValueError):
            propagation_operator(g, "bogus")

    @pytest.mark.parametrize("seed", range(4))
    def test_row_operator_smooths_monotonically(self, seed):
        g = random_fuzzy_graph(30, 0.2, np.random.default_rng(seed))
        g = g.with_theta(np.full(g.n_edges, QUARTER_PI))
        f = np.random.default_rng(seed).normal(size=(30, 4))
        curve = energy_curve(f, g, propagation_operator(g, "row"), 10)
        assert np.all(np.diff(curve) <= 1e-12)
