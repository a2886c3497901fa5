import numpy as np
import pytest
from hypothesis import given, strategies as st

from coed.datagen import generate_lattice_ensemble, potential_field_phases, triangular_lattice
from coed.dataset import EnsembleDataset, seeded_split
from coed.fuzzy_graph import QUARTER_PI, random_fuzzy_graph, undirected_phases
from coed.nn import (Adam, CoEDModel, Tape, TapeError, TrainConfig, adam_step, evaluate,
                     gradient_check, loss_mse, raw_from_theta, theta_from_raw, train)
from coed.nn.autodiff import SparsePattern

from oracles import dense_propagation, loop_coed_layer


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f()
        x.flat[i] = old - h
        fm = f()
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2 * h)
    return g


class TestTape:
    def test_sum_of_leaf_gives_ones(self):
        tape = Tape()
        a = tape.leaf(np.arange(6.0).reshape(2, 3), "a")
        grads = tape.backward(tape.sum(a))
        np.testing.assert_array_equal(grads["a"], np.ones((2, 3)))

    def test_backward_needs_scalar(self):
        tape = Tape()
        a = tape.leaf(np.ones(3), "a")
        with pytest.raises(TapeError):
            tape.backward(tape.cos(a))

    def test_backward_rejects_foreign_loss(self):
        t1, t2 = Tape(), Tape()
        loss = t1.sum(t1.leaf(np.ones(2), "a"))
        t2.sum(t2.leaf(np.ones(2), "b"))
        with pytest.raises(TapeError):
            t2.backward(loss)

    def test_unused_leaf_gets_zero(self):
        tape = Tape()
        a = tape.leaf(np.ones(2), "a")
        tape.leaf(np.ones(3), "b")
        grads = tape.backward(tape.sum(a))
        np.testing.assert_array_equal(grads["b"], np.zeros(3))

    @pytest.mark.parametrize("op", ["cos", "sin", "tanh", "relu", "row_normalize"])
    def test_elementwise_ops_match_fd(self, op, rng):
        x = rng.normal(size=(4, 3)) + 0.05
        w = rng.normal(size=(4, 3))

        def run(tape):
            a = tape.leaf(x, "x")
            return tape.sum(tape.mul(getattr(tape, op)(a), tape.const(w)))

        tape = Tape()
        g = tape.backward(run(tape))["x"]
        fd = fd_grad(lambda: float(run(Tape(enabled=False)).value), x)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)

    def test_spmm_matches_fd_both_routes(self, rng):
        for n, p in [(6, 0.6), (80, 0.02)]:
            g = random_fuzzy_graph(n, p, rng)
            rows, cols = g.directed_entries()
            pat = SparsePattern(rows, cols, n)
            vals = rng.normal(size=len(rows))
            x = rng.normal(size=(n, 2, 3))
            w = rng.normal(size=(n, 2, 3))

            def run(tape):
                v = tape.leaf(vals, "v")
                X = tape.leaf(x, "x")
                return tape.sum(tape.mul(tape.spmm(v, pat, X), tape.const(w)))

            tape = Tape()
            grads = tape.backward(run(tape))
            f = lambda: float(run(Tape(enabled=False)).value)  # noqa: E731
            np.testing.assert_allclose(grads["v"], fd_grad(f, vals), rtol=1e-6, atol=1e-8)
            np.testing.assert_allclose(grads["x"], fd_grad(f, x), rtol=1e-6, atol=1e-8)

    def test_rsqrt_floor_zero_gradient_when_floored(self):
        tape = Tape()
        a = tape.leaf(np.array([0.0, 4.0]), "a")
        grads = tape.backward(tape.sum(tape.rsqrt_floor(a, 1e-12)))
        assert grads["a"][0] == 0.0
        assert grads["a"][1] == pytest.approx(-0.5 * 4.0**-1.5)


class TestLoss:
    def test_zero_when_equal(self, rng):
        y = rng.normal(size=(5, 3))
        assert float(loss_mse(Tape(enabled=False).const(y), y).value) == 0.0

    def test_all_ones_difference(self, rng):
        y = rng.normal(size=(5, 3))
        assert float(loss_mse(Tape(enabled=False).const(y + 1.0), y).value) == pytest.approx(1.0)

    def test_masked_matches_loop(self, rng):
        p, y = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        mask = np.array([True, False, True, False, True, False])
        got = float(loss_mse(Tape(enabled=False).const(p), y, mask).value)
        sse, cnt = 0.0, 0
        for i in range(6):
            if mask[i]:
                for d in range(4):
                    sse += (p[i, d] - y[i, d]) ** 2
                    cnt += 1
        assert got == pytest.approx(sse / cnt, rel=1e-14)

    def test_all_masked_raises(self):
        with pytest.raises(ValueError):
            loss_mse(Tape(enabled=False).const(np.ones((2, 2))), np.ones((2, 2)), np.zeros(2, bool))


class TestPhaseMap:
    def test_values(self):
        assert theta_from_raw(0.0) == QUARTER_PI
        assert theta_from_raw(50.0) == pytest.approx(np.pi / 2)
        assert theta_from_raw(-50.0) == pytest.approx(0.0, abs=1e-15)

    def test_derivative_at_zero(self):
        h = 1e-6
        d = (theta_from_raw(h) - theta_from_raw(-h)) / (2 * h)
        assert d == pytest.approx(QUARTER_PI, rel=1e-9)

    @given(st.floats(-20, 20))
    def test_range_and_inverse(self, r):
        t = theta_from_raw(r)
        assert 0.0 <= t <= np.pi / 2
        if abs(r) < 8:
            assert raw_from_theta(t) == pytest.approx(r, abs=1e-6)


class TestForward:
    def test_identity_layer(self, rng):
        g = random_fuzzy_graph(6, 0.5, rng)
        m = CoEDModel(g, [3, 3], activation="identity")
        L = m.layers[0]
        L.w_self[...] = np.eye(3)
        L.w_in[...] = 0
        L.w_out[...] = 0
        x = rng.normal(size=(6, 3))
        np.testing.assert_array_equal(m.forward(x).value, x)

    def test_path_graph_dense_oracle(self, rng):
        g = undirected_phases(3, [(0, 1), (1, 2)])
        m = CoEDModel(g, [2, 4, 3], activation="relu", final_activation=True, seed=3)
        x = rng.normal(size=(3, 2))
        # hand-computed symmetric normalization on the path: degrees (1, 2, 1) / sqrt(2)
        P = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]) / np.sqrt(2.0)
        P_in, P_out = dense_propagation(g)
        np.testing.assert_allclose(P_in, P, atol=1e-15)
        F = x
        for L in m.layers:
            F = loop_coed_layer(F, P_in, P_out, L.w_self, L.w_in, L.w_out, L.bias, 0.5,
                                lambda h: np.maximum(h, 0))
        np.testing.assert_allclose(m.forward(x).value, F, atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_random_graph_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        g = random_fuzzy_graph(int(rng.integers(2, 8)), 0.5, rng)
        alpha = float(rng.uniform())
        m = CoEDModel(g, [2, 3, 2], alpha=alpha, activation="identity", seed=seed,
                      init_theta_from_graph=True)
        m.raw_phases[...] = rng.normal(size=m.raw_phases.shape)
        P_in, P_out = dense_propagation(m.learned_graph())
        x = rng.normal(size=(g.n_nodes, 2))
        F = x
        for L in m.layers:
            F = loop_coed_layer(F, P_in, P_out, L.w_self, L.w_in, L.w_out, L.bias, alpha,
                                lambda h: h)
        np.testing.assert_allclose(m.forward(x).value, F, atol=1e-12)

    def test_frozen_phase_equivalence(self, rng):
        edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 4)]
        g = undirected_phases(5, edges)
        m = CoEDModel(g, [3, 3], activation="identity", seed=1)
        tape = Tape()
        p_in, p_out = m.propagation(tape, tape.const(m.raw_phases[0]))
        assert np.array_equal(p_in.value, p_out.value)
        A = g.adjacency_01().toarray()
        d = A.sum(1)
        S = A / np.sqrt(np.outer(d, d))
        x = rng.normal(size=(5, 3))
        L = m.layers[0]
        ref = x @ L.w_self + 0.5 * (S @ x) @ (L.w_in + L.w_out) + L.bias
        np.testing.assert_allclose(m.forward(x).value, ref, atol=1e-12)

    def test_batched_equals_per_sample(self, rng):
        g = random_fuzzy_graph(8, 0.4, rng)
        m = CoEDModel(g, [3, 5, 2], seed=2)
        xb = rng.normal(size=(8, 4, 3))
        out = m.forward(xb).value
        for b in range(4):
            np.testing.assert_allclose(out[:, b], m.forward(xb[:, b]).value, atol=1e-13)

    def test_shape_errors(self, rng):
        g = random_fuzzy_graph(5, 0.5, rng)
        m = CoEDModel(g, [3, 2])
        with pytest.raises(ValueError):
            m.forward(np.zeros((4, 3)))
        with pytest.raises(ValueError):
            m.forward(np.zeros((5, 2)))

    def test_phase_consistency_structural(self):
        g = random_fuzzy_graph(10, 0.4, np.random.default_rng(0))
        m = CoEDModel(g, [2, 2])
        m.raw_phases[...] = np.random.default_rng(1).normal(size=m.raw_phases.shape)
        L = m.learned_graph()
        from coed.fuzzy_graph import build_fuzzy_laplacian, laplacian_identity_error
        assert laplacian_identity_error(build_fuzzy_laplacian(L)) < 1e-15

    def test_generator_round_trip(self):
        g = potential_field_phases(triangular_lattice(6, 6))
        ds = generate_lattice_ensemble(g, 5, 4, 10, seed=1)
        md = ds.metadata
        m = CoEDModel(ds.graph, [4] * 11, activation="normalize")
        m.set_generator_weights(md["w_self"], md["w_in"], md["w_out"], md["true_theta"])
        x, y, _ = ds.batch(np.arange(5))
        assert np.max(np.abs(m.forward(x).value - y)) < 1e-12


class TestGradients:
    # relu is checked away from its kink: biases are randomized and the seed is
    # one where no pre-activation lies within h of zero
    @pytest.mark.parametrize("layerwise", [False, True])
    @pytest.mark.parametrize("activation", ["relu", "normalize", "identity"])
    def test_three_layer_gradients(self, layerwise, activation):
        rng = np.random.default_rng(7)
        g = random_fuzzy_graph(10, 0.4, rng)
        m = CoEDModel(g, [3, 4, 4, 2], activation=activation, layerwise_theta=layerwise, seed=5)
        m.raw_phases[...] = rng.normal(scale=0.5, size=m.raw_phases.shape)
        for L in m.layers:
            L.bias[...] = rng.normal(scale=0.1, size=L.bias.shape)
        sample = (rng.normal(size=(10, 3)), rng.normal(size=(10, 2)), rng.random(10) < 0.8)
        errs = gradient_check(m, sample)
        assert errs["weights"] < 1e-6 and errs["phases"] < 1e-6
        assert set(errs) == {"weights", "phases", "max"}

    def test_linear_model_quadratic_loss(self, rng):
        g = random_fuzzy_graph(6, 0.5, rng)
        m = CoEDModel(g, [3, 2], activation="identity")
        m.fixed_theta = g.theta.copy()
        sample = (rng.normal(size=(6, 3)), rng.normal(size=(6, 2)), None)
        # central differences are exact for quadratics, so a large step only cuts roundoff
        assert gradient_check(m, sample, h=1e-2)["weights"] < 1e-10

    def test_symmetric_configuration_has_zero_phase_gradient(self):
        # 6-cycle, all-pi/4, identical features on every node: mirror symmetry per edge
        g = undirected_phases(6, [(i, (i + 1) % 6) for i in range(6)])
        m = CoEDModel(g, [2, 2], activation="identity", seed=0)
        x = np.tile([[0.3, -0.7]], (6, 1))
        y = np.zeros((6, 2))
        tape = Tape()
        loss = tape.masked_mse(m.forward(x, tape), y)
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads["raw_phases.0"], 0.0, atol=1e-15)


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, 2.0])}
        opt = Adam(lr=0.1)
        adam_step(p, {"w": np.zeros(2)}, opt)
        np.testing.assert_array_equal(p["w"], [1.0, 2.0])
        assert opt.t == 1

    def test_first_step_closed_form(self):
        p = {"w": np.array([0.0])}
        opt = Adam(lr=0.01, eps=1e-8)
        opt.step(p, {"w": np.array([1.0])})
        assert p["w"][0] == pytest.approx(-0.01 * 1.0 / (1.0 + 1e-8), rel=1e-15)

    def test_quadratic_bowl(self):
        target = np.array([1.0, -2.0, 0.5])
        p = {"w": np.zeros(3)}
        opt = Adam(lr=0.1)
        for _ in range(100):
            opt.step(p, {"w": 2 * (p["w"] - target)})
        opt.lr = 0.01
        for _ in range(400):
            opt.step(p, {"w": 2 * (p["w"] - target)})
        assert np.max(np.abs(p["w"] - target)) < 1e-6

    def test_lr_override_and_frozen(self):
        p = {"a": np.zeros(1), "raw_phases": np.zeros(1), "c": np.zeros(1)}
        opt = Adam(lr=0.1, lr_overrides={"raw_phases": 0.01})
        opt.step(p, {k: np.ones(1) for k in p}, frozen=("c",))
        assert p["a"][0] == pytest.approx(-0.1, rel=1e-6)
        assert p["raw_phases"][0] == pytest.approx(-0.01, rel=1e-6)
        assert p["c"][0] == 0.0

    def test_non_finite_gradient(self):
        with pytest.raises(FloatingPointError):
            Adam().step({"w": np.zeros(1)}, {"w": np.array([np.nan])})


def tiny_dataset(seed=0, n=24):
    g = potential_field_phases(triangular_lattice(4, 4))
    return generate_lattice_ensemble(g, n, 3, 3, seed=seed)


class TestTrain:
    def test_patience_zero_runs_one_epoch(self):
        ds = tiny_dataset()
        res = train(CoEDModel(ds.graph, [3, 8, 3]), ds, TrainConfig(patience=0, max_epochs=50))
        assert len(res.history) == 1

    def test_counter_semantics(self):
        ds = tiny_dataset()
        res = train(CoEDModel(ds.graph, [3, 8, 3]), ds, TrainConfig(patience=3, max_epochs=30,
                                                                     lr=0.05))
        best = np.inf
        for h in res.history:
            if h["val_loss"] < best:
                best = h["val_loss"]
                assert h["patience_counter"] == 0
        assert res.best_val_loss == min(h["val_loss"] for h in res.history)
        assert evaluate(res.model, ds, "val") == res.best_val_loss

    def test_fixed_point_of_true_parameters(self):
        g = potential_field_phases(triangular_lattice(5, 5))
        ds = generate_lattice_ensemble(g, 15, 3, 4, seed=2)
        md = ds.metadata
        m = CoEDModel(ds.graph, [3] * 5, activation="normalize")
        m.set_generator_weights(md["w_self"], md["w_in"], md["w_out"], md["true_theta"])
        # one epoch only: at an exact optimum Adam's step is about lr * g / eps, so
        # roundoff-level gradients are amplified over many epochs
        res = train(m, ds, TrainConfig(max_epochs=1, patience=5))
        assert res.history[0]["val_loss"] < 1e-20

    def test_deterministic_history(self):
        ds = tiny_dataset()
        runs = [train(CoEDModel(ds.graph, [3, 6, 3], seed=1), ds,
                      TrainConfig(max_epochs=4, seed=3)) for _ in range(2)]
        strip = [[{k: v for k, v in h.items() if k != "seconds"} for h in r.history] for r in runs]
        assert strip[0] == strip[1]
        assert np.array_equal(runs[0].model.raw_phases, runs[1].model.raw_phases)

    def test_freeze_keeps_phases(self):
        ds = tiny_dataset()
        res = train(CoEDModel(ds.graph, [3, 6, 3]), ds,
                    TrainConfig(max_epochs=2, freeze_theta=True))
        assert np.all(res.model.raw_phases == 0.0)

    def test_layerwise_switch(self):
        ds = tiny_dataset()
        res = train(CoEDModel(ds.graph, [3, 6, 6, 3]), ds,
                    TrainConfig(max_epochs=2, layerwise_theta=True, lr_theta=0.05))
        assert res.model.raw_phases.shape == (3, ds.graph.n_edges)
        assert not np.array_equal(res.model.raw_phases[0], res.model.raw_phases[2])

    def test_requires_train_and_val(self):
        ds = tiny_dataset(n=6)
        bad = EnsembleDataset(ds.graph, ds.features, ds.targets, ds.masks,
                              np.array(["train"] * 6, dtype=object))
        with pytest.raises(ValueError):
            train(CoEDModel(ds.graph, [3, 3]), bad, TrainConfig(max_epochs=1))
        with pytest.raises(ValueError):
            evaluate(CoEDModel(ds.graph, [3, 3]), bad, "test")

    def test_seeded_split_counts(self):
        lab = seeded_split(500, np.random.default_rng(0))
        assert [np.sum(lab == s) for s in ("train", "val", "test")] == [300, 100, 100]
