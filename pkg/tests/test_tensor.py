import numpy as np
import pytest

from lightltv.exceptions import NumericError
from lightltv.tensor import (
    AdamState,
    ParamStore,
    adam_step,
    concat,
    concat_backward,
    cross_layer_backward,
    cross_layer_forward,
    dense_backward,
    dense_forward,
    elementwise_product,
    elementwise_product_backward,
    embedding_lookup,
    grad_check,
    init_dense,
    init_embedding,
    mean_pool,
    mean_pool_backward,
    sigmoid,
    softplus,
)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        params = ParamStore()
        p = params.add("x", np.array([1.0]))
        p.grad[:] = 1.0
        state = AdamState(lr=1e-5)
        adam_step(params, state)
        np.testing.assert_allclose(p.values, [1.0 - 1e-5], atol=1e-12)
        assert state.t == 1

    def test_matches_reference_over_steps(self):
        rng = np.random.default_rng(0)
        params = ParamStore()
        p = params.add("w", rng.normal(size=5))
        state = AdamState(lr=1e-2)
        ref = p.values.copy()
        m = np.zeros(5)
        v = np.zeros(5)
        for t in range(1, 6):
            g = rng.normal(size=5)
            p.grad[:] = g
            adam_step(params, state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            m_hat = m / (1 - 0.9**t)
            v_hat = v / (1 - 0.999**t)
            ref = ref - 1e-2 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(p.values, ref, rtol=1e-10)

    def test_gradients_zeroed_after_step(self):
        params = ParamStore()
        p = params.add("x", np.ones(3))
        p.grad[:] = 2.0
        adam_step(params, AdamState())
        np.testing.assert_array_equal(p.grad, 0.0)

    def test_frozen_row_never_moves(self):
        params = ParamStore()
        p = params.add("emb", np.ones((3, 2)), frozen_rows=(2,))
        p.grad[:] = 1.0
        adam_step(params, AdamState(lr=0.1))
        np.testing.assert_array_equal(p.values[2], [1.0, 1.0])
        assert np.all(p.values[:2] < 1.0)

    def test_zero_gradient_leaves_params_unchanged(self):
        params = ParamStore()
        p = params.add("w", np.array([0.5, -1.5, 3.0]))
        state = AdamState(lr=0.1)
        for _ in range(3):
            adam_step(params, state)
        np.testing.assert_array_equal(p.values, [0.5, -1.5, 3.0])

    def test_descends_a_quadratic(self):
        params = ParamStore()
        p = params.add("w", np.array([1.0]))
        state = AdamState(lr=0.1)
        for _ in range(100):
            p.grad[:] = 2.0 * p.values
            adam_step(params, state)
        assert p.values[0] ** 2 < 0.25 ** 2

    def test_non_finite_gradient_is_rejected(self):
        params = ParamStore()
        params.add("a", np.ones(2))
        b = params.add("b", np.ones(2))
        b.grad[1] = np.nan
        state = AdamState()
        with pytest.raises(NumericError) as exc:
            adam_step(params, state)
        assert exc.value.parameter == "b"
        assert exc.value.step == 1
        assert exc.value.exit_code == 4
        assert state.t == 0
        np.testing.assert_array_equal(params["a"].values, [1.0, 1.0])


class TestParamStore:
    def test_duplicate_name(self):
        params = ParamStore()
        params.add("w", np.zeros(2))
        with pytest.raises(ValueError):
            params.add("w", np.zeros(2))

    def test_snapshot_restore(self):
        params = ParamStore()
        p = params.add("w", np.arange(4.0))
        snap = params.snapshot()
        p.values += 1.0
        params.restore(snap)
        np.testing.assert_array_equal(p.values, np.arange(4.0))
        assert params.num_params == 4
        np.testing.assert_array_equal(params.flat(), np.arange(4.0))

    def test_accumulate_shape_mismatch(self):
        p = ParamStore().add("w", np.zeros((2, 2)))
        with pytest.raises(ValueError):
            p.accumulate(np.zeros(4))


class TestInit:
    def test_embedding_bounds_and_pad(self):
        table = init_embedding(np.random.default_rng(0), 50, 16, pad_row=49)
        assert np.abs(table).max() <= 0.1 / 4
        np.testing.assert_array_equal(table[49], 0.0)

    def test_dense_scale(self):
        W, b = init_dense(np.random.default_rng(0), 400, 200)
        assert W.std() == pytest.approx(np.sqrt(2.0 / 200), rel=0.05)
        np.testing.assert_array_equal(b, 0.0)


class TestLayers:
    def test_dense_shape_mismatch(self):
        with pytest.raises(ValueError):
            dense_forward(np.zeros((2, 3)), np.zeros((4, 5)), np.zeros(4))

    def test_dense_vector_and_matrix_agree(self):
        rng = np.random.default_rng(1)
        W, b = rng.normal(size=(4, 3)), rng.normal(size=4)
        x = rng.normal(size=3)
        y1, _ = dense_forward(x, W, b)
        y2, _ = dense_forward(x[None, :], W, b)
        np.testing.assert_allclose(y1, y2[0])
        assert np.all(y1 >= 0)

    def test_embedding_out_of_range(self):
        with pytest.raises(IndexError):
            embedding_lookup(np.zeros((3, 2)), np.array([0, 3]))

    def test_mean_pool_ignores_padding(self):
        emb = np.array([[[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]]])
        mask = np.array([[1.0, 1.0, 0.0]])
        pooled, cache = mean_pool(emb, mask)
        np.testing.assert_allclose(pooled, [[2.0, 3.0]])
        demb = mean_pool_backward(np.ones((1, 2)), cache)
        np.testing.assert_allclose(demb[0, 2], [0.0, 0.0])
        np.testing.assert_allclose(demb[0, 0], [0.5, 0.5])

    def test_concat_backward_splits(self):
        a, b = np.ones((2, 3)), np.zeros((2, 1))
        out, sizes = concat([a, b])
        da, db = concat_backward(np.arange(8.0).reshape(2, 4), sizes)
        assert out.shape == (2, 4)
        np.testing.assert_array_equal(db[:, 0], [3.0, 7.0])
        assert da.shape == (2, 3)

    def test_cross_layer_formula(self):
        rng = np.random.default_rng(2)
        x0, xl = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        W, b = rng.normal(size=(4, 4)), rng.normal(size=4)
        y, _ = cross_layer_forward(x0, xl, W, b)
        np.testing.assert_allclose(y, x0 * (xl @ W.T + b) + xl)

    def test_softplus_and_sigmoid_stable(self):
        x = np.array([-800.0, 0.0, 800.0])
        np.testing.assert_allclose(softplus(x), [0.0, np.log(2.0), 800.0])
        np.testing.assert_allclose(sigmoid(x), [0.0, 0.5, 1.0])

    def test_relu_dead_units_pass_no_gradient(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 3))
        W = rng.normal(size=(4, 3))
        W[1] = 0.0
        b = np.array([0.0, -1.0, 0.0, 0.0])
        y, cache = dense_forward(x, W, b)
        np.testing.assert_array_equal(y[:, 1], 0.0)
        _, dW, db = dense_backward(np.ones_like(y), cache)
        np.testing.assert_array_equal(dW[1], 0.0)
        assert db[1] == 0.0

    def test_all_dead_layer_blocks_backward(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 3))
        W, b = rng.normal(size=(4, 3)) * 0.01, np.full(4, -100.0)
        y, cache = dense_forward(x, W, b)
        np.testing.assert_array_equal(y, 0.0)
        dx, dW, db = dense_backward(rng.normal(size=y.shape), cache)
        np.testing.assert_array_equal(dx, 0.0)
        np.testing.assert_array_equal(dW, 0.0)
        np.testing.assert_array_equal(db, 0.0)

    def test_cross_layer_with_zero_weights_is_identity(self):
        rng = np.random.default_rng(7)
        x0, xl = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        y, _ = cross_layer_forward(x0, xl, np.zeros((4, 4)), np.zeros(4))
        np.testing.assert_array_equal(y, xl)

    def test_elementwise_product_shape_mismatch(self):
        with pytest.raises(ValueError):
            elementwise_product(np.ones((2, 3)), np.ones((2, 4)))


def _quadratic_closure(fn):
    def closure():
        out, backward = fn()
        loss = float(0.5 * np.sum(out * out))
        backward(out)
        return loss

    return closure


class TestGradCheck:
    def test_dense_stack(self):
        rng = np.random.default_rng(3)
        params = ParamStore()
        params.add("W", rng.normal(size=(3, 4)))
        params.add("b", rng.normal(size=3))
        x = rng.normal(size=(5, 4))

        def fn():
            y, cache = dense_forward(x, params["W"].values, params["b"].values, act="identity")

            def backward(dy):
                _, dW, db = dense_backward(dy, cache)
                params["W"].accumulate(dW)
                params["b"].accumulate(db)

            return y, backward

        assert grad_check(_quadratic_closure(fn), params) < 1e-6

    def test_cross_layer(self):
        rng = np.random.default_rng(4)
        params = ParamStore()
        params.add("x0", rng.normal(size=(4, 3)))
        params.add("W", rng.normal(size=(3, 3)))
        params.add("b", rng.normal(size=3))

        def fn():
            x0 = params["x0"].values
            y, cache = cross_layer_forward(x0, x0, params["W"].values, params["b"].values)

            def backward(dy):
                dx0, dxl, dW, db = cross_layer_backward(dy, cache)
                params["x0"].accumulate(dx0 + dxl)
                params["W"].accumulate(dW)
                params["b"].accumulate(db)

            return y, backward

        assert grad_check(_quadratic_closure(fn), params) < 1e-6

    def test_detects_wrong_gradient(self):
        params = ParamStore()
        params.add("w", np.array([1.0, 2.0]))

        def closure():
            w = params["w"].values
            params["w"].accumulate(3.0 * w)
            return float(np.sum(w * w))

        assert grad_check(closure, params) > 0.1

    def test_skips_frozen_rows(self):
        params = ParamStore()
        params.add("emb", np.ones((2, 2)), frozen_rows=(1,))

        def closure():
            emb = params["emb"].values
            params["emb"].accumulate(2.0 * emb)
            return float(np.sum(emb * emb))

        assert grad_check(closure, params) < 1e-6

    def test_elementwise_product(self):
        rng = np.random.default_rng(8)
        params = ParamStore()
        params.add("a", rng.normal(size=(4, 3)))
        params.add("b", rng.normal(size=(4, 3)))

        def fn():
            y, cache = elementwise_product(params["a"].values, params["b"].values)

            def backward(dy):
                da, db = elementwise_product_backward(dy, cache)
                params["a"].accumulate(da)
                params["b"].accumulate(db)

            return y, backward

        assert grad_check(_quadratic_closure(fn), params) < 1e-6

    def _kinked_relu(self):
        params = ParamStore()
        params.add("W", np.zeros((3, 1)))
        # first unit sits 2e-6 above the kink, inside one eps step
        params.add("b", np.array([2e-6, 0.7, -0.3]))
        x = np.ones((1, 1))

        def fn():
            y, cache = dense_forward(x, params["W"].values, params["b"].values)

            def backward(dy):
                _, dW, db = dense_backward(dy, cache)
                params["W"].accumulate(dW)
                params["b"].accumulate(db)

            return y, backward

        def pattern():
            return dense_forward(x, params["W"].values, params["b"].values)[1].z > 0.0

        return params, _quadratic_closure(fn), pattern

    def test_relu_kink_breaks_central_differences(self):
        params, closure, _ = self._kinked_relu()
        assert grad_check(closure, params, eps=1e-5) > 0.1

    def test_coordinates_across_a_kink_are_skipped(self):
        params, closure, pattern = self._kinked_relu()
        assert grad_check(closure, params, eps=1e-5, pattern=pattern) < 1e-6
