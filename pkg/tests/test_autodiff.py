import numpy as np
import pytest

import sage.autodiff as ad
from sage.autodiff import ShapeError, Tape, apply_primitive, grad_check
from sage.errors import NumericalError


def f64() -> Tape:
    return Tape(dtype=np.float64)


class TestForwardExamples:
    def test_relu(self):
        t = f64()
        out = ad.relu(t.constant([[-1.0, 2.0]]))
        assert np.array_equal(out.data, [[0.0, 2.0]])

    def test_max_reduce_elementwise(self):
        t = f64()
        out = ad.max_reduce([t.constant([[1.0, -2.0]]), t.constant([[3.0, 0.0]])])
        assert np.array_equal(out.data, [[3.0, 0.0]])

    def test_l2_normalize(self):
        t = f64()
        out = ad.l2_normalize_rows(t.constant([[3.0, 4.0]]))
        assert np.allclose(out.data, [[0.6, 0.8]])

    def test_apply_primitive_by_kind(self):
        t = f64()
        out = apply_primitive("add", [np.ones((2, 2)), np.ones((2, 2))], t)
        assert np.array_equal(out.data, 2 * np.ones((2, 2)))

    def test_unknown_kind(self):
        with pytest.raises(KeyError):
            apply_primitive("frobnicate", [np.ones((1, 1))], f64())


class TestBackwardExamples:
    def test_square_gradient(self):
        t = f64()
        x = t.param(np.array([[3.0]]))
        loss = ad.rowwise_dot(x, x)
        grads = t.backward(loss)
        assert np.allclose(grads[x.idx], [[6.0]])

    def test_normalize_jacobian_by_hand(self):
        # J = I/|x| - x x^T/|x|^3 at x=[3,4], upstream [1,0]
        t = f64()
        x = t.param(np.array([[3.0, 4.0]]))
        y = ad.l2_normalize_rows(x)
        loss = ad.rowwise_dot(y, t.constant(np.array([[1.0, 0.0]])))
        grads = t.backward(loss)
        assert np.allclose(grads[x.idx], [[16 / 125, -12 / 125]])

    def test_relu_gates_upstream(self):
        t = f64()
        x = t.param(np.array([[-1.0, 2.0]]))
        loss = ad.rowwise_dot(ad.relu(x), t.constant(np.array([[5.0, 5.0]])))
        grads = t.backward(loss)
        assert np.array_equal(grads[x.idx], [[0.0, 5.0]])

    def test_max_tie_routes_to_first_argmax(self):
        t = f64()
        a = t.param(np.array([[2.0]]))
        b = t.param(np.array([[2.0]]))
        loss = ad.sum_all(ad.max_reduce([a, b]))
        grads = t.backward(loss)
        assert grads[a.idx][0, 0] == 1.0
        assert grads[b.idx][0, 0] == 0.0

    def test_zero_row_normalize_passes_through_with_zero_jacobian(self):
        t = f64()
        x = t.param(np.array([[0.0, 0.0], [3.0, 4.0]]))
        y = ad.l2_normalize_rows(x)
        assert np.array_equal(y.data[0], [0.0, 0.0])
        grads = t.backward(ad.sum_all(y))
        assert np.array_equal(grads[x.idx][0], [0.0, 0.0])
        assert np.any(grads[x.idx][1] != 0)

    def test_off_path_param_gets_zero_gradient(self):
        t = f64()
        x = t.param(np.array([[1.0]]))
        unused = t.param(np.array([[9.0]]))
        grads = t.backward(ad.sum_all(x))
        assert np.array_equal(grads[unused.idx], [[0.0]])


def _random_2d(rng, rows, cols):
    return rng.standard_normal((rows, cols))


def _margin_ok(kind, arrays):
    if kind == "relu":
        return np.abs(arrays[0]).min() > 1e-4
    if kind == "max_reduce":
        stack = np.stack(arrays)
        top2 = np.sort(stack, axis=0)[-2:]
        return (top2[1] - top2[0]).min() > 1e-4
    if kind == "log":
        return arrays[0].min() > 0.1
    if kind == "l2_normalize_rows":
        return np.linalg.norm(arrays[0], axis=1).min() > 1e-3
    return True


PRIMITIVE_CASES = {
    "matmul": lambda rng: [_random_2d(rng, 2, 3), _random_2d(rng, 3, 2)],
    "add": lambda rng: [_random_2d(rng, 2, 3), _random_2d(rng, 2, 3)],
    "add_bias": lambda rng: [_random_2d(rng, 1, 3), _random_2d(rng, 4, 3)],
    "mul": lambda rng: [_random_2d(rng, 2, 3), _random_2d(rng, 2, 3)],
    "scale": lambda rng: [_random_2d(rng, 2, 3)],
    "concat_cols": lambda rng: [_random_2d(rng, 2, 2), _random_2d(rng, 2, 3)],
    "concat_rows": lambda rng: [_random_2d(rng, 2, 3), _random_2d(rng, 3, 3)],
    "relu": lambda rng: [_random_2d(rng, 3, 3)],
    "sigmoid": lambda rng: [_random_2d(rng, 3, 3)],
    "tanh": lambda rng: [_random_2d(rng, 3, 3)],
    "log": lambda rng: [np.abs(_random_2d(rng, 2, 3)) + 0.2],
    "logsigmoid": lambda rng: [_random_2d(rng, 3, 3)],
    "max_reduce": lambda rng: [_random_2d(rng, 2, 3) for _ in range(3)],
    "mean_reduce": lambda rng: [_random_2d(rng, 2, 3) for _ in range(3)],
    "l2_normalize_rows": lambda rng: [_random_2d(rng, 3, 3)],
    "rowwise_dot": lambda rng: [_random_2d(rng, 3, 2), _random_2d(rng, 3, 2)],
    "gather_rows": lambda rng: [_random_2d(rng, 4, 2)],
    "sum_all": lambda rng: [_random_2d(rng, 2, 3)],
    "softmax_cross_entropy": lambda rng: [_random_2d(rng, 3, 4)],
    "sigmoid_cross_entropy": lambda rng: [_random_2d(rng, 3, 4)],
}


def _build_loss(kind, tensors, tape, rng):
    if kind == "add_bias":
        out = ad.add(tensors[0], tensors[1])
    elif kind == "scale":
        out = ad.scale(tensors[0], -1.7)
    elif kind in ("max_reduce", "mean_reduce"):
        out = getattr(ad, kind)(tensors)
    elif kind == "gather_rows":
        out = ad.gather_rows(tensors[0], np.array([2, 0, 2, 3, 1]))
    elif kind == "softmax_cross_entropy":
        out = ad.softmax_cross_entropy(tensors[0], np.array([1, 3, 0]))
    elif kind == "sigmoid_cross_entropy":
        targets = (rng.random((3, 4)) < 0.5).astype(float)
        out = ad.sigmoid_cross_entropy(tensors[0], targets)
    elif kind == "concat_rows":
        out = ad.concat_rows(*tensors)
    else:
        out = getattr(ad, {"concat_cols": "concat_cols"}.get(kind, kind))(*tensors)
    weights = tape.constant(rng.standard_normal(out.data.shape))
    return ad.sum_all(ad.mul(out, weights))


@pytest.mark.parametrize("kind", sorted(PRIMITIVE_CASES))
def test_every_primitive_matches_central_differences(kind):
    base_kind = "add" if kind == "add_bias" else kind
    kind_tag = sorted(PRIMITIVE_CASES).index(kind)
    worst = 0.0
    checked = 0
    for seed in range(100):
        rng = np.random.default_rng([seed, kind_tag])
        arrays = PRIMITIVE_CASES[kind](rng)
        if not _margin_ok(base_kind, arrays):
            continue
        loss_seed = int(rng.integers(0, 2**31))

        def f(params):
            # the loss weights are redrawn identically on every evaluation
            tape = f64()
            tensors = [tape.param(p) for p in params]
            return _build_loss(kind, tensors, tape, np.random.default_rng(loss_seed))

        worst = max(worst, grad_check(f, arrays, step=1e-6))
        checked += 1
    assert checked >= 90
    assert worst < 1e-6, f"{kind}: {worst:.3e}"


class TestGradCheckApi:
    def test_linear_function_is_exact(self):
        a = np.linspace(-1, 1, 6).reshape(2, 3)

        def f(params):
            tape = f64()
            x = tape.param(params[0])
            return ad.sum_all(ad.mul(x, tape.constant(a)))

        assert grad_check(f, [np.ones((2, 3))], step=1e-4) < 1e-10

    def test_mean_concat_layer_with_walk_loss(self):
        from sage.verification import build_case

        f, arrays = build_case("mean", "unsup", seed=0)
        assert grad_check(f, arrays, step=1e-6) < 1e-4

    def test_lstm_composite(self):
        from sage.verification import build_case

        f, arrays = build_case("lstm", "unsup", seed=0)
        assert grad_check(f, arrays, step=1e-6) < 1e-4

    def test_step_outside_range_rejected(self):
        def f(params):
            tape = f64()
            return ad.sum_all(tape.param(params[0]))

        with pytest.raises(ValueError):
            grad_check(f, [np.ones((1, 1))], step=1e-2)

    def test_float32_tape_rejected(self):
        def f(params):
            tape = Tape(dtype=np.float32)
            return ad.sum_all(tape.param(params[0]))

        with pytest.raises(ValueError):
            grad_check(f, [np.ones((1, 1))])


class TestTapeContracts:
    def test_replay_with_same_inputs_is_bit_identical(self):
        def run():
            rng = np.random.default_rng(42)
            tape = Tape(dtype=np.float32)
            x = tape.param(rng.standard_normal((4, 3)))
            w = tape.param(rng.standard_normal((3, 2)))
            out = ad.l2_normalize_rows(ad.relu(ad.matmul(x, w)))
            loss = ad.sum_all(out)
            grads = tape.backward(loss)
            return loss.data.copy(), {k: v.copy() for k, v in grads.items()}

        l1, g1 = run()
        l2, g2 = run()
        assert l1.tobytes() == l2.tobytes()
        assert all(g1[k].tobytes() == g2[k].tobytes() for k in g1)

    def test_non_finite_output_names_primitive(self):
        t = f64()
        with pytest.raises(NumericalError, match="log"):
            ad.log(t.constant([[-1.0]]))

    def test_backward_requires_scalar(self):
        t = f64()
        x = t.param(np.ones((2, 2)))
        with pytest.raises(ShapeError):
            t.backward(x)

    def test_cross_tape_inputs_rejected(self):
        t1, t2 = f64(), f64()
        a = t1.constant([[1.0]])
        b = t2.constant([[1.0]])
        with pytest.raises(ValueError):
            ad.add(a, b)

    def test_shape_mismatch_reports_primitive(self):
        t = f64()
        with pytest.raises(ShapeError, match="matmul"):
            ad.matmul(t.constant(np.ones((2, 3))), t.constant(np.ones((2, 3))))

    def test_allocation_counter_tracks_gradient_storage_only(self):
        t = f64()
        x = t.param(np.ones((3, 3)))
        w = t.param(np.ones((3, 2)))
        out = ad.relu(ad.matmul(x, w))
        loss = ad.sum_all(out)
        grads = t.backward(loss)
        touched = sum(1 for v in grads.values() if v is not None)
        # one buffer per node on the gradient path, nothing else
        assert t.grad_allocations == 5  # loss, relu out, matmul out, x, w
        assert touched == 2
