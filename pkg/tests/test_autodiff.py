"""Gradient contract for every primitive, checked against central differences."""

import numpy as np
import pytest

from wzcast import autodiff as ad
from wzcast.autodiff import ExprGraph, GraphStateError, ShapeError
from wzcast.errors import NumericError

RTOL = 1e-4


def relative_error(got, want):
    scale = np.maximum(np.maximum(np.abs(got), np.abs(want)), 1e-8)
    err = np.abs(got - want) / scale
    return np.where((np.abs(got) < 1e-10) & (np.abs(want) < 1e-10), 0.0, err)


def check_gradients(build, inputs: dict, h=1e-5):
    """Compare backprop against finite differences for each input."""
    leaves = {k: ad.leaf(v, k) for k, v in inputs.items()}
    out = build(leaves)
    grads = ad.backprop(out, np.ones(out.shape), leaves=leaves.values())
    for name, value in inputs.items():
        def scalar(v, name=name):
            trial = {k: ad.leaf(v if k == name else inputs[k], k) for k in inputs}
            return float(ad.reduce_sum(build(trial)).data)

        fd = ad.finite_difference_grad(scalar, value, h=h)
        worst = relative_error(grads[name], fd).max()
        assert worst <= RTOL, f"{name}: rel err {worst:.2e}"


def away_from_kink(x, margin=1e-3):
    return np.where(np.abs(x) < margin, x + 2 * margin, x)


# -- spec examples ---------------------------------------------------------


def test_hadamard_example():
    out = ad.mul(ad.constant([1.0, 2.0]), ad.constant([3.0, 4.0]))
    assert np.array_equal(out.data, [3.0, 8.0])


def test_relu_example():
    assert np.array_equal(ad.relu(ad.constant([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])


def test_matmul_ones_example():
    out = ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((3, 1))))
    assert np.array_equal(out.data, np.full((2, 1), 3.0))


def test_square_gradient_example():
    x = ad.leaf([3.0], "x")
    grads = ad.backprop(ad.mul(x, x), np.ones(1), leaves=[x])
    assert np.allclose(grads["x"], [6.0])


def test_relu_subgradient_example():
    x = ad.leaf([-1.0, 2.0], "x")
    grads = ad.backprop(ad.reduce_sum(ad.relu(x)), 1.0, leaves=[x])
    assert np.array_equal(grads["x"], [0.0, 1.0])


def test_relu_subgradient_at_zero_is_zero():
    x = ad.leaf([0.0], "x")
    grads = ad.backprop(ad.reduce_sum(ad.relu(x)), 1.0, leaves=[x])
    assert grads["x"][0] == 0.0


def test_finite_difference_examples():
    fd = ad.finite_difference_grad(lambda v: float(np.sum(v ** 2)), np.array([1.0, 2.0]))
    assert np.allclose(fd, [2.0, 4.0], atol=1e-6)
    fd = ad.finite_difference_grad(lambda v: 7.0, np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(fd, np.zeros(3))


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        ad.finite_difference_grad(lambda v: 0.0, np.zeros(2), h=0.0)


# -- per-primitive gradient checks ------------------------------------------


PRIMITIVES = {
    "add": lambda lv: ad.add(lv["a"], lv["b"]),
    "add_broadcast": lambda lv: ad.add(lv["a"], lv["row"]),
    "mul": lambda lv: ad.mul(lv["a"], lv["b"]),
    "mul_broadcast": lambda lv: ad.mul(lv["a"], lv["col"]),
    "matmul": lambda lv: ad.matmul(lv["m1"], lv["m2"]),
    "matmul_batched": lambda lv: ad.matmul(lv["bm"], lv["m2"]),
    "relu": lambda lv: ad.relu(lv["a"]),
    "sigmoid": lambda lv: ad.sigmoid(lv["a"]),
    "tanh": lambda lv: ad.tanh(lv["a"]),
    "abs": lambda lv: ad.absolute(lv["a"]),
    "softmax": lambda lv: ad.mul(ad.softmax(lv["a"], axis=-1), lv["b"]),
    "concat": lambda lv: ad.concat([lv["a"], lv["b"]], axis=1),
    "slice": lambda lv: ad.take(lv["a"], (slice(1, 3), slice(None))),
    "gather_rows": lambda lv: ad.take(lv["a"], np.array([0, 2, 2, 1])),
    "pad": lambda lv: ad.pad_axis(lv["a"], axis=1, before=1, after=2),
    "broadcast": lambda lv: ad.broadcast_to(lv["row"], (4, 4)),
    "reshape": lambda lv: ad.reshape(lv["a"], (2, 8)),
    "transpose": lambda lv: ad.transpose(lv["cube"], (2, 0, 1)),
    "sum_axis": lambda lv: ad.reduce_sum(lv["cube"], axis=1),
    "sum_keepdims": lambda lv: ad.reduce_sum(lv["a"], axis=0, keepdims=True),
    "mean": lambda lv: ad.reduce_mean(lv["cube"], axis=2),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", range(10))
def test_primitive_gradients(name, seed):
    rng = np.random.default_rng(seed)
    inputs = {
        "a": away_from_kink(rng.normal(size=(4, 4))),
        "b": away_from_kink(rng.normal(size=(4, 4))),
        "row": rng.normal(size=(1, 4)),
        "col": rng.normal(size=(4, 1)),
        "m1": rng.normal(size=(3, 4)),
        "m2": rng.normal(size=(4, 2)),
        "bm": rng.normal(size=(2, 3, 4)),
        "cube": rng.normal(size=(3, 4, 4)),
    }
    build = PRIMITIVES[name]
    needed = {}
    for key, value in inputs.items():
        probe = dict(inputs)
        try:
            build({k: ad.leaf(v, k) for k, v in probe.items()})
        except Exception:
            raise
        needed[key] = value
    check_gradients(build, needed)


def test_gradient_linearity():
    # gradient of a sum of graphs equals the sum of the gradients
    rng = np.random.default_rng(42)
    for _ in range(5):
        x = rng.normal(size=(3, 3))
        w1 = rng.normal(size=(3, 3))
        w2 = rng.normal(size=(3, 3))

        def g1(v):
            return ad.reduce_sum(ad.tanh(ad.matmul(v, ad.constant(w1))))

        def g2(v):
            return ad.reduce_sum(ad.sigmoid(ad.matmul(ad.constant(w2), v)))

        leaf_a = ad.leaf(x, "x")
        grad_sum = ad.backprop(ad.add(g1(leaf_a), g2(leaf_a)), 1.0, leaves=[leaf_a])["x"]
        leaf_b = ad.leaf(x, "x")
        grad_1 = ad.backprop(g1(leaf_b), 1.0, leaves=[leaf_b])["x"]
        leaf_c = ad.leaf(x, "x")
        grad_2 = ad.backprop(g2(leaf_c), 1.0, leaves=[leaf_c])["x"]
        assert np.allclose(grad_sum, grad_1 + grad_2, rtol=1e-12, atol=1e-12)


def test_softmax_rows_are_distributions():
    rng = np.random.default_rng(0)
    y = ad.softmax(ad.constant(rng.normal(size=(5, 7)) * 30), axis=-1).data
    assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(y >= 0)


def test_softmax_stable_for_large_logits():
    y = ad.softmax(ad.constant([1e4, 0.0, -1e4]), axis=-1).data
    assert np.isfinite(y).all()


# -- purity, graph surface, errors -----------------------------------------


def test_evaluate_is_pure():
    rng = np.random.default_rng(1)
    bindings = {"x": rng.normal(size=(3, 3)), "w": rng.normal(size=(3, 2))}

    def build(lv):
        return ad.softmax(ad.matmul(ad.relu(lv["x"]), lv["w"]), axis=0)

    graph = ExprGraph(build)
    first = graph.evaluate(bindings)["out"]
    second = graph.evaluate(bindings)["out"]
    assert first.tobytes() == second.tobytes()


def test_expr_graph_backward_and_unused_leaf():
    def build(lv):
        return ad.reduce_sum(ad.mul(lv["x"], lv["x"]))

    graph = ExprGraph(build)
    graph.evaluate({"x": np.array([3.0]), "unused": np.array([1.0, 2.0])})
    grads = graph.backward(1.0)
    assert np.allclose(grads["x"], [6.0])
    assert np.array_equal(grads["unused"], np.zeros(2))


def test_backward_before_evaluate_raises():
    graph = ExprGraph(lambda lv: lv["x"])
    with pytest.raises(GraphStateError):
        graph.backward(1.0)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        ad.add(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 5))))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 2))))
    with pytest.raises(ShapeError):
        ad.matmul(ad.constant(np.zeros(3)), ad.constant(np.zeros((3, 2))))


def test_nonfinite_result_raises_numeric_error():
    big = ad.constant(np.array([1e308]))
    with np.errstate(over="ignore"), pytest.raises(NumericError):
        ad.mul(big, big)


def test_nonfinite_input_rejected():
    with pytest.raises(NumericError):
        ad.constant(np.array([np.nan]))


def test_seed_shape_checked():
    x = ad.leaf(np.zeros((2, 2)), "x")
    y = ad.relu(x)
    with pytest.raises(ShapeError):
        ad.backprop(y, np.ones(3), leaves=[x])
