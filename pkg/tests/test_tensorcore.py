import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import fd_max_rel_error
from serenade import tensorcore as tc


def test_sigmoid_symmetry_point():
    assert tc.sigmoid(np.zeros((1, 1)))[0, 0] == 0.5


def test_sigmoid_saturates():
    assert abs(tc.sigmoid(np.array([[30.0]]))[0, 0] - 1.0) < 1e-12


def test_sigmoid_closed_form():
    assert tc.sigmoid(np.array([[math.log(3)]]))[0, 0] == pytest.approx(0.75)


def test_softmax_uniform():
    np.testing.assert_allclose(tc.softmax(np.zeros(3)), np.full(3, 1 / 3))


def test_softmax_closed_form():
    np.testing.assert_allclose(tc.softmax(np.array([0.0, math.log(2)])),
                               [1 / 3, 2 / 3])


@given(st.floats(-30, 30), st.floats(-10, 10))
def test_softmax_shift_invariance(c, k):
    base = tc.softmax(np.array([0.0, k, 2 * k]))
    shifted = tc.softmax(np.array([c, c + k, c + 2 * k]))
    np.testing.assert_allclose(shifted, base, atol=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
def test_softmax_sums_to_one(logits):
    p = tc.softmax(np.array(logits))
    assert abs(p.sum() - 1.0) <= 1e-9
    assert (p > 0).all()


def test_cross_entropy_uniform_eleven_classes():
    assert tc.cross_entropy(np.zeros(11), 4) == pytest.approx(math.log(11))


def test_cross_entropy_confident_correct():
    logits = np.zeros(5)
    logits[2] = 30.0
    assert tc.cross_entropy(logits, 2) < 1e-10


def test_cross_entropy_closed_form():
    assert tc.cross_entropy(np.array([0.0, math.log(2)]), 0) == pytest.approx(math.log(3))


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        tc.cross_entropy(np.zeros(3), 3)


def test_backward_square():
    x = tc.parameter(np.array([[3.0]]))
    tc.backward(tc.matmul(x, x))
    assert x.grad[0, 0] == pytest.approx(6.0)


def test_backward_constant_function_zero_gradient():
    x = tc.parameter(np.random.default_rng(0).normal(size=(3, 2)))
    tc.backward(tc.mean(tc.scale(x, 0.0)))
    np.testing.assert_array_equal(x.grad, np.zeros((3, 2)))


def test_backward_requires_scalar_root():
    x = tc.parameter(np.ones((2, 2)))
    with pytest.raises(ValueError):
        tc.backward(tc.sigmoid(x))


def test_backward_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(42)
    leaves = {
        "w1": rng.normal(size=(4, 5)),
        "b1": rng.normal(size=(1, 5)),
        "w2": rng.normal(size=(5, 3)),
        "b2": rng.normal(size=(1, 3)),
    }
    x = rng.normal(size=(6, 4))
    targets = rng.integers(0, 3, size=6)

    def build(nodes):
        h = tc.sigmoid(tc.add_bias(tc.matmul(tc.constant(x), nodes["w1"]),
                                   nodes["b1"]))
        z = tc.add_bias(tc.matmul(h, nodes["w2"]), nodes["b2"])
        return tc.mean(tc.softmax_xent(z, targets))

    assert fd_max_rel_error(build, leaves) < 1e-4


def test_backward_deterministic():
    rng = np.random.default_rng(7)
    x_val = rng.normal(size=(3, 4))
    w_val = rng.normal(size=(4, 2))

    def run():
        x = tc.parameter(x_val)
        w = tc.parameter(w_val)
        tc.backward(tc.mean(tc.relu(tc.matmul(x, w))))
        return x.grad.copy(), w.grad.copy()

    (gx1, gw1), (gx2, gw2) = run(), run()
    assert np.array_equal(gx1, gx2) and np.array_equal(gw1, gw2)


@pytest.mark.parametrize("name", [
    "matmul", "matmul_t", "add", "add_bias", "sigmoid", "relu", "concat",
    "slice", "unfold", "mean", "scale", "transpose", "softmax_xent",
])
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2 ** 32)
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(3, 5))
    targets = rng.integers(0, 3, size=4)

    builders = {
        "matmul": (lambda n: tc.mean(tc.matmul(n["a"], n["b"])),
                   {"a": a, "b": b}),
        "matmul_t": (lambda n: tc.mean(tc.matmul_t(n["a"], n["c"])),
                     {"a": a, "c": rng.normal(size=(5, 3))}),
        "add": (lambda n: tc.mean(tc.sigmoid(tc.add(n["a"], n["a2"]))),
                {"a": a, "a2": rng.normal(size=(4, 3))}),
        "add_bias": (lambda n: tc.mean(tc.sigmoid(tc.add_bias(n["a"], n["bias"]))),
                     {"a": a, "bias": rng.normal(size=(1, 3))}),
        "sigmoid": (lambda n: tc.mean(tc.sigmoid(n["a"])), {"a": a}),
        "relu": (lambda n: tc.mean(tc.relu(n["a"])), {"a": a + 0.2}),
        "concat": (lambda n: tc.mean(tc.sigmoid(tc.concat_cols([n["a"], n["a2"]]))),
                   {"a": a, "a2": rng.normal(size=(4, 2))}),
        "slice": (lambda n: tc.mean(tc.sigmoid(tc.slice_cols(n["a"], 1, 3))),
                  {"a": a}),
        "unfold": (lambda n: tc.mean(tc.sigmoid(tc.unfold_rows(n["a"], 3))),
                   {"a": a}),
        "mean": (lambda n: tc.mean(n["a"]), {"a": a}),
        "scale": (lambda n: tc.mean(tc.scale(n["a"], -1.7)), {"a": a}),
        "transpose": (lambda n: tc.mean(tc.sigmoid(tc.transpose(n["a"]))),
                      {"a": a}),
        "softmax_xent": (lambda n: tc.mean(tc.softmax_xent(n["a"], targets)),
                         {"a": a}),
    }
    build, leaves = builders[name]
    assert fd_max_rel_error(build, leaves) < 1e-4


def test_shape_mismatches_are_hard_errors():
    a = tc.parameter(np.ones((2, 3)))
    b = tc.parameter(np.ones((2, 3)))
    with pytest.raises(tc.ShapeError):
        tc.matmul(a, b)
    with pytest.raises(tc.ShapeError):
        tc.add(a, tc.parameter(np.ones((3, 2))))
    with pytest.raises(tc.ShapeError):
        tc.add_bias(a, tc.parameter(np.ones((1, 4))))
    with pytest.raises(tc.ShapeError):
        tc.unfold_rows(a, 2)
    with pytest.raises(tc.ShapeError):
        tc.slice_cols(a, 2, 5)


def test_non_finite_leaf_rejected():
    with pytest.raises(ValueError):
        tc.parameter(np.array([[np.inf]]))
    with pytest.raises(tc.ShapeError):
        tc.parameter(np.ones(3))
