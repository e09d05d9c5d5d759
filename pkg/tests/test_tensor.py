import math

import numpy as np
import pytest

from sctnet import tensor as T
from sctnet.gradcheck import check_op, op_suite


def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(np.eye(2), m), m)
    assert np.array_equal(T.matmul(m, np.eye(2)), m)
    assert np.array_equal(T.matmul(m, np.array([[5.0], [6.0]])), [[17.0], [39.0]])


def test_matmul_shape_error():
    with pytest.raises(T.ShapeError):
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_examples():
    assert np.allclose(T.softmax(np.zeros(3)), [1 / 3] * 3)
    assert np.allclose(T.softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])
    assert np.allclose(T.softmax(np.array([0.0, math.log(3.0)])), [0.25, 0.75], atol=1e-15)


def test_softmax_rows_sum_to_one_for_large_inputs(rng):
    x = rng.uniform(-1e4, 1e4, size=(50, 7))
    s = T.softmax(x)
    assert np.all(np.isfinite(s))
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-6)


def test_layernorm_examples():
    assert np.array_equal(T.layernorm(np.full((1, 4), 7.0), np.ones(4), np.zeros(4)), np.zeros((1, 4)))
    out = T.layernorm(np.array([[1.0, 3.0]]), np.ones(2), np.zeros(2))
    # var = 1, so the eps correction is 1/sqrt(1 + 1e-5)
    assert np.allclose(out, [[-1.0, 1.0]], atol=1e-5)
    assert np.allclose(out, np.array([[-1.0, 1.0]]) / math.sqrt(1 + T.LN_EPS), atol=1e-15)
    x = np.random.default_rng(0).normal(size=(3, 5))
    assert np.array_equal(T.layernorm(x, np.zeros(5), np.full(5, 2.5)), np.full((3, 5), 2.5))


def test_conv2d_examples():
    x = np.random.default_rng(0).normal(size=(2, 5, 5))
    w = np.zeros((2, 2, 1, 1))
    w[0, 0] = w[1, 1] = 1.0
    assert np.array_equal(T.conv2d(x, w, np.zeros(2)), x)
    ones = T.conv2d(np.ones((1, 4, 4)), np.ones((1, 1, 3, 3)), np.zeros(1), pad=1)
    assert ones[0, 1, 1] == 9.0 and ones[0, 0, 0] == 4.0
    k = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
    assert np.array_equal(T.conv2d(np.array([[[1.0, 2.0], [3.0, 4.0]]]), k, np.zeros(1)), [[[5.0]]])


def test_conv2d_stride_shape():
    out = T.conv2d(np.ones((3, 9, 8)), np.ones((4, 3, 3, 3)), np.zeros(4), pad=1, stride=2)
    assert out.shape == (4, 5, 4)


def test_gelu_and_mlp():
    assert T.gelu(np.array([0.0]))[0] == 0.0
    assert abs(T.gelu(np.array([10.0]))[0] - 10.0) < 1e-12
    b2 = np.array([0.5, -1.0])
    out = T.mlp(np.ones((4, 3)), np.zeros((3, 12)), np.zeros(12), np.zeros((12, 2)), b2)
    assert np.array_equal(out, np.tile(b2, (4, 1)))


def test_sigmoid_is_stable():
    s = T.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.array_equal(s, [0.0, 0.5, 1.0])


def test_matmul_backward_identity_passes_upstream(rng):
    op = T.MatMul()
    op(rng.normal(size=(3, 3)), np.eye(3))
    g = rng.normal(size=(3, 3))
    da, _ = op.backward(g)
    assert np.allclose(da, g)


def test_softmax_backward_uniform_gives_zero():
    op = T.Softmax()
    op(np.zeros(4))
    assert np.allclose(op.backward(np.ones(4)), 0.0)


def test_backward_before_forward_raises():
    for op in (T.MatMul(), T.Softmax(), T.LayerNorm(), T.Gelu(), T.Conv2d()):
        with pytest.raises(T.UsageError):
            op.backward(np.ones(2))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_all_ops_match_finite_differences(seed):
    for r in op_suite(seed):
        assert r.ok(1e-4), (r.name, r.rel_error)


def test_check_op_detects_wrong_gradient(rng):
    class Broken(T.Gelu):
        def backward(self, grad):
            return 1.1 * super().backward(grad)

    r = check_op("broken", Broken, [rng.normal(size=(3, 4))], rng)
    assert not r.ok(1e-4)


def test_ops_are_deterministic(rng):
    x = rng.normal(size=(2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    assert np.array_equal(T.conv2d(x, w, b, pad=1), T.conv2d(x, w, b, pad=1))


def test_mac_counter_counts_tagged_matmuls():
    with T.MacCounter() as mc:
        T.matmul(np.ones((4, 3)), np.ones((3, 5)), "a")
        T.matmul(np.ones((2, 4, 3)), np.ones((3, 2)), "b")
        T.matmul(np.ones((2, 2)), np.ones((2, 2)))
    assert dict(mc.counts) == {"a": 60, "b": 48, "untagged": 8}
    assert mc.total == 116
