import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from interpretabnet import numeric as nx
from interpretabnet.errors import NumericError, ShapeError
from interpretabnet.numeric import Parameter, Tensor


def test_matmul_identity():
    out = nx.matmul(Tensor(np.eye(2)), Tensor([[3, 4], [5, 6]]))
    np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])


def test_matmul_hand_value():
    assert (Tensor([[1, 2]]) @ Tensor([[3], [4]])).item() == 11.0


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 2)))


def test_tensors_are_two_dimensional():
    assert Tensor(5.0).shape == (1, 1)
    assert Tensor([1.0, 2.0, 3.0]).shape == (1, 3)


def test_grad_of_sum_is_ones():
    w = Parameter(np.arange(6.0).reshape(2, 3))
    _, (g,) = nx.grad_of(lambda: w.sum(), [w])
    np.testing.assert_array_equal(g, np.ones((2, 3)))


def test_grad_of_square():
    w = Parameter([[3.0]])
    value, (g,) = nx.grad_of(lambda: (w * w).sum(), [w])
    assert value == 9.0
    assert g[0, 0] == 6.0


def test_grad_accumulates_until_zeroed():
    w = Parameter([[1.0, -2.0]])
    loss = lambda: (w * w).sum()
    nx.grad_of(loss, [w])
    nx.grad_of(loss, [w])
    np.testing.assert_array_equal(w.grad, [[4.0, -8.0]])
    nx.zero_grads([w])
    assert not w.grad.any()
    _, (g,) = nx.grad_of(loss, [w])
    np.testing.assert_array_equal(g, [[2.0, -4.0]])


def test_zero_grads_then_grad_matches_fresh_state():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(3, 4))
    x = Tensor(rng.normal(size=(5, 3)))
    w1, w2 = Parameter(data.copy()), Parameter(data.copy())
    loss1 = lambda: nx.tsum(nx.silu(x @ w1))
    loss2 = lambda: nx.tsum(nx.silu(x @ w2))
    nx.grad_of(loss1, [w1])
    nx.zero_grads([w1])
    nx.grad_of(loss1, [w1])
    nx.grad_of(loss2, [w2])
    np.testing.assert_array_equal(w1.grad, w2.grad)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_non_finite_loss_names_the_op():
    w = Parameter([[0.0]])
    with pytest.raises(NumericError) as info:
        nx.grad_of(lambda: nx.log(w).sum(), [w])
    assert info.value.op == "log"


def test_finite_diff_square():
    w = Parameter([[1.0]])
    assert abs(nx.finite_diff(lambda: (w * w).sum(), w, (0, 0)) - 2.0) < 1e-8


def test_finite_diff_constant_is_zero():
    w = Parameter([[1.7]])
    assert nx.finite_diff(lambda: 4.2, w, (0, 0)) == 0.0


def test_finite_diff_abs_at_kink_is_zero():
    w = Parameter([[0.0]])
    absval = lambda: nx.relu(w).sum() + nx.relu(-w).sum()
    assert nx.finite_diff(absval, w, (0, 0)) == 0.0


def test_finite_diff_restores_value_and_rejects_bad_step():
    w = Parameter([[0.3]])
    nx.finite_diff(lambda: (w * w).sum(), w, (0, 0))
    assert w.data[0, 0] == 0.3
    with pytest.raises(ValueError):
        nx.finite_diff(lambda: w.sum(), w, (0, 0), h=0)


@pytest.mark.parametrize("op", [
    lambda a, b: nx.tsum(a * b + a),
    lambda a, b: nx.tsum(nx.exp(a - b)),
    lambda a, b: nx.tmean(nx.square(a) * nx.sigmoid(b)),
    lambda a, b: nx.tsum(nx.elu(a) * nx.prelu(b, Tensor([[0.25]]))),
    lambda a, b: nx.tsum(nx.concat_rows([a, b]) * nx.concat_rows([b, a])),
    lambda a, b: nx.tsum(nx.take_rows(a, [2, 0]) @ nx.transpose(nx.take_cols(b, [1, 0, 2]))),
    lambda a, b: nx.tsum(nx.log(nx.softmax_rows(a) + 1.0) * b),
])
def test_elementary_ops_pass_gradient_check(op):
    rng = np.random.default_rng(0)
    a = Parameter(rng.normal(size=(3, 3)))
    b = Parameter(rng.normal(size=(3, 3)))
    assert nx.gradient_check(lambda: op(a, b), [a, b]) < 1e-6


def test_broadcast_gradients_reduce_to_parameter_shape():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(4, 3)))
    row = Parameter(rng.normal(size=(1, 3)))
    scalar = Parameter([[0.7]])
    loss = lambda: nx.tsum(nx.square(x * row + scalar))
    _, (g_row, g_scalar) = nx.grad_of(loss, [row, scalar])
    assert g_row.shape == (1, 3) and g_scalar.shape == (1, 1)
    assert nx.gradient_check(loss, [row, scalar]) < 1e-6


def test_linear_matches_matmul_form():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=(4, 1))
    out = nx.linear(Tensor(x), Parameter(w), Parameter(b))
    np.testing.assert_allclose(out.data, x @ w.T + b.T, rtol=0, atol=1e-14)


def test_chunk_bounds_near_equal():
    assert nx.chunk_bounds(10, 4) == [(0, 3), (3, 7), (7, 10)]
    assert nx.chunk_bounds(4, 8) == [(0, 4)]
    assert nx.chunk_bounds(6, None) == [(0, 6)]


def test_cross_entropy_floor_keeps_value_finite():
    loss = nx.cross_entropy(Tensor([[0.0, 1.0]]), [0])
    assert np.isfinite(loss.item()) and loss.item() == pytest.approx(-np.log(1e-12))


_unit = arrays(np.float64, (5, 5), elements=st.floats(-1, 1))


@settings(max_examples=50, deadline=None)
@given(_unit, _unit, _unit)
def test_matmul_associative_with_identity(a, b, c):
    A, B, C = Tensor(a), Tensor(b), Tensor(c)
    I = Tensor(np.eye(5))
    np.testing.assert_allclose(((A @ B) @ C).data, (A @ (B @ C)).data, rtol=0, atol=1e-12)
    np.testing.assert_array_equal((A @ I).data, a)
