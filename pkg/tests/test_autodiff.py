"""Reverse-mode engine tests.

Closed-form gradients for the composite cases are derived by hand in the
comments and computed with plain numpy expressions, independent of the tape
machinery under test.
"""

import numpy as np
import pytest

from privleak.autodiff import (AdamState, Tape, adam_step, affine, backward, dot,
                               grad_check, relu, softmax, sum_squares)
from privleak.errors import ContractError, DimensionError, NumericError
from privleak.losses import cross_entropy


def test_affine_forward_value():
    tape = Tape()
    x = tape.constant([[1.0, 2.0], [3.0, 4.0]])
    w = tape.parameter([[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]])
    b = tape.parameter([0.5, -0.5, 0.0])
    out = affine(x, w, b)
    assert (out.data == np.array([[21.5, 23.5, 27.0], [47.5, 53.5, 61.0]])).all()


def test_affine_backward_hand_values():
    # loss = sum((x @ w + b)^2); dL/dw = 2 x^T y, dL/db = 2 col_sum(y)
    tape = Tape()
    xv = np.array([[1.0, -2.0], [0.5, 3.0]])
    wv = np.array([[2.0, 0.0], [1.0, -1.0]])
    bv = np.array([0.25, 1.0])
    x = tape.constant(xv)
    w = tape.parameter(wv)
    b = tape.parameter(bv)
    y = affine(x, w, b)
    loss = sum_squares(y)
    gw, gb = backward(tape, loss)
    yv = xv @ wv + bv
    assert np.allclose(gw, 2.0 * xv.T @ yv, rtol=0, atol=1e-14)
    assert np.allclose(gb, 2.0 * yv.sum(axis=0), rtol=0, atol=1e-14)


def test_relu_zero_subgradient():
    tape = Tape()
    x = tape.parameter([[-1.0, 0.0, 2.0]])
    loss = sum_squares(relu(x))
    (gx,) = backward(tape, loss)
    assert (gx == np.array([[0.0, 0.0, 4.0]])).all()


def test_softmax_forward_and_backward():
    tape = Tape()
    z = tape.parameter([[np.log(1.0), np.log(2.0), np.log(5.0)]])
    p = softmax(z)
    assert np.allclose(p.data, [[1.0 / 8, 2.0 / 8, 5.0 / 8]], rtol=1e-14, atol=0)
    # loss = p[0]; dL/dz = p0 * (e0 - p)
    loss = dot(p, tape.constant([[1.0, 0.0, 0.0]]))
    (gz,) = backward(tape, loss)
    p0 = 1.0 / 8
    expected = p0 * (np.array([1.0, 0.0, 0.0]) - np.array([1, 2, 5]) / 8.0)
    assert np.allclose(gz, [expected], rtol=1e-12, atol=1e-16)


def test_dot_and_sum_squares_scalars():
    tape = Tape()
    a = tape.parameter([[1.0, 2.0], [3.0, 4.0]])
    b = tape.constant([[10.0, 20.0], [30.0, 40.0]])
    s = dot(a, b)
    assert s.data.shape == ()
    assert float(s.data) == 300.0
    (ga,) = backward(tape, s)
    assert (ga == b.data).all()


def test_unused_parameter_gets_exact_zeros():
    tape = Tape()
    used = tape.parameter([[1.0, 2.0]])
    unused = tape.parameter(np.ones((3, 3)))
    loss = sum_squares(used)
    g_used, g_unused = backward(tape, loss)
    assert (g_used == np.array([[2.0, 4.0]])).all()
    assert g_unused.shape == (3, 3)
    assert (g_unused == 0.0).all()


def test_gradients_accumulate_across_reuse():
    # two branches read the same leaf; contributions must add:
    # loss = 0.5*sum_squares(x) + 0.5*sum_squares(x), dL/dx = 2x
    from privleak.losses import combined_loss

    tape = Tape()
    x = tape.parameter([[3.0]])
    loss = combined_loss(sum_squares(x), sum_squares(x), 0.5)
    (gx,) = backward(tape, loss)
    assert (gx == np.array([[6.0]])).all()


def test_backward_is_single_shot():
    tape = Tape()
    x = tape.parameter([[1.0, 2.0]])
    loss = sum_squares(x)
    backward(tape, loss)
    with pytest.raises(ContractError):
        backward(tape, loss)
    with pytest.raises(ContractError):
        sum_squares(x)


def test_backward_requires_scalar_and_same_tape():
    tape = Tape()
    x = tape.parameter([[1.0, 2.0]])
    y = affine(x, tape.constant(np.eye(2)), tape.constant([0.0, 0.0]))
    with pytest.raises(ContractError):
        backward(tape, y)
    other = Tape()
    z = other.parameter([[1.0]])
    with pytest.raises(ContractError):
        dot(x, z)
    loss = sum_squares(z)
    with pytest.raises(ContractError):
        backward(tape, loss)


def test_shape_validation():
    tape = Tape()
    x = tape.constant([[1.0, 2.0]])
    w = tape.parameter([[1.0], [2.0], [3.0]])
    b = tape.parameter([0.0])
    with pytest.raises(DimensionError):
        affine(x, w, b)
    with pytest.raises(DimensionError):
        dot(x, tape.constant([[1.0, 2.0, 3.0]]))


def test_non_finite_forward_raises():
    tape = Tape()
    x = tape.parameter([[1e308, 1e308]])
    w = tape.constant([[2.0], [2.0]])
    b = tape.constant([0.0])
    with pytest.raises(NumericError):
        affine(x, w, b)
    with pytest.raises(NumericError):
        tape2 = Tape()
        tape2.constant([[np.nan]])


def test_trace_records_op_names_in_order():
    tape = Tape()
    x = tape.constant(np.ones((2, 3)))
    w = tape.parameter(np.ones((3, 4)))
    b = tape.parameter(np.zeros(4))
    h = relu(affine(x, w, b))
    softmax(h)
    assert tape.trace == ["affine", "relu", "softmax"]


def test_grad_check_on_two_layer_network():
    def make_loss(tape, params):
        w0, b0, w1, b1 = params
        x = tape.constant([[0.2, -0.1, 0.4], [0.5, 0.3, -0.2]])
        h = relu(affine(x, w0, b0))
        z = affine(h, w1, b1)
        return cross_entropy(z, np.array([0, 2]))

    rng = np.random.default_rng(3)
    arrays = [rng.standard_normal((3, 5)), rng.standard_normal(5),
              rng.standard_normal((5, 3)), rng.standard_normal(3)]
    assert grad_check(make_loss, arrays) < 1e-6


def test_grad_check_catches_a_wrong_gradient():
    # a deliberately broken loss: forward x^2 but backward reports 3x
    from privleak.autodiff import Tensor, _accumulate

    def bad_square(x):
        out = Tensor(np.asarray(np.sum(x.data * x.data)), x.tape)

        def backward_fn():
            if out.grad is None:
                return
            _accumulate(x, 3.0 * x.data * float(out.grad))

        x.tape.record("bad_square", backward_fn)
        return out

    def make_loss(tape, params):
        return bad_square(params[0])

    assert grad_check(make_loss, [np.array([1.0, -2.0])]) > 0.1


def test_adam_state_and_two_steps():
    p = np.array([1.0, -1.0])
    state = AdamState([p], lr=0.1)
    g1 = np.array([0.5, -0.25])
    adam_step([p], [g1], state)
    assert state.t == 1
    # replicate the update expression independently
    m = 0.1 * g1
    v = 0.001 * g1 * g1
    expect = np.array([1.0, -1.0]) - 0.1 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    assert (p == expect).all()
    g2 = np.array([-0.5, 0.25])
    adam_step([p], [g2], state)
    assert state.t == 2


def test_adam_rejects_mismatched_shapes():
    p = np.zeros(3)
    state = AdamState([p])
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(4)], state)
    with pytest.raises(ContractError):
        adam_step([p, np.zeros(2)], [np.zeros(3)], state)


def test_adam_is_deterministic():
    def run():
        rng = np.random.default_rng(0)
        p = rng.standard_normal(64)
        state = AdamState([p], lr=0.01)
        for _ in range(20):
            g = rng.standard_normal(64)
            adam_step([p], [g], state)
        return p

    assert (run() == run()).all()


def test_backward_returns_grads_in_registration_order():
    tape = Tape()
    b = tape.parameter([1.0, 1.0])
    w = tape.parameter(np.full((2, 2), 2.0))
    x = tape.constant([[1.0, 1.0]])
    loss = sum_squares(affine(x, w, b))
    grads = backward(tape, loss)
    assert grads[0].shape == (2,)
    assert grads[1].shape == (2, 2)
