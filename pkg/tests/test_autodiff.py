"""Core math: matmul, softmax, DFT, and the gradient-check contract."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalcast import autodiff as ad
from causalcast.autodiff import Tensor, dft, grad_check, softmax
from causalcast.errors import EvaluationError, ShapeError

from oracles import dft_definition_sum, matmul_triple_loop, softmax_extended_precision

RNG = np.random.default_rng(1234)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(ad.matmul(np.eye(2), a).value, a)

    def test_projector(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        v = np.array([[5.0], [7.0]])
        assert np.array_equal(ad.matmul(p, v).value, [[5.0], [0.0]])

    def test_matches_triple_loop_oracle(self):
        a = RNG.normal(size=(3, 4))
        b = RNG.normal(size=(4, 2))
        got = ad.matmul(a, b).value
        assert np.abs(got - matmul_triple_loop(a, b)).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            ad.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associativity(self):
        for _ in range(20):
            a = RNG.normal(size=(4, 3))
            b = RNG.normal(size=(3, 5))
            c = RNG.normal(size=(5, 2))
            left = ad.matmul(ad.matmul(a, b), c).value
            right = ad.matmul(a, ad.matmul(b, c)).value
            assert np.abs(left - right).max() / max(np.abs(left).max(), 1.0) < 1e-9


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(softmax([0.0, 0.0]).value, [[0.5, 0.5]], atol=1e-15)

    def test_stability_under_large_inputs(self):
        out = softmax([1000.0, 1000.0, 1000.0]).value
        assert np.all(np.isfinite(out))
        assert np.allclose(out, 1.0 / 3.0, atol=1e-15)

    def test_matches_extended_precision_oracle(self):
        v = [1.0, 2.0, 3.0]
        expected = softmax_extended_precision(v)
        assert np.abs(softmax(v).value.ravel() - expected).max() < 1e-15

    def test_shift_invariance(self):
        v = RNG.normal(size=6)
        a = softmax(v).value
        b = softmax(v + 17.25).value
        assert np.abs(a - b).max() < 1e-12

    def test_empty_vector(self):
        with pytest.raises(ShapeError):
            softmax(np.zeros((1, 0)))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_probability_vector_property(self, values):
        out = softmax(np.array(values)).value.ravel()
        assert np.all(out > 0)
        assert abs(out.sum() - 1.0) < 1e-12


class TestDft:
    def test_constant_sequence_is_pure_dc(self):
        c = 2.5
        bins = dft([c] * 7)
        assert abs(bins[0] - 7 * c) < 1e-12
        assert np.abs(bins[1:]).max() < 1e-10

    def test_nyquist_tone(self):
        bins = dft([1.0, -1.0, 1.0, -1.0])
        assert abs(bins[2] - 4.0) < 1e-12
        assert np.abs(bins[[0, 1, 3]]).max() < 1e-12

    def test_matches_definition_sum_oracle(self):
        x = RNG.normal(size=8)
        assert np.abs(dft(x) - dft_definition_sum(x)).max() < 1e-10

    def test_linearity(self):
        x = RNG.normal(size=9)
        y = RNG.normal(size=9)
        a, b = 1.7, -0.3
        lhs = dft(a * x + b * y)
        rhs = a * dft(x) + b * dft(y)
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_conjugate_symmetry(self):
        x = RNG.normal(size=10)
        bins = dft(x)
        for k in range(1, 10):
            assert abs(bins[k] - np.conj(bins[10 - k])) < 1e-10

    def test_empty(self):
        with pytest.raises(ShapeError):
            dft([])


class TestGradCheck:
    def test_quadratic(self):
        err = grad_check(lambda t: ad.sum_all(ad.mul(t, t)), np.array([3.0]), eps=1e-5)
        assert err < 1e-9

    def test_logistic_bce_single_param(self):
        x, y = 1.3, 1.0

        def f(theta):
            p = ad.sigmoid(theta * x)
            return -(y * ad.log(p) + (1.0 - y) * ad.log(1.0 - p))

        assert grad_check(f, np.array([0.4]), eps=1e-5) < 1e-6

    def test_nonfinite_value_raises(self):
        with pytest.raises(EvaluationError):
            grad_check(lambda t: ad.log(t), np.array([-1.0]), eps=1e-5)

    def test_non_scalar_output_rejected(self):
        with pytest.raises(ShapeError):
            grad_check(lambda t: ad.mul(t, 2.0), np.array([1.0, 2.0]), eps=1e-5)


def _random_for(shape):
    return RNG.normal(size=shape)


OP_CASES = [
    ("add", lambda t: ad.sum_all(ad.tanh(ad.add(t, _OTHER))), (3, 4)),
    ("add_broadcast_bias", lambda t: ad.sum_all(ad.tanh(ad.add(_WIDE, ad.slice_rows(t, 0, 1)))), (1, 4)),
    ("mul", lambda t: ad.sum_all(ad.tanh(ad.mul(t, _OTHER))), (3, 4)),
    ("matmul_left", lambda t: ad.sum_all(ad.tanh(ad.matmul(t, _RIGHT))), (3, 4)),
    ("matmul_right", lambda t: ad.sum_all(ad.tanh(ad.matmul(_LEFT, t))), (3, 4)),
    ("tanh", lambda t: ad.sum_all(ad.mul(ad.tanh(t), _OTHER)), (3, 4)),
    ("sigmoid", lambda t: ad.sum_all(ad.mul(ad.sigmoid(t), _OTHER)), (3, 4)),
    ("exp", lambda t: ad.sum_all(ad.mul(ad.exp(t), _OTHER)), (3, 4)),
    ("log", lambda t: ad.sum_all(ad.log(ad.add(ad.mul(t, t), 1.5))), (3, 4)),
    ("clamp_interior", lambda t: ad.sum_all(ad.mul(ad.clamp(t, -10.0, 10.0), _OTHER)), (3, 4)),
    ("complex_abs", lambda t: ad.sum_all(ad.complex_abs(t, _OTHER)), (3, 4)),
    ("softmax_rows", lambda t: ad.sum_all(ad.mul(ad.softmax_rows(t), _OTHER)), (3, 4)),
    ("transpose", lambda t: ad.sum_all(ad.mul(ad.transpose(t), ad.transpose(_OTHER))), (3, 4)),
    ("reshape", lambda t: ad.sum_all(ad.mul(ad.reshape(t, 2, 6), _OTHER_26)), (3, 4)),
    ("slice_rows", lambda t: ad.sum_all(ad.tanh(ad.slice_rows(t, 1, 3))), (4, 3)),
    ("slice_cols", lambda t: ad.sum_all(ad.tanh(ad.slice_cols(t, 0, 2))), (3, 4)),
    ("concat_rows", lambda t: ad.sum_all(ad.tanh(ad.concat_rows([t, ad.mul(t, 2.0)]))), (2, 3)),
    ("concat_cols", lambda t: ad.sum_all(ad.tanh(ad.concat_cols([t, ad.mul(t, -1.0)]))), (2, 3)),
    ("mean_rows", lambda t: ad.sum_all(ad.tanh(ad.mean_rows(t))), (4, 3)),
    (
        "stack_channel_rows",
        lambda t: ad.sum_all(ad.tanh(ad.stack_channel_rows([t, ad.mul(t, 0.5)]))),
        (2, 3),
    ),
    (
        "stack_token_rows",
        lambda t: ad.sum_all(ad.tanh(ad.stack_token_rows([t, ad.mul(t, 0.5)]))),
        (2, 3),
    ),
]

_OTHER = Tensor(np.random.default_rng(7).normal(size=(3, 4)))
_OTHER_26 = Tensor(np.random.default_rng(8).normal(size=(2, 6)))
_WIDE = Tensor(np.random.default_rng(9).normal(size=(5, 4)))
_LEFT = Tensor(np.random.default_rng(10).normal(size=(2, 3)))
_RIGHT = Tensor(np.random.default_rng(11).normal(size=(4, 2)))


@pytest.mark.parametrize("name,fn,shape", OP_CASES, ids=[c[0] for c in OP_CASES])
def test_every_op_passes_grad_check(name, fn, shape):
    theta = np.random.default_rng(sum(map(ord, name))).normal(size=shape)
    assert grad_check(fn, theta, eps=1e-5) < 1e-4


def test_complex_abs_zero_subgradient():
    re = Tensor(np.zeros((1, 3)), needs_grad=True)
    im = Tensor(np.zeros((1, 3)), needs_grad=True)
    out = ad.sum_all(ad.complex_abs(re, im))
    out.backward()
    assert np.all(re.grad == 0.0)
    assert np.all(im.grad == 0.0)


def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2)), needs_grad=True)
    with pytest.raises(ShapeError):
        ad.mul(t, 2.0).backward()


def test_gradient_accumulates_over_shared_subexpression():
    t = Tensor(np.array([[2.0]]), needs_grad=True)
    out = ad.add(ad.mul(t, t), ad.mul(t, 3.0))  # t^2 + 3t -> d/dt = 2t + 3 = 7
    ad.sum_all(out).backward()
    assert abs(t.grad[0, 0] - 7.0) < 1e-12


def test_constants_do_not_collect_gradients():
    const = Tensor(np.ones((2, 2)))
    t = Tensor(np.ones((2, 2)), needs_grad=True)
    ad.sum_all(ad.mul(const, t)).backward()
    assert const.grad is None
    assert t.grad is not None


def test_tensor_rejects_higher_rank():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 2, 2)))


def test_scalars_and_vectors_promote_to_2d():
    assert Tensor(3.0).shape == (1, 1)
    assert Tensor([1.0, 2.0, 3.0]).shape == (1, 3)
    assert math.isclose(Tensor(3.0).item(), 3.0)
