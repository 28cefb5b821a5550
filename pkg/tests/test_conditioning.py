"""Conditioning mechanisms: identities, CLN semantics, gradients."""

import numpy as np
import pytest

import serhead.autodiff as ad
import serhead.conditioning as cond
from serhead.autodiff import Tensor
from serhead.errors import ContractError, DimensionError

FD_TOL = 1e-4
Q = 12


class _StubProjector:
    """Stands in for a TextProjector with a fixed output."""

    def __init__(self, out):
        self.out = out

    def apply(self, text, rng=None, training=False):
        return self.out


def _cln_params(rng):
    return cond.CLNParams(Q, Q, rng)


class TestGenderConditioning:
    def test_sum_identity(self):
        x = Tensor(np.arange(Q, dtype=float))
        out = cond.gender_condition(x, Tensor(np.zeros(Q)), "sum")
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_multiplication_identity(self):
        x = Tensor(np.arange(Q, dtype=float) - 3)
        out = cond.gender_condition(x, Tensor(np.ones(Q)), "multiplication")
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_sum_half_identity(self):
        x = Tensor(np.linspace(-1, 1, Q))
        out = cond.gender_condition(x, x, "sum_half")
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_none_passthrough(self):
        x = Tensor(np.ones(Q))
        assert cond.gender_condition(x, Tensor(np.zeros(Q)), "none") is x

    def test_cln_on_constant_vector_returns_shift(self):
        # var(x) = 0, so the normalized vector is exactly 0 and only g(e) remains
        rng = np.random.default_rng(0)
        params = _cln_params(rng)
        x = Tensor(np.full(Q, 4.2))
        e = Tensor(rng.normal(size=Q))
        out = cond.gender_condition(x, e, "cln", cln_params=params)
        expected = e.data @ params.shift_weight.data + params.shift_bias.data
        np.testing.assert_allclose(out.data, expected, atol=1e-9)

    def test_cln_mean_shift_invariance(self):
        rng = np.random.default_rng(1)
        params = _cln_params(rng)
        x = rng.normal(size=Q)
        e = Tensor(rng.normal(size=Q))
        a = cond.gender_condition(Tensor(x), e, "cln", cln_params=params).data
        b = cond.gender_condition(Tensor(x + 7.5), e, "cln", cln_params=params).data
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_stack_linear_shape_and_gradient(self):
        rng = np.random.default_rng(2)
        params = cond.StackLinearParams(Q, rng)
        x = Tensor(rng.normal(size=Q))
        e = Tensor(rng.normal(size=Q))
        out = cond.gender_condition(x, e, "stack_linear", stack_params=params)
        assert out.shape == (Q,)
        probe = Tensor(rng.normal(size=Q))
        loss = lambda: ad.tensor_sum(ad.mul(
            cond.gender_condition(x, e, "stack_linear", stack_params=params), probe))
        assert ad.finite_diff_check(loss, [params.weight, params.bias]) < FD_TOL

    def test_every_mode_preserves_length(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=Q))
        e = Tensor(rng.normal(size=Q))
        stack = cond.StackLinearParams(Q, rng)
        params = _cln_params(rng)
        for mode in cond.GENDER_MODES:
            out = cond.gender_condition(x, e, mode, stack_params=stack, cln_params=params)
            assert out.shape == (Q,), mode

    def test_length_mismatch_and_unknown_mode(self):
        with pytest.raises(DimensionError):
            cond.gender_condition(Tensor(np.ones(3)), Tensor(np.ones(4)), "sum")
        with pytest.raises(ContractError):
            cond.gender_condition(Tensor(np.ones(3)), Tensor(np.ones(3)), "banana")


class TestTextConditioning:
    def test_sum_third_identity(self):
        x = Tensor(np.linspace(0.5, 2.0, Q))
        stub = _StubProjector(x)
        out = cond.text_condition(x, x, Tensor(np.zeros(384)), stub, "sum_third")
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_multiplication_identity(self):
        x = Tensor(np.linspace(-2.0, 2.0, Q))
        ones = Tensor(np.ones(Q))
        out = cond.text_condition(x, ones, Tensor(np.zeros(384)),
                                  _StubProjector(ones), "multiplication")
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_cln_route_output_length(self):
        rng = np.random.default_rng(4)
        proj = cond.TextProjector(384, Q, rng, dropout_rate=0.0)
        params = _cln_params(rng)
        rw = Tensor(cond.glorot_uniform(rng, 2 * Q, Q), requires_grad=True)
        rb = Tensor(np.zeros(Q), requires_grad=True)
        out = cond.text_condition(Tensor(rng.normal(size=Q)), Tensor(rng.normal(size=Q)),
                                  Tensor(rng.normal(size=384)), proj, "cln",
                                  reduce_weight=rw, reduce_bias=rb, cln_params=params)
        assert out.shape == (Q,)

    def test_eq6_gradcheck_end_to_end(self):
        """Gradient of the three-way average path, dropout off."""
        rng = np.random.default_rng(5)
        proj = cond.TextProjector(384, Q, rng, dropout_rate=0.1)
        gender = cond.GenderEmbeddingTable(Q, rng)
        x = Tensor(rng.normal(size=Q), requires_grad=True)
        text = Tensor(rng.normal(size=384))
        probe = Tensor(rng.normal(size=Q))

        def loss():
            e = gender.lookup(1)
            out = cond.text_condition(x, e, text, proj, "sum_third", training=False)
            return ad.tensor_sum(ad.mul(out, probe))

        params = [x, gender.table, proj.weight, proj.bias, proj.ln_gain, proj.ln_bias]
        assert ad.finite_diff_check(loss, params) < FD_TOL

    def test_dropout_active_only_in_training(self):
        rng = np.random.default_rng(6)
        proj = cond.TextProjector(384, Q, rng, dropout_rate=0.5)
        text = Tensor(rng.normal(size=384))
        eval_a = proj.apply(text, training=False).data
        eval_b = proj.apply(text, training=False).data
        np.testing.assert_array_equal(eval_a, eval_b)
        train_out = proj.apply(text, rng=np.random.default_rng(0), training=True).data
        assert (train_out == 0).sum() > (eval_a == 0).sum()


class TestGenderEmbeddingTable:
    def test_lookup_total_over_01(self):
        rng = np.random.default_rng(7)
        table = cond.GenderEmbeddingTable(Q, rng)
        assert table.lookup(0).shape == (Q,)
        assert table.lookup(1).shape == (Q,)
        with pytest.raises(ContractError):
            table.lookup(2)

    def test_init_is_small(self):
        table = cond.GenderEmbeddingTable(Q, np.random.default_rng(8))
        assert np.abs(table.table.data).max() <= 0.1

    def test_lookup_gradient_scatters(self):
        table = cond.GenderEmbeddingTable(Q, np.random.default_rng(9))
        ad.backward(ad.tensor_sum(table.lookup(1)))
        np.testing.assert_array_equal(table.table.grad[0], np.zeros(Q))
        np.testing.assert_array_equal(table.table.grad[1], np.ones(Q))


class TestRandomizedIdentities:
    def test_identities_hold_for_random_vectors(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            x = Tensor(rng.normal(size=Q))
            np.testing.assert_allclose(
                cond.gender_condition(x, Tensor(np.zeros(Q)), "sum").data, x.data, atol=1e-6)
            np.testing.assert_allclose(
                cond.gender_condition(x, Tensor(np.ones(Q)), "multiplication").data,
                x.data, atol=1e-6)
            np.testing.assert_allclose(
                cond.gender_condition(x, x, "sum_half").data, x.data, atol=1e-6)
            stub = _StubProjector(x)
            np.testing.assert_allclose(
                cond.text_condition(x, x, Tensor(np.zeros(384)), stub, "sum_third").data,
                x.data, atol=1e-6)
