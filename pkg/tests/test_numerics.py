import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vec2vec.numerics import (
    DimensionError,
    LayerNorm,
    Linear,
    NumericalError,
    ResidualBlock,
    SiLU,
    central_difference,
    check_layer,
    finite_difference_check,
    layer_norm,
    linear,
    linear_backward,
    make_rng,
    mlp,
    silu,
    silu_backward,
    unit_norm,
    unit_norm_backward,
)


def test_silu_values():
    assert silu(np.array(0.0)) == 0.0
    assert silu(np.array(1.0)) == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-15)
    assert silu(np.array(1.0)) == pytest.approx(0.7310585786, abs=1e-9)
    assert silu_backward(np.array(0.0), np.array(1.0)) == pytest.approx(0.5)


def test_silu_lower_bound_and_monotone():
    grid = np.linspace(-20, 20, 200001)
    y = silu(grid)
    assert y.min() >= -0.279
    pos = y[grid >= 0]
    assert np.all(np.diff(pos) >= 0)


def test_silu_extreme_inputs_finite():
    x = np.array([-1e4, -800.0, 800.0, 1e4])
    assert np.all(np.isfinite(silu(x)))
    assert np.all(np.isfinite(silu_backward(x, np.ones_like(x))))


def test_layer_norm_examples():
    gamma, beta = np.ones((1, 3)), np.zeros((1, 3))
    out, _ = layer_norm(np.array([[3.0, 3.0, 3.0]]), gamma, beta)
    assert np.all(out == 0.0)
    out, _ = layer_norm(np.array([[1.0, -1.0]]), np.ones((1, 2)), np.zeros((1, 2)), eps=1e-12)
    np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-9)
    beta = np.array([[0.5, -2.0, 7.0]])
    out, _ = layer_norm(np.random.default_rng(0).standard_normal((4, 3)), np.zeros((1, 3)), beta)
    np.testing.assert_array_equal(out, np.repeat(beta, 4, axis=0))


@given(st.integers(2, 16), st.integers(1, 6), st.integers(0, 10_000))
def test_layer_norm_standardizes(width, rows, seed):
    x = make_rng(seed).standard_normal((rows, width)) * 3 + 1
    keep = x.var(axis=1) >= 1e-3
    out, _ = layer_norm(x, np.ones((1, width)), np.zeros((1, width)))
    assert np.all(np.abs(out[keep].mean(axis=1)) <= 1e-9)
    var = x.var(axis=1)
    # exact variance after the eps guard is var / (var + eps)
    np.testing.assert_allclose(out[keep].var(axis=1), (var / (var + 1e-5))[keep], atol=1e-12)
    assert np.all(np.abs(out[keep].var(axis=1) - 1) <= 1e-5 / 1e-3 + 1e-6)


def test_layer_norm_variance_tolerance_on_typical_rows():
    x = make_rng(3).standard_normal((50, 8))
    out, _ = layer_norm(x, np.ones((1, 8)), np.zeros((1, 8)))
    big = x.var(axis=1) >= 0.1
    assert np.all(np.abs(out[big].var(axis=1) - 1) <= 1e-4)


def test_linear_examples():
    x = np.array([[1.0, 2.0]])
    assert linear(x, np.array([[1.0], [1.0]]), np.array([[3.0]])).tolist() == [[6.0]]
    x = make_rng(0).standard_normal((3, 4))
    np.testing.assert_array_equal(linear(x, np.eye(4), np.zeros((1, 4))), x)
    with pytest.raises(DimensionError):
        linear(x, np.eye(3), np.zeros((1, 3)))


def test_linear_backward_formulas():
    rng = make_rng(1)
    x, W, up = rng.standard_normal((5, 3)), rng.standard_normal((3, 2)), rng.standard_normal((5, 2))
    dx, dW, db = linear_backward(x, W, up)
    np.testing.assert_allclose(dx, up @ W.T)
    np.testing.assert_allclose(dW, x.T @ up)
    np.testing.assert_allclose(db, up.sum(axis=0))


def test_linear_1x1_matches_finite_differences():
    W = np.array([[2.5]])

    def op(x):
        return float(linear(x, W, np.array([[0.3]]))[0, 0]), linear_backward(x, W, np.ones((1, 1)))[0]

    assert finite_difference_check(op, np.array([[0.7]]), eps=1e-4) < 1e-6


def test_finite_difference_check_examples():
    rng = make_rng(2)
    W = rng.standard_normal((4, 3))
    probe = rng.standard_normal((2, 3))

    def lin(x):
        return float(np.sum(linear(x, W, np.zeros((1, 3))) * probe)), probe @ W.T

    assert finite_difference_check(lin, rng.standard_normal((2, 4)), eps=1e-4) < 1e-6

    def s(x):
        return float(np.sum(silu(x))), silu_backward(x, np.ones_like(x))

    assert finite_difference_check(s, np.array([[2.0]]), eps=1e-5) < 1e-6


def test_finite_difference_check_rejects_nonfinite():
    with pytest.raises(NumericalError), np.errstate(divide="ignore"):
        finite_difference_check(lambda x: (float(np.log(x[0, 0])), 1 / x), np.array([[0.0]]))
    with pytest.raises(ValueError):
        finite_difference_check(lambda x: (0.0, x), np.zeros((1, 1)), eps=0)


def test_central_difference_restores_point():
    x = make_rng(0).standard_normal((3, 2))
    before = x.copy()
    central_difference(lambda: float(np.sum(x ** 3)), x, 1e-5)
    np.testing.assert_array_equal(x, before)


def test_translator_forward_gradient_at_8_dim_point():
    from vec2vec.translator import NetConfig, TranslatorNet

    net = TranslatorNet(NetConfig(d1=8, d2=8, latent_dim=8, adapter_width=8, backbone_blocks=2), seed=5)
    rng = make_rng(6)
    probe = rng.standard_normal((1, 8))

    def op(x):
        y, _, cache = net.raw_path(x, 1, 2)
        return float(np.sum(y * probe)), net.raw_path_backward(cache, 1, 2, probe)

    assert finite_difference_check(op, rng.standard_normal((1, 8)), eps=1e-5) < 1e-4


def test_residual_block_zero_params_is_identity():
    block = ResidualBlock("r", 5, rng=None)
    x = make_rng(0).standard_normal((4, 5))
    y, cache = block.forward(x)
    np.testing.assert_array_equal(y, x)
    np.testing.assert_array_equal(block.backward(cache, np.eye(5)[:4]), np.eye(5)[:4])


def test_residual_block_width_mismatch():
    with pytest.raises(DimensionError):
        ResidualBlock("r", 4, make_rng(0)).forward(np.zeros((2, 3)))


def test_residual_block_4_wide_gradient():
    errors = check_layer(ResidualBlock("r", 4, make_rng(0)), make_rng(1).standard_normal((3, 4)), make_rng(2), 1e-3)
    assert max(errors.values()) < 1e-4


@given(st.integers(3, 8), st.integers(3, 8), st.integers(1, 4), st.integers(0, 2), st.integers(0, 10**6))
def test_layers_match_finite_differences(d_in, d_out, batch, depth, seed):
    rng = make_rng(seed)
    x = rng.standard_normal((batch, d_in))
    ln = LayerNorm("ln", d_in)
    ln.gamma.value += 0.3 * rng.standard_normal(ln.gamma.value.shape)
    ln.beta.value += 0.3 * rng.standard_normal(ln.beta.value.shape)
    for layer in (Linear("l", d_in, d_out, rng), ln, SiLU(), ResidualBlock("r", d_in, rng),
                  mlp("m", d_in, d_out, d_out, depth, rng)):
        errors = check_layer(layer, x, rng, 1e-6)
        assert max(errors.values()) < 1e-4, (type(layer).__name__, errors)


def test_unit_norm_and_backward():
    x = np.array([[3.0, 4.0], [0.0, 0.0]])
    y, norms = unit_norm(x)
    np.testing.assert_allclose(y, [[0.6, 0.8], [0.0, 0.0]])
    rng = make_rng(0)
    probe = rng.standard_normal((3, 4))

    def op(z):
        yy, nn = unit_norm(z)
        return float(np.sum(yy * probe)), unit_norm_backward(yy, nn, probe)

    assert finite_difference_check(op, rng.standard_normal((3, 4))) < 1e-6


def test_rng_reproducible():
    assert np.array_equal(make_rng(42).standard_normal(10), make_rng(42).standard_normal(10))
    assert not np.array_equal(make_rng(42).standard_normal(10), make_rng(43).standard_normal(10))


def test_glorot_bounds():
    lin = Linear("l", 30, 20, make_rng(0))
    assert np.abs(lin.W.value).max() <= np.sqrt(6 / 50)
    assert np.all(lin.b.value == 0)
