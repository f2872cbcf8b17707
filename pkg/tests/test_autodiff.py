import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import log_softmax as sp_log_softmax
from scipy.special import softmax as sp_softmax

from liam import autodiff as ad
from liam.autodiff import NonFiniteError, ShapeError, Tape, Tensor, ZeroNormError, finite_difference_check

finite = st.floats(-5, 5, allow_nan=False, width=64)


def leaf(x, dtype=np.float64):
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=True)


# --- forward values -----------------------------------------------------------


def test_softmax_of_one_zero_zero():
    out = ad.softmax(Tensor(np.array([[1.0, 0.0, 0.0]]))).data[0]
    np.testing.assert_allclose(out, [0.5761, 0.2119, 0.2119], atol=1e-3)


def test_normalize_three_four():
    np.testing.assert_allclose(ad.l2_normalize(Tensor(np.array([3.0, 4.0]))).data, [0.6, 0.8])


def test_mean_of_identical_rows_is_the_row():
    v = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(ad.mean(Tensor(np.stack([v, v])), axis=0).data, v)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=finite))
def test_softmax_rows_sum_to_one_and_match_scipy(x):
    out = ad.softmax(Tensor(x)).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(out, sp_softmax(x, axis=-1), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(ad.log_softmax(Tensor(x)).data, sp_log_softmax(x, axis=-1), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=finite))
def test_l2_normalize_unit_norm(x):
    x = x + np.where(np.linalg.norm(x, axis=1, keepdims=True) < 1e-3, 1.0, 0.0)
    out = ad.l2_normalize(Tensor(x)).data
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-6)


def test_l2_normalize_float32_unit_norm():
    x = np.random.default_rng(0).normal(size=(20, 64)).astype(np.float32)
    out = ad.l2_normalize(Tensor(x)).data
    assert out.dtype == np.float32
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-6)


def test_zero_vector_normalize_raises():
    with pytest.raises(ZeroNormError):
        ad.l2_normalize(Tensor(np.array([[1.0, 0.0], [0.0, 0.0]])))


def test_masked_softmax_blocked_entries_are_exact_zero():
    x = np.random.default_rng(1).normal(size=(3, 4))
    mask = np.array([[1, 0, 1, 0], [1, 1, 1, 1], [0, 0, 0, 1]], dtype=bool)
    out = ad.softmax(Tensor(x), mask).data
    assert np.all(out[~mask] == 0.0)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0)
    np.testing.assert_allclose(out[0, [0, 2]], sp_softmax(x[0, [0, 2]]))


def test_masked_softmax_needs_an_allowed_entry():
    with pytest.raises(ValueError):
        ad.softmax(Tensor(np.zeros((1, 2))), np.zeros((1, 2), dtype=bool))


def test_gelu_matches_erf_form():
    from scipy.special import erf

    x = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(ad.gelu(Tensor(x)).data, 0.5 * x * (1 + erf(x / np.sqrt(2))), atol=1e-12)


def test_layer_norm_against_direct_formula():
    rng = np.random.default_rng(2)
    x, g, b = rng.normal(size=(4, 6)), rng.normal(size=6), rng.normal(size=6)
    mu, var = x.mean(axis=1, keepdims=True), x.var(axis=1, keepdims=True)
    expected = (x - mu) / np.sqrt(var + 1e-5) * g + b
    np.testing.assert_allclose(ad.layer_norm(Tensor(x), Tensor(g), Tensor(b)).data, expected, atol=1e-12)


def test_conv1d_against_loop():
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 3, 4)), rng.normal(size=4)
    out = ad.conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    assert out.shape == (2, 4, 4)
    for n in range(2):
        for t in range(4):
            expected = b + sum(x[n, t + k] @ w[k] for k in range(2))
            np.testing.assert_allclose(out[n, t], expected, atol=1e-12)


def test_cross_entropy_and_kl_against_direct_formulas():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(3, 5))
    t = rng.dirichlet(np.ones(5), size=3)
    t[1] = [0, 0, 1, 0, 0]
    logp = sp_log_softmax(z, axis=-1)
    ce = -(t * logp).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(t > 0, t * (np.log(t) - logp), 0.0).sum(axis=1)
    np.testing.assert_allclose(ad.cross_entropy(Tensor(z), t).data, ce, atol=1e-12)
    np.testing.assert_allclose(ad.kl_div(Tensor(z), t).data, kl, atol=1e-12)


def test_cosine_similarity_matrix():
    a = np.array([[1.0, 0.0], [1.0, 1.0]])
    b = np.array([[2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(ad.cosine_similarity(Tensor(a), Tensor(b)).data,
                               [[1.0, 0.0], [np.sqrt(0.5), np.sqrt(0.5)]], atol=1e-12)


# --- errors -------------------------------------------------------------------


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(3, 2\)"):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_no_implicit_broadcasting():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))
    with pytest.raises(ShapeError):
        ad.add_bias(Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))


def test_non_finite_output_names_the_op():
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError, match="scale"):
        ad.scale(Tensor(np.array([1e300])), 1e300)


def test_embedding_out_of_range_names_position():
    with pytest.raises(IndexError, match="position 2"):
        ad.embedding(Tensor(np.zeros((4, 2))), [0, 1, 7])


def test_backward_rejects_non_scalar_loss():
    with pytest.raises(ShapeError):
        ad.backward(ad.gelu(leaf(np.ones(3))))


# --- gradients ----------------------------------------------------------------


def test_square_gradient():
    x = leaf([3.0])
    ad.backward(ad.matmul(ad.reshape(x, (1, 1)), ad.reshape(x, (1, 1))))
    np.testing.assert_allclose(x.grad, [6.0])


def test_sum_of_softmax_has_zero_gradient():
    z = leaf(np.random.default_rng(5).normal(size=(1, 6)))
    ad.backward(ad.sum(ad.softmax(z)))
    np.testing.assert_allclose(z.grad, 0.0, atol=1e-15)


def test_random_three_layer_composite_matches_finite_differences():
    rng = np.random.default_rng(6)

    def f(x, w1, w2, w3):
        h = ad.gelu(x @ w1)
        h = ad.layer_norm(h @ w2, Tensor(np.ones(5)), Tensor(np.zeros(5)))
        return ad.mean(ad.cross_entropy(h @ w3, np.eye(3)[[0, 2, 1, 1]]))

    err = finite_difference_check(f, rng.normal(size=(4, 3)), rng.normal(size=(3, 6)),
                                  rng.normal(size=(6, 5)), rng.normal(size=(5, 3)))
    assert err < 1e-6


def test_gelu_sum_check():
    x = np.random.default_rng(7).normal(size=(4, 4))
    assert finite_difference_check(lambda t: ad.sum(ad.gelu(t)), x) < 1e-6


def test_kl_onehot_check():
    x = np.random.default_rng(8).normal(size=(1, 5))
    onehot = np.eye(5)[[3]]
    assert finite_difference_check(lambda t: ad.sum(ad.kl_div(t, onehot)), x) < 1e-6


def test_constant_function_has_zero_error():
    assert finite_difference_check(lambda t: ad.sum(Tensor(np.ones(3))), np.ones(3)) == 0.0


def test_repeated_backward_is_identical():
    rng = np.random.default_rng(9)
    w = leaf(rng.normal(size=(4, 3)))
    x = Tensor(rng.normal(size=(5, 4)))
    loss = ad.mean(ad.cross_entropy(ad.gelu(x @ w), np.eye(3)[[0, 1, 2, 0, 1]]))
    tape = Tape.from_loss(loss)
    tape.backward(loss)
    g1 = w.grad.copy()
    tape.backward(loss)
    np.testing.assert_array_equal(g1, w.grad)


def test_tape_is_topologically_ordered():
    a, b = leaf(np.ones((2, 2))), leaf(np.ones((2, 2)))
    c = ad.add(a, b)
    loss = ad.sum(ad.matmul(c, ad.gelu(c)))
    tape = Tape.from_loss(loss)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    for node in tape.nodes:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]
    assert {id(t) for t in tape.leaves} == {id(a), id(b)}


def test_gradient_shapes_match_tensors():
    rng = np.random.default_rng(10)
    params = [leaf(rng.normal(size=s)) for s in [(3, 4), (4,), (2, 4, 4)]]
    x = Tensor(rng.normal(size=(2, 5, 4)))
    h = ad.conv1d(x, params[2], params[1])
    loss = ad.mean(ad.reshape(h, (h.size,)))
    ad.backward(ad.add(loss, ad.mean(ad.reshape(params[0], (12,)))))
    for p in params:
        assert p.grad.shape == p.shape


def test_clamp_gradient_convention():
    x = leaf([-2.0, -1.0, 0.0, 1.0, 2.0])
    ad.backward(ad.sum(ad.clamp(x, -1.0, 1.0)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 1.0, 1.0, 0.0])


def test_take_gradient_accumulates_repeats():
    x = leaf(np.arange(4.0))
    ad.backward(ad.sum(ad.take(x, np.array([1, 1, 3]))))
    np.testing.assert_array_equal(x.grad, [0.0, 2.0, 0.0, 1.0])


def test_unreachable_leaf_keeps_no_gradient():
    a, b = leaf([1.0]), leaf([2.0])
    ad.backward(ad.sum(ad.gelu(a)))
    assert b.grad is None


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_float32_primitives_within_tolerance(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    f = lambda t: ad.sum(ad.layer_norm(ad.softmax(t), Tensor(np.ones(4, t.dtype)), Tensor(np.zeros(4, t.dtype))))  # noqa: E731
    g = lambda t: ad.sum(ad.cosine_similarity(ad.gelu(t), Tensor(np.eye(4, dtype=t.dtype))))  # noqa: E731
    assert finite_difference_check(f, x, analytic_dtype=np.float32) < 1e-4
    assert finite_difference_check(g, x, analytic_dtype=np.float32) < 1e-4
