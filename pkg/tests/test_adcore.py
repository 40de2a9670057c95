import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfrec.adcore import CORE_OPS, NonFiniteError, ShapeError, Tape, grad_check


def forward(kind, *vals, **params):
    t = Tape()
    nodes = [t.leaf(v) for v in vals]
    return t.op(kind, *nodes, **params).value


def test_forward_examples():
    np.testing.assert_allclose(forward("row_softmax", [[0.0, 0.0]]), [[0.5, 0.5]])
    np.testing.assert_allclose(forward("row_l2_normalize", [[3.0, 4.0]]), [[0.6, 0.8]])
    np.testing.assert_allclose(forward("exp2", [[0.0, 1.0, 3.0]]), [[1.0, 2.0, 8.0]])


def test_aliases_resolve():
    a = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(forward("hadamard", a, a), forward("mul", a, a))
    np.testing.assert_array_equal(forward("absolute_value", a), np.abs(a))
    np.testing.assert_array_equal(forward("sigmoid_with_temperature", a, tau=2.0), forward("sigmoid", a, tau=2.0))


def test_shape_mismatch_names_both_shapes():
    t = Tape()
    a, b = t.leaf(np.ones((2, 3))), t.leaf(np.ones((4, 2)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        a @ b
    with pytest.raises(ShapeError):
        t.op("add", t.leaf(np.ones((2, 3))), t.leaf(np.ones((3, 2))))


def test_overflow_names_op():
    with pytest.raises(NonFiniteError, match="exp2"):
        forward("exp2", [[100.0]])


def test_backward_examples():
    t = Tape()
    x = t.leaf([[0.0]])
    g = t.backward(t.op("sigmoid", x, tau=1.0))
    assert g[x.id][0, 0] == pytest.approx(0.25)

    t = Tape()
    v = t.leaf([[1.0, 0.0]])
    # weight the second coordinate so the normalised direction matters
    out = t.op("total_sum", t.op("row_l2_normalize", v) * t.const([[0.0, 1.0]]))
    np.testing.assert_allclose(t.backward(out)[v.id], [[0.0, 1.0]], atol=1e-12)

    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    t = Tape()
    a = t.leaf(A)
    g = t.backward(t.op("total_sum", a @ t.const(B)))[a.id]
    np.testing.assert_allclose(g, np.repeat(B.sum(axis=1)[None, :], 3, axis=0))


def test_backward_needs_scalar_root():
    t = Tape()
    x = t.leaf(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        t.backward(x * 2.0)


def test_grad_check_quadratic_and_kink():
    rep = grad_check(lambda t, x: t.op("total_sum", x * x), [[1.0, 2.0]])
    assert rep.passed
    np.testing.assert_allclose(rep.analytic, [[2.0, 4.0]])
    np.testing.assert_allclose(rep.numeric, [[2.0, 4.0]], rtol=1e-8)

    rep = grad_check(lambda t, x: t.op("total_sum", t.op("abs", x)), [[0.0]])
    assert rep.excluded == (0,)


def test_abs_subgradient_zero_at_kink():
    t = Tape()
    x = t.leaf([[0.0, 1.0]])
    g = t.backward(t.op("total_sum", t.op("abs", x)))[x.id]
    np.testing.assert_array_equal(g, [[0.0, 1.0]])


def test_every_core_op_has_gradient_case():
    from perfrec.verify import op_grad_errors

    errs = op_grad_errors(instances=2, seed=3)
    assert set(errs) == set(CORE_OPS)
    assert max(errs.values()) <= 1e-5


@settings(max_examples=40, deadline=None)
@given(
    r=st.integers(1, 5),
    c=st.integers(1, 5),
    seed=st.integers(0, 10_000),
    kind=st.sampled_from(["sigmoid", "row_softmax", "row_l2_normalize", "exp2", "abs", "transpose", "row_sum"]),
)
def test_unary_gradients_match_differences(r, c, seed, kind):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (r, c))
    if kind == "abs":
        X = np.where(np.abs(X) < 1e-3, 1e-3, X)
    W = rng.standard_normal(forward(kind, X, **({"tau": 0.8} if kind == "sigmoid" else {})).shape)
    params = {"tau": 0.8} if kind == "sigmoid" else {}
    rep = grad_check(lambda t, x: t.op("total_sum", t.op(kind, x, **params) * t.const(W)), X, tolerance=1e-5)
    assert rep.passed, rep.max_rel_error


@settings(max_examples=30, deadline=None)
@given(r=st.integers(1, 4), c=st.integers(1, 4), k=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_shapes_are_functions_of_input_shapes(r, c, k, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((r, c)), rng.standard_normal((c, k))
    assert forward("matmul", A, B).shape == (r, k)
    assert forward("transpose", A).shape == (c, r)
    assert forward("row_sum", A).shape == (r, 1)
    assert forward("total_sum", A).shape == (1, 1)
    assert forward("repeat_rows", A, times=k).shape == (r * k, c)
    assert forward("block_sum", np.vstack([A] * k), size=k).shape == (r, c)
    assert forward("broadcast_row", A[:1], rows=k).shape == (k, c)


def test_block_sum_rejects_ragged_rows():
    with pytest.raises(ShapeError):
        forward("block_sum", np.ones((5, 2)), size=2)


def test_determinism():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((3, 3))

    def run():
        t = Tape()
        x = t.leaf(X)
        out = t.op("total_sum", t.op("row_softmax", x @ x.T) * x)
        return out.value.copy(), t.backward(out)[x.id]

    (v1, g1), (v2, g2) = run(), run()
    assert np.array_equal(v1, v2) and np.array_equal(g1, g2)


def test_softmax_is_stable_for_large_logits():
    out = forward("row_softmax", [[1000.0, 1000.0, -1000.0]])
    np.testing.assert_allclose(out, [[0.5, 0.5, 0.0]])


def test_sigmoid_requires_positive_tau():
    with pytest.raises(ValueError):
        forward("sigmoid", [[0.0]], tau=0.0)
