import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ncdlab import autodiff as ad


def val(v):
    return np.asarray(v.value)


def test_matmul_identity():
    t = ad.Tape()
    out = t.constant(np.eye(2)) @ t.constant([[1, 2], [3, 4]])
    np.testing.assert_array_equal(val(out), [[1, 2], [3, 4]])


def test_matmul_hand_arithmetic():
    t = ad.Tape()
    out = t.constant([[1, 2]]) @ t.constant([[3], [4]])
    assert val(out).tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    t = ad.Tape()
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        t.constant(np.ones((2, 3))) @ t.constant(np.ones((2, 3)))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    err = ad.grad_check(lambda a: ad.sum_all(a @ a.tape.constant(B)), A)
    assert err < 1e-6


def test_softmax_uniform_and_overflow():
    t = ad.Tape()
    out = ad.softmax_columns(t.constant([[0.0, 1000.0], [0.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(val(out)[:, 0], [1 / 3] * 3)
    np.testing.assert_allclose(val(out)[:, 1], [1, 0, 0], atol=1e-300)
    assert np.all(np.isfinite(val(out)))


def test_softmax_jvp_matches_finite_differences():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((5, 3))
    v = rng.standard_normal((5, 3))
    # directional derivative <grad(<v, softmax(z)>), dz> checked entrywise
    err = ad.grad_check(lambda a: ad.sum_all(ad.hadamard(ad.softmax_columns(a), a.tape.constant(v))), z)
    assert err < 1e-6


finite_mats = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.floats(-700, 700, allow_nan=False),
)


@given(finite_mats)
def test_softmax_columns_sum_to_one(z):
    out = val(ad.softmax_columns(ad.Tape().constant(z)))
    np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-12)
    assert np.all((out >= 0) & (out <= 1))


def test_frobenius_norm_values():
    t = ad.Tape()
    assert ad.frobenius_norm(t.constant([[3, 4], [0, 0]])).item() == 5.0
    assert ad.frobenius_norm(t.constant(np.zeros((3, 2)))).item() == 0.0


def test_frobenius_norm_matches_trace_definition():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 6))
    assert ad.frobenius_norm(ad.Tape().constant(A)).item() == pytest.approx(np.sqrt(np.trace(A.T @ A)))


def test_log_clamps_instead_of_nan():
    out = val(ad.log(ad.Tape().constant([[0.0, -1.0, 1.0]])))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[np.log(1e-12), np.log(1e-12), 0.0]])


# one scalar-valued wrapper per primitive, all on 4x6 inputs
def _cases():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((4, 6))
    Bt = rng.standard_normal((6, 4))
    c = rng.standard_normal((4, 1))
    w = rng.standard_normal((4, 6))

    def weighted(a, x):
        # fixed, non-symmetric weights so every output entry matters
        k = np.cos(np.arange(x.shape[0] * x.shape[1], dtype=float) + 0.5).reshape(x.shape)
        return ad.sum_all(ad.hadamard(x, a.tape.constant(k)))

    return {
        "matmul": lambda a: ad.sum_all(ad.hadamard(a @ a.tape.constant(Bt), a.tape.constant(np.arange(16.0).reshape(4, 4)))),
        "add": lambda a: weighted(a, a + a.tape.constant(B)),
        "subtract": lambda a: weighted(a, a.tape.constant(B) - a),
        "scale": lambda a: weighted(a, ad.scale(a, -2.5)),
        "hadamard": lambda a: weighted(a, ad.hadamard(a, a)),
        "transpose": lambda a: ad.sum_all(ad.hadamard(ad.transpose(a), a.tape.constant(Bt))),
        "sum": lambda a: ad.sum_all(ad.hadamard(a, a)),
        "mean_columns": lambda a: ad.sum_all(ad.hadamard(ad.mean_columns(a), a.tape.constant(c))),
        "trace": lambda a: ad.trace(a @ ad.transpose(a)),
        "log": lambda a: weighted(a, ad.log(ad.softmax_columns(a))),
        "relu": lambda a: weighted(a, ad.relu(a)),
        "frobenius_norm": lambda a: ad.frobenius_norm(a),
        "broadcast_column": lambda a: weighted(a, ad.broadcast_column(ad.mean_columns(a), 6)),
        "softmax_columns": lambda a: weighted(a, ad.softmax_columns(a)),
        "concat_columns": lambda a: ad.sum_all(ad.hadamard(ad.concat_columns(a, a), a.tape.constant(np.hstack([w, B])))),
        "columns": lambda a: ad.sum_all(ad.hadamard(ad.columns(a, 1, 4), a.tape.constant(w[:, :3]))),
    }


def test_every_registered_primitive_has_a_gradient_case():
    assert set(_cases()) == set(ad.PRIMITIVES)


@pytest.mark.parametrize("name", sorted(ad.PRIMITIVES))
def test_primitive_gradient(name):
    A = np.random.default_rng(4).standard_normal((4, 6))
    assert ad.grad_check(_cases()[name], A) < 1e-5


def test_grad_check_sum_is_exact():
    A = np.random.default_rng(5).standard_normal((3, 3))
    assert ad.analytic_gradient(ad.sum_all, A).tolist() == np.ones((3, 3)).tolist()
    assert ad.grad_check(ad.sum_all, A) < 1e-9


def test_grad_check_frobenius_at_identity():
    I = np.eye(3)
    np.testing.assert_allclose(ad.analytic_gradient(ad.frobenius_norm, I), I / np.sqrt(3), atol=1e-15)
    assert ad.grad_check(ad.frobenius_norm, I) < 1e-7


def test_grad_check_reports_non_finite_entry():
    def f(a):
        # blows up once entry (0, 1) is pushed above 1
        v = a.value
        return ad.scale(ad.sum_all(a), np.inf if v[0, 1] > 1.0 else 1.0)

    with pytest.raises(ad.GradCheckError) as info:
        ad.grad_check(f, np.array([[0.0, 1.0]]))
    assert info.value.index == (0, 1)


def test_unused_parameter_gets_exact_zero():
    t = ad.Tape()
    a = t.leaf(np.ones((2, 2)))
    unused = t.leaf(np.full((3, 1), 7.0))
    loss = ad.sum_all(ad.hadamard(a, a))
    grads = t.backward(loss)
    assert np.array_equal(grads[unused.index], np.zeros((3, 1)))


def test_backward_visits_each_node_once(monkeypatch):
    calls = []
    orig = ad.PRIMITIVES["add"]
    counting = ad.Primitive("add", orig.forward, lambda g, *a, **k: calls.append(1) or orig.vjp(g, *a, **k))
    monkeypatch.setitem(ad.PRIMITIVES, "add", counting)
    t = ad.Tape()
    x = t.leaf(np.ones((2, 2)))
    y = x + x
    z = y + y  # y feeds z twice: still a single visit of y's node
    t.backward(ad.sum_all(z))
    assert len(calls) == 2


def test_shared_subexpression_accumulates():
    t = ad.Tape()
    x = t.leaf([[3.0]])
    y = ad.hadamard(x, x) + x  # d/dx = 2x + 1 = 7
    assert t.backward(ad.sum_all(y))[x.index].item() == 7.0


def test_gradients_are_bit_identical_across_runs():
    A = np.random.default_rng(6).standard_normal((5, 7))

    def f(a):
        P = ad.softmax_columns(a)
        return ad.frobenius_norm(P @ ad.transpose(P))

    g1 = ad.analytic_gradient(f, A)
    g2 = ad.analytic_gradient(f, A)
    assert g1.tobytes() == g2.tobytes()


def test_mixing_tapes_is_rejected():
    with pytest.raises(ValueError):
        ad.Tape().leaf([[1.0]]) + ad.Tape().leaf([[1.0]])


def test_backward_requires_scalar():
    t = ad.Tape()
    with pytest.raises(ad.ShapeError):
        t.backward(t.leaf(np.ones((2, 2))))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_chain_rule_composite(z):
    def f(a):
        P = ad.softmax_columns(a)
        return ad.scale(ad.sum_all(ad.hadamard(P, ad.log(P))), -1.0)

    assert ad.grad_check(f, z) < 1e-4
