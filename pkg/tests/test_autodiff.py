import numpy as np
import pytest
from scipy import sparse

from difflog.autodiff import BUILTINS, EvaluationError, Tape, apply_builtin


def fd_gradient(f, x, h=1e-6):
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] = x[i] + h
        up = f(bumped)
        bumped[i] = x[i] - h
        down = f(bumped)
        grad[i] = (up - down) / (2 * h)
    return grad


def assert_close(analytic, numeric, rel=1e-4, abs_tol=1e-7):
    analytic = np.atleast_1d(np.asarray(analytic, dtype=np.float64))
    numeric = np.atleast_1d(np.asarray(numeric, dtype=np.float64))
    denom = np.maximum(np.abs(numeric), np.abs(analytic))
    ok = (np.abs(analytic - numeric) <= abs_tol) | (
        np.abs(analytic - numeric) / np.where(denom == 0, 1.0, denom) <= rel
    )
    assert ok.all(), f"analytic {analytic} vs numeric {numeric}"


def _loss_through(op, x0):
    """Wrap an elementwise/reduction tape op as scalar loss over a parameter."""

    def f(x):
        tape = Tape()
        p = tape.param("x", np.asarray(x))
        out = op(tape, p)
        out = tape.sum(out) if np.ndim(out.value) else out
        return float(out.value)

    tape = Tape()
    p = tape.param("x", np.asarray(x0, dtype=np.float64))
    out = op(tape, p)
    out = tape.sum(out) if np.ndim(out.value) else out
    grads = tape.backward(out)
    return f, grads["x"]


@pytest.mark.parametrize(
    "name,x0",
    [
        ("tanh", [-0.7, 0.0, 0.4, 1.3]),
        ("sigmoid", [-2.0, -0.1, 0.5, 3.0]),
        ("square_root", [0.3, 1.0, 2.5, 9.0]),
        ("inverse", [0.5, -2.0, 1.5, 4.0]),
        ("mean", [0.4, 1.2, 0.9, 2.0]),
        ("sum", [0.4, -1.2, 0.9, 2.0]),
    ],
)
def test_builtin_gradients_match_finite_differences(name, x0):
    f, analytic = _loss_through(lambda t, p: apply_builtin(t, name, p), x0)
    assert_close(analytic, fd_gradient(f, x0))


def test_tanh_identity_values():
    tape = Tape()
    out = tape.tanh(tape.constant(np.array([0.0])))
    assert out.value[0] == 0.0
    grads = Tape()
    p = grads.param("x", np.array([0.0]))
    y = grads.tanh(p)
    g = grads.backward(grads.sum(y))
    assert g["x"][0] == 1.0  # tanh'(0) = 1


def test_mean_skips_zero_entries():
    tape = Tape()
    out = tape.mean_nonzero(tape.constant(np.array([0.0, 30.0, 40.0])))
    assert out.value == 35.0
    empty = tape.mean_nonzero(tape.constant(np.zeros(3)))
    assert empty.value == 0.0


def test_inverse_preserves_zero():
    tape = Tape()
    out = tape.reciprocal(tape.constant(np.array([2.0, 0.0])))
    assert np.array_equal(out.value, [0.5, 0.0])


def test_square_root_rejects_negatives():
    tape = Tape()
    with pytest.raises(EvaluationError):
        tape.square_root(tape.constant(np.array([-1.0])))


def test_square_root_zero_has_zero_subgradient():
    tape = Tape()
    p = tape.param("x", np.array([0.0, 4.0]))
    out = tape.sum(tape.square_root(p))
    g = tape.backward(out)["x"]
    assert np.array_equal(g, [0.0, 0.25])


def test_linear_gradient():
    tape = Tape()
    w = tape.param("w", np.array([0.7]))
    x = tape.constant(np.array([1.0]))
    out = tape.sum(tape.mul(w, x))
    assert tape.backward(out)["w"][0] == 1.0


def test_matvec_forward_and_gradients():
    rng = np.random.default_rng(0)
    dense = rng.uniform(0.1, 1.0, size=(4, 4)) * (rng.random((4, 4)) < 0.6)
    matrix = sparse.csr_matrix(dense)
    x0 = rng.uniform(-1.0, 1.0, size=4)
    weights = rng.uniform(0.2, 1.0, size=4)

    for transposed in (False, True):
        tape = Tape()
        x = tape.param("x", x0.copy())
        data = tape.param("data", matrix.data)
        y = tape.matvec(x, matrix, transposed=transposed, data_param=data)
        expected = x0 @ (dense.T if transposed else dense)
        assert np.allclose(y.value, expected)

        loss = tape.sum(tape.mul(y, tape.constant(weights)))
        grads = tape.backward(loss)

        def f_x(v):
            return float(weights @ (v @ (dense.T if transposed else dense)))

        assert_close(grads["x"], fd_gradient(f_x, x0))

        def f_data(d):
            m = matrix.copy()
            m.data = d
            arr = m.toarray()
            return float(weights @ (x0 @ (arr.T if transposed else arr)))

        assert_close(grads["data"], fd_gradient(f_data, matrix.data))


def test_diagmul_gradients():
    dense = np.array([[0.5, 0.2, 0.0], [0.0, 0.8, 0.1], [0.3, 0.0, 0.0]])
    matrix = sparse.csr_matrix(dense)
    positions = np.full(3, -1, dtype=np.int64)
    for i in range(3):
        lo, hi = matrix.indptr[i], matrix.indptr[i + 1]
        hits = np.nonzero(matrix.indices[lo:hi] == i)[0]
        if hits.size:
            positions[i] = lo + hits[0]
    x0 = np.array([1.0, 2.0, 3.0])

    tape = Tape()
    x = tape.param("x", x0.copy())
    data = tape.param("data", matrix.data)
    out = tape.sum(tape.diagmul(x, matrix, data_param=data, diag_positions=positions))
    grads = tape.backward(out)
    assert np.array_equal(grads["x"], dense.diagonal())

    def f_data(d):
        m = matrix.copy()
        m.data = d
        return float(np.sum(x0 * m.diagonal()))

    assert_close(grads["data"], fd_gradient(f_data, matrix.data))


def test_broadcast_pick_minmax_gradients():
    x0 = np.array([0.3, -0.5, 1.2])

    def build(x):
        tape = Tape()
        p = tape.param("x", np.asarray(x))
        s = tape.sum(p)
        b = tape.broadcast(s, 3)
        m = tape.minimum(b, p)
        M = tape.maximum(m, tape.constant(np.zeros(3)))
        out = tape.add(tape.pick(M, 1), tape.pick(m, 2))
        return tape, out

    tape, out = build(x0)
    analytic = tape.backward(out)["x"]
    numeric = fd_gradient(lambda v: float(build(v)[1].value), x0)
    assert_close(analytic, numeric)


def test_backward_has_slot_for_every_touched_param():
    tape = Tape()
    a = tape.param("a", np.array([1.0]))
    b = tape.param("b", np.array([2.0]))
    out = tape.sum(a)  # b recorded but not used downstream
    grads = tape.backward(out)
    assert set(grads) == {"a", "b"}
    assert np.array_equal(grads["b"], [0.0])


def test_backward_is_replayable():
    tape = Tape()
    p = tape.param("x", np.array([0.5]))
    out = tape.sum(tape.mul(p, p))
    first = tape.backward(out)["x"]
    second = tape.backward(out)["x"]
    assert np.array_equal(first, second)
    assert first[0] == 1.0


def test_scalar_vector_broadcast_in_mul():
    tape = Tape()
    s = tape.param("s", 2.0)
    v = tape.param("v", np.array([1.0, 3.0]))
    out = tape.sum(tape.mul(s, v))
    grads = tape.backward(out)
    assert grads["s"] == 4.0
    assert np.array_equal(grads["v"], [2.0, 2.0])
