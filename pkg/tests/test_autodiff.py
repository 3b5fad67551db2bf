"""Tape engine: op-by-op VJPs against finite differences, replay, dispatch."""

import numpy as np
import pytest

from lrcnet import autodiff as ad


def _grad_of(build, leaves):
    """Gradient of a scalar-valued tape expression at the given leaves.

    build(vars) must return a Var whose value is a scalar ().
    Returns (value, [gradients in leaf order]).
    """
    tape = ad.Tape()
    vs = [tape.leaf(x) for x in leaves]
    out = build(*vs)
    grads = ad.backward({out: np.ones(())})
    return out.value, [grads.get(v.index, np.zeros_like(l)) for v, l in zip(vs, leaves)]


def _fd_of(build, leaves, step=1e-6):
    params = {str(i): np.array(x, dtype=np.float64) for i, x in enumerate(leaves)}

    def loss():
        tape = ad.Tape()
        vs = [tape.leaf(params[str(i)]) for i in range(len(leaves))]
        return float(build(*vs).value)

    return ad.finite_difference_gradient(loss, params, step=step)


def _check(build, *leaves):
    _, got = _grad_of(build, list(leaves))
    want = _fd_of(build, list(leaves))
    for i, g in enumerate(got):
        np.testing.assert_allclose(g, want[str(i)], rtol=1e-6, atol=1e-8)


def test_arithmetic_vjps():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 2))
    b = rng.standard_normal((3, 2)) + 2.0
    _check(lambda x, y: ad.reduce_sum(x + y), a, b)
    _check(lambda x, y: ad.reduce_sum(x - y), a, b)
    _check(lambda x, y: ad.reduce_sum(x * y), a, b)
    _check(lambda x, y: ad.reduce_sum(x / y), a, b)
    _check(lambda x: ad.reduce_sum(-x), a)


def test_broadcasting_unbroadcasts_gradients():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3,))
    c = rng.standard_normal((4, 1))
    _check(lambda x, y: ad.reduce_sum(x * y), a, b)
    _check(lambda x, y: ad.reduce_sum(x + y), a, c)


def test_nonlinearity_vjps():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((5,)) * 2
    _check(lambda x: ad.reduce_sum(ad.sigmoid(x)), a)
    _check(lambda x: ad.reduce_sum(ad.tanh(x)), a)
    # keep |a| away from 0 where the abs subgradient kinks
    _check(lambda x: ad.reduce_sum(ad.absolute(x)), a + np.sign(a))


def test_matmul_and_structured_op_vjps():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4))
    w = rng.standard_normal((4, 3))
    _check(lambda a, b: ad.reduce_sum(ad.matmul(a, b)), x, w)
    y = rng.standard_normal((2, 5))
    a5 = rng.standard_normal((5, 3))
    b5 = rng.standard_normal((5, 3))
    _check(lambda p, q, r: ad.reduce_sum(ad.outer_affine(p, q, r)), y, a5, b5)
    s = rng.standard_normal((2, 5, 3))
    _check(lambda p, q: ad.reduce_sum(ad.weighted_reduce(p, q)), s, a5)
    _check(lambda p, q: ad.reduce_sum(ad.concat_last(p, q)), x, y)


def test_eager_mode_matches_traced_mode():
    rng = np.random.default_rng(4)
    y = rng.standard_normal((3,))
    a = rng.standard_normal((3, 2))
    b = rng.standard_normal((3, 2))
    eager = ad.weighted_reduce(ad.sigmoid(ad.outer_affine(y, a, b)), a)
    tape = ad.Tape()
    traced = ad.weighted_reduce(
        ad.sigmoid(ad.outer_affine(tape.leaf(y), tape.leaf(a), tape.leaf(b))),
        tape.leaf(a))
    np.testing.assert_array_equal(eager, traced.value)


def test_replay_reproduces_values_bit_for_bit():
    rng = np.random.default_rng(5)
    tape = ad.Tape()
    x = tape.leaf(rng.standard_normal((4, 4)))
    w = tape.leaf(rng.standard_normal((4, 4)))
    z = ad.tanh(ad.matmul(ad.sigmoid(x * w + x), w)) / (ad.absolute(w) + 1.0)
    ad.reduce_sum(z)
    recomputed = ad.replay(tape)
    assert len(recomputed) == len(tape)
    for node, val in zip(tape.nodes, recomputed):
        np.testing.assert_array_equal(node.value, val)


def test_backward_is_deterministic_and_accumulates_seeds():
    tape = ad.Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    y1 = x * 3.0
    y2 = x * x
    g1 = ad.backward({y1: np.ones(2), y2: np.ones(2)})
    g2 = ad.backward({y1: np.ones(2), y2: np.ones(2)})
    np.testing.assert_array_equal(g1[x.index], g2[x.index])
    # d/dx (3x + x^2) = 3 + 2x
    np.testing.assert_allclose(g1[x.index], 3.0 + 2.0 * x.value)


def test_backward_input_validation():
    tape_a, tape_b = ad.Tape(), ad.Tape()
    va = tape_a.leaf(np.ones(2))
    vb = tape_b.leaf(np.ones(2))
    with pytest.raises(ValueError, match="at least one"):
        ad.backward({})
    with pytest.raises(ValueError, match="different tapes"):
        ad.backward({va: np.ones(2), vb: np.ones(2)})
    with pytest.raises(ValueError, match="seed shape"):
        ad.backward({va: np.ones(3)})


def test_constants_get_no_gradient():
    tape = ad.Tape()
    x = tape.leaf(np.array([2.0]))
    c = tape.constant(np.array([5.0]))
    out = ad.reduce_sum(x * c)
    grads = ad.backward({out: np.ones(())})
    assert x.index in grads
    np.testing.assert_array_equal(grads[x.index], [5.0])


def test_finite_difference_gradient_exact_on_quadratic():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    loss = lambda: float(np.sum(params["w"] ** 2))
    g = ad.finite_difference_gradient(loss, params, step=1e-5)
    # central differences are exact for quadratics up to roundoff
    np.testing.assert_allclose(g["w"], 2 * params["w"], rtol=1e-9)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])  # restored


def test_max_relative_error_semantics():
    a = {"w": np.array([1.0, 0.0])}
    assert ad.max_relative_error(a, {"w": a["w"].copy()}) == (0.0, "")
    # large entries compare relatively
    err, name = ad.max_relative_error({"w": np.array([100.0])},
                                      {"w": np.array([101.0])})
    assert name == "w"
    np.testing.assert_allclose(err, 1.0 / 101.0)
    # near-zero entries compare against the floor
    err, _ = ad.max_relative_error({"w": np.array([0.0])},
                                   {"w": np.array([1e-8])}, floor=1e-4)
    np.testing.assert_allclose(err, 1e-4)
    with pytest.raises(ValueError, match="differ"):
        ad.max_relative_error({"a": np.ones(1)}, {"b": np.ones(1)})
    with pytest.raises(ValueError, match="shape"):
        ad.max_relative_error({"a": np.ones(1)}, {"a": np.ones(2)})
