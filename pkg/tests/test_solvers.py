"""Integrators: convergence orders, hybrid stability, adaptive accuracy."""

import numpy as np
import pytest

from lrcnet import cells, core, solvers

scipy_integrate = pytest.importorskip("scipy.integrate")


def test_solver_config_validation():
    solvers.SolverConfig(scheme=solvers.RK4, dt=0.5, unfoldings=3)
    with pytest.raises(ValueError, match="unknown scheme"):
        solvers.SolverConfig(scheme="heun")
    with pytest.raises(ValueError, match="unfoldings"):
        solvers.SolverConfig(unfoldings=0)
    with pytest.raises(ValueError, match="dt"):
        solvers.SolverConfig(dt=0.0)


def _decay(h, x):
    return -h


def test_euler_first_order_on_linear_decay():
    # y' = -y, y(0)=1 over t=1: global error ~ C*dt, so it halves with dt
    h0 = np.array([1.0])
    errs = []
    for n in (8, 16, 32, 64, 128):
        y = solvers.euler_advance(_decay, h0, None, 1.0, n)
        errs.append(abs(float(y[0]) - np.exp(-1.0)))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    assert all(1.8 < r < 2.2 for r in ratios)


def test_rk4_fourth_order_on_linear_decay():
    h0 = np.array([1.0])
    errs = []
    for n in (4, 8, 16, 32):
        y = solvers.rk4_advance(_decay, h0, None, 1.0, n)
        errs.append(abs(float(y[0]) - np.exp(-1.0)))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    assert all(13.0 < r < 19.0 for r in ratios)   # 2^4 = 16


def test_euler_single_unfolding_formula():
    h = np.array([2.0, -1.0])
    out = solvers.euler_advance(lambda h, x: h * 3.0, h, None, 0.1, 1)
    np.testing.assert_allclose(out, h + 0.1 * 3.0 * h, rtol=1e-15)


def _stiff_ltc(m=3, n=2, seed=0, scale=60.0):
    rng = np.random.default_rng(seed)
    p = cells.init_liquid(m, n, rng)
    # crank the conductances so f ~ scale and explicit Euler at dt=1 blows up
    return cells.LiquidParams(g=p.g * scale, a=p.a, b=p.b, k=p.k,
                              g_l=p.g_l * scale, e_l=p.e_l)


def test_hybrid_stable_where_explicit_euler_diverges():
    p = _stiff_ltc()
    rng = np.random.default_rng(1)
    h = rng.standard_normal(3)
    x = rng.standard_normal(2)
    deriv = lambda h, x: cells.ltc_derivative(p, h, x)
    h_exp = h.copy()
    h_hyb = h.copy()
    for _ in range(30):
        h_exp = solvers.euler_advance(deriv, h_exp, x, 1.0, 1)
        h_hyb = solvers.hybrid_euler_advance("ltc", p, h_hyb, x, 1.0, 1)
    assert not np.all(np.isfinite(h_exp)) or np.abs(h_exp).max() > 1e6
    assert np.all(np.isfinite(h_hyb))
    # fixed point of the stiff dynamics: f h* = u e_l, elementwise
    _, f, u = cells.liquid_gates(p, h_hyb, x)
    np.testing.assert_allclose(h_hyb, u * p.e_l / f, rtol=1e-2)


def test_hybrid_solves_frozen_gate_dynamics_exactly():
    # one substep with gates read once: h' = (h + d*u*e_l) / (1 + d*f)
    p = _stiff_ltc(seed=2, scale=1.0)
    rng = np.random.default_rng(3)
    h = rng.standard_normal(3)
    x = rng.standard_normal(2)
    d = 0.7
    _, f, u = cells.liquid_gates(p, h, x)
    want = (h + d * u * p.e_l) / (1.0 + d * f)
    got = solvers.hybrid_euler_advance("ltc", p, h, x, d, 1)
    np.testing.assert_allclose(got, want, rtol=1e-15)


def test_hybrid_applies_elastance_to_both_sides():
    rng = np.random.default_rng(4)
    p = cells.init_liquid(3, 2, rng, core.SYMMETRIC)
    h = rng.standard_normal(3)
    x = rng.standard_normal(2)
    d = 0.5
    y, f, u = cells.liquid_gates(p, h, x)
    eps = cells.elastance_gate(p.elastance, y)
    want = (h + d * eps * np.tanh(u) * p.e_l) / (1.0 + d * eps * core.sigmoid(f))
    got = solvers.hybrid_euler_advance("lrc", p, h, x, d, 1)
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_hybrid_rejects_non_liquid_kinds():
    p = _stiff_ltc()
    with pytest.raises(ValueError, match="liquid family"):
        solvers.hybrid_euler_advance("gru", p, np.zeros(3), np.zeros(2), 1.0, 1)


def test_dopri45_matches_exponential_closed_form():
    res = solvers.dopri45_solve(lambda t, y: -y, 0.0, np.array([1.0]),
                                np.linspace(0, 5, 50), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(res.values[:, 0], np.exp(-res.times), rtol=1e-7)
    assert res.n_accepted > 0 and res.n_evaluations >= 6 * res.n_accepted


def test_dopri45_dense_output_between_steps():
    # sample times chosen incommensurate with any step pattern
    ts = np.sort(np.random.default_rng(5).uniform(0, 3, size=40))
    res = solvers.dopri45_solve(lambda t, y: np.array([np.cos(t)]), 0.0,
                                np.array([0.0]), ts, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(res.values[:, 0], np.sin(ts), atol=1e-8)


def test_dopri45_matches_scipy_on_van_der_pol():
    def vdp(t, y):
        return np.array([y[1], 2.0 * (1 - y[0] ** 2) * y[1] - y[0]])

    ts = np.linspace(0, 10, 101)
    ours = solvers.dopri45_solve(vdp, 0.0, np.array([2.0, 0.0]), ts,
                                 rtol=1e-9, atol=1e-11)
    ref = scipy_integrate.solve_ivp(vdp, (0, 10), [2.0, 0.0], t_eval=ts,
                                    rtol=1e-11, atol=1e-13, method="RK45")
    np.testing.assert_allclose(ours.values, ref.y.T, atol=2e-7)


def test_dopri45_t0_samples_and_degenerate_span():
    y0 = np.array([3.0, -1.0])
    res = solvers.dopri45_solve(lambda t, y: -y, 2.0, y0, np.array([2.0, 2.0]))
    np.testing.assert_array_equal(res.values, np.stack([y0, y0]))
    assert res.n_accepted == 0


def test_dopri45_input_validation():
    f = lambda t, y: -y
    with pytest.raises(ValueError, match="non-decreasing"):
        solvers.dopri45_solve(f, 0.0, np.ones(1), np.array([1.0, 0.5]))
    with pytest.raises(ValueError, match="before t0"):
        solvers.dopri45_solve(f, 1.0, np.ones(1), np.array([0.0, 2.0]))
    with pytest.raises(ValueError, match="non-empty"):
        solvers.dopri45_solve(f, 0.0, np.ones(1), np.array([]))


def test_dopri45_max_steps_exhaustion_raises():
    with pytest.raises(RuntimeError, match="max_steps"):
        solvers.dopri45_solve(lambda t, y: -200.0 * y, 0.0, np.ones(1),
                              np.array([0.0, 50.0]), max_steps=5)
