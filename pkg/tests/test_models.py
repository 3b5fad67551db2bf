"""Model bundles: sequence runners, BPTT vs the oracle, checkpoint format."""

import json

import numpy as np
import pytest

from lrcnet import models, solvers, train


def _cfg(scheme=solvers.EULER, dt=0.5, unfoldings=2):
    return solvers.SolverConfig(scheme=scheme, dt=dt, unfoldings=unfoldings)


def test_make_model_every_kind():
    rng = np.random.default_rng(0)
    for kind in models.MODEL_KINDS:
        model = models.make_model(kind, 4, 2, 3, rng)
        assert model.kind == kind
        if kind == "node_mlp":
            assert model.output is None and model.m == 4
        else:
            assert model.m == 4 and model.n == 2 and model.k_out == 3


def test_make_model_validation():
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError, match="unknown model kind"):
        models.make_model("hopfield", 4, 2, 3, rng)
    with pytest.raises(ValueError, match="elastance kind"):
        models.make_model("gru", 4, 2, 3, rng, elastance_kind="symmetric")


def test_named_parameters_prefixes_and_liveness():
    rng = np.random.default_rng(2)
    model = models.make_model("lrc", 3, 2, 2, rng, with_input_map=True)
    named = model.named_parameters()
    assert {n.split(".")[0] for n in named} == {"cell", "out", "in"}
    # returned arrays are the live parameters, not copies
    named["out.b"][:] = 7.0
    assert np.all(model.output.b == 7.0)
    assert models.count_parameters(model) == sum(v.size for v in named.values())


def test_input_driven_layout_shapes_and_state_zero_start():
    rng = np.random.default_rng(3)
    model = models.make_model("gru", 4, 2, 3, rng)
    x = rng.standard_normal((5, 7, 2))
    out, rec = models.forward_sequence(model, _cfg(), inputs=x)
    assert out.shape == (5, 7, 3)
    assert rec is None
    # first output equals one step from the zero state
    h1 = models.advance_interval("gru", model.cell, _cfg(), np.zeros((5, 4)),
                                 x[:, 0], 0.5)
    np.testing.assert_allclose(out[:, 0], model.output(h1), rtol=1e-14)


def test_self_driven_layout_reads_initial_state_immediately():
    rng = np.random.default_rng(4)
    model = models.make_model("lrc", 4, 0, 2, rng, with_input_map=True)
    obs0 = rng.standard_normal((3, 2))
    out, _ = models.forward_sequence(model, _cfg(), init_obs=obs0, n_steps=6)
    assert out.shape == (3, 6, 2)
    h0 = model.input_map(obs0)
    np.testing.assert_allclose(out[:, 0], model.output(h0), rtol=1e-14)


def test_self_driven_requires_start_steps_and_closed_cell():
    rng = np.random.default_rng(5)
    model = models.make_model("node_mlp", 2, 0, 2, rng, mlp_hidden=(4,))
    with pytest.raises(ValueError, match="init_obs or h0"):
        models.forward_sequence(model, _cfg(), n_steps=4)
    with pytest.raises(ValueError, match="n_steps"):
        models.forward_sequence(model, _cfg(), init_obs=np.zeros((1, 2)))
    driven = models.make_model("lrc", 4, 2, 2, rng, with_input_map=True)
    with pytest.raises(ValueError, match="no input dimension"):
        models.forward_sequence(driven, _cfg(), init_obs=np.zeros((1, 2)),
                                n_steps=4)


def test_per_sample_time_gaps_change_the_rollout():
    rng = np.random.default_rng(6)
    model = models.make_model("lrcu", 3, 2, 2, rng)
    x = rng.standard_normal((2, 5, 2))
    dts_a = np.full((2, 5), 1.0)
    dts_b = rng.uniform(0.2, 2.0, size=(2, 5))
    out_a, _ = models.forward_sequence(model, _cfg(), inputs=x, dts=dts_a)
    out_b, _ = models.forward_sequence(model, _cfg(), inputs=x, dts=dts_b)
    assert np.abs(out_a - out_b).max() > 1e-6


def test_h0_offset_perturbs_initial_state():
    rng = np.random.default_rng(7)
    model = models.make_model("lrc", 4, 0, 2, rng, with_input_map=True)
    obs0 = rng.standard_normal((1, 2))
    off = 1e-3 * rng.standard_normal((1, 4))
    base, _ = models.forward_sequence(model, _cfg(), init_obs=obs0, n_steps=3)
    bumped, _ = models.forward_sequence(model, _cfg(), init_obs=obs0, n_steps=3,
                                        h0_offset=off)
    np.testing.assert_allclose(bumped[:, 0],
                               model.output(model.input_map(obs0) + off),
                               rtol=1e-14)
    assert np.abs(bumped - base).max() > 0


def test_traced_forward_matches_untraced():
    rng = np.random.default_rng(8)
    for kind in ("lrc", "lstm", "gru_ode"):
        model = models.make_model(kind, 3, 2, 2, rng)
        x = rng.standard_normal((2, 4, 2))
        plain, _ = models.forward_sequence(model, _cfg(), inputs=x)
        traced, rec = models.forward_sequence(model, _cfg(), inputs=x, traced=True)
        np.testing.assert_array_equal(plain, traced)
        assert len(rec.outputs) == 4 and len(rec.states) == 4


@pytest.mark.parametrize("kind,scheme", [
    ("ltc", solvers.HYBRID),
    ("lrc", solvers.EULER),
    ("lrcu", solvers.EULER),
    ("lstm", solvers.EULER),
])
def test_backward_matches_finite_differences(kind, scheme):
    rng = np.random.default_rng(9)
    model = models.make_model(kind, 3, 2, 2, rng)
    cfg = _cfg(scheme=scheme)
    x = rng.standard_normal((2, 4, 2))
    dts = rng.uniform(0.5, 1.5, size=(2, 4))
    targets = rng.standard_normal((2, 4, 2))
    out, rec = models.forward_sequence(model, cfg, inputs=x, dts=dts, traced=True)
    _, g_out = train.mse_loss(out, targets)
    got = models.backward_sequence(rec, g_out)
    want = models.finite_difference_model_gradient(
        model, cfg, lambda o: train.mse_loss(o, targets)[0], inputs=x, dts=dts)
    err, name = __import__("lrcnet").autodiff.max_relative_error(got, want)
    assert err <= 1e-4, f"{kind}: {name} off by {err:.3e}"


def test_backward_accepts_extra_state_seeds():
    rng = np.random.default_rng(10)
    model = models.make_model("lrc", 3, 2, 2, rng)
    x = rng.standard_normal((1, 3, 2))
    out, rec = models.forward_sequence(model, _cfg(), inputs=x, traced=True)
    g_out = np.zeros_like(out)
    g_state = {2: np.ones((1, 3))}
    grads, state_grads = models.backward_sequence(rec, g_out, state_grads=g_state,
                                                  state_grad_indices=(0, 2))
    assert any(np.abs(g).max() > 0 for g in grads.values())
    assert set(state_grads) == {0, 2}
    # the state at t=2 receives exactly the injected seed
    np.testing.assert_array_equal(state_grads[2], g_state[2])


def test_checkpoint_round_trip_bytes_and_behavior(tmp_path):
    rng = np.random.default_rng(11)
    for kind in ("lrc", "lrcu", "gru", "node_mlp"):
        model = models.make_model(kind, 3, 2, 2, rng,
                                  with_input_map=(kind in ("lrc", "lrcu")))
        path = tmp_path / f"{kind}.json"
        models.save_checkpoint(path, model, seed=5, metadata={"note": "x"})
        loaded, info = models.load_checkpoint(path)
        assert info["seed"] == 5 and info["metadata"] == {"note": "x"}
        # byte-identical re-save proves the round trip is lossless
        path2 = tmp_path / f"{kind}2.json"
        models.save_checkpoint(path2, loaded, seed=5, metadata={"note": "x"})
        assert path.read_bytes() == path2.read_bytes()
        # and the reloaded model computes the same function
        if kind == "node_mlp":
            kw = dict(init_obs=rng.standard_normal((1, 3)), n_steps=3)
        else:
            kw = dict(inputs=rng.standard_normal((1, 3, 2)))
        a, _ = models.forward_sequence(model, _cfg(), **kw)
        b, _ = models.forward_sequence(loaded, _cfg(), **kw)
        np.testing.assert_array_equal(a, b)


def test_checkpoint_rejects_other_schemas(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema": "something-else"}))
    with pytest.raises(ValueError, match="schema"):
        models.load_checkpoint(p)


def test_lrcu_at_unit_dt_equals_one_euler_unfolding_of_lrc():
    rng = np.random.default_rng(12)
    model = models.make_model("lrc", 4, 2, 2, rng, elastance_kind="asymmetric")
    x = rng.standard_normal((2, 6, 2))
    euler1 = solvers.SolverConfig(scheme=solvers.EULER, dt=1.0, unfoldings=1)
    out_lrc, _ = models.forward_sequence(model, euler1, inputs=x)
    discrete = models.Model("lrcu", model.cell, model.output)
    out_lrcu, _ = models.forward_sequence(discrete, euler1, inputs=x)
    np.testing.assert_array_equal(out_lrc, out_lrcu)
