"""Training machinery: losses, Adam, schedules, transforms, both protocols."""

import numpy as np
import pytest

from lrcnet import models, solvers, tasks, train


def test_mse_loss_value_and_gradient():
    out = np.array([[1.0, 2.0], [3.0, 4.0]])
    tgt = np.array([[1.0, 1.0], [1.0, 1.0]])
    val, grad = train.mse_loss(out, tgt)
    np.testing.assert_allclose(val, np.mean((out - tgt) ** 2))
    np.testing.assert_allclose(grad, 2.0 * (out - tgt) / out.size)


def test_mean_l2_loss_matches_definition_and_subgradient():
    out = np.array([[3.0, 4.0], [0.0, 0.0]])
    tgt = np.zeros((2, 2))
    val, grad = train.mean_l2_loss(out, tgt)
    np.testing.assert_allclose(val, (5.0 + 0.0) / 2)
    np.testing.assert_allclose(grad[0], np.array([3.0, 4.0]) / 5.0 / 2)
    np.testing.assert_array_equal(grad[1], 0.0)       # zero-error row: zero


def test_softmax_cross_entropy_gradient_is_probs_minus_onehot():
    logits = np.array([[2.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    labels = np.array([0, 2])
    val, grad = train.softmax_cross_entropy(logits, labels)
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    p = z / z.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(p)
    onehot[np.arange(2), labels] = 1.0
    np.testing.assert_allclose(grad, (p - onehot) / 2, rtol=1e-12)
    np.testing.assert_allclose(val, -np.mean(np.log(p[np.arange(2), labels])))


def test_adam_first_step_moves_by_lr():
    # with fresh moments the first Adam update is -lr * sign(g) (eps aside)
    p = {"w": np.array([1.0, -1.0])}
    g = {"w": np.array([0.5, -0.25])}
    opt = train.Adam(lr=0.1)
    opt.step(p, g)
    np.testing.assert_allclose(p["w"], [1.0 - 0.1, -1.0 + 0.1], atol=1e-6)


def test_adam_matches_hand_computed_two_steps():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = {"w": np.array([0.3])}
    opt = train.Adam(lr=lr, beta1=b1, beta2=b2, eps=eps)
    w, m, v = 0.3, 0.0, 0.0
    for t, g in enumerate([0.2, -0.4], start=1):
        opt.step(p, {"w": np.array([g])})
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    np.testing.assert_allclose(p["w"], [w], rtol=1e-13)


def test_adamw_decay_is_decoupled():
    p_wd = {"w": np.array([1.0])}
    p_no = {"w": np.array([1.0])}
    g = {"w": np.array([0.0])}
    train.Adam(lr=0.1, weight_decay=0.5).step(p_wd, g)
    train.Adam(lr=0.1, weight_decay=0.0).step(p_no, g)
    # zero gradient: only the multiplicative decay acts
    np.testing.assert_allclose(p_wd["w"], [1.0 * (1 - 0.1 * 0.5)], rtol=1e-12)
    np.testing.assert_allclose(p_no["w"], [1.0])


def test_adam_rejects_non_finite_gradients():
    opt = train.Adam()
    with pytest.raises(FloatingPointError, match="non-finite"):
        opt.step({"w": np.ones(1)}, {"w": np.array([np.nan])})


def test_optimizer_factory_and_schedules():
    assert train._make_optimizer("adam", 1e-3, 0.7).weight_decay == 0.0
    assert train._make_optimizer("adamw", 1e-3, 0.7).weight_decay == 0.7
    with pytest.raises(ValueError, match="unknown optimizer"):
        train._make_optimizer("sgd", 1e-3, 0.0)
    assert train.cosine_decay(0, 100) == 1.0
    np.testing.assert_allclose(train.cosine_decay(50, 100), 0.5, atol=1e-12)
    assert train.cosine_decay(100, 100) < 1e-12
    assert train.constant_schedule(99, 100) == 1.0


def test_transforms_round_trip():
    rng = np.random.default_rng(0)
    x = np.exp(rng.standard_normal((50, 3)))
    for name in ("none", "standardize", "log-standardize"):
        fwd, inv, stats = train.make_transform(name, x)
        np.testing.assert_allclose(inv(fwd(x)), x, rtol=1e-12)
        if name != "none":
            z = fwd(x)
            np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
            np.testing.assert_allclose(z.std(axis=0), 1.0, rtol=1e-12)


def test_transform_validation():
    with pytest.raises(ValueError, match="strictly positive"):
        train.make_transform("log-standardize", np.array([[1.0], [-1.0]]))
    with pytest.raises(ValueError, match="constant dimension"):
        train.make_transform("standardize", np.ones((5, 2)))
    with pytest.raises(ValueError, match="unknown transform"):
        train.make_transform("whiten", np.ones((5, 2)))


def test_delay_state_matrix_indices():
    vals = np.arange(12.0).reshape(6, 2)
    H = train.delay_state_matrix(vals, lags=3, delta=2)
    assert H.shape == (6, 6)
    # row 4 stacks x4, x2, x0
    np.testing.assert_array_equal(H[4], np.concatenate([vals[4], vals[2], vals[0]]))
    # early rows saturate at the first observation
    np.testing.assert_array_equal(H[1], np.concatenate([vals[1], vals[0], vals[0]]))
    np.testing.assert_array_equal(H[0], np.tile(vals[0], 3))


def test_make_delay_model_frozen_maps():
    rng = np.random.default_rng(1)
    model = train.make_delay_model("lrcu", 8, 2, rng, elastance_kind="asymmetric",
                                   e_l_init=8.0)
    obs = rng.standard_normal((3, 2))
    # the lift tiles the observation into every lag slot
    np.testing.assert_array_equal(model.input_map(obs), np.tile(obs, 4))
    # the readout returns the newest slot
    h = rng.standard_normal((3, 8))
    np.testing.assert_array_equal(model.output(h), h[:, :2])
    np.testing.assert_array_equal(model.cell.e_l, 8.0)
    with pytest.raises(ValueError, match="multiple"):
        train.make_delay_model("lrcu", 7, 2, rng)


def test_write_loss_curve_format(tmp_path):
    p = tmp_path / "curve.csv"
    train.write_loss_curve(p, [(0, 1.5, 2.5, 10.0), (1, 1.0, 2.0, 20.0)])
    lines = p.read_text().splitlines()
    assert lines[0] == "iteration,train_loss,eval_loss,wall_time_ms"
    assert lines[1].startswith("0,1.5,2.5,")


def _tiny_traj(n=160):
    return tasks.generate("sinusoid", n_samples=n)


def test_delay_protocol_learns_and_reports():
    traj = _tiny_traj()
    cfg = train.OdeTrainConfig(iterations=150, m=8, delta=4, dt=0.1,
                               elastance_kind="asymmetric", scheme=solvers.EULER,
                               unfoldings=2, lr=3e-3, e_l_init=8.0,
                               transform="standardize", eval_every=75, seed=0)
    res = train.train_ode_task(traj, "lrcu", cfg)
    assert res.extra["protocol"] == "delay"
    assert res.extra["transform"] == "standardize"
    losses = res.extra["train_losses"]
    assert losses.shape == (150,)
    # optimization moved: late train loss well under the first iterations
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:5])
    assert np.isfinite(res.final_eval) and res.h_bound.shape == (8,)
    assert len(res.curve) >= 2
    # the returned model evaluates to the reported number
    out, _ = models.forward_sequence(res.model, res.solver,
                                     init_obs=(traj.values - res.extra["mu"]) / res.extra["sd"],
                                     n_steps=len(traj.values), dts=res.solver.dt)
    assert out.shape[-2] == len(traj.values)


def test_anchored_protocol_learns():
    traj = _tiny_traj()
    cfg = train.OdeTrainConfig(iterations=120, protocol="anchored",
                               scheme=solvers.RK4, dt=0.1, window=8,
                               batch_size=8, lr=3e-3, mlp_hidden=(16,),
                               transform="standardize", eval_every=60, seed=0)
    res = train.train_ode_task(traj, "node_mlp", cfg)
    assert res.extra["protocol"] == "anchored"
    losses = res.extra["train_losses"]
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:5])
    assert np.isfinite(res.final_eval)


def test_protocol_dispatch_and_validation():
    traj = _tiny_traj(60)
    cfg = train.OdeTrainConfig(iterations=1, protocol="delay")
    with pytest.raises(ValueError, match="recurrent"):
        train.train_ode_task(traj, "node_mlp", cfg)
    cfg = train.OdeTrainConfig(iterations=1, protocol="sliding")
    with pytest.raises(ValueError, match="unknown protocol"):
        train.train_ode_task(traj, "lrc", cfg)
    # horizons longer than the data are rejected up front
    cfg = train.OdeTrainConfig(iterations=1, m=4, delta=1,
                               horizons=((2, 100, False),))
    with pytest.raises(ValueError, match="horizon"):
        train.train_ode_task(tasks.generate("sinusoid", n_samples=50), "lrcu", cfg)


def test_training_is_deterministic_in_seed():
    traj = _tiny_traj(100)
    cfg = train.OdeTrainConfig(iterations=25, m=8, delta=2, dt=0.1,
                               transform="standardize", seed=7,
                               eval_every=1000)
    a = train.train_ode_task(traj, "lrcu", cfg)
    b = train.train_ode_task(traj, "lrcu", cfg)
    for k, v in a.model.named_parameters().items():
        np.testing.assert_array_equal(v, b.model.named_parameters()[k])
    assert a.final_eval == b.final_eval


def test_ema_writes_back_averaged_parameters():
    traj = _tiny_traj(100)
    base = dict(iterations=30, m=8, delta=2, dt=0.1, transform="standardize",
                seed=3, eval_every=1000)
    plain = train.train_ode_task(traj, "lrcu", train.OdeTrainConfig(**base))
    ema = train.train_ode_task(traj, "lrcu", train.OdeTrainConfig(ema=0.9, **base))
    diffs = [np.abs(plain.model.named_parameters()[k] - v).max()
             for k, v in ema.model.named_parameters().items() if k.startswith("cell.")]
    assert max(diffs) > 0


def test_benchmark_recipe_table():
    assert set(train.ODE_BENCHMARK_TASKS) == set(tasks.SYSTEMS)
    budgets = sorted(train.ode_benchmark_config(t, "lrc").iterations
                     for t in train.ODE_BENCHMARK_TASKS)
    assert budgets == [1000, 1000, 2000, 2000, 4000, 4000]
    node = train.ode_benchmark_config("spiral", "node_mlp")
    assert node.protocol == "anchored" and node.scheme == solvers.RK4
    lrc = train.ode_benchmark_config("spiral", "lrc", seed=4)
    assert lrc.seed == 4 and lrc.m == 16 and lrc.protocol == "auto"
    with pytest.raises(KeyError, match="unknown benchmark task"):
        train.ode_benchmark_config("lorenz", "lrc")


def test_sequence_classifier_reaches_high_accuracy_quickly():
    ds = tasks.synthetic_irregular_classification(n_sequences=120, length=16, seed=0)
    cfg = train.SeqTrainConfig(epochs=16, m=8, model_kind="lrcu",
                               elastance_kind="symmetric", lr=0.02, seed=0,
                               batch_size=32)
    res = train.train_sequence_task(ds, cfg)
    assert res.final_eval >= 0.8          # test accuracy on an easy instance
    assert res.extra["val_accuracy"] >= 0.8
