import math

import numpy as np
import pytest

import oodrl


def test_auc_examples():
    assert oodrl.auc([0.1, 0.2], [0.3, 0.4])["auc"] == 1.0
    assert oodrl.auc([0.3], [0.3])["auc"] == 0.5
    r = oodrl.auc([0.1, 0.4], [0.2, 0.5])
    assert r["auc"] == 0.75
    assert r["points"][0][2] == math.inf
    with pytest.raises(oodrl.DataError):
        oodrl.auc([], [1.0])


def test_aggregate_matches_published_column():
    a = oodrl.aggregate([0.737, 0.688, 0.652, 0.780, 0.703])
    assert abs(a["mean"] - 0.712) < 5e-4
    assert abs(a["std"] - 0.049) < 5e-4
    assert oodrl.aggregate([0.5])["single_trial"]


def test_cartpole_push_from_rest():
    state, reward, terminated = oodrl.cartpole_step([0, 0, 0, 0], 1)
    assert state == pytest.approx([0.0, 0.19512, 0.0, -0.29268], abs=1e-4)
    assert reward == 1.0 and not terminated
    heavy, _, _ = oodrl.cartpole_step([0, 0, 0.1, 0], 1, {"gravity": 78.4})
    light, _, _ = oodrl.cartpole_step([0, 0, 0.1, 0], 1)
    assert heavy[3] > light[3]


def test_pendulum_clamps_torque():
    _, reward, applied = oodrl.pendulum_step([0.0, 0.0], 100.0)
    assert applied == 2.0
    assert reward == pytest.approx(-0.004)


def test_corruptions():
    frame = np.random.default_rng(0).random((84, 84))
    assert np.array_equal(oodrl.corrupt(frame, "pixelate", param="1"), frame)
    noisy = oodrl.corrupt(frame, "gaussian", severity=5, seed=3)
    assert noisy.shape == (84, 84)
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0
    assert np.array_equal(noisy, oodrl.corrupt(frame, "gaussian", severity=5, seed=3))
    grey = np.full((84, 84), 0.5)
    hit = oodrl.corrupt(grey, "impulse", param="0.09", seed=1)
    assert int((hit != 0.5).sum()) == 635
    assert oodrl.severity_grid("motion_blur")[2] == "15x8"
    with pytest.raises(oodrl.ConfigError):
        oodrl.corrupt(frame, "fog", severity=1)


def test_envs_and_presets():
    assert oodrl.env_ids() == ["cartpole", "pendulum", "minipong"]
    assert "cartpole/length/2" in oodrl.variant_presets("cartpole")
    env = oodrl.make_env("cartpole/length/2")
    assert env.parameters()["pole_half_length"] == 2.0
    obs = env.reset(1)
    assert len(obs) == 4
    total, done = 0.0, False
    while not done:
        obs, r, term, trunc = env.step(1)
        total += r
        done = term or trunc
    assert total >= 1.0
    pong = oodrl.make_env("minipong/impulse/0.27")
    assert len(pong.reset(0)) == pong.observation_size == 4 * 84 * 84


def test_networks_and_scores():
    net = oodrl.init_network([3, 16, 2], stochastic="dropout", rate=0.3, seed=4)
    x = np.ones((3, 5))
    det = oodrl.forward(net, x)
    assert det.shape == (2, 5)
    assert np.array_equal(det, oodrl.forward(net, x))
    assert np.array_equal(oodrl.forward(net, x, mask_seed=9), oodrl.forward(net, x, mask_seed=9))
    mean, std = oodrl.mc_score(net, [1.0, 1.0, 1.0], samples=20, seed=2)
    assert mean.shape == (2,) and (std >= 0).all()
    plain = oodrl.init_network([3, 8, 2], seed=1)
    with pytest.raises(oodrl.MethodError):
        oodrl.mc_score(plain, [1.0, 1.0, 1.0])
    members = [oodrl.init_network([3, 8, 2], seed=s) for s in range(3)]
    _, same_std = oodrl.ensemble_score([plain, plain], [0.1, 0.2, 0.3])
    assert (same_std == 0).all()
    _, spread = oodrl.ensemble_score(members, [0.1, 0.2, 0.3])
    assert (spread > 0).all()
