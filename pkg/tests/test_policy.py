import math

import numpy as np
import pytest

from llirl import envs
from llirl.envs import NavConfig
from llirl.numerics import NetworkParams, init_params, param_count
from llirl.policy import (
    GaussianPolicy,
    collect_batch,
    discounted_return,
    log_prob,
    log_prob_grad,
    policy_gradient,
    reinforce_update,
    sample_action,
    train_in_env,
)

from .oracles import central_diff, max_rel_error


def _small_policy(seed, log_std=(-1.0, -0.5)):
    rng = np.random.default_rng(seed)
    net = init_params((2, 8, 8, 2), rng)
    net.flat += rng.normal(0, 0.1, net.flat.shape)
    return GaussianPolicy(net, np.array(log_std))


def _zero_policy(log_std=0.0):
    sizes = (2, 4, 2)
    return GaussianPolicy(NetworkParams(np.zeros(param_count(sizes)), sizes), np.full(2, log_std))


def test_logp_standard_normal_at_zero():
    lp = log_prob(_zero_policy(), [0.3, 0.3], [0.0, 0.0])
    assert lp == pytest.approx(-math.log(2 * math.pi), abs=1e-14)


def test_tiny_std_samples_the_mean():
    pol = _small_policy(0, log_std=(math.log(1e-8),) * 2)
    s = np.array([0.4, 0.2])
    a, _ = sample_action(pol, s, np.random.default_rng(0))
    np.testing.assert_allclose(a, pol.mean(s), atol=1e-6)


def test_sample_logp_matches_density():
    pol = _small_policy(1)
    states = np.random.default_rng(2).uniform(size=(5, 2))
    a, lp = sample_action(pol, states, np.random.default_rng(3))
    np.testing.assert_allclose(lp, log_prob(pol, states, a), rtol=1e-12)
    b, lp2 = sample_action(pol, states, np.random.default_rng(3))
    assert np.array_equal(a, b) and np.array_equal(lp, lp2)


def test_discounted_return_examples():
    assert discounted_return([0.0, 0.0, 0.0], 0.99) == 0.0
    assert discounted_return([-1.0, -1.0], 0.99) == pytest.approx(-1.99, abs=1e-12)
    assert discounted_return([-3.0, -5.0, 7.0], 0.0) == -3.0
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.0)


@pytest.mark.parametrize("seed", range(4))
def test_log_prob_grad_finite_differences(seed):
    pol = _small_policy(seed)
    rng = np.random.default_rng(seed + 10)
    states = rng.uniform(size=(6, 2))
    actions = rng.normal(0, 0.2, size=(6, 2))
    weights = rng.normal(size=6)
    g = log_prob_grad(pol, states, actions, weights)

    def objective(flat):
        return float(weights @ log_prob(GaussianPolicy.from_flat(flat, pol.net.sizes), states, actions))

    fd = central_diff(objective, pol.flat())
    assert max_rel_error(g, fd) < 1e-4


def test_log_prob_grad_full_size_policy_sampled_coordinates():
    pol = GaussianPolicy.init(np.random.default_rng(0))
    rng = np.random.default_rng(1)
    states = rng.uniform(size=(4, 2))
    actions = pol.mean(states) + rng.normal(0, 0.05, size=(4, 2))
    g = log_prob_grad(pol, states, actions)
    idx = np.r_[rng.choice(pol.flat().size - 2, 200, replace=False), pol.flat().size - 2, pol.flat().size - 1]
    fd = central_diff(lambda f: float(np.sum(log_prob(GaussianPolicy.from_flat(f), states, actions))),
                      pol.flat(), idx)
    assert max_rel_error(g[idx], fd) < 1e-4


def _batch(pol, cfg, n=8, horizon=20, seed=0):
    return collect_batch(pol, cfg, n, horizon, 0.99, np.random.default_rng(seed))


def test_equal_returns_leave_policy_unchanged():
    pol = _small_policy(0)
    batch = _batch(pol, NavConfig(1, (0.8, 0.6)), n=4, horizon=5)
    batch.rewards[...] = 0.0
    batch.rewards[:, 0] = -1.0
    assert np.array_equal(policy_gradient(pol, batch), np.zeros(pol.flat().size))
    for normalize in (True, False):
        assert np.array_equal(reinforce_update(pol, batch, 0.02, normalize).flat(), pol.flat())


def test_one_step_episodes_match_hand_gradient():
    pol = _small_policy(3)
    cfg = NavConfig(1, (0.9, 0.9))
    batch = collect_batch(pol, cfg, 2, 1, 0.99, np.random.default_rng(4))
    alpha = 0.02
    new = reinforce_update(pol, batch, alpha, normalize=False)

    s = batch.states[:, 0]
    a = batch.actions[:, 0]
    r = batch.rewards[:, 0]
    adv = r - r.mean()
    z = (a - pol.mean(s)) / pol.std
    # output-layer bias gradient of log pi is (a - mu) / std^2; log-std gradient is z^2 - 1
    bias_grad = np.mean(adv[:, None] * z / pol.std, axis=0)
    log_std_grad = np.mean(adv[:, None] * (z * z - 1.0), axis=0)
    np.testing.assert_allclose(new.net.layers()[-1][1] - pol.net.layers()[-1][1], alpha * bias_grad, rtol=1e-10)
    np.testing.assert_allclose(new.log_std - pol.log_std, alpha * log_std_grad, rtol=1e-10)


def test_baseline_invariance():
    pol = _small_policy(5)
    batch = _batch(pol, NavConfig(1, (0.8, 0.6)))
    g = policy_gradient(pol, batch)
    batch.rewards[:, 0] += 7.5  # every discounted return shifts by the same constant
    np.testing.assert_allclose(policy_gradient(pol, batch), g, rtol=1e-9, atol=1e-12)


def _expected_one_step_return(pol, cfg, n=20000, seed=0):
    rng = np.random.default_rng(seed)
    s = np.tile(envs.START, (n, 1))
    a, _ = sample_action(pol, s, rng)
    _, r, _, _ = envs.step_batch(cfg, s, a, envs.CONTROL_COST)
    return r.mean()


def test_update_moves_toward_goal_on_one_step_task():
    pol = GaussianPolicy.init(np.random.default_rng(0))
    cfg = NavConfig(1, (0.9, 0.0))
    batch = collect_batch(pol, cfg, 256, 1, 0.99, np.random.default_rng(1))
    new = reinforce_update(pol, batch, 0.02)
    shift = new.mean(envs.START) - pol.mean(envs.START)
    assert shift[0] > 0
    assert _expected_one_step_return(new, cfg) > _expected_one_step_return(pol, cfg)


def test_nonfinite_gradient_rejected():
    pol = _small_policy(0)
    batch = _batch(pol, NavConfig(1, (0.8, 0.6)))
    batch.rewards[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        reinforce_update(pol, batch, 0.02)


def test_train_curve_length_and_determinism():
    cfg = NavConfig(1, (0.7, 0.7))
    pol = GaussianPolicy.init(np.random.default_rng(0))
    _, c1 = train_in_env(pol, cfg, 1, 4, 0.02, 0.99, np.random.default_rng(1))
    assert len(c1) == 1
    p2, c2 = train_in_env(pol, cfg, 3, 4, 0.02, 0.99, np.random.default_rng(1))
    p3, c3 = train_in_env(pol, cfg, 3, 4, 0.02, 0.99, np.random.default_rng(1))
    assert c2 == c3 and np.array_equal(p2.flat(), p3.flat())
    with pytest.raises(ValueError):
        train_in_env(pol, cfg, 0, 4, 0.02, 0.99, np.random.default_rng(1))


def test_learning_progress_fixed_goal():
    cfg = NavConfig(1, (0.2, 0.8))
    pol = GaussianPolicy.init(np.random.default_rng(0))
    _, curve = train_in_env(pol, cfg, 100, 16, 0.02, 0.99, np.random.default_rng(1))
    assert np.mean(curve[-10:]) > np.mean(curve[:10])
    floor = -100 * (2.0 + envs.CONTROL_COST * envs.MAX_ACTION * math.sqrt(2))
    assert all(math.isfinite(v) and v >= floor for v in curve)
