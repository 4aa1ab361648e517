"""Gaussian MLP policy and the REINFORCE learner used inside one stationary period."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import envs
from .numerics import NetworkParams, ShapeError, forward, forward_backward, init_params, mlp_sizes

STATE_DIM = 2
ACTION_DIM = 2
INIT_STD = 0.05
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianPolicy:
    """Mean action from a ReLU network, state-independent learnable log std."""

    net: NetworkParams
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std.shape != (self.net.d_out,):
            raise ShapeError("log_std must have one entry per action dimension")

    @classmethod
    def init(cls, rng: np.random.Generator, init_std: float = INIT_STD) -> "GaussianPolicy":
        net = init_params(mlp_sizes(STATE_DIM, ACTION_DIM), rng)
        return cls(net, np.full(ACTION_DIM, math.log(init_std)))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.net.flat, self.log_std])

    @classmethod
    def from_flat(cls, flat, sizes=None) -> "GaussianPolicy":
        sizes = mlp_sizes(STATE_DIM, ACTION_DIM) if sizes is None else tuple(sizes)
        flat = np.asarray(flat, dtype=np.float64)
        d_out = sizes[-1]
        return cls(NetworkParams(flat[:-d_out].copy(), sizes), flat[-d_out:].copy())

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.net.copy(), self.log_std.copy())

    def mean(self, s) -> np.ndarray:
        return forward(self.net, s)

    def __call__(self, s, rng):
        return sample_action(self, s, rng)[0]


def log_prob(policy: GaussianPolicy, s, a_raw) -> np.ndarray:
    """Log density of raw (unclipped) actions under the policy."""
    mu = policy.mean(s)
    z = (np.asarray(a_raw, dtype=np.float64) - mu) / policy.std
    return np.sum(-0.5 * z * z - policy.log_std - 0.5 * _LOG_2PI, axis=-1)


def sample_action(policy: GaussianPolicy, s, rng: np.random.Generator):
    """Draw ``a_raw ~ N(mean(s), diag(std^2))``; returns ``(a_raw, logp)``.

    Works for a single state ``(2,)`` or a batch ``(n, 2)``.
    """
    mu = policy.mean(s)
    z = rng.standard_normal(mu.shape)
    a_raw = mu + policy.std * z
    logp = np.sum(-0.5 * z * z - policy.log_std - 0.5 * _LOG_2PI, axis=-1)
    return a_raw, logp


def log_prob_grad(policy: GaussianPolicy, states, actions, weights=None) -> np.ndarray:
    """Gradient of ``sum_k weights[k] * log pi(actions[k] | states[k])`` w.r.t. ``policy.flat()``."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    w = np.ones(len(states)) if weights is None else np.asarray(weights, dtype=np.float64)
    std = policy.std

    def cotangent(mu):
        return w[:, None] * (actions - mu) / std ** 2

    mu, g_net = forward_backward(policy.net, states, cotangent)
    z = (actions - mu) / std
    g_log_std = np.sum(w[:, None] * (z * z - 1.0), axis=0)
    return np.concatenate([g_net, g_log_std])


@dataclass
class EpisodeBatch:
    """``n_episodes`` lockstep episodes padded to the horizon; ``mask`` marks real steps."""

    states: np.ndarray      # (n_episodes, H, 2)
    actions: np.ndarray     # (n_episodes, H, 2) raw, pre-clipping
    rewards: np.ndarray     # (n_episodes, H)
    next_states: np.ndarray  # (n_episodes, H, 2)
    logp: np.ndarray        # (n_episodes, H)
    mask: np.ndarray        # (n_episodes, H) bool
    discount: float

    @property
    def n_episodes(self) -> int:
        return self.states.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def returns(self) -> np.ndarray:
        """Undiscounted per-episode returns."""
        return np.sum(self.rewards * self.mask, axis=1)

    def discounted_returns(self) -> np.ndarray:
        disc = self.discount ** np.arange(self.rewards.shape[1])
        return np.sum(self.rewards * self.mask * disc, axis=1)


def collect_batch(policy: GaussianPolicy, config: envs.NavConfig, n_episodes: int, horizon: int,
                  discount: float, rng: np.random.Generator, start=envs.START,
                  control_cost: float = envs.CONTROL_COST) -> EpisodeBatch:
    """Roll out ``n_episodes`` episodes side by side.

    Noise is drawn for all ``n_episodes`` rows at every step, finished or not, so the
    random stream consumed depends only on ``(n_episodes, horizon)`` and early stops.
    """
    if n_episodes < 1:
        raise ValueError("batch size must be >= 1")
    states = np.zeros((n_episodes, horizon, 2))
    actions = np.zeros((n_episodes, horizon, 2))
    rewards = np.zeros((n_episodes, horizon))
    next_states = np.zeros((n_episodes, horizon, 2))
    logp = np.zeros((n_episodes, horizon))
    mask = np.zeros((n_episodes, horizon), dtype=bool)
    s = np.tile(np.asarray(start, dtype=np.float64), (n_episodes, 1))
    active = np.ones(n_episodes, dtype=bool)
    for t in range(horizon):
        a_raw, lp = sample_action(policy, s, rng)
        _, r, s_next, done = envs.step_batch(config, s, a_raw, control_cost)
        states[:, t] = s
        actions[:, t] = a_raw
        rewards[:, t] = r
        next_states[:, t] = s_next
        logp[:, t] = lp
        mask[:, t] = active
        active = active & ~done
        s = np.where(active[:, None], s_next, s)
        if not active.any():
            break
    return EpisodeBatch(states, actions, rewards, next_states, logp, mask, discount)


def discounted_return(episode, discount: float) -> float:
    """``sum_i discount^i r_i`` for a list of transitions or of rewards."""
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must be in [0, 1)")
    rewards = [tr.r if isinstance(tr, envs.Transition) else float(tr) for tr in episode]
    return float(sum(r * discount ** i for i, r in enumerate(rewards)))


def policy_gradient(policy: GaussianPolicy, batch: EpisodeBatch) -> np.ndarray:
    """``(1/n_episodes) sum_i grad log pi(episode_i) * (R_i - mean R)`` over the batch."""
    R = batch.discounted_returns()
    adv = R - R.mean()
    weights = np.broadcast_to(adv[:, None], batch.mask.shape)[batch.mask]
    g = log_prob_grad(policy, batch.states[batch.mask], batch.actions[batch.mask], weights)
    return g / batch.n_episodes


def step_scale(batch: EpisodeBatch) -> float:
    """Positive factor ``1 / (std(R) * mean episode length)`` applied to the gradient.

    Keeps the step length independent of the reward scale and the horizon.
    Zero when every return in the batch is identical.
    """
    sd = batch.discounted_returns().std()
    if sd == 0.0:
        return 0.0
    return 1.0 / (sd * batch.lengths.mean())


def reinforce_update(policy: GaussianPolicy, batch: EpisodeBatch, lr: float,
                     normalize: bool = True) -> GaussianPolicy:
    """One ascent step along the batch policy gradient.

    With ``normalize`` the gradient is multiplied by :func:`step_scale`; the
    direction is unchanged. Raises without updating on a non-finite gradient.
    """
    g = policy_gradient(policy, batch)
    if normalize:
        g = g * step_scale(batch)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite policy gradient; update not applied")
    return GaussianPolicy.from_flat(policy.flat() + lr * g, policy.net.sizes)


def train_in_env(policy: GaussianPolicy, config: envs.NavConfig, iterations: int, n_episodes: int,
                 lr: float, discount: float, rng: np.random.Generator, horizon: int = 100,
                 start=envs.START, control_cost: float = envs.CONTROL_COST,
                 normalize: bool = True):
    """``iterations`` rounds of collect-then-update.

    Returns the final policy and the learning curve: the mean undiscounted
    return of each iteration's batch (collected before that iteration's update).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    curve = []
    for _ in range(iterations):
        batch = collect_batch(policy, config, n_episodes, horizon, discount, rng, start, control_cost)
        curve.append(float(batch.returns().mean()))
        policy = reinforce_update(policy, batch, lr, normalize)
    return policy, curve
