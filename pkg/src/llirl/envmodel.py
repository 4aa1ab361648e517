"""Learned environment models and their Gaussian predictive likelihood.

A model maps a window of ``window`` consecutive (state, action) pairs to the
matching rewards, next states, or both, and scores data with an isotropic
Gaussian of fixed variance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .numerics import NetworkParams, ShapeError, forward, forward_backward, init_params, mlp_sizes

STATE_DIM = 2
ACTION_DIM = 2
NOISE_VAR = 3.0


class Mode(str, enum.Enum):
    REWARD = "reward"
    TRANSITION = "transition"
    JOINT = "joint"

    @property
    def y_dim(self) -> int:
        return {Mode.REWARD: 1, Mode.TRANSITION: STATE_DIM, Mode.JOINT: 1 + STATE_DIM}[self]

    @classmethod
    def for_env_type(cls, env_type: int) -> "Mode":
        return {1: cls.REWARD, 2: cls.TRANSITION, 3: cls.JOINT}[int(env_type)]


@dataclass
class WindowedDataset:
    X: np.ndarray  # (N, window * (dim_s + dim_a))
    Y: np.ndarray  # (N, window * y_dim)

    def __len__(self):
        return self.X.shape[0]

    def concat(self, other: "WindowedDataset") -> "WindowedDataset":
        return WindowedDataset(np.concatenate([self.X, other.X]), np.concatenate([self.Y, other.Y]))

    @classmethod
    def concatenate(cls, parts) -> "WindowedDataset":
        parts = list(parts)
        return cls(np.concatenate([p.X for p in parts]), np.concatenate([p.Y for p in parts]))


def _windows(arr: np.ndarray, window: int) -> np.ndarray:
    # (n, k) -> (n - window + 1, window * k), rows ordered oldest first
    w = np.lib.stride_tricks.sliding_window_view(arr, window, axis=0)  # (n-window+1, k, window)
    return np.ascontiguousarray(w.transpose(0, 2, 1)).reshape(w.shape[0], -1)


def build_dataset_arrays(states, actions, rewards, next_states, mode: Mode, window: int) -> WindowedDataset:
    """Windowed samples from one episode given as arrays.

    ``actions`` are the executed (clipped) actions.
    """
    mode = Mode(mode)
    states = np.asarray(states, dtype=np.float64).reshape(-1, STATE_DIM)
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, ACTION_DIM)
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1, 1)
    next_states = np.asarray(next_states, dtype=np.float64).reshape(-1, STATE_DIM)
    n = states.shape[0]
    in_dim = window * (STATE_DIM + ACTION_DIM)
    out_dim = window * mode.y_dim
    if window < 1:
        raise ValueError("window length window must be >= 1")
    if n < window:
        return WindowedDataset(np.zeros((0, in_dim)), np.zeros((0, out_dim)))
    X = _windows(np.hstack([states, actions]), window)
    if mode is Mode.REWARD:
        per_step = rewards
    elif mode is Mode.TRANSITION:
        per_step = next_states
    else:
        per_step = np.hstack([rewards, next_states])
    return WindowedDataset(X, _windows(per_step, window))


def build_dataset(transitions, mode: Mode, window: int) -> WindowedDataset:
    """Windowed samples (stride 1) from a single episode of transitions."""
    if len(transitions) == 0:
        return build_dataset_arrays(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0),
                                    np.zeros((0, 2)), mode, window)
    return build_dataset_arrays(
        np.array([tr.s for tr in transitions]),
        np.array([tr.a for tr in transitions]),
        np.array([tr.r for tr in transitions]),
        np.array([tr.s_next for tr in transitions]),
        mode, window,
    )


def build_dataset_episodes(episodes, mode: Mode, window: int) -> WindowedDataset:
    """Per-episode windows, concatenated; no window straddles an episode boundary."""
    return WindowedDataset.concatenate(build_dataset(ep, mode, window) for ep in episodes)


@dataclass
class EnvModel:
    net: NetworkParams
    mode: Mode
    window: int
    noise_var: float = NOISE_VAR

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.net.d_in != self.in_dim or self.net.d_out != self.out_dim:
            raise ShapeError(f"network sizes {self.net.sizes} do not fit "
                             f"mode={self.mode.value}, window={self.window}")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")

    @property
    def in_dim(self) -> int:
        return self.window * (STATE_DIM + ACTION_DIM)

    @property
    def out_dim(self) -> int:
        return self.window * self.mode.y_dim

    @classmethod
    def init(cls, mode: Mode, window: int, rng: np.random.Generator,
             noise_var: float = NOISE_VAR) -> "EnvModel":
        mode = Mode(mode)
        net = init_params(mlp_sizes(window * (STATE_DIM + ACTION_DIM), window * mode.y_dim), rng)
        return cls(net, mode, window, noise_var)

    @classmethod
    def init_mean(cls, mode: Mode, window: int, rng: np.random.Generator, data: WindowedDataset,
                  noise_var: float = NOISE_VAR) -> "EnvModel":
        """Random hidden layers, zero output weights, output bias at the mean target of ``data``.

        The model predicts the average outcome everywhere until trained.
        """
        model = cls.init(mode, window, rng, noise_var)
        W, b = model.net.layers()[-1]
        W[...] = 0.0
        b[...] = data.Y.mean(axis=0)
        return model

    def copy(self) -> "EnvModel":
        return EnvModel(self.net.copy(), self.mode, self.window, self.noise_var)

    def with_params(self, flat) -> "EnvModel":
        return EnvModel(NetworkParams(flat, self.net.sizes), self.mode, self.window, self.noise_var)

    def predict(self, X) -> np.ndarray:
        return forward(self.net, X)


def _check(model: EnvModel, data: WindowedDataset):
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.X.shape[1] != model.in_dim or data.Y.shape[1] != model.out_dim:
        raise ShapeError(
            f"dataset widths {(data.X.shape[1], data.Y.shape[1])} != model {(model.in_dim, model.out_dim)}"
        )


def log_likelihood(model: EnvModel, data: WindowedDataset) -> float:
    """Sum over samples of the Gaussian log density of ``Y`` around the prediction."""
    _check(model, data)
    resid = data.Y - model.predict(data.X)
    d = model.out_dim
    n = len(data)
    sq = float(np.sum(resid * resid))
    return -sq / (2.0 * model.noise_var) - n * 0.5 * d * math.log(2.0 * math.pi * model.noise_var)


def nll_and_gradient(model: EnvModel, data: WindowedDataset):
    """``(-log_likelihood, gradient of it w.r.t. the network parameters)``."""
    _check(model, data)
    pred, grad = forward_backward(model.net, data.X, lambda out: (out - data.Y) / model.noise_var)
    resid = data.Y - pred
    d = model.out_dim
    nll = float(np.sum(resid * resid)) / (2.0 * model.noise_var) + len(data) * 0.5 * d * math.log(
        2.0 * math.pi * model.noise_var
    )
    return nll, grad


def nll_gradient(model: EnvModel, data: WindowedDataset) -> np.ndarray:
    return nll_and_gradient(model, data)[1]
