"""2D point navigation in the unit square, with optional circular puddles.

Three families of dynamic environments are produced by :func:`generate_sequence`:

* type 1: the goal moves, no puddles (the reward function changes);
* type 2: three puddles move, the goal stays put (the transition function changes);
* type 3: both move.

Hitting a puddle bounces the agent back to where it was.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MAX_ACTION = 0.1
GOAL_TOLERANCE = 0.01
CONTROL_COST = 0.1
START = (0.5, 0.0)
DEFAULT_GOAL = (0.9, 0.9)
PUDDLE_RADII = (0.05, 0.10, 0.15)
ENV_TYPES = (1, 2, 3)


@dataclass(frozen=True)
class Puddle:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class NavConfig:
    env_type: int
    goal: tuple[float, float]
    puddles: tuple[Puddle, ...] = ()

    def to_dict(self) -> dict:
        return {
            "env_type": self.env_type,
            "goal": [float(v) for v in self.goal],
            "puddles": [
                {"center": [float(v) for v in p.center], "radius": float(p.radius)}
                for p in self.puddles
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NavConfig":
        return cls(
            env_type=int(d["env_type"]),
            goal=tuple(float(v) for v in d["goal"]),
            puddles=tuple(
                Puddle(tuple(float(v) for v in p["center"]), float(p["radius"]))
                for p in d.get("puddles", [])
            ),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "NavConfig":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


def in_puddle(config: NavConfig, s: np.ndarray) -> np.ndarray:
    """Boolean mask over the leading axes of ``s``: inside any puddle."""
    s = np.asarray(s, dtype=np.float64)
    hit = np.zeros(s.shape[:-1], dtype=bool)
    for p in config.puddles:
        d2 = np.sum((s - np.asarray(p.center)) ** 2, axis=-1)
        hit |= d2 < p.radius ** 2
    return hit


def step_batch(config: NavConfig, s, a_raw, control_cost: float = CONTROL_COST):
    """Vectorized dynamics for states ``(n, 2)`` and raw actions ``(n, 2)``.

    Returns ``(a, r, s_next, done)`` where ``a`` is the clipped action.
    """
    s = np.asarray(s, dtype=np.float64)
    a = np.clip(np.asarray(a_raw, dtype=np.float64), -MAX_ACTION, MAX_ACTION)
    tentative = np.clip(s + a, 0.0, 1.0)
    bounce = in_puddle(config, tentative)
    s_next = np.where(bounce[..., None], s, tentative)
    dist2 = np.sum((s_next - np.asarray(config.goal)) ** 2, axis=-1)
    r = -dist2 - control_cost * np.sqrt(np.sum(a * a, axis=-1))
    done = dist2 < GOAL_TOLERANCE ** 2
    return a, r, s_next, done


def step(config: NavConfig, s, a_raw, control_cost: float = CONTROL_COST) -> Transition:
    s = np.asarray(s, dtype=np.float64)
    a, r, s_next, done = step_batch(config, s[None], np.asarray(a_raw)[None], control_cost)
    return Transition(s.copy(), a[0], float(r[0]), s_next[0], bool(done[0]))


def rollout_episode(config: NavConfig, policy, horizon: int, rng: np.random.Generator,
                    start=START, control_cost: float = CONTROL_COST) -> list[Transition]:
    """Run ``policy(s, rng) -> a_raw`` from ``start`` until the goal or ``horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s = np.asarray(start, dtype=np.float64)
    episode = []
    for _ in range(horizon):
        tr = step(config, s, policy(s, rng), control_cost)
        episode.append(tr)
        if tr.done:
            break
        s = tr.s_next
    return episode


@dataclass
class DynamicEnvSequence:
    configs: list[NavConfig]
    seed: int
    env_type: int
    cycled: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.configs)

    def __getitem__(self, i):
        return self.configs[i]

    def __iter__(self):
        return iter(self.configs)


def _random_goal(rng):
    return tuple(float(v) for v in rng.uniform(0.0, 1.0, size=2))


def _random_puddles(rng, start, goal) -> tuple[Puddle, ...]:
    radii = rng.permutation(PUDDLE_RADII)
    keep_clear = [np.asarray(start, dtype=np.float64), np.asarray(goal, dtype=np.float64)]
    puddles = []
    for radius in radii:
        while True:
            c = rng.uniform(0.0, 1.0, size=2)
            if all(np.linalg.norm(c - p) > radius + GOAL_TOLERANCE for p in keep_clear):
                break
        puddles.append(Puddle((float(c[0]), float(c[1])), float(radius)))
    return tuple(puddles)


def random_config(env_type: int, rng: np.random.Generator, start=START,
                  default_goal=DEFAULT_GOAL, goal=None) -> NavConfig:
    if env_type not in ENV_TYPES:
        raise ValueError(f"env_type must be one of {ENV_TYPES}, got {env_type!r}")
    if env_type == 2:
        goal = tuple(default_goal) if goal is None else tuple(goal)
    elif goal is None:
        goal = _random_goal(rng)
    puddles = () if env_type == 1 else _random_puddles(rng, start, goal)
    return NavConfig(env_type, tuple(float(v) for v in goal), puddles)


def generate_sequence(env_type: int, n_periods: int, seed: int, cycled: int | None = None,
                      goals=None, start=START, default_goal=DEFAULT_GOAL) -> DynamicEnvSequence:
    """Seeded sequence of ``n_periods`` navigation configs.

    With ``cycled=K`` only K base configs are drawn and then repeated round-robin.
    ``goals`` pins the goals of the base configs (types 1 and 3), e.g. to place
    them on well-separated points.
    """
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    rng = np.random.default_rng(seed)
    n_base = n_periods if cycled is None else int(cycled)
    if n_base < 1:
        raise ValueError("cycled must be >= 1")
    if goals is not None and len(goals) < n_base:
        raise ValueError(f"need {n_base} goals, got {len(goals)}")
    base = [
        random_config(env_type, rng, start, default_goal,
                      goal=None if goals is None else goals[k])
        for k in range(n_base)
    ]
    configs = [base[i % n_base] for i in range(n_periods)]
    return DynamicEnvSequence(configs, seed, env_type, cycled)
