"""Lifelong loop over a dynamic environment: LLIRL and the continual-adaptation baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .envmodel import NOISE_VAR, EnvModel, Mode, build_dataset_episodes, log_likelihood
from .mixture import (
    ClusterLibrary,
    accumulate_mass,
    crp_prior,
    em_update,
    identify,
    maybe_expand,
    period_prior,
    posterior,
)
from .policy import GaussianPolicy, train_in_env

log = logging.getLogger(__name__)

# Every random draw comes from a generator keyed by (seed, stream, period), so
# runs can be resumed mid-sequence and the baseline never shares draws with
# the environment-model machinery.
STREAMS = {"policy_init": 0, "model_init": 1, "explore": 2, "policy": 3}


def stream(seed: int, name: str, period: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name], int(period)])


@dataclass
class LifelongConfig:
    iterations: int = 100
    batch_size: int = 16
    horizon: int = 100
    window: int = 4
    policy_lr: float = 0.02
    model_lr: float = 0.3
    discount: float = 0.99
    noise_var: float = NOISE_VAR
    control_cost: float = envs.CONTROL_COST
    concentration: float = 1.0
    explore_episodes: int = 5
    em_max_iters: int = 10
    em_tol: float = 1e-3
    model_steps: int = 100
    grad_norm: str = "mean"
    mass_mode: str = "posterior"
    normalize_pg: bool = True
    candidate_init: str = "mean"
    start: tuple = envs.START
    seed: int = 0
    mode: Mode | None = None  # defaults to the env type's natural mode

    def resolved_mode(self, env_type: int) -> Mode:
        return Mode(self.mode) if self.mode is not None else Mode.for_env_type(env_type)


@dataclass
class PeriodRecord:
    period: int
    cluster: int
    expanded: bool
    learning_curve: list
    em_iterations: int = 0
    em_converged: bool = True
    em_max_change: float = 0.0
    prior: list = field(default_factory=list)
    posterior: list = field(default_factory=list)
    em_posterior: list = field(default_factory=list)
    log_likelihoods: list = field(default_factory=list)
    map_loglik_before: float = float("nan")
    map_loglik_after: float = float("nan")
    n_clusters: int = 1
    config: dict = field(default_factory=dict)

    @property
    def average_return(self) -> float:
        return float(np.mean(self.learning_curve))


@dataclass
class LifelongResult:
    records: list
    library: ClusterLibrary | None = None
    method: str = "llirl"
    error: str | None = None

    @property
    def period_averages(self) -> np.ndarray:
        return np.array([r.average_return for r in self.records])

    @property
    def overall_average(self) -> float:
        return float(np.mean([v for r in self.records for v in r.learning_curve]))

    @property
    def stderr(self) -> float:
        p = self.period_averages
        if len(p) < 2:
            return 0.0
        return float(np.std(p, ddof=1) / np.sqrt(len(p)))

    @property
    def assignments(self) -> list:
        return [r.cluster for r in self.records]

    @property
    def curves(self) -> np.ndarray:
        return np.array([r.learning_curve for r in self.records])


def explore(config: envs.NavConfig, episodes: int, rng: np.random.Generator, horizon: int = 100,
            start=envs.START, control_cost: float = envs.CONTROL_COST) -> list:
    """Episodes under a uniform random policy on ``[-0.1, 0.1]^2``; one list per episode."""
    if episodes < 1:
        raise ValueError("need at least one exploration episode")

    def uniform(s, r):
        return r.uniform(-envs.MAX_ACTION, envs.MAX_ACTION, size=2)

    return [envs.rollout_episode(config, uniform, horizon, rng, start, control_cost)
            for _ in range(episodes)]


def initial_library(cfg: LifelongConfig, mode: Mode) -> ClusterLibrary:
    policy = GaussianPolicy.init(stream(cfg.seed, "policy_init", 0))
    model = EnvModel.init(mode, cfg.window, stream(cfg.seed, "model_init", 0), cfg.noise_var)
    return ClusterLibrary.create(policy, model, cfg.concentration, cfg.mass_mode)


def _train(policy, config, cfg: LifelongConfig, t: int):
    return train_in_env(policy, config, cfg.iterations, cfg.batch_size, cfg.policy_lr, cfg.discount,
                        stream(cfg.seed, "policy", t), cfg.horizon, cfg.start, cfg.control_cost,
                        cfg.normalize_pg)


def llirl_period(library: ClusterLibrary, config: envs.NavConfig, cfg: LifelongConfig) -> PeriodRecord:
    """One period of LLIRL; mutates ``library`` and returns the period's record."""
    t = library.period
    episodes = explore(config, cfg.explore_episodes, stream(cfg.seed, "explore", t), cfg.horizon,
                       cfg.start, cfg.control_cost)
    data = build_dataset_episodes(episodes, library.mode, library.window)
    if len(data) == 0:
        raise RuntimeError(f"period {t}: exploration produced fewer than h={library.window} steps")
    rng = stream(cfg.seed, "model_init", t)
    if cfg.candidate_init == "mean":
        candidate = EnvModel.init_mean(library.mode, library.window, rng, data, library.noise_var)
    else:
        candidate = EnvModel.init(library.mode, library.window, rng, library.noise_var)

    prior = crp_prior(library)
    post = posterior(library, data, candidate)
    library, expanded = maybe_expand(library, post, candidate)
    weights = period_prior(prior, expanded)
    em = em_update(library, data, weights, cfg.model_lr, cfg.em_max_iters, cfg.em_tol,
                   cfg.model_steps, cfg.grad_norm)
    cluster = identify(library, data)
    map_after = log_likelihood(library.clusters[cluster].model, data)

    policy, curve = _train(library.clusters[cluster].policy, config, cfg, t)
    library.clusters[cluster].policy = policy
    accumulate_mass(library, em.posterior if library.mass_mode == "posterior" else weights)
    return PeriodRecord(
        period=t, cluster=cluster, expanded=expanded, learning_curve=curve,
        em_iterations=em.iterations, em_converged=em.converged, em_max_change=em.max_change,
        prior=prior.tolist(), posterior=post.probs.tolist(), em_posterior=em.posterior.tolist(),
        log_likelihoods=post.log_likelihood.tolist(),
        map_loglik_before=float(em.loglik_before[cluster]), map_loglik_after=map_after,
        n_clusters=library.n_clusters, config=config.to_dict(),
    )


def run_llirl(sequence, cfg: LifelongConfig, library: ClusterLibrary | None = None,
              stop: int | None = None) -> LifelongResult:
    """Run LLIRL over ``sequence``.

    Starts at period ``library.period`` (1 for a fresh library), so a library saved
    after period ``t`` resumes at ``t + 1``. ``stop`` ends the run after that
    period. A failing period ends the run; the partial result carries the error.
    """
    env_type = sequence[0].env_type
    if library is None:
        library = initial_library(cfg, cfg.resolved_mode(env_type))
    last = len(sequence) if stop is None else min(stop, len(sequence))
    result = LifelongResult([], library, "llirl")
    while library.period <= last:
        t = library.period
        try:
            rec = llirl_period(library, sequence[t - 1], cfg)
        except Exception as exc:
            log.exception("period %d failed", t)
            result.error = f"period {t}: {type(exc).__name__}: {exc}"
            break
        log.info("period=%d cluster=%d expanded=%s clusters=%d avg=%.3f", t, rec.cluster, rec.expanded,
                 rec.n_clusters, rec.average_return)
        result.records.append(rec)
    return result


def run_ca(sequence, cfg: LifelongConfig) -> LifelongResult:
    """Continual adaptation: one policy carried from period to period."""
    policy = GaussianPolicy.init(stream(cfg.seed, "policy_init", 0))
    result = LifelongResult([], None, "ca")
    for t, config in enumerate(sequence, start=1):
        try:
            policy, curve = _train(policy, config, cfg, t)
        except Exception as exc:
            log.exception("period %d failed", t)
            result.error = f"period {t}: {type(exc).__name__}: {exc}"
            break
        result.records.append(PeriodRecord(period=t, cluster=0, expanded=False, learning_curve=curve,
                                           config=config.to_dict()))
    return result
