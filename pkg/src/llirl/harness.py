"""Experiment driver: validated configs, seeded runs, and analysis-ready outputs.

Each run writes into its own directory:

``curves.csv``
    ``period,iteration,avg_return``, one row per policy-gradient iteration.
``clusters.json``
    One entry per period: ``period``, ``cluster``, ``expanded``, ``posterior``,
    ``n_clusters`` and the environment ``config`` (goal and puddles).
``summary.json``
    Overall average return with its standard error across periods, final
    cluster count, concentration, and run status.
``library.npz``
    The cluster library (LLIRL runs only), readable with :func:`mixture.load`.
``error.json``
    Only when the run failed; the other files then hold the completed periods.

Floats are written with ``repr`` so they read back exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from . import envs, mixture
from .lifelong import LifelongConfig, LifelongResult, run_ca, run_llirl

log = logging.getLogger(__name__)

_DEFAULTS = LifelongConfig()

# Short keys accepted in config files, matching the command-line flags.
ALIASES = {
    "T": "n_periods", "J": "iterations", "m": "batch_size", "H": "horizon", "h": "window",
    "alpha": "policy_lr", "beta": "model_lr", "gamma": "discount", "sigma2": "noise_var",
    "zeta": "concentration", "c": "control_cost",
}


class ConfigError(ValueError):
    """Invalid experiment configuration (a usage error)."""


@dataclass
class ExperimentConfig:
    env_type: int = 1
    n_periods: int = 24
    cycled: int | None = None
    goals: list | None = None
    method: str = "llirl"
    seed: int = 0
    out: str = "runs/experiment"
    concentration: float = _DEFAULTS.concentration
    concentrations: list | None = None  # sweep list; used by sweep_configs
    iterations: int = _DEFAULTS.iterations
    batch_size: int = _DEFAULTS.batch_size
    horizon: int = _DEFAULTS.horizon
    window: int = _DEFAULTS.window
    policy_lr: float = _DEFAULTS.policy_lr
    model_lr: float = _DEFAULTS.model_lr
    discount: float = _DEFAULTS.discount
    noise_var: float = _DEFAULTS.noise_var
    control_cost: float = _DEFAULTS.control_cost
    explore_episodes: int = _DEFAULTS.explore_episodes
    em_max_iters: int = _DEFAULTS.em_max_iters
    em_tol: float = _DEFAULTS.em_tol
    model_steps: int = _DEFAULTS.model_steps
    grad_norm: str = _DEFAULTS.grad_norm
    mass_mode: str = _DEFAULTS.mass_mode
    candidate_init: str = _DEFAULTS.candidate_init

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in d.items():
            name = ALIASES.get(key, key)
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        d.update(overrides or {})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        def positive(*names, integer=True):
            for n in names:
                v = getattr(self, n)
                if integer and (isinstance(v, bool) or not isinstance(v, int)):
                    raise ConfigError(f"{n} must be an integer, got {v!r}")
                if not v > 0:
                    raise ConfigError(f"{n} must be positive, got {v!r}")

        if self.env_type not in envs.ENV_TYPES:
            raise ConfigError(f"env_type must be one of {envs.ENV_TYPES}")
        if self.method not in ("llirl", "ca"):
            raise ConfigError("method must be 'llirl' or 'ca'")
        positive("n_periods", "iterations", "batch_size", "horizon", "window",
                 "explore_episodes", "em_max_iters", "model_steps")
        positive("policy_lr", "model_lr", "noise_var", "em_tol", integer=False)
        if self.cycled is not None:
            positive("cycled")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must be in [0, 1)")
        if not self.control_cost >= 0:
            raise ConfigError("control_cost must be >= 0")
        for z in [self.concentration] + list(self.concentrations or []):
            if not (isinstance(z, (int, float)) and z >= 0 and math.isfinite(z)):
                raise ConfigError(f"concentration must be finite and >= 0, got {z!r}")
        if self.concentrations is not None and len(self.concentrations) == 0:
            raise ConfigError("concentrations must not be empty")
        if self.goals is not None:
            need = self.cycled or self.n_periods
            if len(self.goals) < need or any(len(g) != 2 for g in self.goals):
                raise ConfigError(f"goals must list at least {need} (x, y) pairs")
        if self.grad_norm not in ("sum", "mean"):
            raise ConfigError("grad_norm must be 'sum' or 'mean'")
        if self.mass_mode not in ("posterior", "prior"):
            raise ConfigError("mass_mode must be 'posterior' or 'prior'")
        if self.candidate_init not in ("mean", "random"):
            raise ConfigError("candidate_init must be 'mean' or 'random'")

    def lifelong(self) -> LifelongConfig:
        shared = {f.name for f in dataclasses.fields(LifelongConfig)}
        return LifelongConfig(**{k: v for k, v in self.to_dict().items() if k in shared})

    def sequence(self) -> envs.DynamicEnvSequence:
        goals = None if self.goals is None else [tuple(g) for g in self.goals]
        return envs.generate_sequence(self.env_type, self.n_periods, self.seed,
                                      cycled=self.cycled, goals=goals)


@dataclass
class ExperimentOutcome:
    status: int  # 0 success, 1 runtime failure
    summary: dict
    out: Path
    result: LifelongResult | None = None


def curves_csv(result: LifelongResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["period", "iteration", "avg_return"])
    for rec in result.records:
        for i, v in enumerate(rec.learning_curve):
            w.writerow([rec.period, i, repr(float(v))])
    return buf.getvalue()


def clusters_json(result: LifelongResult) -> str:
    rows = [
        {
            "period": rec.period,
            "cluster": rec.cluster,
            "expanded": rec.expanded,
            "posterior": [float(p) for p in rec.posterior],
            "n_clusters": rec.n_clusters,
            "config": rec.config,
        }
        for rec in result.records
    ]
    return json.dumps(rows, indent=1) + "\n"


def summarize(cfg: ExperimentConfig, result: LifelongResult) -> dict:
    done = bool(result.records)
    return {
        "method": cfg.method,
        "env_type": cfg.env_type,
        "seed": cfg.seed,
        "concentration": cfg.concentration,
        "periods_completed": len(result.records),
        "overall_average": result.overall_average if done else None,
        "stderr": result.stderr if done else None,
        "final_clusters": result.library.n_clusters if result.library is not None else 1,
        "status": "ok" if result.error is None else "failed",
        "error": result.error,
    }


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutcome:
    """Run one configuration and write its outputs under ``cfg.out``.

    Raises :class:`ConfigError` for an invalid configuration. Failures during
    the run are reported through ``status == 1`` and ``error.json``.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    try:
        sequence = cfg.sequence()
        lcfg = cfg.lifelong()
        result = run_llirl(sequence, lcfg) if cfg.method == "llirl" else run_ca(sequence, lcfg)
    except Exception as exc:
        log.exception("run failed before the first period")
        result = LifelongResult([], None, cfg.method, f"{type(exc).__name__}: {exc}")

    (out / "curves.csv").write_text(curves_csv(result))
    (out / "clusters.json").write_text(clusters_json(result))
    if result.library is not None:
        mixture.save(result.library, out / "library.npz")
    summary = summarize(cfg, result)
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    if result.error is not None:
        manifest = {"error": result.error, "periods_completed": len(result.records),
                    "outputs": sorted(p.name for p in out.iterdir())}
        (out / "error.json").write_text(json.dumps(manifest, indent=1) + "\n")
        return ExperimentOutcome(1, summary, out, result)
    return ExperimentOutcome(0, summary, out, result)


def sweep_configs(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """One config per entry of ``cfg.concentrations``, each with its own output directory."""
    values = cfg.concentrations if cfg.concentrations is not None else [cfg.concentration]
    return [
        dataclasses.replace(cfg, concentration=float(z), concentrations=None,
                            out=str(Path(cfg.out) / f"concentration_{float(z)!r}"))
        for z in values
    ]


def sweep(cfgs: list[ExperimentConfig]) -> list[dict]:
    """Run every config; one report row per run. A failed run does not stop the sweep."""
    if not cfgs:
        raise ConfigError("sweep needs at least one config")
    for c in cfgs:
        c.validate()
    rows = []
    for c in cfgs:
        s = run_experiment(c).summary
        rows.append({k: s[k] for k in ("concentration", "final_clusters", "overall_average",
                                       "stderr", "status", "error")})
    return rows


def format_table(rows: list[dict]) -> str:
    lines = [f"{'concentration':>14}  {'clusters':>8}  {'avg return':>22}  status"]
    for r in rows:
        if r["overall_average"] is None:
            avg = "-"
        else:
            avg = f"{r['overall_average']:.3f} +/- {r['stderr']:.3f}"
        lines.append(f"{r['concentration']:>14g}  {r['final_clusters']:>8d}  {avg:>22}  {r['status']}")
    return "\n".join(lines)
