"""Chinese-restaurant-process mixture over environment models.

The library holds one (policy, environment model, mass) triple per cluster.
Each period the current exploration data is scored under every cluster and
under a freshly initialised candidate; the candidate is added when its
posterior beats every existing cluster. Environment models are then refined
by EM, where every M-step restarts from the parameters the period began with.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .envmodel import NOISE_VAR, EnvModel, Mode, WindowedDataset, log_likelihood, nll_and_gradient
from .numerics import NetworkParams
from .policy import GaussianPolicy

FORMAT_VERSION = 1
MASS_MODES = ("posterior", "prior")


class LibraryFormatError(ValueError):
    """The library file is truncated, corrupt, or not a library file."""


class LibraryVersionError(LibraryFormatError):
    """The library file was written by a newer format version."""


@dataclass
class Cluster:
    policy: GaussianPolicy
    model: EnvModel
    mass: float = 0.0


@dataclass
class ClusterLibrary:
    clusters: list[Cluster]
    concentration: float
    mode: Mode
    window: int
    noise_var: float = NOISE_VAR
    period: int = 1
    mass_mode: str = "posterior"

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.concentration < 0:
            raise ValueError("concentration must be >= 0")
        if self.mass_mode not in MASS_MODES:
            raise ValueError(f"mass_mode must be one of {MASS_MODES}")

    @classmethod
    def create(cls, policy: GaussianPolicy, model: EnvModel, concentration: float,
               mass_mode: str = "posterior") -> "ClusterLibrary":
        return cls([Cluster(policy, model, 0.0)], concentration, model.mode, model.window,
                   model.noise_var, period=1, mass_mode=mass_mode)

    def __len__(self):
        return len(self.clusters)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.clusters])

    def copy(self) -> "ClusterLibrary":
        return ClusterLibrary(
            [Cluster(c.policy.copy(), c.model.copy(), c.mass) for c in self.clusters],
            self.concentration, self.mode, self.window, self.noise_var, self.period, self.mass_mode,
        )

    def __eq__(self, other):
        if not isinstance(other, ClusterLibrary):
            return NotImplemented
        fields = ("concentration", "mode", "window", "noise_var", "period", "mass_mode", "n_clusters")
        if any(getattr(self, f) != getattr(other, f) for f in fields):
            return False
        return all(
            a.mass == b.mass
            and np.array_equal(a.policy.flat(), b.policy.flat())
            and a.model.net == b.model.net
            for a, b in zip(self.clusters, other.clusters)
        )


@dataclass
class PosteriorDistribution:
    """Posterior over the existing clusters plus the candidate (last entry)."""

    probs: np.ndarray
    log_likelihood: np.ndarray
    prior: np.ndarray

    @property
    def new(self) -> float:
        return float(self.probs[-1])

    @property
    def existing(self) -> np.ndarray:
        return self.probs[:-1]


def crp_prior(library: ClusterLibrary) -> np.ndarray:
    """Prior over the existing clusters and one new cluster (last entry).

    In the first period everything goes to the first cluster.
    """
    n = library.n_clusters
    prior = np.zeros(n + 1)
    if library.period <= 1:
        prior[0] = 1.0
        return prior
    denom = library.period - 1 + library.concentration
    prior[:n] = library.masses / denom
    prior[n] = library.concentration / denom
    return prior


def normalize_log(log_w: np.ndarray) -> np.ndarray:
    """Normalise unnormalised log weights, ``-inf`` entries map to exactly 0."""
    log_w = np.asarray(log_w, dtype=np.float64)
    top = np.max(log_w)
    if not np.isfinite(top):
        raise FloatingPointError("cannot normalise: no entry has finite log weight")
    w = np.exp(log_w - top)
    return w / w.sum()


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def responsibilities(log_lik, prior) -> np.ndarray:
    """``probs ∝ exp(log_lik) * prior``, computed in log space."""
    log_lik = np.asarray(log_lik, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    log_w = np.where(prior > 0, log_lik + _log(prior), -np.inf)
    return normalize_log(log_w)


def posterior(library: ClusterLibrary, data: WindowedDataset, candidate: EnvModel) -> PosteriorDistribution:
    """Posterior over existing clusters and the fresh candidate model."""
    prior = crp_prior(library)
    models = [c.model for c in library.clusters] + [candidate]
    ll = np.array([log_likelihood(m, data) for m in models])
    return PosteriorDistribution(responsibilities(ll, prior), ll, prior)


def maybe_expand(library: ClusterLibrary, post: PosteriorDistribution, candidate: EnvModel):
    """Add the candidate when its posterior strictly beats every existing cluster.

    The new cluster starts with zero mass and a copy of the policy of the
    existing cluster with the highest posterior. Returns ``(library, expanded)``;
    the library is modified in place.
    """
    existing = post.existing
    if len(existing) != library.n_clusters:
        raise ValueError("posterior was computed against a different library")
    if not post.new > existing.max():
        return library, False
    donor = int(np.argmax(existing))
    library.clusters.append(Cluster(library.clusters[donor].policy.copy(), candidate, 0.0))
    return library, True


def period_prior(prior: np.ndarray, expanded: bool) -> np.ndarray:
    """Prior weights over the clusters present during this period's EM.

    After an expansion the new cluster keeps the concentration share it was
    admitted with, so the full prior is already normalised over the
    clusters. Otherwise the new-cluster entry is dropped and the rest
    renormalised.
    """
    if expanded:
        return prior.copy()
    w = prior[:-1]
    s = w.sum()
    if s <= 0:
        raise FloatingPointError("existing clusters carry no prior mass")
    return w / s


@dataclass
class EMResult:
    posterior: np.ndarray
    iterations: int
    converged: bool
    max_change: float
    loglik_before: np.ndarray
    loglik_after: np.ndarray
    history: list = field(default_factory=list)


def _m_step(model0: EnvModel, data: WindowedDataset, weight: float, step_size: float,
            model_steps: int, grad_norm: str) -> EnvModel:
    if weight == 0.0:
        return model0.copy()
    scale = step_size * weight / (len(data) if grad_norm == "mean" else 1.0)
    flat = model0.net.flat.copy()
    for _ in range(model_steps):
        _, g = nll_and_gradient(model0.with_params(flat), data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite environment-model gradient")
        flat -= scale * g
    return model0.with_params(flat)


def em_update(library: ClusterLibrary, data: WindowedDataset, prior_weights, step_size: float,
              max_iters: int = 10, tol: float = 1e-3, model_steps: int = 1,
              grad_norm: str = "sum") -> EMResult:
    """Refine every cluster's environment model on the current data.

    E-step: responsibilities over the clusters with ``prior_weights``.
    M-step: each model is reset to its period-start snapshot and moved by
    ``model_steps`` gradient steps of size ``step_size * responsibility`` on the
    negative log-likelihood (divided by the sample count when
    ``grad_norm == "mean"``). Stops once the responsibilities change by less
    than ``tol`` in max-norm, or after ``max_iters`` rounds.

    On a non-finite gradient every model is restored and the error re-raised.
    """
    if grad_norm not in ("sum", "mean"):
        raise ValueError("grad_norm must be 'sum' or 'mean'")
    prior_weights = np.asarray(prior_weights, dtype=np.float64)
    if prior_weights.shape != (library.n_clusters,):
        raise ValueError("prior_weights must have one entry per cluster")
    snapshot = [c.model.copy() for c in library.clusters]
    ll0 = np.array([log_likelihood(m, data) for m in snapshot])
    post = responsibilities(ll0, prior_weights)
    history = [post]
    change = np.inf
    iters = 0
    try:
        for iters in range(1, max_iters + 1):
            for c, m0, w in zip(library.clusters, snapshot, post):
                c.model = _m_step(m0, data, float(w), step_size, model_steps, grad_norm)
            ll = np.array([log_likelihood(c.model, data) for c in library.clusters])
            new_post = responsibilities(ll, prior_weights)
            change = float(np.max(np.abs(new_post - post)))
            post = new_post
            history.append(post)
            if change < tol:
                break
    except FloatingPointError:
        for c, m0 in zip(library.clusters, snapshot):
            c.model = m0
        raise
    return EMResult(post, iters, change < tol, change, ll0, ll, history)


def accumulate_mass(library: ClusterLibrary, weights) -> ClusterLibrary:
    """Add this period's assignment weights to the cluster masses and advance ``period``."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (library.n_clusters,):
        raise ValueError("need one weight per cluster")
    if abs(weights.sum() - 1.0) > 1e-6 or np.any(weights < 0):
        raise ValueError(f"assignment weights must be a distribution, got sum {weights.sum()}")
    for c, w in zip(library.clusters, weights):
        c.mass += float(w)
    library.period += 1
    return library


def identify(library: ClusterLibrary, data: WindowedDataset) -> int:
    """Index of the cluster whose model best predicts ``data`` (lowest index on ties)."""
    ll = np.array([log_likelihood(c.model, data) for c in library.clusters])
    return int(np.argmax(ll))


def save(library: ClusterLibrary, path) -> None:
    meta = {
        "format": "llirl-library",
        "version": FORMAT_VERSION,
        "concentration": library.concentration,
        "period": library.period,
        "mode": library.mode.value,
        "window": library.window,
        "noise_var": library.noise_var,
        "mass_mode": library.mass_mode,
        "clusters": [
            {
                "mass": c.mass,
                "policy_sizes": list(c.policy.net.sizes),
                "model_sizes": list(c.model.net.sizes),
            }
            for c in library.clusters
        ],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, c in enumerate(library.clusters):
        arrays[f"policy_{i}"] = c.policy.flat()
        arrays[f"varpolicy_{i}"] = c.model.net.flat
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load(path) -> ClusterLibrary:
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.get("format") != "llirl-library":
                raise LibraryFormatError(f"{path}: not a cluster library file")
            if int(meta["version"]) > FORMAT_VERSION:
                raise LibraryVersionError(
                    f"{path}: format version {meta['version']} is newer than supported {FORMAT_VERSION}"
                )
            mode = Mode(meta["mode"])
            clusters = []
            for i, cm in enumerate(meta["clusters"]):
                policy = GaussianPolicy.from_flat(z[f"policy_{i}"], cm["policy_sizes"])
                model = EnvModel(NetworkParams(z[f"varpolicy_{i}"], cm["model_sizes"]),
                                 mode, int(meta["window"]), float(meta["noise_var"]))
                clusters.append(Cluster(policy, model, float(cm["mass"])))
    except (LibraryFormatError, FileNotFoundError):
        raise
    except (zipfile.BadZipFile, EOFError, KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        raise LibraryFormatError(f"{path}: corrupt or truncated library file ({exc})") from exc
    return ClusterLibrary(clusters, float(meta["concentration"]), mode, int(meta["window"]),
                          float(meta["noise_var"]), int(meta["period"]), meta.get("mass_mode", "posterior"))
