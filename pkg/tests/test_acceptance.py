"""Acceptance suite: one test per criterion, each reporting a pass/fail line.

The lifelong runs for criteria 4 and 5 are shared through a module fixture
and take several minutes.
"""

import dataclasses
import time

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from llirl import envs, mixture
from llirl.envmodel import EnvModel, Mode, WindowedDataset, log_likelihood, nll_gradient
from llirl.harness import ExperimentConfig, run_experiment
from llirl.lifelong import LifelongConfig, run_ca, run_llirl
from llirl.mixture import Cluster, ClusterLibrary, crp_prior, responsibilities
from llirl.numerics import init_params
from llirl.policy import GaussianPolicy, log_prob, log_prob_grad

from .oracles import central_diff, max_rel_error

CORNERS = [(0.2, 0.2), (0.2, 0.8), (0.8, 0.2), (0.8, 0.8)]
SEEDS = range(5)


def _random_hidden(rng):
    return tuple(int(w) for w in rng.integers(3, 12, size=rng.integers(1, 3)))


def test_criterion_1_gradient_oracles(report):
    start = time.perf_counter()
    policy_errs, model_errs = [], []
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        net = init_params((2, *_random_hidden(rng), 2), rng)
        net.flat += rng.normal(0, 0.1, net.flat.shape)
        pol = GaussianPolicy(net, rng.uniform(-2.0, 0.0, 2))
        states = rng.uniform(0, 1, (5, 2))
        actions = pol.mean(states) + rng.normal(0, 0.1, (5, 2))
        weights = rng.normal(size=5)
        g = log_prob_grad(pol, states, actions, weights)
        fd = central_diff(
            lambda f: float(weights @ log_prob(GaussianPolicy.from_flat(f, net.sizes), states, actions)),
            pol.flat())
        policy_errs.append(max_rel_error(g, fd))

        mode = list(Mode)[k % 3]
        window = int(rng.integers(1, 5))
        d_in, d_out = window * 4, window * mode.y_dim
        mnet = init_params((d_in, *_random_hidden(rng), d_out), rng)
        mnet.flat += rng.normal(0, 0.1, mnet.flat.shape)
        model = EnvModel(mnet, mode, window, float(rng.uniform(0.05, 2.0)))
        data = WindowedDataset(rng.uniform(-1, 1, (8, d_in)), rng.normal(0, 0.5, (8, d_out)))
        g = nll_gradient(model, data)
        fd = central_diff(lambda f: -log_likelihood(model.with_params(f), data), mnet.flat)
        model_errs.append(max_rel_error(g, fd))
    elapsed = time.perf_counter() - start
    worst = max(policy_errs + model_errs)
    ok = worst < 1e-4 and elapsed < 60
    report(1, ok, f"max rel err policy {max(policy_errs):.2e}, model {max(model_errs):.2e}; {elapsed:.1f}s")
    assert ok


def _prior_state(rng):
    n = int(rng.integers(1, 11))
    period = int(rng.integers(2, 1000))
    masses = rng.dirichlet(np.ones(n)) * (period - 1)
    concentration = float(rng.choice([0.0, 1e9, rng.lognormal(0, 2)]))
    policy = GaussianPolicy(init_params((2, 2), rng), np.zeros(2))
    model = EnvModel(init_params((4, 1), rng), Mode.REWARD, 1)
    return ClusterLibrary([Cluster(policy, model, float(m)) for m in masses], concentration,
                          Mode.REWARD, 1, period=period)


def _posterior_errors(prior, loglik):
    """Max relative error of the log-space posterior against the direct product."""
    prior = np.asarray(prior)
    loglik = np.asarray(loglik)
    lin = prior * np.exp(loglik - loglik[prior > 0].max())
    return max_rel_error(responsibilities(loglik, prior), lin / lin.sum(), floor=1e-300)


def test_criterion_2_prior_and_posterior(report):
    rng = np.random.default_rng(2)
    sum_err = post_err = 0.0
    for _ in range(1000):
        lib = _prior_state(rng)
        prior = crp_prior(lib)
        sum_err = max(sum_err, abs(prior.sum() - 1.0))
        loglik = rng.uniform(-20.0, 0.0, prior.size)
        lin = prior * np.exp(loglik)  # no underflow in this range
        post_err = max(post_err, max_rel_error(responsibilities(loglik, prior), lin / lin.sum(), floor=1e-300))
    example = _prior_state(rng)
    example.clusters = example.clusters[:2]
    example.clusters[0].mass, example.clusters[1].mass = 2.0, 1.0
    example.period, example.concentration = 4, 1.0
    worked = crp_prior(example).tolist()
    ok = sum_err <= 1e-9 and post_err <= 1e-9 and worked == [0.5, 0.25, 0.25]
    report(2, ok, f"prior sum err {sum_err:.1e}, posterior err {post_err:.1e}, example {worked}")
    assert ok


def test_criterion_3_degeneracy(report):
    seq = envs.generate_sequence(1, 10, seed=0)
    cfg = LifelongConfig(iterations=10, seed=0)
    zero = run_llirl(seq, dataclasses.replace(cfg, concentration=0.0))
    ca = run_ca(seq, cfg)
    diff = float(np.max(np.abs(zero.curves - ca.curves)))
    huge = run_llirl(seq, dataclasses.replace(cfg, iterations=1, concentration=1e9))
    n = huge.library.n_clusters
    ok = zero.error is None and diff <= 1e-12 and zero.library.n_clusters == 1 and n == 10
    report(3, ok, f"concentration 0 vs baseline max diff {diff:.1e}; "
                  f"concentration 1e9 gives {n} clusters for 10 periods")
    assert ok


@pytest.fixture(scope="module")
def cycled_runs():
    runs = []
    llirl_time = 0.0
    for seed in SEEDS:
        seq = envs.generate_sequence(1, 24, seed, cycled=4, goals=CORNERS)
        cfg = LifelongConfig(iterations=50, seed=seed)
        t0 = time.perf_counter()
        ll = run_llirl(seq, cfg)
        llirl_time += time.perf_counter() - t0
        runs.append((ll, run_ca(seq, cfg)))
    return runs, llirl_time


def test_criterion_4_clustering(report, cycled_runs):
    runs, llirl_time = cycled_runs
    truth = [i % 4 for i in range(24)]
    good, detail = 0, []
    for ll, _ in runs:
        assert ll.error is None
        n = ll.library.n_clusters
        ari = adjusted_rand_score(truth[4:], ll.assignments[4:])
        good += 4 <= n <= 6 and ari >= 0.8
        detail.append(f"L={n} ARI={ari:.2f}")
    ok = good >= 4 and llirl_time < 15 * 60
    report(4, ok, f"{good}/5 seeds pass ({', '.join(detail)}); {llirl_time / 60:.1f} min")
    assert ok


def test_criterion_5_jumpstart_and_margin(report, cycled_runs):
    runs, _ = cycled_runs
    wins = total = 0
    ll_periods, ca_periods = [], []
    for ll, ca in runs:
        for a, b in zip(ll.records[4:], ca.records[4:]):
            wins += a.learning_curve[0] > b.learning_curve[0]
            total += 1
        ll_periods.extend(ll.period_averages)
        ca_periods.extend(ca.period_averages)
    ll_periods, ca_periods = np.array(ll_periods), np.array(ca_periods)
    margin = ll_periods.mean() - ca_periods.mean()
    se = np.sqrt(ll_periods.var(ddof=1) / ll_periods.size + ca_periods.var(ddof=1) / ca_periods.size)
    frac = wins / total
    ok = frac >= 0.7 and margin > 2 * se
    report(5, ok, f"jumpstart in {frac:.0%} of periods; average {ll_periods.mean():.2f} vs "
                  f"{ca_periods.mean():.2f}, margin {margin:.2f} vs 2*SE {2 * se:.2f}")
    assert ok


def _em_ok(records):
    monotone = all(r.map_loglik_after >= r.map_loglik_before for r in records)
    converged = np.mean([r.em_converged and r.em_iterations <= 10 for r in records])
    return monotone, converged


def test_criterion_6_em(report, cycled_runs):
    runs, _ = cycled_runs
    records = [r for ll, _ in runs for r in ll.records]
    monotone, converged = _em_ok(records)
    ok = monotone and converged >= 0.95
    report(6, ok, f"{len(records)} periods: MAP log-lik never drops={monotone}, converged {converged:.0%}")
    assert ok


def _reidentification(assignments, k):
    """Share of visits after the second whose cluster matches the second visit's."""
    hits = total = 0
    for layout in range(k):
        visits = assignments[layout::k]
        for c in visits[2:]:
            hits += c == visits[1]
            total += 1
    return hits / total


@pytest.mark.parametrize("env_type", [2, 3])
def test_criterion_7_other_types(report, env_type):
    seq = envs.generate_sequence(env_type, 10, seed=0)
    res = run_llirl(seq, LifelongConfig(iterations=5, seed=0))
    complete = res.error is None and len(res.records) == 10
    prior_err = max(abs(sum(r.prior) - 1.0) for r in res.records)
    post_err = max(_posterior_errors(r.prior, r.log_likelihoods) for r in res.records)
    monotone, converged = _em_ok(res.records)
    ok = complete and prior_err <= 1e-9 and post_err <= 1e-9 and monotone and converged >= 0.95
    detail = (f"type {env_type}: complete={complete}, L={res.library.n_clusters}, prior err {prior_err:.1e}, "
              f"posterior err {post_err:.1e}, EM monotone={monotone}, converged {converged:.0%}")
    if env_type == 2:
        cyc = run_llirl(envs.generate_sequence(2, 10, seed=0, cycled=2), LifelongConfig(iterations=5, seed=0))
        rate = _reidentification(cyc.assignments, 2)
        ok = ok and cyc.error is None and rate >= 0.8
        detail += f", 2-layout re-identification {rate:.0%} (assignments {cyc.assignments})"
    report(7, ok, detail)
    assert ok


def test_criterion_8_persistence(report, tmp_path):
    seq = envs.generate_sequence(1, 8, seed=1, cycled=3)
    cfg = LifelongConfig(iterations=5, seed=1)
    full = run_llirl(seq, cfg)
    mixture.save(full.library, tmp_path / "full.npz")
    back = mixture.load(tmp_path / "full.npz")
    bitwise = back == full.library and all(
        a.model.net.flat.tobytes() == b.model.net.flat.tobytes()
        and a.policy.flat().tobytes() == b.policy.flat().tobytes()
        and a.mass == b.mass
        for a, b in zip(back.clusters, full.library.clusters))

    first = run_llirl(seq, cfg, stop=4)
    mixture.save(first.library, tmp_path / "half.npz")
    rest = run_llirl(seq, cfg, library=mixture.load(tmp_path / "half.npz"))
    resumed = (np.array_equal(np.vstack([first.curves, rest.curves]), full.curves)
               and first.assignments + rest.assignments == full.assignments
               and rest.library == full.library)
    ok = bitwise and resumed
    report(8, ok, f"round trip bitwise={bitwise}, resume at period 5 identical={resumed}")
    assert ok


@pytest.mark.parametrize("env_type,method", [(1, "llirl"), (2, "llirl"), (3, "llirl"), (1, "ca")])
def test_criterion_9_determinism(report, tmp_path, env_type, method):
    same = True
    base = dict(env_type=env_type, method=method, n_periods=3, iterations=3, seed=7)
    a = run_experiment(ExperimentConfig(**base, out=str(tmp_path / "a")))
    b = run_experiment(ExperimentConfig(**base, out=str(tmp_path / "b")))
    for name in ("curves.csv", "clusters.json"):
        same = same and (a.out / name).read_bytes() == (b.out / name).read_bytes()
    ok = same and a.status == b.status == 0
    report(9, ok, f"type {env_type} {method} byte-identical={same}")
    assert ok
