"""Acceptance criteria 1-8.

Each test prints one ``criterion N: PASS|FAIL`` line (repeated in the pytest
summary) and then asserts the same verdict.  Criteria 4, 5 and 7 are long
statistical experiments and carry the ``slow`` marker; deselect them with
``-m "not slow"`` for a quick run.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import kstest

from nasbo import _core_py
from nasbo.acquisition import AcquisitionContext, FixedOutcomeMember, GpMember, QNehvi, qnehvi_mcmc
from nasbo.diagnostics import loocv
from nasbo.gp import GpDataset, GpHyperParams, log_marginal_likelihood, log_marginal_likelihood_grad, posterior
from nasbo.inference.fit import fit_nuts
from nasbo.inference.nuts import NutsSettings, sample_nuts
from nasbo.orchestrator import Campaign, CampaignConfig, run_campaign, sobol_baseline
from nasbo.pareto import ParetoState, hypervolume
from nasbo.problems import synthetic_problem
from nasbo.search_space import PAPER_DEFAULT, decode, emit_model_config, encode, validate_model_config
from nasbo.sobol import sobol_points
from oracles import dense_posterior, hv2d, hv2d_mc, hvi_brute_force, matern52

try:
    from nasbo import _core
except ImportError:
    _core = None


def _elapsed(t0):
    return time.perf_counter() - t0


# -- 1: GP correctness -----------------------------------------------------------------


def _fd_grad(p, data, h=1e-5):
    v = p.to_vector()
    g = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (log_marginal_likelihood(GpHyperParams.from_vector(v + e), data)
                - log_marginal_likelihood(GpHyperParams.from_vector(v - e), data)) / (2 * h)
    return g


def _gaussian_lml(p, data):
    K = matern52(data.inputs, data.inputs, p.lengthscales, p.signal_var) + p.noise_var * np.eye(data.n)
    r = data.targets - p.mean_const
    _, logdet = np.linalg.slogdet(K)
    return -0.5 * (r @ np.linalg.solve(K, r) + logdet + data.n * math.log(2 * math.pi))


def test_criterion_1_gp_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_grad = worst_lml = worst_post = 0.0
    shapes = [(d, n) for d in (1, 5, 24) for n in (2, 20)]
    for k in range(100):
        d, n = shapes[k % len(shapes)]
        X = rng.random((n, d))
        y = rng.normal(size=n)
        p = GpHyperParams(rng.normal(0, 0.5), math.exp(rng.normal(0, 0.5)), math.exp(rng.uniform(-4, 0)),
                          np.exp(rng.normal(0, 0.7, d)))
        data = GpDataset(X, y)
        lml = log_marginal_likelihood(p, data)
        worst_lml = max(worst_lml, abs(lml - _gaussian_lml(p, data)) / max(abs(lml), 1.0))
        fd = _fd_grad(p, data)
        worst_grad = max(worst_grad, np.linalg.norm(log_marginal_likelihood_grad(p, data) - fd) / max(np.linalg.norm(fd), 1e-3))
        Xq = rng.random((5, d))
        pd = posterior(p, data, Xq)
        m, C = dense_posterior(X, y, Xq, p.mean_const, p.signal_var, p.noise_var, p.lengthscales)
        worst_post = max(worst_post, np.max(np.abs(pd.mean - m)), np.max(np.abs(pd.covariance - C)))
    secs = _elapsed(t0)
    ok = worst_grad <= 1e-5 and worst_lml <= 1e-10 and worst_post <= 1e-10 and secs < 60
    verdict(1, ok, f"grad rel err {worst_grad:.1e}, lml rel err {worst_lml:.1e}, posterior err {worst_post:.1e}, {secs:.1f}s")
    assert ok


# -- 2: hypervolume exactness -----------------------------------------------------------


def _random_front(rng, k):
    """k mutually non-dominated points in [0, 1)^2 on a random decreasing curve."""
    x = np.sort(rng.random(k))
    y = np.sort(rng.random(k))[::-1]
    keep = np.concatenate([[True], (np.diff(x) > 0) & (np.diff(y) < 0)])
    return np.stack([x[keep], y[keep]], axis=1)


def test_criterion_2_hypervolume_exactness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_z = 0.0
    for i in range(100):
        F = _random_front(rng, int(rng.integers(1, 101)))
        est, se = hv2d_mc(F, (1, 1), (0, 0), 10**7, seed=i)
        worst_z = max(worst_z, abs(hypervolume(F, (1, 1)) - est) / se)
    worst_hvi = 0.0
    backends = [_core_py] + ([_core] if _core is not None else [])
    for _ in range(1000):
        P = rng.random((int(rng.integers(0, 15)), 2)) * 1.1
        q = rng.random(2) * 1.1
        want = hv2d(np.vstack([P, q]), (1, 1)) - hv2d(P, (1, 1))
        got = [ParetoState.from_points(P, (1, 1)).hvi(q)]
        Y = np.ascontiguousarray(P.reshape(1, -1, 2))
        for mod in backends:
            boxes = mod.staircase_boxes(Y, np.array([1.0, 1.0]))
            got.append(mod.hvi_sum(*boxes, np.ascontiguousarray(q.reshape(1, 1, 2)))[0])
        worst_hvi = max(worst_hvi, max(abs(g - want) for g in got))
    secs = _elapsed(t0)
    ok = worst_z <= 3.0 and worst_hvi <= 1e-12 and secs < 300
    verdict(2, ok, f"max |HV - MC| = {worst_z:.2f} SE over 100 fronts, max HVI error {worst_hvi:.1e} "
                   f"over 1000 instances x {len(backends) + 1} paths, {secs:.0f}s")
    assert ok


# -- 3: NUTS calibration -----------------------------------------------------------------


def _batch_means_se(S, batches=40):
    B = S[: len(S) // batches * batches].reshape(batches, -1, S.shape[1]).mean(axis=1)
    return B.std(axis=0, ddof=1) / math.sqrt(batches)


def test_criterion_3_nuts_calibration(verdict):
    t0 = time.perf_counter()
    mu = np.array([1.0, -2.0])
    cov = np.array([[2.0, 1.2], [1.2, 1.0]])
    prec = np.linalg.inv(cov)

    def logp(x):
        r = x - mu
        g = prec @ r
        return -0.5 * float(r @ g), -g

    rows = []
    for seed in range(5):
        res = sample_nuts(logp, np.zeros(2), NutsSettings(warmup_steps=500, samples=4000, thinning=1, seed=seed))
        S = res.samples
        z = np.abs(S.mean(0) - mu) / _batch_means_se(S)
        cov_err = np.linalg.norm(np.cov(S.T) - cov) / np.linalg.norm(cov)
        rows.append((float(z.max()), float(cov_err)))
    secs = _elapsed(t0)
    ok = all(z <= 3 and c <= 0.2 for z, c in rows) and secs < 120
    verdict(3, ok, f"max mean z {max(r[0] for r in rows):.2f} (<= 3), max relative cov error "
                   f"{max(r[1] for r in rows):.3f} (<= 0.2) over 5 seeds, {secs:.0f}s")
    assert ok


# -- 4: SAAS sparsity ----------------------------------------------------------------------


def _three_active(seed, n=100, d=24):
    rng = np.random.default_rng([seed, 44])
    active = np.sort(rng.choice(d, 3, replace=False))
    X = rng.random((n, d))
    a, b, c = X[:, active].T
    return active, GpDataset(X, np.sin(2 * np.pi * a) + 2 * (b - 0.5) ** 2 + a * c)


@pytest.mark.slow
def test_criterion_4_saas_sparsity(verdict):
    t0 = time.perf_counter()
    ratios = []
    for seed in range(5):
        active, data = _three_active(seed)
        ens = fit_nuts(data, settings=NutsSettings.test_scale(seed)).per_objective[0]
        inv = np.median(np.stack([1 / p.lengthscales for p in ens.samples]), axis=0)
        ratios.append(inv[active].min() / np.delete(inv, active).max())
    secs = _elapsed(t0)
    wins = sum(r >= 10 for r in ratios)
    ok = wins >= 4 and secs < 600
    verdict(4, ok, f"active/inactive inverse-lengthscale ratio >= 10 in {wins}/5 seeds "
                   f"(min ratio {min(ratios):.0f}), {secs:.0f}s")
    assert ok


# -- 5: SAAS vs MAP leave-one-out -------------------------------------------------------------


def _loo_data(seed, n=100):
    """Objective 1 of a sparse-quadratic instance at n random grid points."""
    prob = synthetic_problem("sparse-quadratic", seed)
    X = prob.space.snap(np.random.default_rng([seed, 55]).random((n, prob.space.dim)))
    return GpDataset(X, prob.evaluate_unit(X)[:, 0])


@pytest.mark.slow
def test_criterion_5_saas_beats_map_loocv(verdict):
    t0 = time.perf_counter()
    rows = []
    for seed in range(10):
        data = _loo_data(seed)
        settings = NutsSettings.test_scale(seed)
        rows.append((loocv(data, "saas", settings).rmse, loocv(data, "map", settings).rmse))
    secs = _elapsed(t0)
    wins = sum(s < m for s, m in rows)
    ok = wins >= 8 and secs < 1800
    detail = ", ".join(f"{s:.4f}/{m:.4f}" for s, m in rows)
    verdict(5, ok, f"SAAS RMSE < MAP RMSE in {wins}/10 seeds, {secs:.0f}s [saas/map: {detail}]")
    assert ok


# -- 6: qNEHVI estimator ---------------------------------------------------------------------


def _gp_instance(seed, n=4, d=2):
    rng = np.random.default_rng([seed, 66])
    X = rng.random((n, d))
    xc = rng.random((1, d))
    members, post = [], []
    for _ in range(2):
        ls = rng.uniform(0.2, 0.5, d)
        s2, nv = rng.uniform(0.05, 0.15), rng.uniform(1e-4, 1e-2)
        y = rng.uniform(0.4, 0.8, n)
        members.append(GpMember(GpHyperParams(0.6, s2, nv, ls), X, y))
        post.append(dense_posterior(X, y, np.vstack([X, xc]), 0.6, s2, nv, ls))
    return X, xc, members, post


def test_criterion_6_qnehvi_estimator(verdict):
    t0 = time.perf_counter()
    # zero-variance hook: the estimator collapses to the deterministic improvement
    table = {0.0: (0.5, 0.5), 0.5: (0.25, 0.75), 1.0: (0.6, 0.6)}
    fixed = [FixedOutcomeMember(lambda X, k=k: np.array([table[float(x[0])][k] for x in X])) for k in range(2)]
    ctx = AcquisitionContext(None, [[0.0]], [[0.5, 0.5]], (1, 1), members=[fixed])
    exact = all(
        qnehvi_mcmc(ctx, [[x]]) == hv2d([(0.5, 0.5), table[x]], (1, 1)) - hv2d([(0.5, 0.5)], (1, 1)) for x in (0.5, 1.0)
    )
    # stochastic q=1 against a brute-force joint-sampling oracle; an instance is
    # admitted only if the oracle itself resolves it to 0.25%, so that a 1%
    # comparison is not dominated by the oracle's own sampling error
    worst, used, seed = 0.0, 0, 0
    while used < 20:
        X, xc, members, post = _gp_instance(seed)
        want, se = hvi_brute_force(post, (1, 1), 10**6, seed=1000 + seed)
        seed += 1
        if se > 0.0025 * want:
            continue
        c = AcquisitionContext(None, X, np.zeros((len(X), 2)), (1, 1), members=[members], mc_samples=2**20, seed=seed)
        worst = max(worst, abs(QNehvi(c)(xc)[0] - want) / want)
        used += 1
    # standard deviation of the estimator across base-sample seeds
    X, xc, members, _ = _gp_instance(1)
    Ns = (16, 128, 1024)
    sds = []
    for N in Ns:
        vals = [QNehvi(AcquisitionContext(None, X, np.zeros((len(X), 2)), (1, 1), members=[members],
                                          mc_samples=N, seed=r))(xc)[0] for r in range(300)]
        sds.append(np.std(vals, ddof=1))
    slope = float(np.polyfit(np.log(Ns), np.log(sds), 1)[0])
    secs = _elapsed(t0)
    ok = exact and worst <= 0.01 and -0.65 <= slope <= -0.35 and secs < 600
    verdict(6, ok, f"zero-variance exact: {exact}, max relative error vs oracle {worst:.4f} (<= 0.01) "
                   f"on 20 instances ({seed} drawn), sd slope {slope:.3f} in [-0.65, -0.35], {secs:.0f}s")
    assert ok


# -- 7: end-to-end campaign --------------------------------------------------------------------


def campaign_config(seed):
    return CampaignConfig(
        budget=240,
        batch_size=16,
        init_points=32,
        seed=seed,
        evaluator={"type": "synthetic", "name": "sparse-quadratic", "seed": seed},
        nuts=NutsSettings.test_scale(seed),
        refit_min_free_slots=16,
    )


def batch_gains(trace, init=32, q=16):
    trace = np.asarray(trace)
    ends = np.arange(init, len(trace) + 1, q)
    return np.diff(trace[ends - 1])


@pytest.mark.slow
def test_criterion_7_campaign_beats_sobol(verdict):
    t0 = time.perf_counter()
    rows = []
    for seed in range(10):
        cfg = campaign_config(seed)
        bo = run_campaign(cfg)
        base = sobol_baseline(cfg)
        gains = batch_gains(bo.hv_trace)
        rows.append((bo.hypervolume, base.hypervolume, bool(np.all(np.diff(bo.hv_trace) >= 0)), gains))
        print(f"  seed {seed}: BO {bo.hypervolume:.4f} Sobol {base.hypervolume:.4f} "
              f"largest gain in batch {int(np.argmax(gains)) + 1}", flush=True)
    secs = _elapsed(t0)
    wins = sum(b > s for b, s, _, _ in rows)
    monotone = all(m for _, _, m, _ in rows)
    mean_gains = np.mean([g for *_, g in rows], axis=0)
    early = int(np.argmax(mean_gains)) + 1
    per_seed_early = sum(int(np.argmax(g)) < 3 for *_, g in rows)
    ok = wins >= 9 and monotone and early <= 3 and secs < 7200
    verdict(7, ok, f"BO > Sobol in {wins}/10 seeds, traces non-decreasing: {monotone}, largest mean "
                   f"batch gain in batch {early} (per seed within batches 1-3: {per_seed_early}/10), {secs:.0f}s")
    assert ok


# -- 8: plumbing -------------------------------------------------------------------------------

# searched-parameter keys as written in the model-config listing
LISTING_KEYS = {
    "encoder": {"encoder_embed_dim", "encoder_ffn_embed_dim", "encoder_kernel_list"},
    "decoder": {"self_attention_heads", "decoder_kernel_size_list"},
}


def test_criterion_8_plumbing(verdict, paper_space, tmp_path):
    t0 = time.perf_counter()
    checks = {}
    codec = True
    for p in paper_space.params:
        for v in p.grid:
            cfg = dict(PAPER_DEFAULT, **{p.name: v})
            codec &= decode(paper_space, encode(paper_space, cfg)) == cfg
    checks["codec"] = codec

    docs = [emit_model_config(paper_space, decode(paper_space, x)) for x in sobol_points(256, 24, seed=3)]
    docs.append(emit_model_config(paper_space, PAPER_DEFAULT))
    try:
        for doc in docs:
            validate_model_config(json.loads(json.dumps(doc)))
        checks["schema"] = True
    except Exception:
        checks["schema"] = False
    checks["listing keys"] = all(keys <= set(docs[-1][group]) for group, keys in LISTING_KEYS.items())

    cfg = CampaignConfig(budget=12, init_points=8, batch_size=4, seed=1, model="map",
                         nuts=NutsSettings.test_scale(1))
    camp = Campaign(cfg, log_path=tmp_path / "log.jsonl")
    ev = synthetic_problem("sparse-quadratic", 0)
    for t in camp.ask(8):
        camp.tell(t.trial_id, ev(t.config), 1.0 + t.trial_id)
    camp.ask(2, 20.0)
    replayed = Campaign.read_log(tmp_path / "log.jsonl")
    cfg.save(tmp_path / "cfg.json")
    checks["persistence"] = (
        replayed == camp.trials
        and [t.to_dict() for t in replayed] == [json.loads(json.dumps(t.to_dict())) for t in camp.trials]
        and CampaignConfig.load(tmp_path / "cfg.json") == cfg
    )

    a, b = sobol_points(1024, 24, seed=11), sobol_points(1024, 24, seed=11)
    checks["sobol"] = (
        np.array_equal(a, b)
        and not np.array_equal(a, sobol_points(1024, 24, seed=12))
        and np.array_equal(sobol_points(2, 24, scramble=False)[1], np.full(24, 0.5))
        and min(kstest(a[:, j], "uniform").pvalue for j in range(24)) > 0.01
    )
    secs = _elapsed(t0)
    ok = all(checks.values()) and secs < 60
    verdict(8, ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items()) + f", {secs:.1f}s")
    assert ok
