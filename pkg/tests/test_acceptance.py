"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Every test prints a single summary line (visible with ``pytest -s`` or on
failure) carrying the measured quantities next to the pinned tolerance, then
asserts.  Tolerances are fixed here, not calibrated elsewhere.  Known honest
failures are documented in the repository notes.
"""

import itertools
import json
import time
from itertools import combinations

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.special import log_ndtr

from prefgp.data import (
    Choice,
    ItemTable,
    Pref,
    StatementSet,
    encode_recsys_pairs,
    kendall_tau_scaled,
)
from prefgp.inference import (
    finite_diff_gradcheck,
    laplace_log_marginal,
)
from prefgp.kernels import (
    KernelSpec,
    gram_matrix,
    ntpref_kernel_eval,
    pref_kernel_eval,
)
from prefgp.models_choice import (
    pseudo_rational_choice_loglik_grad,
    rational_choice_loglik_grad,
)
from prefgp.models_label import (
    LabelModelSpec,
    fit_label_model,
    ordering_to_string,
    paired_logit_loglik,
    paired_logit_loglik_grad,
    pl_loglik,
    pl_loglik_grad,
    predict_ranking_distribution,
    softmax_choice_prob,
)
from prefgp.models_object import (
    InferenceConfig,
    ObjectModelSpec,
    fit_object_model,
    log_evidence_for_spec,
    predict_preference_prob,
    predict_utility,
)
from prefgp.simulate import dessert_dataset, ellipse_pool, thermal_dataset, thermal_utility
from prefgp.tmvn_sampler import SunParams, TruncationRegion, liness_sample, sun_logpdf, sun_sample

SE_THERMAL = KernelSpec("se_ard", lengthscales=(1.5,), variance=1.0)


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# choice likelihoods
# ---------------------------------------------------------------------------

U_RATIONAL = np.concatenate([np.array([0.2, 0.1, -1.0, -0.5]), np.array([0.0, 0.2, -1.0, -0.5])])
U_PSEUDO = np.concatenate([np.array([0.2, -1.5, -1.0, -2.0]), np.array([-1.5, 0.2, -1.0, -2.0])])
S1 = Choice(frozenset({0, 1, 2}), frozenset({0, 1}))
S2_RATIONAL = Choice(frozenset({0, 1, 3}), frozenset({0}))
S2_PSEUDO = Choice(frozenset({0, 1, 3}), frozenset({0, 1}))


def _rational(stmts, u, sigma):
    return float(np.exp(rational_choice_loglik_grad(4, stmts, u, sigma, 2)[0]))


def _pseudo(stmts, u, sigma):
    return float(np.exp(pseudo_rational_choice_loglik_grad(4, stmts, u, sigma, 2)[0]))


def test_choice_likelihood_exactness():
    t0 = time.time()
    vals = {
        "rational_s1": _rational([S1], U_RATIONAL, 1.0),
        "rational_s2": _rational([S2_RATIONAL], U_RATIONAL, 1.0),
        "rational_joint": _rational([S1, S2_RATIONAL], U_RATIONAL, 1.0),
        "pseudo_s1": _pseudo([S1], U_PSEUDO, 1.0),
        "pseudo_s2": _pseudo([S2_PSEUDO], U_PSEUDO, 1.0),
        "pseudo_joint": _pseudo([S1, S2_PSEUDO], U_PSEUDO, 1.0),
        "cross_s1": _rational([S1], U_PSEUDO, 1.0),
        "cross_s2": _rational([S2_PSEUDO], U_PSEUDO, 1.0),
        "cross_joint": _rational([S1, S2_PSEUDO], U_PSEUDO, 1.0),
    }
    targets = {
        "rational_s1": 0.48,
        "rational_s2": 0.12,
        "rational_joint": 0.057,
        "pseudo_s1": 0.77,
        "pseudo_s2": 0.91,
        "pseudo_joint": 0.71,
        "cross_s1": 0.43,
        "cross_s2": 0.82,
        "cross_joint": 0.35,
    }
    errs = {k: abs(vals[k] - targets[k]) for k in targets}
    dt = time.time() - t0
    ok = max(errs.values()) <= 0.01 and dt < 1.0
    _report(
        "choice-likelihood-exactness",
        ok,
        f"max |measured-target| = {max(errs.values()):.4f} (tol 0.01), {dt:.2f}s (budget 1s)",
    )


def test_sigma_limit_behavior():
    t0 = time.time()
    stmts = [S1, S2_PSEUDO]
    sigmas = [1.0, 0.3, 0.1, 0.03]
    pseudo_vals = [_pseudo(stmts, U_PSEUDO, s) for s in sigmas]
    rational_vals = [_rational(stmts, U_PSEUDO, s) for s in sigmas]
    dt = time.time() - t0
    # the pseudo likelihood saturates at exactly 1.0 in floats: non-strict at the top
    ok = (
        all(b >= a for a, b in zip(pseudo_vals, pseudo_vals[1:]))
        and all(b < a for a, b in zip(rational_vals, rational_vals[1:]))
        and pseudo_vals[-1] > 0.99
        and rational_vals[-1] < 0.01
        and dt < 1.0
    )
    _report(
        "sigma-limit-behavior",
        ok,
        f"pseudo {['%.3f' % v for v in pseudo_vals]} -> 1, "
        f"rational {['%.2e' % v for v in rational_vals]} -> 0, {dt:.2f}s (budget 1s)",
    )


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def test_liness_against_rejection_oracle():
    t0 = time.time()
    W = np.array([[1.0, -0.5]])
    c = np.array([0.4])
    region = TruncationRegion(W=W, c=c)
    mu = np.array([0.3, -0.2])
    Sigma = np.array([[1.0, 0.4], [0.4, 0.8]])
    L = np.linalg.cholesky(Sigma)
    samples = liness_sample(mu, L, region, 20000, burn_in=500, seed=0).values
    hard = bool(np.all(samples @ W.T <= c + 1e-10))
    rng = np.random.default_rng(1)
    raw = mu + rng.standard_normal((400000, 2)) @ L.T
    keep = raw[np.all(raw @ W.T <= c, axis=1)]
    ks = max(
        stats.ks_2samp(samples[:, dim], keep[:, dim]).statistic for dim in range(2)
    )
    dt = time.time() - t0
    ok = hard and ks < 0.02 and dt < 30.0
    _report(
        "liness-correctness",
        ok,
        f"KS vs rejection oracle {ks:.4f} (tol 0.02), constraints hard-satisfied={hard}, "
        f"{dt:.1f}s (budget 30s)",
    )


def test_sun_reduction_and_density():
    t0 = time.time()
    zero_skew = SunParams(
        xi=np.array([0.7]), Omega=np.array([[2.0]]),
        Delta=np.zeros((1, 1)), gamma=np.zeros(1), Gamma=np.eye(1),
    )
    z = sun_sample(zero_skew, 50000, seed=4).values[:, 0]
    ks = stats.kstest(z, stats.norm(loc=0.7, scale=np.sqrt(2.0)).cdf)

    skewed = SunParams(
        xi=np.array([0.2]), Omega=np.array([[1.5]]),
        Delta=np.array([[0.9]]), gamma=np.array([0.3]), Gamma=np.array([[1.3]]),
    )
    total, _ = quad(lambda v: np.exp(sun_logpdf(skewed, np.array([v]))), -12, 12, limit=200)
    draws = sun_sample(skewed, 50000, seed=5).values[:, 0]
    edges = np.linspace(np.quantile(draws, 0.001), np.quantile(draws, 0.999), 41)
    hist, _ = np.histogram(draws, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = np.array([np.exp(sun_logpdf(skewed, np.array([v]))) for v in centers])
    sup_err = float(np.max(np.abs(hist - dens)))
    dt = time.time() - t0
    ok = ks.pvalue > 0.01 and abs(total - 1.0) < 2e-4 and sup_err < 0.03 and dt < 60.0
    _report(
        "sun-reduction",
        ok,
        f"zero-skew KS p={ks.pvalue:.3f} (>0.01), density integral {total:.5f}, "
        f"histogram sup-err {sup_err:.4f} (tol 0.03), {dt:.1f}s (budget 60s)",
    )


# ---------------------------------------------------------------------------
# object models on the thermal comfort data
# ---------------------------------------------------------------------------


def test_thermal_consistent_model_posterior_signs():
    t0 = time.time()
    cfg = InferenceConfig(optimize_hyperparams=False, n_train_samples=3000)
    items, stmts = thermal_dataset(mode="exact", n_pairs=40, seed=0)
    m40 = fit_object_model(items, stmts, ObjectModelSpec("consistent", SE_THERMAL), cfg, seed=0)
    p40 = predict_preference_prob(m40, [20.0], [18.0], n_samples=3000, seed=2)
    items19, stmts19 = thermal_dataset(mode="exact", n_pairs=19, seed=0)
    m19 = fit_object_model(items19, stmts19, ObjectModelSpec("consistent", SE_THERMAL), cfg, seed=0)
    p19 = predict_preference_prob(m19, [20.0], [18.0], n_samples=3000, seed=2)
    dt = time.time() - t0
    ok = p40 >= 0.95 and min(p19, 1.0 - p19) >= 0.05 and dt < 120.0
    _report(
        "thermal-consistent-replication",
        ok,
        f"40 prefs: P(u(20)>u(18))={p40:.3f} (>=0.95); 19 prefs: P={p19:.3f} "
        f"(both signs >=0.05), {dt:.1f}s (budget 120s)",
    )


def test_probit_to_indicator_convergence():
    t0 = time.time()
    items, stmts = thermal_dataset(mode="exact", n_pairs=19, seed=0)
    cfg = InferenceConfig(optimize_hyperparams=False, n_train_samples=4000, thinning=10)
    m3 = fit_object_model(
        items, stmts, ObjectModelSpec("probit", SE_THERMAL, probit_scale=1e-3), cfg, seed=11
    )
    m1 = fit_object_model(items, stmts, ObjectModelSpec("consistent", SE_THERMAL), cfg, seed=11)
    V3 = predict_utility(m3, items.features, n_samples=4000, seed=11).values
    V1 = predict_utility(m1, items.features, n_samples=4000, seed=11).values
    worst = 0.0
    for i, j in combinations(range(items.r), 2):
        p3 = float(np.mean(V3[:, i] > V3[:, j]))
        p1 = float(np.mean(V1[:, i] > V1[:, j]))
        worst = max(worst, abs(p3 - p1))
    dt = time.time() - t0
    ok = worst <= 0.05 and dt < 120.0
    _report(
        "probit-to-indicator-convergence",
        ok,
        f"worst pairwise-probability gap {worst:.4f} (tol 0.05) over all "
        f"{items.r * (items.r - 1) // 2} pairs, {dt:.1f}s (budget 120s)",
    )


def _band_coverage(spec, items, stmts, grid, truth, cfg):
    model = fit_object_model(items, stmts, spec, cfg, seed=0)
    V = predict_utility(model, grid, n_samples=1500, seed=1).values
    lo, hi = np.percentile(V, 2.5, axis=0), np.percentile(V, 97.5, axis=0)
    mean = V.mean(axis=0)
    design = np.vstack([mean, np.ones_like(mean)]).T
    (a, b), *_ = np.linalg.lstsq(design, truth, rcond=None)
    aligned = (truth - b) / a
    return float(np.mean((aligned >= lo) & (aligned <= hi)))


def test_common_noise_discrimination():
    # KNOWN HONEST FAILURE (see the decisions ledger): with exact posterior
    # sampling, the per-statement-noise model's 95% band also fully covers the
    # aligned truth, so "strictly lower" cannot hold.  The criterion is kept
    # as stated rather than weakened.
    t0 = time.time()
    cfg = InferenceConfig(optimize_hyperparams=False, n_train_samples=1500)
    items, stmts = thermal_dataset(mode="common_noise", n_pairs=80, sigma=0.1, seed=0)
    grid = np.linspace(10.0, 25.0, 151)[:, None]
    truth = thermal_utility(grid[:, 0])
    cov_shared = _band_coverage(
        ObjectModelSpec("gaussian_noise", SE_THERMAL, noise_var=0.01), items, stmts, grid, truth, cfg
    )
    cov_probit = _band_coverage(
        ObjectModelSpec("probit", SE_THERMAL, probit_scale=0.1 * np.sqrt(2)),
        items, stmts, grid, truth, cfg,
    )
    dt = time.time() - t0
    ok = cov_shared >= 0.90 and cov_probit < cov_shared and dt < 300.0
    _report(
        "common-noise-discrimination",
        ok,
        f"shared-noise model coverage {cov_shared:.3f} (>=0.90), per-statement probit "
        f"coverage {cov_probit:.3f} (must be strictly lower), {dt:.1f}s (budget 300s)",
    )


# ---------------------------------------------------------------------------
# label models
# ---------------------------------------------------------------------------


def test_gumbel_max_matches_softmax():
    u = np.array([1.0, 0.0, -1.0])
    n = 100000
    rng = np.random.default_rng(0)
    counts = np.bincount(np.argmax(u + rng.gumbel(size=(n, 3)), axis=1), minlength=3) / n
    p = softmax_choice_prob(u)
    sds = np.sqrt(p * (1 - p) / n)
    worst = float(np.max(np.abs(counts - p) / sds))
    ok = worst < 3.0
    _report(
        "gumbel-max-trick",
        ok,
        f"worst |frequency-softmax| = {worst:.2f} binomial standard deviations (tol 3)",
    )


def test_kendall_tau_reference_tables():
    tau1 = kendall_tau_scaled([2, 3, 4, 6, 5, 1], [1, 2, 3, 4, 6, 5])
    tau2 = kendall_tau_scaled([3, 2, 4, 5, 6, 1], [3, 2, 5, 4, 6, 1])
    # the first table evaluates to exactly 2/3; the stated 0.66 is that value
    # printed to two decimals (documented in the decisions ledger), so the
    # assertion pins the exact fraction -- a strictly tighter check
    ok = abs(tau1 - 2.0 / 3.0) <= 1e-12 and abs(tau2 - 0.93) <= 0.005
    _report(
        "kendall-tau-tables",
        ok,
        f"table 1 tau'={tau1:.4f} (exact 2/3; prints as 0.66-0.67), "
        f"table 2 tau'={tau2:.4f} (target 0.93 +/- 0.005)",
    )


def test_dessert_ranking_modal_ordering():
    t0 = time.time()
    cov, stmts, labels = dessert_dataset(n_days=50, seed=0)
    se = KernelSpec("se_ard", lengthscales=(0.15,), variance=1.0)
    spec = LabelModelSpec("plackett_luce", kernels=(se, se, se))
    model = fit_label_model(labels, cov, stmts, spec, steps=800, n_train_samples=800, seed=0)
    dist = predict_ranking_distribution(model, np.array([[0.25]]), n_samples=1500, seed=3)
    modal = max(dist, key=dist.get)
    name = ordering_to_string(modal, labels)
    dt = time.time() - t0
    ok = name == "fib" and dt < 300.0  # fruitcake > icecream > brownie
    _report(
        "dessert-ranking-replication",
        ok,
        f"modal ordering at x=0.25 is {name!r} with p={dist[modal]:.3f} "
        f"(expected 'fib'), {dt:.1f}s (budget 300s)",
    )


# ---------------------------------------------------------------------------
# covariate-preference substitutes (external fixtures unavailable)
# ---------------------------------------------------------------------------


def test_covariate_preference_substitutes():
    print(
        "[acceptance] transportation-accuracies: SKIPPED-EXTERNAL — the mode-choice "
        "fixture and the full-scale ratings corpus are not available in this "
        "environment; running the documented substitutes instead"
    )
    t0 = time.time()
    # substitute 1: tiled-encoding index arithmetic on the two documented rows
    rng = np.random.default_rng(0)
    users = ItemTable(ids=tuple(range(50)), features=rng.standard_normal((50, 3)))
    _, statements = encode_recsys_pairs(users, [(0, 0, 7), (1, 0, 1)], n_items=50)
    prefs = list(statements.statements)
    encode_ok = prefs[0] == Pref(0, 350) and prefs[1] == Pref(1, 51)

    # substitute 2: 20-user/30-item toy, held-out pairwise accuracy > 0.75
    rng = np.random.default_rng(0)
    n_users, n_items = 20, 30
    user_feats = rng.uniform(0, 1, size=(n_users, 2))
    users = ItemTable(ids=tuple(range(n_users)), features=user_feats)

    def true_util(user, item):
        x = user_feats[user]
        pos = item / (n_items - 1)
        return -((pos - x[0]) ** 2) + 0.3 * x[1] * np.cos(2 * np.pi * pos)

    inter = []
    for _ in range(400):
        k = int(rng.integers(n_users))
        a, b = (int(v) for v in rng.choice(n_items, 2, replace=False))
        if true_util(k, a) < true_util(k, b):
            a, b = b, a
        inter.append((k, a, b))
    train, test = inter[:250], inter[250:]
    X, stmts = encode_recsys_pairs(users, train, n_items)
    kernel = KernelSpec("se_ard", lengthscales=(0.3, 0.5, 6.0), variance=1.0)
    cfg = InferenceConfig(optimize_hyperparams=False, n_train_samples=1200)
    model = fit_object_model(
        X, stmts, ObjectModelSpec("probit", kernel, probit_scale=0.2), cfg, seed=0
    )
    mean = predict_utility(model, X.features, n_samples=1200, seed=3).values.mean(axis=0)
    acc = float(
        np.mean([mean[a * n_users + k] > mean[b * n_users + k] for k, a, b in test])
    )
    dt = time.time() - t0
    ok = encode_ok and acc > 0.75
    _report(
        "covariate-preference-substitutes",
        ok,
        f"tiled-encoding rows exact={encode_ok}, toy held-out pairwise accuracy "
        f"{acc:.3f} (>0.75), {dt:.1f}s",
    )


# ---------------------------------------------------------------------------
# gradients and kernel structure
# ---------------------------------------------------------------------------


def test_gradient_suite():
    rng = np.random.default_rng(0)
    worst = {"pl": 0.0, "paired_logit": 0.0, "rational": 0.0, "pseudo_rational": 0.0}

    d, r = 3, 2
    from prefgp.data import Ordering

    orderings = [Ordering(row=0, ranking=(2, 0, 1)), Ordering(row=1, ranking=(0, 1))]
    for name, fval, fgrad in (
        ("pl", pl_loglik, pl_loglik_grad),
        ("paired_logit", paired_logit_loglik, paired_logit_loglik_grad),
    ):
        for _ in range(20):
            u = rng.standard_normal(d * r)
            rel = finite_diff_gradcheck(
                lambda v: fval(orderings, v, r, d),
                lambda v: fgrad(orderings, v, r, d)[1],
                u,
            )
            worst[name] = max(worst[name], rel)

    for name, grad_fn, data in (
        ("rational", rational_choice_loglik_grad, [S1, S2_RATIONAL]),
        ("pseudo_rational", pseudo_rational_choice_loglik_grad, [S1, S2_PSEUDO]),
    ):
        for _ in range(20):
            # moderate scales keep every probit factor away from underflow so
            # the central-difference reference itself stays trustworthy
            u = 0.5 * rng.standard_normal(8)
            sigma = float(rng.uniform(0.5, 1.5))
            rel = finite_diff_gradcheck(
                lambda v: grad_fn(4, data, v, sigma, 2)[0],
                lambda v: grad_fn(4, data, v, sigma, 2)[1],
                u,
            )
            worst[name] = max(worst[name], rel)

    ok = max(worst.values()) < 1e-5
    _report(
        "gradient-suite",
        ok,
        "worst rel-err over 20 instances each: "
        + ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
        + " (tol 1e-5)",
    )


def test_kernel_structure_ranks():
    base = KernelSpec("se_ard", lengthscales=(0.5, 0.9), variance=1.0)
    rng = np.random.default_rng(3)
    x, y, z = rng.standard_normal((3, 2))

    def gram(pairs, fn):
        return np.array([[fn((a, b), (c, d), base) for (c, d) in pairs] for (a, b) in pairs])

    s_swap = np.linalg.svd(gram([(x, y), (y, x)], pref_kernel_eval), compute_uv=False)
    G_swap = gram([(x, y), (y, x)], pref_kernel_eval)
    corr = G_swap[0, 1] / np.sqrt(G_swap[0, 0] * G_swap[1, 1])
    s_tri = np.linalg.svd(gram([(x, y), (y, z), (x, z)], pref_kernel_eval), compute_uv=False)
    s_nt = np.linalg.svd(gram([(x, y), (y, x)], ntpref_kernel_eval), compute_uv=False)

    ratios = (s_swap[1] / s_swap[0], s_tri[2] / s_tri[0], s_nt[1] / s_nt[0])
    ok = max(ratios) < 1e-8 and abs(corr + 1.0) < 1e-10
    _report(
        "kernel-structure",
        ok,
        f"sv ratios: swap {ratios[0]:.1e}, transitive-triple {ratios[1]:.1e}, "
        f"nontransitive swap {ratios[2]:.1e} (tol 1e-8); swap correlation {corr:.6f}",
    )


def test_symmetry_forcing_evidence():
    X = ItemTable(ids=(0, 1), features=np.array([[0.0], [1.0]]))
    kernel = KernelSpec("se_ard", lengthscales=(1.0,), variance=1.0)
    single = StatementSet((Pref(0, 1),))

    # indicator model: a lone preference carries no asymmetry, evidence 1/2
    ev_ind = float(np.exp(log_evidence_for_spec(single, X, ObjectModelSpec("consistent", kernel))))

    # probit model via the Laplace approximation of the log joint
    K = gram_matrix(X.features, kernel).values
    Kinv = np.linalg.inv(K + 1e-10 * np.eye(2))
    _, logdet = np.linalg.slogdet(K + 1e-10 * np.eye(2))
    scale = 0.5

    def logjoint(u):
        prior = -0.5 * u @ Kinv @ u - 0.5 * logdet - np.log(2 * np.pi)
        return float(prior + log_ndtr((u[0] - u[1]) / scale))

    ev_laplace = float(np.exp(laplace_log_marginal(logjoint, dim=2).log_marginal))

    # Laplace must stay exact on a purely Gaussian log joint
    rng = np.random.default_rng(0)
    M = rng.standard_normal((4, 4))
    A = M @ M.T + 4 * np.eye(4)
    b = rng.standard_normal(4)
    sign, logdetA = np.linalg.slogdet(A)
    exact = -1.3 + 0.5 * b @ np.linalg.solve(A, b) + 0.5 * (4 * np.log(2 * np.pi) - logdetA)
    res = laplace_log_marginal(
        lambda u: float(-0.5 * u @ A @ u + b @ u - 1.3), dim=4, grad=lambda u: -A @ u + b
    )
    gauss_err = abs(res.log_marginal - exact)

    ok = abs(ev_ind - 0.5) <= 0.02 and abs(ev_laplace - 0.5) <= 0.02 and gauss_err <= 1e-8
    _report(
        "symmetry-forcing",
        ok,
        f"indicator evidence {ev_ind:.4f}, Laplace probit evidence {ev_laplace:.4f} "
        f"(target 0.5 +/- 0.02), exact-Gaussian Laplace error {gauss_err:.1e} (tol 1e-8)",
    )


# ---------------------------------------------------------------------------
# elicitation service end-to-end
# ---------------------------------------------------------------------------


def test_ellipse_session_accuracy_and_replay(tmp_path):
    from prefgp.elicit_service import ElicitSession, replay_log
    from prefgp.models_choice import pareto_choice_oracle

    t0 = time.time()
    items, truth = ellipse_pool(50, seed=0)
    model_doc = {
        "class": "choice",
        "spec": {
            "d": 2,
            "rationality": "rational",
            "sigma": 0.3,
            "kernels": [
                {"family": "se_ard", "params": {"lengthscales": [0.4, 0.8], "variance": 1.0}}
            ] * 2,
        },
        "inference": {"steps": 400, "n_mc": 4},
    }
    rolling = {}
    sessions = {}
    for session_seed in (11, 42, 99):
        sess = ElicitSession(
            session_id=f"e{session_seed}",
            pool=items,
            model_doc=model_doc,
            query_size=3,
            seed=session_seed,
            strategy="random",
            log_path=tmp_path / f"e{session_seed}.ndjson",
            refit_every=20,
            sync_refit=True,
        )
        sess.log_creation()
        student = np.random.default_rng(7)  # noisy student, one stream per session
        for _ in range(160):
            q = sess.current_query()
            opts = q["option_indices"]
            noisy = {o: truth[o] + 0.15 * student.standard_normal(2) for o in opts}
            chosen_set = pareto_choice_oracle(noisy, opts)
            sess.submit_choice(
                q["query_id"], [q["options"][opts.index(o)] for o in chosen_set]
            )
        rolling[session_seed] = float(np.mean(sess.accuracy_window))
        sessions[session_seed] = sess

    mean_acc = float(np.mean(list(rolling.values())))

    # byte-identical replay of the first session's log
    live = tmp_path / "live.bin"
    sessions[11].model.save(live)
    replayed, version = replay_log(sessions[11].log_path)
    back = tmp_path / "replay.bin"
    replayed.save(back)
    replay_ok = version == sessions[11].version and live.read_bytes() == back.read_bytes()

    dt = time.time() - t0
    ok = abs(mean_acc - 0.84) <= 0.06 and replay_ok
    _report(
        "ellipse-session-replay",
        ok,
        f"rolling accuracy per session {json.dumps(rolling)}, mean {mean_acc:.3f} "
        f"(target 0.84 +/- 0.06); log replay byte-identical={replay_ok}; {dt:.0f}s",
    )
