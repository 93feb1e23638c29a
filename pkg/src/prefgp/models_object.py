"""Object-preference models over a single latent utility.

Variants:
    consistent      -- error-free preferences, truncated-Gaussian posterior
    jnd             -- strict preference + indiscernibility with threshold delta
    probit          -- Gaussian comparison errors, skew-GP posterior
    gaussian_noise  -- common per-item observation noise, augmented latent
    pref_classifier -- GP classifier on item pairs with the preference kernel
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag, cho_solve

from prefgp import model_io
from prefgp.data import DatasetError, Indiff, ItemTable, Pref, StatementSet
from prefgp.inference import (
    InferenceError,
    laplace_log_marginal,
    optimize_hyperparams,
    probit_log_evidence,
    soft_indicator_logjoint,
    soft_indicator_logjoint_grad,
)
from prefgp.kernels import (
    GramMatrix,
    KernelSpec,
    cross_gram,
    gram_matrix,
    jittered_cholesky,
)
from prefgp.tmvn_sampler import (
    PosteriorSamples,
    SunParams,
    TruncationRegion,
    find_feasible_point,
    liness_sample,
    predictive_conditional,
)

VARIANTS = ("consistent", "jnd", "probit", "gaussian_noise", "pref_classifier")


@dataclass(frozen=True)
class ObjectModelSpec:
    variant: str
    kernel: KernelSpec
    probit_scale: float = 1.0
    jnd_scale: Optional[float] = None
    noise_var: Optional[float] = None
    noise_sharing: str = "per_item"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DatasetError(f"unknown object-model variant {self.variant!r}")
        if self.variant == "probit" and self.probit_scale <= 0:
            raise DatasetError("probit scale must be positive")
        if self.variant == "jnd" and (self.jnd_scale is None or self.jnd_scale <= 0):
            raise DatasetError("jnd variant requires a positive jnd_scale")
        if self.variant == "gaussian_noise":
            if self.noise_var is None or self.noise_var <= 0:
                raise DatasetError("gaussian_noise variant requires a positive noise_var")
            if self.noise_sharing not in ("per_item", "per_statement"):
                raise DatasetError(f"unknown noise_sharing {self.noise_sharing!r}")

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "kernel": self.kernel.to_json(),
            "probit_scale": self.probit_scale,
            "jnd_scale": self.jnd_scale,
            "noise_var": self.noise_var,
            "noise_sharing": self.noise_sharing,
        }

    @staticmethod
    def from_json(obj: dict) -> "ObjectModelSpec":
        return ObjectModelSpec(
            variant=obj["variant"],
            kernel=KernelSpec.from_json(obj["kernel"]),
            probit_scale=obj.get("probit_scale") or 1.0,
            jnd_scale=obj.get("jnd_scale"),
            noise_var=obj.get("noise_var"),
            noise_sharing=obj.get("noise_sharing", "per_item"),
        )


@dataclass
class InferenceConfig:
    optimize_hyperparams: bool = False
    n_train_samples: int = 2000
    burn_in: int = 500
    thinning: int = 5
    temperature: float = 1e-2
    opt_budget: int = 200
    opt_restarts: int = 3
    lengthscale_bounds: tuple = (np.log(1e-2), np.log(1e3))

    @staticmethod
    def from_json(obj: Optional[dict]) -> "InferenceConfig":
        cfg = InferenceConfig()
        for key, value in (obj or {}).items():
            if not hasattr(cfg, key):
                raise DatasetError(f"unknown inference option {key!r}")
            setattr(cfg, key, value)
        return cfg


@dataclass(frozen=True)
class SkewGpPosterior:
    """SUN parameters of a probit-likelihood posterior, keyed by the training
    design: at query points X* the posterior is
    SUN(0, K(X*,X*), K(X*,X) W^T, 0, W K W^T + I)."""

    gram: GramMatrix
    W: np.ndarray
    Gamma: np.ndarray
    chol_Gamma: np.ndarray

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def sun_params(self, k_star_train: np.ndarray, k_star_star: np.ndarray) -> SunParams:
        Delta = np.atleast_2d(k_star_train) @ self.W.T
        return SunParams(
            xi=np.zeros(Delta.shape[0]),
            Omega=np.atleast_2d(k_star_star),
            Delta=Delta,
            gamma=np.zeros(self.m),
            Gamma=self.Gamma,
        )

    def sample_r1(
        self, n_samples: int, seed: int, burn_in: int = 500, thinning: int = 1
    ) -> np.ndarray:
        region = TruncationRegion(-np.eye(self.m), np.zeros(self.m))
        return liness_sample(
            np.zeros(self.m),
            self.chol_Gamma,
            region,
            n_samples,
            burn_in=burn_in,
            thinning=thinning,
            seed=seed,
        ).values

    def predictive_samples(
        self,
        k_star_train: np.ndarray,
        k_star_star: np.ndarray,
        r1: np.ndarray,
        seed: int,
    ) -> np.ndarray:
        """u(X*) = r0 + C* Gamma^-1 r1 with shared truncated draws r1."""
        C = np.atleast_2d(k_star_train) @ self.W.T
        Ginv_Ct = cho_solve((self.chol_Gamma, True), C.T)
        cov0 = np.atleast_2d(k_star_star) - C @ Ginv_Ct
        cov0 = 0.5 * (cov0 + cov0.T)
        scale = max(1e-12, float(np.max(np.abs(np.diag(np.atleast_2d(k_star_star))))))
        chol0, _ = jittered_cholesky(cov0 + 1e-12 * scale * np.eye(cov0.shape[0]), scale)
        rng = np.random.default_rng(seed)
        r0 = rng.standard_normal((r1.shape[0], cov0.shape[0])) @ chol0.T
        return r0 + r1 @ Ginv_Ct


def _prefs_only(statements) -> list:
    prefs = [s for s in statements if isinstance(s, Pref)]
    if len(prefs) != len(list(statements)):
        raise DatasetError("this operation accepts strict preference statements only")
    if not prefs:
        raise DatasetError("no preference statements")
    return prefs


def preference_matrix(statements, X: ItemTable) -> np.ndarray:
    """m x r matrix with +1 at the preferred item and -1 at the other."""
    prefs = _prefs_only(statements)
    W = np.zeros((len(prefs), X.r))
    for s_idx, s in enumerate(prefs):
        for idx in (s.i, s.j):
            if not 0 <= idx < X.r:
                raise DatasetError(f"unknown item index {idx}")
        W[s_idx, s.i] = 1.0
        W[s_idx, s.j] = -1.0
    return W


def build_constraints_consistent(statements, X: ItemTable) -> TruncationRegion:
    """{u : W u >= 0} stored as -W u <= 0."""
    W = preference_matrix(statements, X)
    return TruncationRegion(-W, np.zeros(W.shape[0]))


def build_constraints_jnd(statements, X: ItemTable, delta: float) -> TruncationRegion:
    """Strict rows u'_i - u'_j >= 1 then two rows |u'_i - u'_j| <= 1 per
    indiscernibility pair, all over u' = u/delta."""
    if delta <= 0:
        raise DatasetError("jnd threshold must be positive")
    strict = [s for s in statements if isinstance(s, Pref)]
    indiff = [s for s in statements if isinstance(s, Indiff)]
    if len(strict) + len(indiff) != len(list(statements)):
        raise DatasetError("jnd constraints accept pref and indiff statements only")
    if not strict and not indiff:
        raise DatasetError("no statements")
    rows, rhs = [], []
    for s in strict:
        row = np.zeros(X.r)
        row[s.i], row[s.j] = -1.0, 1.0  # -(u'_i - u'_j) <= -1
        rows.append(row)
        rhs.append(-1.0)
    for s in indiff:
        for sign in (1.0, -1.0):
            row = np.zeros(X.r)
            row[s.i], row[s.j] = sign, -sign
            rows.append(row)
            rhs.append(1.0)
    for s in strict + indiff:
        if not (0 <= s.i < X.r and 0 <= s.j < X.r):
            raise DatasetError(f"unknown item index in {s}")
    return TruncationRegion(np.array(rows), np.array(rhs))


def build_constraints_gaussian_noise(
    statements, X: ItemTable, noise_var: float, sharing: str = "per_item"
):
    """Region over the augmented latent [u; v] plus its prior covariance
    blocks (K, sigma^2 I).  Returns (region, noise_coord_of_item or None,
    n_noise)."""
    prefs = _prefs_only(statements)
    if sharing == "per_item":
        order: dict = {}
        for s in prefs:
            for idx in (s.i, s.j):
                order.setdefault(idx, len(order))
        n_noise = len(order)
        coords = [(order[s.i], order[s.j]) for s in prefs]
        noise_of_item = order
    elif sharing == "per_statement":
        n_noise = 2 * len(prefs)
        coords = [(2 * k, 2 * k + 1) for k in range(len(prefs))]
        noise_of_item = None
    else:
        raise DatasetError(f"unknown noise sharing {sharing!r}")
    m, r = len(prefs), X.r
    W = np.zeros((m, r + n_noise))
    for k, s in enumerate(prefs):
        if not (0 <= s.i < r and 0 <= s.j < r):
            raise DatasetError(f"unknown item index in {s}")
        vi, vj = coords[k]
        W[k, s.i] = 1.0
        W[k, s.j] = -1.0
        W[k, r + vi] = 1.0
        W[k, r + vj] = -1.0
    region = TruncationRegion(-W, np.zeros(m))
    return region, noise_of_item, n_noise


def _scaled_spec(kernel: KernelSpec, scale: float) -> KernelSpec:
    """Kernel of u' = u/scale."""
    if scale == 1.0:
        return kernel
    if kernel.family == "se_ard":
        return replace(kernel, variance=kernel.variance / scale**2)
    if kernel.family == "linear":
        return replace(
            kernel,
            feature_variances=tuple(v / scale**2 for v in kernel.feature_variances),
        )
    raise DatasetError("pair kernels are not rescaled directly")


def probit_posterior(statements, X: ItemTable, spec: ObjectModelSpec) -> SkewGpPosterior:
    """Skew-GP posterior of Model 3 over u' = u/sigma."""
    W = preference_matrix(statements, X)
    gram = gram_matrix(X.features, _scaled_spec(spec.kernel, spec.probit_scale))
    Gamma = W @ gram.values @ W.T + np.eye(W.shape[0])
    chol_G, _ = jittered_cholesky(Gamma, max(1.0, float(np.max(np.diag(Gamma)))))
    return SkewGpPosterior(gram=gram, W=W, Gamma=Gamma, chol_Gamma=chol_G)


def classifier_posterior(statements, X: ItemTable, base_kernel: KernelSpec):
    """Skew-GP classifier posterior over q([x,y]) with the preference kernel;
    rows are winner-left so every label is +1.  Returns (posterior, pair
    feature rows)."""
    prefs = _prefs_only(statements)
    pair_rows = np.array(
        [np.concatenate([X.features[s.i], X.features[s.j]]) for s in prefs]
    )
    pref_spec = KernelSpec("pref", base=base_kernel)
    gram = gram_matrix(pair_rows, pref_spec)
    m = len(prefs)
    W = np.eye(m)
    Gamma = gram.values + np.eye(m)
    chol_G, _ = jittered_cholesky(Gamma, max(1.0, float(np.max(np.diag(Gamma)))))
    return SkewGpPosterior(gram=gram, W=W, Gamma=Gamma, chol_Gamma=chol_G), pair_rows


@dataclass
class FittedObjectModel:
    spec: ObjectModelSpec
    X: ItemTable
    statements: StatementSet
    fitted_kernel: KernelSpec
    train_samples: PosteriorSamples
    gram: GramMatrix  # prior Gram over the single-utility latent u'(X)
    region: Optional[TruncationRegion] = None
    skew: Optional[SkewGpPosterior] = None
    r1: Optional[np.ndarray] = None
    pair_rows: Optional[np.ndarray] = None
    n_noise: int = 0
    log_evidence: Optional[float] = None
    seed: int = 0

    @property
    def latent_scale(self) -> float:
        if self.spec.variant == "probit":
            return self.spec.probit_scale
        if self.spec.variant == "jnd":
            return self.spec.jnd_scale
        return 1.0

    def save(self, path) -> None:
        meta = {
            "class": "object",
            "spec": self.spec.to_json(),
            "fitted_kernel": self.fitted_kernel.to_json(),
            "ids": list(self.X.ids),
            "statements": [
                {"type": "pref", "i": s.i, "j": s.j}
                if isinstance(s, Pref)
                else {"type": "indiff", "i": s.i, "j": s.j}
                for s in self.statements
            ],
            "item_hash": self.X.content_hash(),
            "n_noise": self.n_noise,
            "log_evidence": self.log_evidence,
            "seed": self.seed,
        }
        arrays = {"features": self.X.features, "train_samples": self.train_samples.values}
        if self.r1 is not None:
            arrays["r1"] = self.r1
        model_io.save_blocks(path, meta, arrays)

    @staticmethod
    def load(path) -> "FittedObjectModel":
        meta, arrays = model_io.load_blocks(path)
        if meta["class"] != "object":
            raise DatasetError(f"not an object model file: class={meta['class']!r}")
        spec = ObjectModelSpec.from_json(meta["spec"])
        X = ItemTable(ids=tuple(meta["ids"]), features=arrays["features"])
        statements = StatementSet(
            tuple(
                Pref(s["i"], s["j"]) if s["type"] == "pref" else Indiff(s["i"], s["j"])
                for s in meta["statements"]
            )
        )
        fitted = replace(spec, kernel=KernelSpec.from_json(meta["fitted_kernel"]))
        model = _assemble(
            X,
            statements,
            fitted,
            seed=meta["seed"],
        )
        model.train_samples = PosteriorSamples(values=arrays["train_samples"], seed=meta["seed"])
        if "r1" in arrays:
            model.r1 = arrays["r1"]
        model.log_evidence = meta["log_evidence"]
        return model


def _latent_gram(X: ItemTable, spec: ObjectModelSpec) -> GramMatrix:
    if spec.variant == "probit":
        return gram_matrix(X.features, _scaled_spec(spec.kernel, spec.probit_scale))
    if spec.variant == "jnd":
        return gram_matrix(X.features, _scaled_spec(spec.kernel, spec.jnd_scale))
    return gram_matrix(X.features, spec.kernel)


def log_evidence_for_spec(
    statements, X: ItemTable, spec: ObjectModelSpec, temperature: float = 1e-2
) -> float:
    """Marginal likelihood of the observed statements.

    For every variant the likelihood is (a softened) indicator of linear
    constraints, so the evidence is the Gaussian probability of the
    constraint slab: Phi_m(c; W S W^T + s^2 I).  Computed by the orthant
    integral for moderate m, by Laplace on the softened log joint otherwise.
    """
    region, cov_gram = _evidence_parts(statements, X, spec, temperature)
    noise = 1.0 if spec.variant in ("probit", "pref_classifier") else temperature
    if region.m <= 30:
        return probit_log_evidence(region, cov_gram, noise)
    res = laplace_log_marginal(
        lambda u: soft_indicator_logjoint(region, u, cov_gram, noise),
        cov_gram.size,
        grad=lambda u: soft_indicator_logjoint_grad(region, u, cov_gram, noise),
    )
    return res.log_marginal


def _evidence_parts(statements, X, spec, temperature):
    if spec.variant == "consistent":
        return build_constraints_consistent(statements, X), gram_matrix(X.features, spec.kernel)
    if spec.variant == "jnd":
        return (
            build_constraints_jnd(statements, X, spec.jnd_scale),
            gram_matrix(X.features, _scaled_spec(spec.kernel, spec.jnd_scale)),
        )
    if spec.variant == "probit":
        region = TruncationRegion(-preference_matrix(statements, X), np.zeros(len(list(statements))))
        return region, gram_matrix(X.features, _scaled_spec(spec.kernel, spec.probit_scale))
    if spec.variant == "gaussian_noise":
        region, _, n_noise = build_constraints_gaussian_noise(
            statements, X, spec.noise_var, spec.noise_sharing
        )
        K = gram_matrix(X.features, spec.kernel)
        values = block_diag(K.values, spec.noise_var * np.eye(n_noise))
        chol = block_diag(K.chol, np.sqrt(spec.noise_var) * np.eye(n_noise))
        return region, GramMatrix(values=values, chol=chol, jitter_used=K.jitter_used)
    if spec.variant == "pref_classifier":
        post, _ = classifier_posterior(statements, X, spec.kernel)
        region = TruncationRegion(-post.W, np.zeros(post.m))
        return region, post.gram
    raise DatasetError(spec.variant)


def _optimized_kernel(statements, X, spec, cfg: InferenceConfig, seed: int) -> KernelSpec:
    kernel = spec.kernel
    if kernel.family == "se_ard":
        n_par = len(kernel.lengthscales)
        build = lambda logp: replace(kernel, lengthscales=tuple(np.exp(logp)))
    elif kernel.family == "linear":
        n_par = len(kernel.feature_variances)
        build = lambda logp: replace(kernel, feature_variances=tuple(np.exp(logp)))
    else:
        return kernel

    def evaluate(logp):
        candidate = replace(spec, kernel=build(logp))
        return log_evidence_for_spec(statements, X, candidate, cfg.temperature)

    if kernel.family == "se_ard":
        x0 = np.log(np.asarray(kernel.lengthscales))
    else:
        x0 = np.log(np.asarray(kernel.feature_variances))
    bounds = [cfg.lengthscale_bounds] * n_par
    result = optimize_hyperparams(
        evaluate, x0, bounds, budget=cfg.opt_budget, restarts=cfg.opt_restarts, seed=seed
    )
    return build(result.best_log_params)


def _assemble(X, statements, spec, seed) -> FittedObjectModel:
    """Build the model structure (regions, posteriors) without sampling."""
    gram = _latent_gram(X, spec)
    model = FittedObjectModel(
        spec=spec,
        X=X,
        statements=statements,
        fitted_kernel=spec.kernel,
        train_samples=PosteriorSamples(values=np.empty((0, X.r))),
        gram=gram,
        seed=seed,
    )
    if spec.variant == "consistent":
        model.region = build_constraints_consistent(statements, X)
    elif spec.variant == "jnd":
        model.region = build_constraints_jnd(statements, X, spec.jnd_scale)
    elif spec.variant == "gaussian_noise":
        region, _, n_noise = build_constraints_gaussian_noise(
            statements, X, spec.noise_var, spec.noise_sharing
        )
        model.region = region
        model.n_noise = n_noise
    elif spec.variant == "probit":
        model.skew = probit_posterior(statements, X, spec)
    elif spec.variant == "pref_classifier":
        model.skew, model.pair_rows = classifier_posterior(statements, X, spec.kernel)
    return model


def fit_object_model(
    X: ItemTable,
    statements: StatementSet,
    spec: ObjectModelSpec,
    config: Optional[InferenceConfig] = None,
    seed: int = 0,
) -> FittedObjectModel:
    cfg = config or InferenceConfig()
    if len(statements) == 0:
        raise DatasetError("cannot fit on an empty statement set")
    statements.validate_against(X)
    if cfg.optimize_hyperparams:
        spec = replace(spec, kernel=_optimized_kernel(statements, X, spec, cfg, seed))
    model = _assemble(X, statements, spec, seed)
    model.fitted_kernel = spec.kernel
    n = cfg.n_train_samples
    if spec.variant in ("consistent", "jnd"):
        model.train_samples = liness_sample(
            np.zeros(X.r),
            model.gram.chol,
            model.region,
            n,
            burn_in=cfg.burn_in,
            thinning=cfg.thinning,
            seed=seed,
        )
    elif spec.variant == "gaussian_noise":
        chol = block_diag(model.gram.chol, np.sqrt(spec.noise_var) * np.eye(model.n_noise))
        model.train_samples = liness_sample(
            np.zeros(X.r + model.n_noise),
            chol,
            model.region,
            n,
            burn_in=cfg.burn_in,
            thinning=cfg.thinning,
            seed=seed,
        )
    else:
        skew = model.skew
        model.r1 = skew.sample_r1(n, seed, burn_in=cfg.burn_in, thinning=cfg.thinning)
        values = skew.predictive_samples(
            skew.gram.values, skew.gram.values, model.r1, seed + 1
        )
        model.train_samples = PosteriorSamples(values=values, seed=seed)
    try:
        model.log_evidence = log_evidence_for_spec(statements, X, spec, cfg.temperature)
    except Exception:
        model.log_evidence = None
    return model


def _utility_train_values(model: FittedObjectModel) -> np.ndarray:
    values = model.train_samples.values
    if model.spec.variant == "gaussian_noise":
        return values[:, : model.X.r]
    return values


def _u_gram(model: FittedObjectModel) -> GramMatrix:
    if model.spec.variant == "gaussian_noise":
        return model.gram
    return model.gram


def predict_utility(
    model: FittedObjectModel, X_star, n_samples: int = 1000, seed: int = 0
) -> PosteriorSamples:
    """Posterior predictive draws of the latent utility at query points."""
    feats = getattr(X_star, "features", X_star)
    feats = np.asarray(feats, float)
    if feats.ndim == 1:
        feats = feats[None, :]
    if feats.shape[0] == 0:
        return PosteriorSamples(values=np.empty((n_samples, 0)), seed=seed)
    if model.spec.variant == "pref_classifier":
        raise DatasetError(
            "pref_classifier has no per-item utility; use predict_preference_prob"
        )
    kernel = _latent_kernel(model)
    k_st = cross_gram(feats, model.X.features, kernel)
    k_ss = cross_gram(feats, feats, kernel)
    if model.spec.variant == "probit":
        r1 = _take_rows(model.r1, n_samples)
        values = model.skew.predictive_samples(k_st, k_ss, r1, seed)
        return PosteriorSamples(values=values, seed=seed)
    train = _take_rows(_utility_train_values(model), n_samples)
    return predictive_conditional(
        _u_gram(model), k_st, k_ss, PosteriorSamples(values=train), seed=seed
    )


def _latent_kernel(model: FittedObjectModel) -> KernelSpec:
    if model.spec.variant == "probit":
        return _scaled_spec(model.fitted_kernel, model.spec.probit_scale)
    if model.spec.variant == "jnd":
        return _scaled_spec(model.fitted_kernel, model.spec.jnd_scale)
    return model.fitted_kernel


def _take_rows(values: np.ndarray, n: int) -> np.ndarray:
    if values.shape[0] >= n:
        return values[:n]
    reps = -(-n // values.shape[0])
    return np.tile(values, (reps, 1))[:n]


def _frac_positive(diff: np.ndarray) -> float:
    return float(np.mean((diff > 0) + 0.5 * (diff == 0)))


def predict_preference_prob(
    model: FittedObjectModel, x_star, y_star, n_samples: int = 2000, seed: int = 0
) -> float:
    """P(x* preferred to y*); exact ties contribute 0.5, and the pair is
    ordered canonically internally so P(x,y) + P(y,x) = 1 exactly."""
    x = np.asarray(x_star, float).ravel()
    y = np.asarray(y_star, float).ravel()
    if np.array_equal(x, y):
        return 0.5
    flip = tuple(x.tolist()) > tuple(y.tolist())
    a, b = (y, x) if flip else (x, y)
    if model.spec.variant == "pref_classifier":
        pair = np.concatenate([a, b])[None, :]
        kernel = KernelSpec("pref", base=model.fitted_kernel)
        k_st = cross_gram(pair, model.pair_rows, kernel)
        k_ss = cross_gram(pair, pair, kernel)
        r1 = _take_rows(model.r1, n_samples)
        q = model.skew.predictive_samples(k_st, k_ss, r1, seed)[:, 0]
        p_ab = _frac_positive(q)
    else:
        draws = predict_utility(model, np.vstack([a, b]), n_samples=n_samples, seed=seed)
        p_ab = _frac_positive(draws.values[:, 0] - draws.values[:, 1])
    return 1.0 - p_ab if flip else p_ab


def predict_statement_prob(
    model: FittedObjectModel, x_star, y_star, n_samples: int = 2000, seed: int = 0
) -> float:
    """Posterior predictive probability that a fresh noisy comparison comes
    out as x* preferred to y* (probit variant: the statement includes its own
    comparison error, unlike the latent sign in predict_preference_prob)."""
    from scipy.special import ndtr

    if model.spec.variant != "probit":
        return predict_preference_prob(model, x_star, y_star, n_samples, seed)
    x = np.asarray(x_star, float).ravel()
    y = np.asarray(y_star, float).ravel()
    draws = predict_utility(model, np.vstack([x, y]), n_samples=n_samples, seed=seed)
    return float(np.mean(ndtr(draws.values[:, 0] - draws.values[:, 1])))
