"""Label-preference models: d utilities over covariates, compared per row.

Variants:
    thurstone     -- orderings of noise-perturbed utilities, exact sampling
    plackett_luce -- exploded-logit ordering likelihood, variational fit
    paired_probit -- probit label pairs, skew-GP posterior
    paired_logit  -- Bradley-Terry label pairs, variational fit

Orderings are chains of distinct label indices, best first; a chain of
length two is a single label pair, longer partial chains contribute their
adjacent comparisons only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.linalg import block_diag
from scipy.special import log_ndtr, logsumexp

from prefgp import model_io
from prefgp.data import DatasetError, ItemTable, Ordering, StatementSet
from prefgp.inference import VariationalPosterior, vi_fit
from prefgp.kernels import (
    KernelSpec,
    block_diag_gram,
    cross_gram,
    gram_matrix,
    jittered_cholesky,
    stack_index,
)
from prefgp.tmvn_sampler import (
    PosteriorSamples,
    TruncationRegion,
    liness_sample,
    predictive_conditional,
)

VARIANTS = ("thurstone", "plackett_luce", "paired_probit", "paired_logit")
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LabelModelSpec:
    variant: str
    kernels: tuple  # one KernelSpec per label utility
    noise_var: float = 1.0  # thurstone comparison-noise variance

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DatasetError(f"unknown label-model variant {self.variant!r}")
        kernels = tuple(self.kernels)
        if len(kernels) < 2:
            raise DatasetError("label models need at least two labels")
        if self.noise_var <= 0:
            raise DatasetError("noise variance must be positive")
        object.__setattr__(self, "kernels", kernels)

    @property
    def d(self) -> int:
        return len(self.kernels)

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "kernels": [k.to_json() for k in self.kernels],
            "noise_var": self.noise_var,
        }

    @staticmethod
    def from_json(obj: dict) -> "LabelModelSpec":
        return LabelModelSpec(
            variant=obj["variant"],
            kernels=tuple(KernelSpec.from_json(k) for k in obj["kernels"]),
            noise_var=float(obj.get("noise_var", 1.0)),
        )


def _orderings_only(statements) -> list:
    out = [s for s in statements if isinstance(s, Ordering)]
    if len(out) != len(list(statements)):
        raise DatasetError("label models accept Ordering statements only")
    if not out:
        raise DatasetError("no ordering statements")
    return out


def _adjacent_pairs(statements, d: int):
    for s in _orderings_only(statements):
        if any(not 0 <= v < d for v in s.ranking):
            raise DatasetError(f"label index out of range in {s.ranking}")
        for a, b in zip(s.ranking[:-1], s.ranking[1:]):
            yield s.row, a, b


def thurstone_constraints(statements, r: int, d: int, noise_var: float):
    """Region over [u; v] (each of length r*d, utility-major) encoding every
    adjacent comparison u_a(x)+v_a(x) > u_b(x)+v_b(x); returns (region,
    noise block size)."""
    rows = []
    for row, a, b in _adjacent_pairs(statements, d):
        w = np.zeros(2 * r * d)
        ia, ib = stack_index(a, row, r), stack_index(b, row, r)
        w[ia] = w[r * d + ia] = 1.0
        w[ib] = w[r * d + ib] = -1.0
        rows.append(-w)  # stored as -W [u;v] <= 0
    if not rows:
        raise DatasetError("no comparisons found")
    return TruncationRegion(np.array(rows), np.zeros(len(rows))), r * d


def pl_loglik_grad(statements, u_stack: np.ndarray, r: int, d: int):
    """Exploded-logit log likelihood of the orderings and its gradient."""
    U = np.asarray(u_stack, float).reshape(d, r)
    grad = np.zeros_like(U)
    total = 0.0
    for s in _orderings_only(statements):
        chain = list(s.ranking)
        x = s.row
        for i in range(len(chain) - 1):
            rest = chain[i:]
            vals = U[rest, x]
            lse = logsumexp(vals)
            total += float(vals[0] - lse)
            soft = np.exp(vals - lse)
            grad[chain[i], x] += 1.0
            grad[rest, x] -= soft
    return total, grad.reshape(-1)


def pl_loglik(statements, u_stack, r: int, d: int) -> float:
    return pl_loglik_grad(statements, u_stack, r, d)[0]


def softmax_choice_prob(u: Sequence[float]) -> np.ndarray:
    u = np.asarray(u, float)
    if not np.all(np.isfinite(u)):
        raise DatasetError("utilities must be finite")
    z = u - np.max(u)
    e = np.exp(z)
    return e / np.sum(e)


def paired_probit_loglik(statements, u_stack, r: int, d: int) -> float:
    U = np.asarray(u_stack, float).reshape(d, r)
    total = 0.0
    for row, a, b in _adjacent_pairs(statements, d):
        total += float(log_ndtr(U[a, row] - U[b, row]))
    return total


def paired_logit_loglik_grad(statements, u_stack, r: int, d: int):
    """Bradley-Terry pair likelihood: exp(u_a)/(exp(u_a)+exp(u_b))."""
    U = np.asarray(u_stack, float).reshape(d, r)
    grad = np.zeros_like(U)
    total = 0.0
    for row, a, b in _adjacent_pairs(statements, d):
        diff = U[a, row] - U[b, row]
        total += float(-np.logaddexp(0.0, -diff))
        p_lose = 1.0 / (1.0 + np.exp(diff)) if diff > -30 else 1.0
        grad[a, row] += p_lose
        grad[b, row] -= p_lose
    return total, grad.reshape(-1)


def paired_logit_loglik(statements, u_stack, r: int, d: int) -> float:
    return paired_logit_loglik_grad(statements, u_stack, r, d)[0]


def _pair_matrix(statements, r: int, d: int) -> np.ndarray:
    rows = []
    for row, a, b in _adjacent_pairs(statements, d):
        w = np.zeros(r * d)
        w[stack_index(a, row, r)] = 1.0
        w[stack_index(b, row, r)] = -1.0
        rows.append(w)
    return np.array(rows)


@dataclass
class FittedLabelModel:
    spec: LabelModelSpec
    labels: tuple
    covariates: ItemTable
    statements: StatementSet
    gram: object  # block Gram over the stacked utilities
    train_samples: Optional[PosteriorSamples] = None  # u(X) draws, r*d
    q: Optional[VariationalPosterior] = None
    seed: int = 0

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def r(self) -> int:
        return self.covariates.r

    def utility_train_samples(self, n_samples: int, seed: int) -> np.ndarray:
        if self.q is not None:
            rng = np.random.default_rng(seed)
            draws, _ = self.q.sample(n_samples, rng)
            return draws
        values = self.train_samples.values
        if values.shape[0] >= n_samples:
            return values[:n_samples]
        reps = -(-n_samples // values.shape[0])
        return np.tile(values, (reps, 1))[:n_samples]

    def utility_samples_at(self, X_star, n_samples: int, seed: int) -> np.ndarray:
        """(n, d, p) utility draws at new covariate rows."""
        feats = np.atleast_2d(np.asarray(getattr(X_star, "features", X_star), float))
        train = self.utility_train_samples(n_samples, seed).reshape(n_samples, self.d, self.r)
        out = np.empty((n_samples, self.d, feats.shape[0]))
        for a in range(self.d):
            gram_a = gram_matrix(self.covariates.features, self.spec.kernels[a])
            k_st = cross_gram(feats, self.covariates.features, self.spec.kernels[a])
            k_ss = cross_gram(feats, feats, self.spec.kernels[a])
            cond = predictive_conditional(
                gram_a,
                k_st,
                k_ss,
                PosteriorSamples(values=train[:, a, :]),
                seed=(seed or 0) + 31 * (a + 1),
            )
            out[:, a, :] = cond.values
        return out

    def save(self, path) -> None:
        meta = {
            "class": "label",
            "spec": self.spec.to_json(),
            "labels": list(self.labels),
            "ids": list(self.covariates.ids),
            "statements": [
                {"row": s.row, "ranking": list(s.ranking)} for s in self.statements
            ],
            "seed": self.seed,
            "has_q": self.q is not None,
        }
        arrays = {"features": self.covariates.features}
        if self.q is not None:
            arrays.update(
                q_mean=self.q.mean,
                q_blocks=self.q.block_factors,
                q_index=self.q.block_index,
                elbo_trace=np.asarray(self.q.elbo_trace, float),
            )
        else:
            arrays["train_samples"] = self.train_samples.values
        model_io.save_blocks(path, meta, arrays)

    @staticmethod
    def load(path) -> "FittedLabelModel":
        meta, arrays = model_io.load_blocks(path)
        if meta["class"] != "label":
            raise DatasetError(f"not a label model file: class={meta['class']!r}")
        spec = LabelModelSpec.from_json(meta["spec"])
        covariates = ItemTable(ids=tuple(meta["ids"]), features=arrays["features"])
        statements = StatementSet(
            tuple(Ordering(s["row"], tuple(s["ranking"])) for s in meta["statements"])
        )
        gram = block_diag_gram(covariates.features, spec.kernels, spec.d)
        model = FittedLabelModel(
            spec=spec,
            labels=tuple(meta["labels"]),
            covariates=covariates,
            statements=statements,
            gram=gram,
            seed=meta["seed"],
        )
        if meta["has_q"]:
            model.q = VariationalPosterior(
                mean=arrays["q_mean"],
                block_index=arrays["q_index"].astype(int),
                block_factors=arrays["q_blocks"],
                elbo_trace=list(arrays["elbo_trace"]),
            )
        else:
            model.train_samples = PosteriorSamples(values=arrays["train_samples"])
        return model


def fit_label_model(
    labels: Sequence,
    covariates: ItemTable,
    statements: StatementSet,
    spec: LabelModelSpec,
    n_train_samples: int = 2000,
    steps: int = 1500,
    learning_rate: float = 2e-2,
    n_mc: int = 8,
    seed: int = 0,
) -> FittedLabelModel:
    if len(labels) != spec.d:
        raise DatasetError("label count does not match kernel count")
    if spec.d < 2:
        raise DatasetError("need at least two labels to compare")
    _orderings_only(statements)
    statements.validate_against(covariates, spec.d)
    r, d = covariates.r, spec.d
    gram = block_diag_gram(covariates.features, spec.kernels, d)
    model = FittedLabelModel(
        spec=spec,
        labels=tuple(labels),
        covariates=covariates,
        statements=statements,
        gram=gram,
        seed=seed,
    )
    if spec.variant == "thurstone":
        region, n_noise = thurstone_constraints(statements, r, d, spec.noise_var)
        chol = block_diag(gram.chol, np.sqrt(spec.noise_var) * np.eye(n_noise))
        draws = liness_sample(
            np.zeros(2 * r * d), chol, region, n_train_samples, seed=seed
        )
        model.train_samples = PosteriorSamples(values=draws.values[:, : r * d], seed=seed)
    elif spec.variant == "paired_probit":
        W = _pair_matrix(statements, r, d)
        Gamma = W @ gram.values @ W.T + np.eye(W.shape[0])
        cholG, _ = jittered_cholesky(Gamma, max(1.0, float(np.max(np.diag(Gamma)))))
        region = TruncationRegion(-np.eye(W.shape[0]), np.zeros(W.shape[0]))
        r1 = liness_sample(np.zeros(W.shape[0]), cholG, region, n_train_samples, seed=seed).values
        from scipy.linalg import cho_solve

        C = gram.values @ W.T
        Ginv_Ct = cho_solve((cholG, True), C.T)
        cov0 = gram.values - C @ Ginv_Ct
        chol0, _ = jittered_cholesky(
            0.5 * (cov0 + cov0.T) + 1e-12 * np.eye(r * d),
            max(1.0, float(np.max(np.diag(gram.values)))),
        )
        rng = np.random.default_rng(seed + 1)
        r0 = rng.standard_normal((n_train_samples, r * d)) @ chol0.T
        model.train_samples = PosteriorSamples(values=r0 + r1 @ Ginv_Ct, seed=seed)
    else:
        if spec.variant == "plackett_luce":
            fn = lambda u: pl_loglik_grad(statements, u, r, d)
        else:
            fn = lambda u: paired_logit_loglik_grad(statements, u, r, d)
        block_index = np.array([[stack_index(a, i, r) for a in range(d)] for i in range(r)], int)
        model.q = vi_fit(
            fn,
            gram,
            block_index,
            steps=steps,
            learning_rate=learning_rate,
            n_mc=n_mc,
            seed=seed,
        )
    return model


def ordering_to_string(ordering: Sequence[int], labels: Sequence) -> str:
    return "".join(str(labels[v])[0] for v in ordering)


def predict_ranking_distribution(
    model: FittedLabelModel, x_star, n_samples: int = 2000, seed: int = 0, top_k: int = 20
) -> Dict[tuple, float]:
    """Empirical distribution of the ordering of u(x*) under the posterior.

    Full support is enumerable only up to d=10; beyond that the ``top_k``
    most frequent orderings are returned (probabilities still relative to
    the full draw count)."""
    draws = model.utility_samples_at(np.atleast_2d(np.asarray(x_star, float)), n_samples, seed)
    counts: Dict[tuple, int] = {}
    for s in range(n_samples):
        order = tuple(np.argsort(-draws[s, :, 0], kind="stable"))
        counts[order] = counts.get(order, 0) + 1
    probs = {k: v / n_samples for k, v in counts.items()}
    if model.d > 10:
        top = sorted(probs, key=lambda k: -probs[k])[:top_k]
        return {k: probs[k] for k in top}
    return probs
