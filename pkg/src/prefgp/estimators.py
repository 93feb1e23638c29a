"""Thin estimator-style wrappers over the functional fitting API.

Each estimator follows the fit/predict + get_params/set_params protocol so
the models can be dropped into generic tooling; all behavior delegates to
the functional core (:func:`prefgp.models_object.fit_object_model` and
friends), which remains the primary interface.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from prefgp.data import DatasetError, ItemTable, StatementSet
from prefgp.kernels import KernelSpec
from prefgp.models_choice import ChoiceModelSpec, fit_choice_model, predict_choice
from prefgp.models_label import LabelModelSpec, fit_label_model, predict_ranking_distribution
from prefgp.models_object import (
    InferenceConfig,
    ObjectModelSpec,
    fit_object_model,
    predict_preference_prob,
    predict_utility,
)


class _ParamsMixin:
    _param_names: tuple = ()

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._param_names:
                raise DatasetError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _check_fitted(self):
        if getattr(self, "model_", None) is None:
            raise DatasetError("estimator is not fitted yet; call fit first")


class PreferenceGP(_ParamsMixin):
    """Single-utility preference model (consistent/jnd/probit/gaussian_noise/
    pref_classifier)."""

    _param_names = (
        "variant",
        "kernel",
        "probit_scale",
        "jnd_scale",
        "noise_var",
        "noise_sharing",
        "inference",
        "seed",
    )

    def __init__(
        self,
        variant: str = "consistent",
        kernel: Optional[KernelSpec] = None,
        probit_scale: float = 1.0,
        jnd_scale: Optional[float] = None,
        noise_var: Optional[float] = None,
        noise_sharing: str = "per_item",
        inference: Optional[dict] = None,
        seed: int = 0,
    ):
        self.variant = variant
        self.kernel = kernel
        self.probit_scale = probit_scale
        self.jnd_scale = jnd_scale
        self.noise_var = noise_var
        self.noise_sharing = noise_sharing
        self.inference = inference
        self.seed = seed
        self.model_ = None

    def fit(self, items: ItemTable, statements: StatementSet) -> "PreferenceGP":
        kernel = self.kernel or KernelSpec(
            "se_ard", lengthscales=(1.0,) * items.n_features, variance=1.0
        )
        spec = ObjectModelSpec(
            variant=self.variant,
            kernel=kernel,
            probit_scale=self.probit_scale,
            jnd_scale=self.jnd_scale,
            noise_var=self.noise_var,
            noise_sharing=self.noise_sharing,
        )
        self.model_ = fit_object_model(
            items, statements, spec, InferenceConfig.from_json(self.inference), seed=self.seed
        )
        return self

    def predict(self, X, n_samples: int = 1000) -> np.ndarray:
        """Posterior mean utility at feature rows X."""
        self._check_fitted()
        draws = predict_utility(self.model_, np.atleast_2d(X), n_samples=n_samples, seed=self.seed)
        return draws.values.mean(axis=0)

    def predict_pair_proba(self, x, y, n_samples: int = 2000) -> float:
        self._check_fitted()
        return predict_preference_prob(self.model_, x, y, n_samples=n_samples, seed=self.seed)


class RankingGP(_ParamsMixin):
    """Multi-label ranking model (thurstone/plackett_luce/paired_probit/
    paired_logit)."""

    _param_names = ("variant", "kernels", "noise_var", "labels", "inference", "seed")

    def __init__(
        self,
        variant: str = "plackett_luce",
        kernels: Optional[tuple] = None,
        noise_var: float = 1.0,
        labels: Optional[tuple] = None,
        inference: Optional[dict] = None,
        seed: int = 0,
    ):
        self.variant = variant
        self.kernels = kernels
        self.noise_var = noise_var
        self.labels = labels
        self.inference = inference
        self.seed = seed
        self.model_ = None

    def fit(self, covariates: ItemTable, statements: StatementSet) -> "RankingGP":
        if self.kernels is None:
            raise DatasetError("RankingGP requires one kernel per label")
        spec = LabelModelSpec(
            variant=self.variant, kernels=tuple(self.kernels), noise_var=self.noise_var
        )
        labels = self.labels or tuple(str(k) for k in range(spec.d))
        self.model_ = fit_label_model(
            labels, covariates, statements, spec, seed=self.seed, **(self.inference or {})
        )
        return self

    def predict(self, X, n_samples: int = 1000) -> list:
        """Modal ordering (label indices, best first) at each feature row."""
        self._check_fitted()
        rows = np.atleast_2d(np.asarray(X, float))
        out = []
        for row in rows:
            dist = predict_ranking_distribution(
                self.model_, row, n_samples=n_samples, seed=self.seed
            )
            out.append(max(dist, key=dist.get))
        return out

    def predict_proba(self, x, n_samples: int = 1000) -> dict:
        self._check_fitted()
        return predict_ranking_distribution(self.model_, x, n_samples=n_samples, seed=self.seed)


class ChoiceGP(_ParamsMixin):
    """Set-valued choice-function model (rational/pseudo_rational)."""

    _param_names = ("d", "rationality", "sigma", "kernels", "inference", "seed")

    def __init__(
        self,
        d: int = 2,
        rationality: str = "rational",
        sigma: float = 0.3,
        kernels: Optional[tuple] = None,
        inference: Optional[dict] = None,
        seed: int = 0,
    ):
        self.d = d
        self.rationality = rationality
        self.sigma = sigma
        self.kernels = kernels
        self.inference = inference
        self.seed = seed
        self.model_ = None

    def fit(self, items: ItemTable, statements: StatementSet) -> "ChoiceGP":
        kernels = self.kernels or tuple(
            KernelSpec("se_ard", lengthscales=(1.0,) * items.n_features, variance=1.0)
            for _ in range(self.d)
        )
        spec = ChoiceModelSpec(
            d=self.d, rationality=self.rationality, sigma=self.sigma, kernels=tuple(kernels)
        )
        self.model_ = fit_choice_model(items, statements, spec, seed=self.seed, **(self.inference or {}))
        return self

    def predict(self, A, n_samples: int = 1000) -> frozenset:
        """Modal chosen subset of the offered index set A."""
        self._check_fitted()
        _, modal = predict_choice(self.model_, A, n_samples=n_samples, seed=self.seed)
        return modal

    def predict_proba(self, A, n_samples: int = 1000) -> dict:
        self._check_fitted()
        dist, _ = predict_choice(self.model_, A, n_samples=n_samples, seed=self.seed)
        return dist
