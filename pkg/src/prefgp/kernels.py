"""Covariance kernels and Gram-matrix assembly.

Single-item kernels (ARD squared-exponential, linear) plus the two derived
kernels on item *pairs*: the preference-induced kernel, which bakes in
skew-symmetry and transitivity of the latent preference function, and the
nontransitive variant which keeps skew-symmetry only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag as _scipy_block_diag
from scipy.spatial.distance import cdist


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel description.

    family:
        "se_ard"  -- sigma2 * exp(-sum_i (x_i - y_i)^2 / (2 l_i^2))
        "linear"  -- sum_i s2_i x_i y_i
        "pref"    -- preference-induced kernel over pairs, wraps ``base``
        "ntpref"  -- nontransitive pair kernel, wraps ``base``
    """

    family: str
    lengthscales: Optional[tuple] = None
    variance: float = 1.0
    feature_variances: Optional[tuple] = None
    base: Optional["KernelSpec"] = None

    def __post_init__(self):
        if self.family not in ("se_ard", "linear", "pref", "ntpref"):
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.family == "se_ard":
            if self.lengthscales is None or len(self.lengthscales) == 0:
                raise KernelError("se_ard requires lengthscales")
            object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
            if any(v <= 0 for v in self.lengthscales) or self.variance <= 0:
                raise KernelError("se_ard hyperparameters must be strictly positive")
        elif self.family == "linear":
            if self.feature_variances is None or len(self.feature_variances) == 0:
                raise KernelError("linear requires per-feature variances")
            object.__setattr__(
                self, "feature_variances", tuple(float(v) for v in self.feature_variances)
            )
            if any(v < 0 for v in self.feature_variances):
                raise KernelError("linear feature variances must be non-negative")
        else:
            if self.base is None or self.base.family not in ("se_ard", "linear"):
                raise KernelError(f"{self.family} requires a single-item base kernel")

    @property
    def overall_variance(self) -> float:
        """Scale used to calibrate jitter."""
        if self.family == "se_ard":
            return self.variance
        if self.family == "linear":
            return max(self.feature_variances)
        return self.base.overall_variance

    def to_json(self) -> dict:
        if self.family == "se_ard":
            params = {"lengthscales": list(self.lengthscales), "variance": self.variance}
        elif self.family == "linear":
            params = {"feature_variances": list(self.feature_variances)}
        else:
            params = {"base": self.base.to_json()}
        return {"family": self.family, "params": params}

    @staticmethod
    def from_json(obj: dict) -> "KernelSpec":
        family = obj["family"]
        params = obj.get("params", {})
        if family == "se_ard":
            return KernelSpec(
                "se_ard",
                lengthscales=tuple(params["lengthscales"]),
                variance=float(params.get("variance", 1.0)),
            )
        if family == "linear":
            return KernelSpec("linear", feature_variances=tuple(params["feature_variances"]))
        if family in ("pref", "ntpref"):
            return KernelSpec(family, base=KernelSpec.from_json(params["base"]))
        raise KernelError(f"unknown kernel family {family!r}")

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    chol: np.ndarray
    jitter_used: float

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        from scipy.linalg import cho_solve

        return cho_solve((self.chol, True), b)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def _check_dims(x, y, n):
    if len(x) != n or len(y) != n:
        raise KernelError(f"feature dimension mismatch: got {len(x)}, {len(y)}, expected {n}")


def se_ard_eval(x: Sequence[float], y: Sequence[float], spec: KernelSpec) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    _check_dims(x, y, len(spec.lengthscales))
    ell = np.asarray(spec.lengthscales)
    d2 = np.sum((x - y) ** 2 / (2.0 * ell**2))
    return float(spec.variance * np.exp(-d2))


def linear_eval(x: Sequence[float], y: Sequence[float], spec: KernelSpec) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    _check_dims(x, y, len(spec.feature_variances))
    return float(np.sum(np.asarray(spec.feature_variances) * x * y))


def base_eval(x, y, spec: KernelSpec) -> float:
    if spec.family == "se_ard":
        return se_ard_eval(x, y, spec)
    if spec.family == "linear":
        return linear_eval(x, y, spec)
    raise KernelError(f"{spec.family} is not a single-item kernel")


def pref_kernel_eval(pair1, pair2, base: KernelSpec) -> float:
    """k(x,x') + k(y,y') - k(x,y') - k(y,x') for pairs (x,y), (x',y')."""
    x, y = pair1
    xp, yp = pair2
    return (
        base_eval(x, xp, base)
        + base_eval(y, yp, base)
        - base_eval(x, yp, base)
        - base_eval(y, xp, base)
    )


def ntpref_kernel_eval(pair1, pair2, base: KernelSpec) -> float:
    """k(x,x')k(y,y') - k(x,y')k(y,x'): skew-symmetric but not transitive."""
    x, y = pair1
    xp, yp = pair2
    return base_eval(x, xp, base) * base_eval(y, yp, base) - base_eval(x, yp, base) * base_eval(
        y, xp, base
    )


def _base_cross(X: np.ndarray, Y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if spec.family == "se_ard":
        if X.shape[1] != len(spec.lengthscales) or Y.shape[1] != len(spec.lengthscales):
            raise KernelError("feature dimension does not match lengthscale count")
        ell = np.asarray(spec.lengthscales)
        d2 = cdist(X / ell, Y / ell, "sqeuclidean")
        return spec.variance * np.exp(-0.5 * d2)
    if spec.family == "linear":
        if X.shape[1] != len(spec.feature_variances):
            raise KernelError("feature dimension does not match variance count")
        s2 = np.asarray(spec.feature_variances)
        return (X * s2) @ Y.T
    raise KernelError(f"{spec.family} is not a single-item kernel")


def _split_pairs(P: np.ndarray):
    # pair rows are stored as concatenated [x, y] feature vectors
    P = np.atleast_2d(np.asarray(P, float))
    if P.shape[1] % 2 != 0:
        raise KernelError("pair rows must concatenate two equal-length item vectors")
    c = P.shape[1] // 2
    return P[:, :c], P[:, c:]


def cross_gram(X: np.ndarray, Y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix K(X, Y); for pair kernels rows are [x, y] concatenations."""
    if spec.family in ("se_ard", "linear"):
        return _base_cross(X, Y, spec)
    ax, ay = _split_pairs(X)
    bx, by = _split_pairs(Y)
    kxx = _base_cross(ax, bx, spec.base)
    kyy = _base_cross(ay, by, spec.base)
    kxy = _base_cross(ax, by, spec.base)
    kyx = _base_cross(ay, bx, spec.base)
    if spec.family == "pref":
        return kxx + kyy - kxy - kyx
    return kxx * kyy - kxy * kyx


def jittered_cholesky(K: np.ndarray, scale: float = 1.0):
    """Lower Cholesky factor with geometric jitter escalation.

    Starts at 1e-8*scale, multiplies by 10 up to 1e-2*scale; raises when the
    matrix stays indefinite at the cap.
    """
    K = np.asarray(K, float)
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * scale
    eye = np.eye(K.shape[0])
    while jitter <= 1e-2 * scale * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise KernelError("degenerate kernel matrix: Cholesky failed at maximum jitter")


def gram_matrix(X, spec: KernelSpec) -> GramMatrix:
    features = getattr(X, "features", X)
    features = np.atleast_2d(np.asarray(features, float))
    if features.shape[0] == 0:
        raise KernelError("empty item table")
    K = cross_gram(features, features, spec)
    K = 0.5 * (K + K.T)
    chol, jitter = jittered_cholesky(K, spec.overall_variance)
    return GramMatrix(values=K, chol=chol, jitter_used=jitter)


def block_diag_gram(X, specs: Sequence[KernelSpec], d: int) -> GramMatrix:
    """Gram of ``d`` independent utility processes over the same items.

    The stacked latent is utility-major: coordinates [a*r, (a+1)*r) hold
    utility ``a`` at every item row, so the matrix is literally block
    diagonal with block ``a`` built from ``specs[a]``.  ``stack_index``
    maps (utility, item row) into the stacked vector.
    """
    if len(specs) != d:
        raise KernelError(f"expected {d} kernel specs, got {len(specs)}")
    grams = [gram_matrix(X, s) for s in specs]
    values = _scipy_block_diag(*[g.values for g in grams])
    chol = _scipy_block_diag(*[g.chol for g in grams])
    jitter = max(g.jitter_used for g in grams)
    return GramMatrix(values=values, chol=chol, jitter_used=jitter)


def stack_index(utility: int, row: int, n_rows: int) -> int:
    """Position of utility ``utility`` at item ``row`` in the stacked latent."""
    return utility * n_rows + row
