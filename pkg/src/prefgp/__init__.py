"""Gaussian-process preference and choice learning.

Nine model families over a shared toolbox: kernels (including the
preference-induced and nontransitive pair kernels), rejection-free sampling
from linearly constrained Gaussians, skew-normal (SUN) posteriors for probit
likelihoods, Laplace and variational inference, dataset ingestion, metrics,
a CLI, and an interactive elicitation HTTP service.
"""

from prefgp.kernels import KernelSpec, GramMatrix
from prefgp.tmvn_sampler import TruncationRegion, SunParams, PosteriorSamples
from prefgp.data import ItemTable, StatementSet, Pref, Indiff, Ordering, Choice

__all__ = [
    "KernelSpec",
    "GramMatrix",
    "TruncationRegion",
    "SunParams",
    "PosteriorSamples",
    "ItemTable",
    "StatementSet",
    "Pref",
    "Indiff",
    "Ordering",
    "Choice",
]

__version__ = "0.1.0"
