"""Latent Dirichlet allocation by collapsed Gibbs sampling."""

from longtail.lda.model import (
    KSelection,
    LdaConfig,
    LdaError,
    LdaModel,
    ModelFormatError,
    evidence_for_k,
    fit,
    fit_chains,
    load_model,
    save_model,
    select_k,
)
from longtail.lda.sampler import (
    LdaState,
    complete_log_likelihood,
    estimate_gamma,
    estimate_phi,
    full_conditional,
)

__all__ = [
    "KSelection",
    "LdaConfig",
    "LdaError",
    "LdaModel",
    "LdaState",
    "ModelFormatError",
    "complete_log_likelihood",
    "estimate_gamma",
    "estimate_phi",
    "evidence_for_k",
    "fit",
    "fit_chains",
    "full_conditional",
    "load_model",
    "save_model",
    "select_k",
]
