"""Fitting, evidence-based topic-count selection and model persistence."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from longtail.rng import derive_seed
from longtail.lda.sampler import (
    LdaState,
    complete_log_likelihood,
    estimate_gamma,
    estimate_phi,
    new_rng,
)

log = logging.getLogger(__name__)

FORMAT_NAME = "longtail-lda-model"
FORMAT_VERSION = 1


class LdaError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LdaConfig:
    """Sampler settings.  ``alpha=None`` means the conventional ``50 / K``."""

    K: int
    alpha: float | None = None
    beta: float = 0.1
    iterations: int = 2000
    burn_in: int = 500
    sample_lag: int = 50
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise LdaError(f"K must be >= 1, got {self.K}")
        if self.alpha is not None and not self.alpha > 0:
            raise LdaError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > 0:
            raise LdaError(f"beta must be > 0, got {self.beta}")
        if not 0 < self.burn_in < self.iterations:
            raise LdaError(f"need 0 < burn_in < iterations, got {self.burn_in} and {self.iterations}")
        if self.sample_lag < 1:
            raise LdaError(f"sample_lag must be >= 1, got {self.sample_lag}")
        if self.chains < 1:
            raise LdaError(f"chains must be >= 1, got {self.chains}")
        if not 0 <= self.seed < 2**64:
            raise LdaError("seed must be an unsigned 64-bit integer")

    @property
    def prior_alpha(self) -> float:
        return 50.0 / self.K if self.alpha is None else float(self.alpha)

    def is_retained(self, sweep: int) -> bool:
        """Sweeps count from 1; keep every ``sample_lag``-th sweep after burn-in."""
        return sweep > self.burn_in and (sweep - self.burn_in) % self.sample_lag == 0


@dataclass(eq=False)
class LdaModel:
    config: LdaConfig
    phi: np.ndarray
    gamma: np.ndarray
    loglik: list[float]
    terms: list[str]
    doc_keys: list[str]
    evidence: float
    chain: int = 0
    chain_evidence: list[float] = field(default_factory=list)

    @property
    def n_topics(self) -> int:
        return self.phi.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LdaModel):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.gamma, other.gamma)
            and self.loglik == other.loglik
            and self.terms == other.terms
            and self.doc_keys == other.doc_keys
            and self.evidence == other.evidence
            and self.chain == other.chain
            and self.chain_evidence == other.chain_evidence
        )

    def top_terms(self, topic: int, n: int = 10) -> list[str]:
        order = sorted(range(len(self.terms)), key=lambda w: (-self.phi[topic, w], w))
        return [self.terms[w] for w in order[:n]]


def evidence_for_k(loglik_samples: Sequence[float]) -> float:
    """Harmonic-mean estimate of log P(w | K): ``log S - logsumexp(-l_1..-l_S)``."""
    if len(loglik_samples) == 0:
        raise LdaError("evidence needs at least one retained sample")
    ll = np.asarray(loglik_samples, dtype=float)
    return float(math.log(len(ll)) - logsumexp(-ll))


def _run_chain(dtm, config: LdaConfig, chain: int):
    alpha, beta = config.prior_alpha, config.beta
    state = LdaState.from_dtm(dtm, config.K)
    rng = new_rng(derive_seed(config.seed, "lda", config.K, chain))
    state.randomize(rng)
    buf = np.empty(config.K, dtype=np.float64)
    gamma_sum = np.zeros((dtm.n_docs, config.K))
    phi_sum = np.zeros((config.K, len(dtm.vocabulary)))
    loglik = []
    for sweep in range(1, config.iterations + 1):
        state.sweep(alpha, beta, rng, buf)
        if config.is_retained(sweep):
            gamma_sum += estimate_gamma(state, alpha)
            phi_sum += estimate_phi(state, beta)
            loglik.append(complete_log_likelihood(state, beta))
    if not loglik:
        raise LdaError(
            f"no samples retained: iterations={config.iterations}, burn_in={config.burn_in}, "
            f"sample_lag={config.sample_lag}"
        )
    n = len(loglik)
    return phi_sum / n, gamma_sum / n, loglik


def fit_chains(dtm, config: LdaConfig) -> list[LdaModel]:
    """One model per chain, each seeded from ``(seed, "lda", K, chain)``."""
    if len(dtm.vocabulary) == 0:
        raise LdaError("empty vocabulary")
    if dtm.n_docs == 0:
        raise LdaError("empty document-term matrix")
    if config.K > dtm.total_tokens:
        raise LdaError(f"K={config.K} exceeds the number of tokens ({dtm.total_tokens})")
    resolved = replace(config, alpha=config.prior_alpha)
    models = []
    for chain in range(config.chains):
        phi, gamma, loglik = _run_chain(dtm, resolved, chain)
        models.append(LdaModel(
            config=resolved,
            phi=phi,
            gamma=gamma,
            loglik=loglik,
            terms=list(dtm.vocabulary.terms),
            doc_keys=list(dtm.doc_keys),
            evidence=evidence_for_k(loglik),
            chain=chain,
        ))
    chain_evidence = [m.evidence for m in models]
    for m in models:
        m.chain_evidence = list(chain_evidence)
    return models


def fit(dtm, config: LdaConfig) -> LdaModel:
    """Fit LDA; with several chains, the chain with the highest evidence is returned."""
    models = fit_chains(dtm, config)
    best = max(range(len(models)), key=lambda c: (models[c].evidence, -c))
    return models[best]


@dataclass
class KSelection:
    best_k: int
    evidence: dict[int, float]
    models: dict[int, LdaModel]

    def table(self) -> list[tuple[int, float]]:
        return sorted(self.evidence.items())


def select_k(dtm, k_grid: Sequence[int], template: LdaConfig, n_jobs: int = 1) -> KSelection:
    """Fit one model per K and keep the K with the largest evidence (smaller K on ties).

    ``template.alpha=None`` gives each K its own ``50 / K`` prior.
    """
    k_grid = list(k_grid)
    if not k_grid:
        raise LdaError("k_grid is empty")
    if any(b <= a for a, b in zip(k_grid, k_grid[1:])):
        raise LdaError(f"k_grid must be strictly ascending, got {k_grid}")

    def one(k):
        try:
            return fit(dtm, replace(template, K=k))
        except LdaError as exc:
            raise LdaError(f"K={k}: {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fitted = list(pool.map(one, k_grid))
    else:
        fitted = [one(k) for k in k_grid]
    models = dict(zip(k_grid, fitted))
    evidence = {k: m.evidence for k, m in models.items()}
    best = max(k_grid, key=lambda k: (evidence[k], -k))
    for k in k_grid:
        log.info("K=%d evidence=%.4f", k, evidence[k])
    return KSelection(best, evidence, models)


def model_to_dict(model: LdaModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "terms": model.terms,
        "doc_keys": model.doc_keys,
        "phi": model.phi.tolist(),
        "gamma": model.gamma.tolist(),
        "loglik": model.loglik,
        "evidence": model.evidence,
        "chain": model.chain,
        "chain_evidence": model.chain_evidence,
    }


def model_from_dict(data: dict) -> LdaModel:
    version = data.get("format_version")
    if data.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"not a model file (format={data.get('format')!r})")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"model format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    try:
        K = data["config"]["K"]
        phi = np.array(data["phi"], dtype=float).reshape(K, len(data["terms"]))
        gamma = np.array(data["gamma"], dtype=float).reshape(len(data["doc_keys"]), K)
        return LdaModel(
            config=LdaConfig(**data["config"]),
            phi=phi,
            gamma=gamma,
            loglik=[float(x) for x in data["loglik"]],
            terms=list(data["terms"]),
            doc_keys=list(data["doc_keys"]),
            evidence=float(data["evidence"]),
            chain=int(data["chain"]),
            chain_evidence=[float(x) for x in data["chain_evidence"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def dumps_model(model: LdaModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True) + "\n"


def save_model(model: LdaModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> LdaModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: truncated or invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    return model_from_dict(data)
