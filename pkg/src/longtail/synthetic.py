"""Corpora drawn from a known LDA model, for recovery checks and fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from longtail.textprep import DocTermMatrix, Vocabulary


@dataclass
class PlantedCorpus:
    dtm: DocTermMatrix
    phi: np.ndarray
    theta: np.ndarray
    docs: list[list[str]]


def planted_corpus(
    n_topics: int,
    words_per_topic: int = 10,
    n_docs: int = 40,
    doc_length: int = 50,
    doc_alpha: float = 0.5,
    word_concentration: float | None = None,
    seed: int = 0,
) -> PlantedCorpus:
    """Topics own disjoint blocks of ``words_per_topic`` words.

    Within a block, word weights are uniform unless ``word_concentration`` is given,
    in which case they are Dirichlet draws with that concentration.
    """
    rng = np.random.default_rng(seed)
    V = n_topics * words_per_topic
    phi = np.zeros((n_topics, V))
    for k in range(n_topics):
        block = slice(k * words_per_topic, (k + 1) * words_per_topic)
        if word_concentration is None:
            phi[k, block] = 1.0 / words_per_topic
        else:
            phi[k, block] = rng.dirichlet(np.full(words_per_topic, word_concentration))
    theta = rng.dirichlet(np.full(n_topics, doc_alpha), size=n_docs)
    terms = [f"w{k}x{j}" for k in range(n_topics) for j in range(words_per_topic)]
    docs, rows = [], []
    for d in range(n_docs):
        topics = rng.choice(n_topics, size=doc_length, p=theta[d])
        words = [int(rng.choice(V, p=phi[k])) for k in topics]
        docs.append([terms[w] for w in words])
        counts = np.bincount(words, minlength=V)
        rows.append([(w, int(c)) for w, c in enumerate(counts) if c])
    df = [int(sum(1 for row in rows if any(w == i for w, _ in row))) for i in range(V)]
    vocab = Vocabulary(terms, df)
    dtm = DocTermMatrix(vocab, rows, [f"doc{d:03d}" for d in range(n_docs)])
    return PlantedCorpus(dtm, phi, theta, docs)


def best_permutation_cosines(phi_est: np.ndarray, phi_true: np.ndarray) -> np.ndarray:
    """Per-topic cosine similarity after the topic matching that maximizes the total."""
    from scipy.optimize import linear_sum_assignment

    a = phi_est / np.linalg.norm(phi_est, axis=1, keepdims=True)
    b = phi_true / np.linalg.norm(phi_true, axis=1, keepdims=True)
    sim = b @ a.T
    rows, cols = linear_sum_assignment(-sim)
    return sim[rows, cols]
