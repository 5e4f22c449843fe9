"""Collapsed Gibbs sampler state, sweep kernel and the closed-form estimators."""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.special import gammaln

from longtail.rng import next_uniform, xoshiro_state


@njit(cache=True, nogil=True)
def _init_assignments(word_of, doc_of, z, n_dk, n_kw, n_k, K, rng):
    for i in range(z.shape[0]):
        k = np.int64(next_uniform(rng) * K)
        if k >= K:
            k = K - 1
        z[i] = k
        n_dk[doc_of[i], k] += 1
        n_kw[k, word_of[i]] += 1
        n_k[k] += 1


@njit(cache=True, nogil=True)
def _sweep(word_of, doc_of, z, n_dk, n_kw, n_k, alpha, beta, vbeta, rng, cum):
    K = n_k.shape[0]
    for i in range(z.shape[0]):
        d = doc_of[i]
        w = word_of[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for j in range(K):
            total += (n_dk[d, j] + alpha) * (n_kw[j, w] + beta) / (n_k[j] + vbeta)
            cum[j] = total
        u = next_uniform(rng) * total
        k = K - 1
        for j in range(K):
            if u < cum[j]:
                k = j
                break
        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


class LdaState:
    """Topic assignment per token plus the three count tables.

    Tokens are laid out document-major; inside a document they follow the
    sparse row order (ascending term index, each term repeated ``count`` times).
    """

    def __init__(self, word_of, doc_of, n_docs: int, n_words: int, n_topics: int):
        self.word_of = np.ascontiguousarray(word_of, dtype=np.int64)
        self.doc_of = np.ascontiguousarray(doc_of, dtype=np.int64)
        self.z = np.zeros(len(self.word_of), dtype=np.int64)
        self.n_dk = np.zeros((n_docs, n_topics), dtype=np.int64)
        self.n_kw = np.zeros((n_topics, n_words), dtype=np.int64)
        self.n_k = np.zeros(n_topics, dtype=np.int64)
        self.doc_lengths = np.bincount(self.doc_of, minlength=n_docs).astype(np.int64)

    @classmethod
    def from_dtm(cls, dtm, n_topics: int) -> "LdaState":
        word_of, doc_of = [], []
        for d, row in enumerate(dtm.rows):
            for w, c in row:
                word_of.extend([w] * c)
                doc_of.extend([d] * c)
        return cls(word_of, doc_of, dtm.n_docs, len(dtm.vocabulary), n_topics)

    @property
    def n_topics(self) -> int:
        return self.n_k.shape[0]

    @property
    def n_words(self) -> int:
        return self.n_kw.shape[1]

    @property
    def n_tokens(self) -> int:
        return self.z.shape[0]

    def assign(self, z) -> None:
        """Set assignments explicitly and rebuild the count tables from them."""
        z = np.asarray(z, dtype=np.int64)
        if z.shape != self.z.shape:
            raise ValueError(f"expected {self.z.shape[0]} assignments, got {z.shape[0]}")
        if z.size and (z.min() < 0 or z.max() >= self.n_topics):
            raise ValueError("topic assignment out of range")
        self.z[:] = z
        self.n_dk[:] = 0
        self.n_kw[:] = 0
        self.n_k[:] = 0
        np.add.at(self.n_dk, (self.doc_of, z), 1)
        np.add.at(self.n_kw, (z, self.word_of), 1)
        np.add.at(self.n_k, z, 1)

    def randomize(self, rng) -> None:
        self.n_dk[:] = 0
        self.n_kw[:] = 0
        self.n_k[:] = 0
        _init_assignments(self.word_of, self.doc_of, self.z, self.n_dk, self.n_kw, self.n_k,
                          self.n_topics, rng)

    def sweep(self, alpha: float, beta: float, rng, buf=None) -> None:
        """Resample every token once from its full conditional."""
        if buf is None:
            buf = np.empty(self.n_topics, dtype=np.float64)
        _sweep(self.word_of, self.doc_of, self.z, self.n_dk, self.n_kw, self.n_k,
               float(alpha), float(beta), float(self.n_words * beta), rng, buf)

    def check_consistency(self) -> None:
        """Raise AssertionError if the count tables disagree with ``z``."""
        if (self.n_dk < 0).any() or (self.n_kw < 0).any() or (self.n_k < 0).any():
            raise AssertionError("negative count")
        if not np.array_equal(self.n_dk.sum(axis=1), self.doc_lengths):
            raise AssertionError("n_dk row sums differ from document lengths")
        if not np.array_equal(self.n_kw.sum(axis=1), self.n_k):
            raise AssertionError("n_kw row sums differ from n_k")
        if self.n_k.sum() != self.n_tokens:
            raise AssertionError("n_k does not sum to the token count")
        fresh = LdaState(self.word_of, self.doc_of, self.n_dk.shape[0], self.n_words, self.n_topics)
        fresh.assign(self.z)
        if not (np.array_equal(fresh.n_dk, self.n_dk) and np.array_equal(fresh.n_kw, self.n_kw)):
            raise AssertionError("count tables differ from a rebuild from z")


def full_conditional(state: LdaState, token: int, alpha: float, beta: float) -> np.ndarray:
    """P(z_token = k | z_rest, w), normalized, with the token's own counts removed."""
    d, w, k = state.doc_of[token], state.word_of[token], state.z[token]
    n_dk = state.n_dk[d].astype(float)
    n_kw = state.n_kw[:, w].astype(float)
    n_k = state.n_k.astype(float)
    n_dk[k] -= 1
    n_kw[k] -= 1
    n_k[k] -= 1
    p = (n_dk + alpha) * (n_kw + beta) / (n_k + state.n_words * beta)
    return p / p.sum()


def estimate_gamma(state: LdaState, alpha: float) -> np.ndarray:
    """Document-topic proportions ``(n_dk + alpha) / (len_d + K alpha)``."""
    K = state.n_topics
    return (state.n_dk + alpha) / (state.doc_lengths[:, None] + K * alpha)


def estimate_phi(state: LdaState, beta: float) -> np.ndarray:
    """Topic-word probabilities ``(n_kw + beta) / (n_k + V beta)``."""
    V = state.n_words
    return (state.n_kw + beta) / (state.n_k[:, None] + V * beta)


def complete_log_likelihood(state: LdaState, beta: float) -> float:
    """log P(w | z) with the topic-word distributions integrated out.

    Summed per topic as ``sum_w [lgamma(n_kw+b) - lgamma(b)] - [lgamma(n_k+Vb) - lgamma(Vb)]``
    so empty cells contribute exactly zero.
    """
    V = state.n_words
    word_part = gammaln(state.n_kw + beta) - gammaln(beta)
    topic_part = gammaln(state.n_k + V * beta) - gammaln(V * beta)
    return float(word_part.sum() - topic_part.sum())


def new_rng(seed: int) -> np.ndarray:
    return xoshiro_state(seed)
