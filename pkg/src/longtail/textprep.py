"""Abstract text to bag-of-words: tokenizing, lemmatizing, vocabulary, bigrams."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W\d_]+")

DEFAULT_MIN_DF = 2
DEFAULT_MAX_DF_RATIO = 0.95


class VocabularyError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased alphabetic runs of length >= 2; anything else separates tokens."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """One word per line; blank lines and ``#`` comments are ignored."""
    if path is None:
        text = resources.files("longtail.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def load_lemmas(path: str | Path | None = None) -> dict[str, str]:
    """``word<TAB>lemma`` per line."""
    if path is None:
        text = resources.files("longtail.data").joinpath("lemmas.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    lemmas = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"lemma file line {lineno}: expected 'word<TAB>lemma', got {line!r}")
        lemmas[parts[0].strip().lower()] = parts[1].strip().lower()
    return lemmas


def normalize_tokens(tokens: Iterable[str], stopwords, lemma_map) -> list[str]:
    """Map each token to its lemma (identity if unknown), then drop stopwords."""
    out = []
    for tok in tokens:
        term = lemma_map.get(tok, tok)
        if term not in stopwords:
            out.append(term)
    return out


def preprocess(texts: Iterable[str], stopwords=None, lemma_map=None) -> list[list[str]]:
    stopwords = load_stopwords() if stopwords is None else stopwords
    lemma_map = load_lemmas() if lemma_map is None else lemma_map
    return [normalize_tokens(tokenize(t), stopwords, lemma_map) for t in texts]


@dataclass
class Vocabulary:
    terms: list[str]
    df: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.terms) != len(self.df):
            raise ValueError("terms and df differ in length")
        self.index = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise ValueError("duplicate terms in vocabulary")

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index


def build_vocabulary(
    docs: Sequence[Sequence[str]],
    min_df: int = DEFAULT_MIN_DF,
    max_df_ratio: float = DEFAULT_MAX_DF_RATIO,
) -> Vocabulary:
    """Keep terms whose document frequency lies in ``[min_df, max_df_ratio * n_docs]``.

    Terms are ordered by descending df, then alphabetically, so the same corpus
    always yields the same term indices.
    """
    if min_df < 1:
        raise ValueError(f"min_df must be >= 1, got {min_df}")
    if not 0 < max_df_ratio <= 1:
        raise ValueError(f"max_df_ratio must be in (0, 1], got {max_df_ratio}")
    if len(docs) == 0:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")
    df = Counter()
    for doc in docs:
        df.update(set(doc))
    max_df = max_df_ratio * len(docs)
    kept = [(t, n) for t, n in df.items() if min_df <= n <= max_df]
    if not kept:
        raise VocabularyError(
            f"vocabulary is empty after filtering (min_df={min_df}, max_df_ratio={max_df_ratio}, "
            f"{len(df)} candidate terms)"
        )
    kept.sort(key=lambda tn: (-tn[1], tn[0]))
    return Vocabulary([t for t, _ in kept], [n for _, n in kept])


@dataclass
class DocTermMatrix:
    """Sparse counts: ``rows[d]`` is a list of ``(term_index, count)`` sorted by index."""

    vocabulary: Vocabulary
    rows: list[list[tuple[int, int]]]
    doc_keys: list[str]

    def __post_init__(self):
        if len(self.rows) != len(self.doc_keys):
            raise ValueError("rows and doc_keys differ in length")
        V = len(self.vocabulary)
        for d, row in enumerate(self.rows):
            seen = set()
            for w, c in row:
                if not 0 <= w < V:
                    raise ValueError(f"doc {d}: term index {w} out of range for V={V}")
                if c <= 0:
                    raise ValueError(f"doc {d}: nonpositive count {c}")
                if w in seen:
                    raise ValueError(f"doc {d}: repeated term index {w}")
                seen.add(w)

    @property
    def n_docs(self) -> int:
        return len(self.rows)

    @property
    def doc_lengths(self) -> list[int]:
        return [sum(c for _, c in row) for row in self.rows]

    @property
    def total_tokens(self) -> int:
        return sum(self.doc_lengths)

    @property
    def empty_docs(self) -> list[int]:
        return [d for d, row in enumerate(self.rows) if not row]

    def to_dense(self):
        import numpy as np

        m = np.zeros((self.n_docs, len(self.vocabulary)), dtype=np.int64)
        for d, row in enumerate(self.rows):
            for w, c in row:
                m[d, w] = c
        return m

    def to_dict(self) -> dict:
        return {
            "terms": self.vocabulary.terms,
            "df": self.vocabulary.df,
            "doc_keys": self.doc_keys,
            "rows": [[[w, c] for w, c in row] for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DocTermMatrix":
        vocab = Vocabulary(list(data["terms"]), [int(x) for x in data["df"]])
        rows = [[(int(w), int(c)) for w, c in row] for row in data["rows"]]
        return cls(vocab, rows, [str(k) for k in data["doc_keys"]])


def to_bow(docs: Sequence[Sequence[str]], vocabulary: Vocabulary, doc_keys=None) -> DocTermMatrix:
    """Count in-vocabulary terms per document; documents left empty are kept."""
    if doc_keys is None:
        doc_keys = [str(i) for i in range(len(docs))]
    rows = []
    for doc in docs:
        counts = Counter(vocabulary.index[t] for t in doc if t in vocabulary.index)
        rows.append(sorted(counts.items()))
    dtm = DocTermMatrix(vocabulary, rows, list(doc_keys))
    if dtm.empty_docs:
        log.warning("%d document(s) have no in-vocabulary terms", len(dtm.empty_docs))
    return dtm


@dataclass(frozen=True)
class BigramScore:
    bigram: tuple[str, str]
    count: int
    score: float


def count_bigrams(docs: Iterable[Sequence[str]]) -> Counter:
    counts = Counter()
    for doc in docs:
        counts.update(zip(doc, doc[1:]))
    return counts


def extract_bigrams(docs: Sequence[Sequence[str]], min_count: int = 2, top_n: int = 20) -> list[BigramScore]:
    """Adjacent pairs within documents, ranked by add-one smoothed PMI.

    With ``c(a,b)`` the pair count, ``B`` the number of distinct pairs, ``N2`` the
    total number of pairs, ``c(a)`` unigram counts, ``U`` distinct unigrams and
    ``N1`` total tokens::

        score = log((c(a,b)+1)/(N2+B)) - log((c(a)+1)/(N1+U)) - log((c(b)+1)/(N1+U))

    Ties on score fall back to higher count, then alphabetical order.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    pairs = count_bigrams(docs)
    if not pairs:
        return []
    unigrams = Counter()
    for doc in docs:
        unigrams.update(doc)
    n1 = sum(unigrams.values()) + len(unigrams)
    n2 = sum(pairs.values()) + len(pairs)
    scored = []
    for (a, b), c in pairs.items():
        if c < min_count:
            continue
        score = (
            math.log((c + 1) / n2)
            - math.log((unigrams[a] + 1) / n1)
            - math.log((unigrams[b] + 1) / n1)
        )
        scored.append(BigramScore((a, b), c, score))
    scored.sort(key=lambda s: (-s.score, -s.count, s.bigram))
    return scored[:top_n]
