"""Topic characterization and funding/output association tests."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from longtail.textprep import BigramScore, extract_bigrams

OBJECTIVE_CODES = ("R", "I", "F", "E", "ST")


class AnalysisError(ValueError):
    pass


@dataclass
class CorrelationResult:
    r: float
    n: int
    t_stat: float
    p_two_sided: float

    def to_json(self) -> dict:
        return {"r": self.r, "n": self.n, "t_stat": self.t_stat, "p_two_sided": self.p_two_sided}


@dataclass
class TopicProfile:
    topic_index: int
    label: str
    top_grants: list[tuple[str, float]]
    pub_count_top: int
    pub_count_weighted: float
    composition: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "topic_index": self.topic_index,
            "label": self.label,
            "top_grants": [[g, v] for g, v in self.top_grants],
            "pub_count_top": self.pub_count_top,
            "pub_count_weighted": self.pub_count_weighted,
            # pairs, so the first-appearance order survives sorted-key JSON
            "composition": [[c, v] for c, v in self.composition.items()],
        }

    @classmethod
    def from_json(cls, d: dict) -> "TopicProfile":
        return cls(int(d["topic_index"]), d["label"], [(g, float(v)) for g, v in d["top_grants"]],
                   int(d["pub_count_top"]), float(d["pub_count_weighted"]),
                   {c: float(v) for c, v in d["composition"]})


def top_documents(gamma, topic_index: int, grant_keys: Sequence[str], dollars: Sequence[float] | None = None,
                  n_top: int = 5) -> list[tuple[str, float]]:
    """The ``n_top`` grants with the highest gamma for a topic.

    Ties on gamma go to the larger award, then to the smaller grant key.
    """
    gamma = np.asarray(gamma, dtype=float)
    D, K = gamma.shape
    if not 0 <= topic_index < K:
        raise AnalysisError(f"topic_index {topic_index} out of range for {K} topics")
    if len(grant_keys) != D:
        raise AnalysisError(f"{len(grant_keys)} grant keys for {D} gamma rows")
    if not 1 <= n_top <= D:
        raise AnalysisError(f"n_top must be in [1, {D}], got {n_top}")
    if dollars is None:
        dollars = [0] * D
    col = gamma[:, topic_index]
    order = sorted(range(D), key=lambda j: (-col[j], -dollars[j], grant_keys[j]))
    return [(grant_keys[j], float(col[j])) for j in order[:n_top]]


def topic_publication_count(top_grants, link_table) -> int:
    """Distinct publications acknowledging at least one of the top grants."""
    pubs = set()
    for key, _ in top_grants:
        pubs |= link_table.pubs_for(key)
    return len(pubs)


def gamma_weighted_publications(gamma, pubs_per_grant) -> np.ndarray:
    """Publication output spread over topics in proportion to each grant's gamma."""
    gamma = np.asarray(gamma, dtype=float)
    pubs = np.asarray(pubs_per_grant, dtype=float)
    if gamma.ndim != 2 or pubs.shape != (gamma.shape[0],):
        raise AnalysisError(f"{pubs.size} publication counts for {gamma.shape[0]} grants")
    return pubs @ gamma


def composition(top_grants, annotations: Mapping[str, str]) -> dict[str, float]:
    """Percentage of the top grants carrying each objective code.

    Codes are listed in the order they first occur among the top grants.
    """
    counts: dict[str, int] = {}
    for key, _ in top_grants:
        if key not in annotations:
            raise AnalysisError(f"grant {key!r} has no objective annotation")
        code = annotations[key]
        if code not in OBJECTIVE_CODES:
            raise AnalysisError(f"grant {key!r}: unknown objective code {code!r}")
        counts[code] = counts.get(code, 0) + 1
    n = len(top_grants)
    return {c: 100.0 * k / n for c, k in counts.items()}


def format_composition(comp: Mapping[str, float]) -> str:
    """``{"F": 60, "R": 20}`` -> ``"60%F; 20%R"``."""
    parts = []
    for code, pct in comp.items():
        text = str(int(round(pct))) if abs(pct - round(pct)) < 1e-9 else f"{pct:.2f}".rstrip("0").rstrip(".")
        parts.append(f"{text}%{code}")
    return "; ".join(parts)


def read_annotations(text: str) -> dict[str, str]:
    """``grant_key,code`` rows (header required)."""
    out = {}
    reader = csv.DictReader(io.StringIO(text))
    if not {"grant_key", "code"} <= set(reader.fieldnames or []):
        raise AnalysisError("annotations file needs 'grant_key' and 'code' columns")
    for row in reader:
        code = row["code"].strip().upper()
        if code not in OBJECTIVE_CODES:
            raise AnalysisError(f"line {reader.line_num}: unknown objective code {row['code']!r}")
        out[row["grant_key"].strip()] = code
    return out


def read_labels(text: str) -> dict[int, str]:
    """``topic_index,label`` rows with 0-based topic indices."""
    reader = csv.DictReader(io.StringIO(text))
    if not {"topic_index", "label"} <= set(reader.fieldnames or []):
        raise AnalysisError("labels file needs 'topic_index' and 'label' columns")
    return {int(row["topic_index"]): row["label"].strip() for row in reader}


# Regularized incomplete beta by Lentz's continued fraction.

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10000


def _beta_cf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (a * math.log(x) + b * math.log1p(-x)
                 - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def student_t_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc_regularized(df / 2.0, 0.5, df / (df + t * t))


def pearson_with_p(x, y) -> CorrelationResult:
    """Sample Pearson r with its two-sided p-value from Student's t on n-2 df."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("x and y must be 1-D and equally long")
    n = len(x)
    if n < 3:
        raise AnalysisError(f"need at least 3 pairs, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise AnalysisError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        t = math.copysign(math.inf, r)
        p = 0.0
    else:
        t = r * math.sqrt(df / (1.0 - r * r))
        p = student_t_two_sided(t, df)
    return CorrelationResult(r, n, t, p)


def label_candidates(topic_index: int, gamma, docs: Sequence[Sequence[str]], grant_keys: Sequence[str],
                     dollars=None, n_top: int = 5, n_labels: int = 5, min_count: int = 2) -> list[BigramScore]:
    """Bigram suggestions drawn from a topic's top documents only."""
    top = top_documents(gamma, topic_index, grant_keys, dollars, min(n_top, len(grant_keys)))
    pos = {k: j for j, k in enumerate(grant_keys)}
    return extract_bigrams([docs[pos[k]] for k, _ in top], min_count=min_count, top_n=n_labels)


def build_profiles(gamma, grant_keys, dollars, link_table, docs=None, annotations=None, labels=None,
                   n_top: int = 5, min_count: int = 2) -> list[TopicProfile]:
    """Profile every topic; unlabeled topics get their best bigram as a label."""
    gamma = np.asarray(gamma, dtype=float)
    n_top = min(n_top, gamma.shape[0])
    pubs_per_grant = [len(link_table.pubs_for(k)) for k in grant_keys]
    weighted = gamma_weighted_publications(gamma, pubs_per_grant)
    labels = labels or {}
    profiles = []
    for i in range(gamma.shape[1]):
        top = top_documents(gamma, i, grant_keys, dollars, n_top)
        label = labels.get(i, "")
        if not label and docs is not None:
            cands = label_candidates(i, gamma, docs, grant_keys, dollars, n_top, n_labels=1,
                                     min_count=min_count)
            label = " ".join(cands[0].bigram) if cands else ""
        comp = composition(top, annotations) if annotations is not None else {}
        profiles.append(TopicProfile(i, label, top, topic_publication_count(top, link_table),
                                     float(weighted[i]), comp))
    return profiles
