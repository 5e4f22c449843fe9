import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from longtail.analysis import (
    AnalysisError,
    CorrelationResult,
    TopicProfile,
    betainc_regularized,
    build_profiles,
    composition,
    format_composition,
    gamma_weighted_publications,
    label_candidates,
    pearson_with_p,
    read_annotations,
    read_labels,
    student_t_two_sided,
    top_documents,
    topic_publication_count,
)
from longtail.ingest import LinkTable
from longtail.textprep import count_bigrams

# 8 points drawn once from a uniform generator; the oracle recomputes from these literals
X8 = [0.8444218515250481, 0.7579544029403025, 0.420571580830845, 0.25891675029296335,
      0.5112747213686085, 0.4049341374504143, 0.7837985890347726, 0.30331272607892745]
Y8 = [0.4765969541523558, 0.5833820394550312, 0.9081128851953352, 0.5046868558173903,
      0.28183784439970383, 0.7558042041572239, 0.6183689966753316, 0.25050634136244054]


def pearson_oracle(x, y):
    mpmath.mp.dps = 50
    x = [mpmath.mpf(v) for v in x]
    y = [mpmath.mpf(v) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    r = sxy / mpmath.sqrt(sxx * syy)
    df = n - 2
    t = r * mpmath.sqrt(df / (1 - r * r))
    # two-sided tail by direct integration of the t density
    dens = lambda s: mpmath.gamma((df + 1) / mpmath.mpf(2)) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / mpmath.mpf(2))) * (1 + s * s / df) ** (-(df + 1) / mpmath.mpf(2))
    p = 2 * mpmath.quad(dens, [abs(t), mpmath.inf])
    return r, p


def xy_with_r(r, n):
    """Deterministic pair of vectors whose sample correlation is exactly r (up to rounding)."""
    u = np.arange(n, dtype=float)
    u -= u.mean()
    v = np.array([(-1) ** i for i in range(n)], dtype=float) * np.arange(1, n + 1)
    v -= v.mean()
    v -= (v @ u) / (u @ u) * u
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    return u, r * u + math.sqrt(1 - r * r) * v


# --- top documents and publication counts ------------------------------------

def test_top_documents_examples():
    gamma = np.array([[0.8, 0.2], [0.1, 0.9], [0.5, 0.5]])
    assert [k for k, _ in top_documents(gamma, 1, ["g1", "g2", "g3"], n_top=2)] == ["g2", "g3"]
    full = top_documents(gamma, 1, ["g1", "g2", "g3"], n_top=3)
    assert [v for _, v in full] == [0.9, 0.5, 0.2]


def test_top_documents_tie_rule():
    gamma = np.array([[0.6, 0.4], [0.6, 0.4], [0.6, 0.4], [0.9, 0.1]])
    top = top_documents(gamma, 1, ["a", "b", "c", "d"], dollars=[100, 200, 200, 999], n_top=3)
    assert [k for k, _ in top] == ["b", "c", "a"]


def test_top_documents_errors():
    g = np.full((2, 2), 0.5)
    with pytest.raises(AnalysisError, match="out of range"):
        top_documents(g, 2, ["a", "b"])
    with pytest.raises(AnalysisError, match="n_top"):
        top_documents(g, 0, ["a", "b"], n_top=3)


def links(mapping):
    return LinkTable({k: set(v) for k, v in mapping.items()}, set())


def test_publication_count_examples():
    lt = links({"a": [], "b": ["p1", "p2"], "c": ["p1"]})
    assert topic_publication_count([("a", 0.9)], lt) == 0
    assert topic_publication_count([("b", 0.9), ("c", 0.8)], lt) == 2
    with pytest.raises(Exception):
        topic_publication_count([("zzz", 0.5)], lt)


@given(st.lists(st.sets(st.sampled_from(["p1", "p2", "p3", "p4"])), min_size=1, max_size=6))
def test_publication_count_is_at_most_the_sum(sets):
    lt = links({f"g{i}": s for i, s in enumerate(sets)})
    top = [(f"g{i}", 0.5) for i in range(len(sets))]
    assert topic_publication_count(top, lt) <= sum(len(s) for s in sets)
    assert topic_publication_count(top, lt) == len(set().union(*sets))


def test_weighted_publications_examples():
    np.testing.assert_allclose(gamma_weighted_publications([[0.3, 0.7], [0.9, 0.1]], [10, 0]), [3, 7])
    assert gamma_weighted_publications(np.ones((3, 1)), [1, 2, 3]).tolist() == [6]
    with pytest.raises(AnalysisError):
        gamma_weighted_publications(np.ones((3, 1)), [1, 2])


@given(st.integers(0, 2**32 - 1))
def test_weighted_publications_conserve_total(seed):
    rng = np.random.default_rng(seed)
    D, K = int(rng.integers(1, 100)), int(rng.integers(1, 25))
    gamma = rng.dirichlet(np.full(K, 0.3), size=D)
    pubs = rng.integers(0, 50, size=D)
    w = gamma_weighted_publications(gamma, pubs)
    assert abs(w.sum() - pubs.sum()) <= 1e-9 * max(pubs.sum(), 1)


# --- composition -------------------------------------------------------------

def top_of(codes):
    return [(f"g{i}", 1.0) for i in range(len(codes))], {f"g{i}": c for i, c in enumerate(codes)}


@pytest.mark.parametrize("codes,expected,text", [
    ("FFFRI", {"F": 60, "R": 20, "I": 20}, "60%F; 20%R; 20%I"),
    ("RRRRR", {"R": 100}, "100%R"),
    ("EEEER", {"E": 80, "R": 20}, "80%E; 20%R"),
])
def test_composition_examples(codes, expected, text):
    comp = composition(*top_of(list(codes)))
    assert comp == expected
    assert format_composition(comp) == text


def test_composition_non_integer_percentages():
    comp = composition(*top_of(["R", "R", "ST"]))
    assert format_composition(comp) == "66.67%R; 33.33%ST"


def test_composition_missing_annotation_names_grant():
    with pytest.raises(AnalysisError, match="'g9'"):
        composition([("g9", 0.5)], {})


@given(st.lists(st.sampled_from(["R", "I", "F", "E", "ST"]), min_size=1, max_size=10))
def test_composition_sums_to_100(codes):
    comp = composition(*top_of(codes))
    assert abs(sum(comp.values()) - 100) <= 0.01
    assert set(comp) <= {"R", "I", "F", "E", "ST"} and min(comp.values()) > 0


def test_read_annotations_and_labels():
    assert read_annotations("grant_key,code\n1615960,f\n1664342, ST\n") == {"1615960": "F", "1664342": "ST"}
    with pytest.raises(AnalysisError, match="line 2"):
        read_annotations("grant_key,code\n1615960,X\n")
    assert read_labels("topic_index,label\n0, Dark energy \n") == {0: "Dark energy"}
    with pytest.raises(AnalysisError):
        read_labels("topic,label\n")


# --- correlation ---------------------------------------------------------------

def test_perfect_correlation():
    res = pearson_with_p([1, 2, 3], [2, 4, 6])
    assert res.r == pytest.approx(1.0)
    assert res.p_two_sided == pytest.approx(0.0, abs=1e-12)


def test_headline_p_value():
    x, y = xy_with_r(-0.281, 22)
    res = pearson_with_p(x, y)
    assert res.n == 22
    assert res.r == pytest.approx(-0.281, abs=1e-12)
    assert res.p_two_sided == pytest.approx(0.205, abs=0.001)


def test_eight_point_fixture_matches_oracle():
    r, p = pearson_oracle(X8, Y8)
    res = pearson_with_p(X8, Y8)
    assert abs(res.r - float(r)) <= 1e-10
    assert abs(res.p_two_sided - float(p)) <= 1e-8


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (10, 0.5, 0.9), (3.5, 0.5, 0.01), (50, 0.5, 0.99),
                                   (1, 1, 0.42), (2.5, 7, 0.6)])
def test_incomplete_beta_against_mpmath(a, b, x):
    mpmath.mp.dps = 40
    want = mpmath.betainc(a, b, 0, x, regularized=True)
    assert betainc_regularized(a, b, x) == pytest.approx(float(want), abs=1e-13)


def test_incomplete_beta_domain():
    assert betainc_regularized(2, 3, 0.0) == 0.0
    assert betainc_regularized(2, 3, 1.0) == 1.0
    with pytest.raises(ValueError):
        betainc_regularized(0, 1, 0.5)
    with pytest.raises(ValueError):
        betainc_regularized(1, 1, 1.5)


def test_p_decreases_with_abs_t():
    ps = [student_t_two_sided(t, 20) for t in (0, 0.5, 1, 2, 4, 8)]
    assert ps[0] == pytest.approx(1.0)
    assert all(a > b for a, b in zip(ps, ps[1:]))
    assert student_t_two_sided(-2, 20) == student_t_two_sided(2, 20)


def test_correlation_errors():
    with pytest.raises(AnalysisError, match="at least 3"):
        pearson_with_p([1, 2], [3, 4])
    with pytest.raises(AnalysisError, match="zero variance"):
        pearson_with_p([1, 1, 1], [1, 2, 3])
    with pytest.raises(AnalysisError):
        pearson_with_p([1, 2, 3], [1, 2])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=20),
       st.floats(0.1, 100) | st.floats(-100, -0.1), finite)
def test_correlation_invariances(pairs, a, b):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    assume(np.std(x) > 1e-3 and np.std(y) > 1e-3)
    base = pearson_with_p(x, y)
    assume(abs(base.r) < 0.999)
    assert -1 <= base.r <= 1 and 0 <= base.p_two_sided <= 1
    swapped = pearson_with_p(y, x)
    assert swapped.r == pytest.approx(base.r, abs=1e-9)
    moved = pearson_with_p(a * x + b, y)
    assert moved.r == pytest.approx(math.copysign(1, a) * base.r, abs=1e-7)
    assert moved.p_two_sided == pytest.approx(base.p_two_sided, abs=1e-6)


def test_result_json():
    res = CorrelationResult(0.5, 10, 1.6, 0.14)
    assert res.to_json() == {"r": 0.5, "n": 10, "t_stat": 1.6, "p_two_sided": 0.14}


# --- labels and profiles -----------------------------------------------------

DOCS = [
    ["dark", "energy", "survey", "dark", "energy"],
    ["weak", "lensing", "dark", "energy"],
    ["dark", "energy", "supernova", "cosmology"],
    ["telescope", "dome", "telescope", "dome"],
]
GAMMA = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.1, 0.9]])
KEYS = ["a", "b", "c", "d"]


def test_label_candidates_planted_bigram():
    cands = label_candidates(0, GAMMA, DOCS, KEYS, n_top=3, n_labels=3)
    assert cands[0].bigram == ("dark", "energy")
    corpus = set(count_bigrams(DOCS))
    assert all(c.bigram in corpus for c in cands)
    assert ("telescope", "dome") not in {c.bigram for c in cands}


def test_label_candidates_empty_without_repeats():
    docs = [["a", "b"], ["c", "d"], ["e", "f"], ["g", "h"]]
    assert label_candidates(0, GAMMA, docs, KEYS, n_top=2, min_count=2) == []


def test_build_profiles():
    lt = links({"a": ["p1"], "b": ["p1", "p2"], "c": [], "d": ["p3"]})
    ann = {"a": "R", "b": "R", "c": "ST", "d": "F"}
    profiles = build_profiles(GAMMA, KEYS, [1, 2, 3, 4], lt, docs=DOCS, annotations=ann,
                              labels={1: "Facilities"}, n_top=3)
    p0, p1 = profiles
    assert p0.label == "dark energy"
    assert p1.label == "Facilities"
    assert [k for k, _ in p0.top_grants] == ["a", "b", "c"]
    assert p0.pub_count_top == 2
    assert p0.pub_count_weighted + p1.pub_count_weighted == pytest.approx(4)
    assert format_composition(p0.composition) == "66.67%R; 33.33%ST"
    assert TopicProfile.from_json(p0.to_json()) == p0
