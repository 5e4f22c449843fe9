import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from longtail.invest import (
    InvestmentError,
    TopicInvestmentTable,
    cumulative_share,
    head_tail_partition,
    investment_table,
    rank_topics,
    topic_investment,
)


def random_instance(rng, D, K):
    gamma = rng.dirichlet(np.full(K, 0.5), size=D)
    dollars = rng.integers(0, 5_000_000, size=D).astype(float)
    return gamma, dollars


def test_single_topic_gives_total():
    assert topic_investment(np.ones((3, 1)), [100, 200, 50]).tolist() == [350]


def test_two_grant_example():
    ti = topic_investment([[0.8, 0.2], [0.5, 0.5]], [100, 200])
    np.testing.assert_allclose(ti, [180, 120], rtol=1e-15)
    assert ti.sum() == pytest.approx(300)


def test_input_errors():
    with pytest.raises(InvestmentError, match="2 dollar amounts for 3"):
        topic_investment(np.full((3, 2), 0.5), [1, 2])
    with pytest.raises(InvestmentError, match="nonnegative"):
        topic_investment([[1.0]], [-1])
    with pytest.raises(InvestmentError, match="sum to 1"):
        topic_investment([[0.5, 0.4]], [1])


def test_rank_examples():
    assert rank_topics([5, 9, 1]).tolist() == [2, 1, 3]
    assert rank_topics([7, 7, 7, 7]).tolist() == [1, 2, 3, 4]
    assert rank_topics([59_085_683, 238_285_666]).tolist() == [2, 1]


def test_cumulative_share_examples():
    np.testing.assert_allclose(cumulative_share([50, 30, 20]), [0.5, 0.8, 1.0], atol=1e-15)
    assert cumulative_share([4.0]).tolist() == [1.0]
    with pytest.raises(InvestmentError):
        cumulative_share([0.0, 0.0])


def test_cumulative_share_matches_prefix_sum_oracle():
    rng = np.random.default_rng(5)
    ti = np.sort(rng.exponential(1e6, 10))[::-1]
    total = sum(ti)
    oracle = [sum(ti[: i + 1]) / total for i in range(10)]
    np.testing.assert_allclose(cumulative_share(ti), oracle, rtol=1e-12)
    assert cumulative_share(ti)[-1] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("nt,head", [(22, 4), (5, 1), (4, 1), (10, 2), (100, 20), (1, 1)])
def test_count_mode_head_size(nt, head):
    labels = head_tail_partition(list(range(nt, 0, -1)), "count", 0.2)
    assert labels.count("head") == head
    assert labels == ["head"] * head + ["tail"] * (nt - head)


def test_dollar_share_mode():
    assert head_tail_partition([90, 5, 5], "dollar-share", 0.8) == ["head", "tail", "tail"]
    assert head_tail_partition([50, 30, 20], "dollar-share", 0.8) == ["head", "head", "tail"]


def test_partition_errors():
    with pytest.raises(InvestmentError):
        head_tail_partition([1, 2], "median", 0.2)
    with pytest.raises(InvestmentError):
        head_tail_partition([1, 2], "count", 1.0)


def test_table_and_csv_round_trip():
    t = investment_table([[0.8, 0.2], [0.5, 0.5], [0.1, 0.9]], [100, 200, 300], "count", 0.5)
    assert [r.rank for r in t.rows] == [2, 1]
    assert t.head() == [1] and t.tail() == [0]
    assert t.aps_dollars == 600
    text = t.to_csv()
    assert text.splitlines()[0] == "topic_index,ti_dollars,rank,cumulative_share,segment"
    back = TopicInvestmentTable.from_csv(text, "count", 0.5)
    assert back == t


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_instance(rng, draw(st.integers(1, 60)), draw(st.integers(1, 12)))


@given(instances())
@settings(max_examples=200)
def test_conservation(inst):
    gamma, dollars = inst
    ti = topic_investment(gamma, dollars)
    assert abs(math.fsum(ti) - math.fsum(dollars)) <= 1e-9 * max(math.fsum(dollars), 1.0)


@given(instances(), st.floats(0.01, 1000))
@settings(max_examples=100)
def test_scale_equivariance(inst, c):
    gamma, dollars = inst
    if dollars.sum() == 0:
        return
    a = investment_table(gamma, dollars)
    b = investment_table(gamma, dollars * c)
    np.testing.assert_allclose(b.ti, a.ti * c, rtol=1e-12)
    # ranks and segments only compare when there are no near-ties to flip
    ti = np.sort(a.ti)
    if len(ti) < 2 or np.min(np.diff(ti)) > 1e-6 * ti.max():
        assert [r.rank for r in a.rows] == [r.rank for r in b.rows]
        assert a.head() == b.head()


@given(instances(), st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_permutation_equivariance(inst, seed):
    gamma, dollars = inst
    perm = np.random.default_rng(seed).permutation(len(dollars))
    np.testing.assert_allclose(topic_investment(gamma[perm], dollars[perm]), topic_investment(gamma, dollars),
                               rtol=1e-12, atol=1e-6)


@given(instances(), st.integers(1, 10**6))
@settings(max_examples=100)
def test_monotonicity(inst, bump):
    gamma, dollars = inst
    j = 0
    more = dollars.copy()
    more[j] += bump
    before, after = topic_investment(gamma, dollars), topic_investment(gamma, more)
    assert (after[gamma[j] > 0] > before[gamma[j] > 0]).all()


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1e9)),
       st.sampled_from(["count", "dollar-share"]), st.floats(0.01, 0.99))
def test_partition_is_a_split_with_head_above_tail(ti, mode, fraction):
    if ti.sum() == 0:
        return
    ranked = np.sort(ti)[::-1]
    labels = head_tail_partition(ranked, mode, fraction)
    assert len(labels) == len(ranked) and set(labels) <= {"head", "tail"}
    head = [x for x, s in zip(ranked, labels) if s == "head"]
    tail = [x for x, s in zip(ranked, labels) if s == "tail"]
    assert head
    if tail:
        assert min(head) >= max(tail)
