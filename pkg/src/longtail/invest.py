"""Topic Investment: award dollars apportioned to topics by document-topic weight."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

PARTITION_MODES = ("count", "dollar-share")
DEFAULT_MODE = "count"
DEFAULT_FRACTION = 0.2
ROW_SUM_TOL = 1e-9


class InvestmentError(ValueError):
    pass


def topic_investment(gamma, dollars) -> np.ndarray:
    """``TI[i] = sum_j dollars[j] * gamma[j, i]``.

    Because each grant's gamma row sums to one, the topic totals add back up to
    the total dollars awarded.
    """
    gamma = np.asarray(gamma, dtype=float)
    dollars = np.asarray(dollars, dtype=float)
    if gamma.ndim != 2:
        raise InvestmentError(f"gamma must be 2-D, got shape {gamma.shape}")
    if dollars.shape != (gamma.shape[0],):
        raise InvestmentError(f"{dollars.shape[0] if dollars.ndim else 0} dollar amounts for {gamma.shape[0]} grants")
    if (dollars < 0).any():
        raise InvestmentError("dollar amounts must be nonnegative")
    if gamma.shape[0] and np.abs(gamma.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
        raise InvestmentError("gamma rows must each sum to 1")
    return dollars @ gamma


def rank_topics(ti) -> np.ndarray:
    """Rank 1 for the largest investment; exact ties go to the lower topic index."""
    ti = np.asarray(ti, dtype=float)
    order = sorted(range(len(ti)), key=lambda i: (-ti[i], i))
    ranks = np.empty(len(ti), dtype=np.int64)
    for r, i in enumerate(order, 1):
        ranks[i] = r
    return ranks


def rank_order(ranks) -> np.ndarray:
    """Topic indices listed from rank 1 downwards."""
    return np.argsort(np.asarray(ranks), kind="stable")


def cumulative_share(ti_ranked) -> np.ndarray:
    """Running share of total investment along ``ti_ranked`` (already in rank order)."""
    ti_ranked = np.asarray(ti_ranked, dtype=float)
    aps = math.fsum(ti_ranked)
    if not aps > 0:
        raise InvestmentError("total investment must be positive")
    return np.cumsum(ti_ranked) / aps


def head_tail_partition(ti_ranked, mode: str = DEFAULT_MODE, fraction: float = DEFAULT_FRACTION) -> list[str]:
    """Label rank-ordered topics ``head`` or ``tail``.

    ``count`` puts the top ``floor(fraction * nt)`` topics (at least one) in the
    head; ``dollar-share`` takes the shortest rank prefix whose cumulative share
    reaches ``fraction``.
    """
    if mode not in PARTITION_MODES:
        raise InvestmentError(f"unknown partition mode {mode!r}; expected one of {PARTITION_MODES}")
    if not 0 < fraction < 1:
        raise InvestmentError(f"fraction must be in (0, 1), got {fraction}")
    nt = len(ti_ranked)
    if nt == 0:
        return []
    if mode == "count":
        # the epsilon keeps e.g. 0.29 * 100 from flooring to 28
        head = max(1, math.floor(fraction * nt + 1e-9))
    else:
        share = cumulative_share(ti_ranked)
        head = int(np.argmax(share >= fraction - 1e-12)) + 1
    return ["head"] * head + ["tail"] * (nt - head)


@dataclass
class TopicInvestmentRow:
    topic_index: int
    ti_dollars: float
    rank: int
    cumulative_share: float
    segment: str


@dataclass
class TopicInvestmentTable:
    rows: list[TopicInvestmentRow]
    aps_dollars: float
    mode: str = DEFAULT_MODE
    fraction: float = DEFAULT_FRACTION

    @property
    def ti(self) -> np.ndarray:
        return np.array([r.ti_dollars for r in self.rows])

    def head(self) -> list[int]:
        return [r.topic_index for r in self.rows if r.segment == "head"]

    def tail(self) -> list[int]:
        return [r.topic_index for r in self.rows if r.segment == "tail"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["topic_index", "ti_dollars", "rank", "cumulative_share", "segment"])
        for r in self.rows:
            w.writerow([r.topic_index, repr(float(r.ti_dollars)), r.rank, repr(float(r.cumulative_share)), r.segment])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode: str = DEFAULT_MODE, fraction: float = DEFAULT_FRACTION):
        rows = [
            TopicInvestmentRow(int(r["topic_index"]), float(r["ti_dollars"]), int(r["rank"]),
                               float(r["cumulative_share"]), r["segment"])
            for r in csv.DictReader(io.StringIO(text))
        ]
        return cls(rows, math.fsum(r.ti_dollars for r in rows), mode, fraction)


def investment_table(gamma, dollars, mode: str = DEFAULT_MODE, fraction: float = DEFAULT_FRACTION) -> TopicInvestmentTable:
    ti = topic_investment(gamma, dollars)
    ranks = rank_topics(ti)
    order = rank_order(ranks)
    share = cumulative_share(ti[order])
    segments = head_tail_partition(ti[order], mode, fraction)
    by_topic = {}
    for pos, i in enumerate(order):
        by_topic[int(i)] = (float(share[pos]), segments[pos])
    rows = [
        TopicInvestmentRow(i, float(ti[i]), int(ranks[i]), by_topic[i][0], by_topic[i][1])
        for i in range(len(ti))
    ]
    return TopicInvestmentTable(rows, math.fsum(np.asarray(dollars, dtype=float)), mode, fraction)
