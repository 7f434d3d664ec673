"""Ranking and summarization metrics: P@K, R@K, F-beta, MRR, DCG/NDCG, ROUGE.

All functions are pure and operate on plain sequences/mappings:

* a ranked list is a sequence of unique item ids, best first;
* relevance judgments are a mapping ``item id -> score >= 0`` (binary
  judgments use 0/1); an item is *relevant* when its score is > 0;
* query ranks for MRR are a mapping ``query id -> rank of first relevant
  item`` with ``None`` when no relevant item was retrieved.

DCG uses the linear-gain form ``rel_i / log2(i + 1)`` (not the exponential
2^rel - 1 variant), and IDCG re-sorts the ranking's own relevance scores
descending, so a list already sorted by non-increasing relevance scores 1.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from typing import Mapping, NamedTuple, Optional, Sequence


class NoRelevantItems(ValueError):
    """recall_at_k needs at least one relevant judged item."""


class EmptyQuerySet(ValueError):
    """mean_reciprocal_rank needs at least one query."""


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f: float


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def _rels(ranking: Sequence[str], judged: Mapping[str, float]) -> list[float]:
    return [judged.get(item, 0.0) for item in ranking]


def precision_at_k(ranking: Sequence[str], judged: Mapping[str, float], k: int) -> float:
    """Relevant items among the first k, divided by k.

    The divisor is k even when the ranking is shorter: short lists are
    penalized rather than silently rescaled.
    """
    _check_k(k)
    hits = sum(1 for rel in _rels(ranking, judged)[:k] if rel > 0)
    return hits / k


def recall_at_k(ranking: Sequence[str], judged: Mapping[str, float], k: int) -> float:
    """Relevant items among the first k, divided by all relevant judged items."""
    _check_k(k)
    total_relevant = sum(1 for rel in judged.values() if rel > 0)
    if total_relevant == 0:
        raise NoRelevantItems("judgments contain no relevant item")
    hits = sum(1 for rel in _rels(ranking, judged)[:k] if rel > 0)
    return hits / total_relevant


def f_beta(precision: float, recall: float, beta: float = 1.0) -> float:
    """Weighted harmonic mean of precision and recall; 0 when both are 0."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValueError("precision and recall must lie in [0, 1]")
    if not (beta > 0 and math.isfinite(beta)):
        raise ValueError(f"beta must be finite and > 0, got {beta}")
    denom = beta * beta * precision + recall
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denom


def mean_reciprocal_rank(first_relevant_rank: Mapping[str, Optional[int]]) -> float:
    """Average of 1/rank over the query set; rank None contributes 0."""
    if not first_relevant_rank:
        raise EmptyQuerySet("query set is empty")
    total = 0.0
    for rank in first_relevant_rank.values():
        if rank is not None:
            if rank < 1:
                raise ValueError(f"rank must be >= 1, got {rank}")
            total += 1.0 / rank
    return total / len(first_relevant_rank)


def dcg_at_k(ranking: Sequence[str], judged: Mapping[str, float], k: int) -> float:
    _check_k(k)
    return sum(
        rel / math.log2(i + 1)
        for i, rel in enumerate(_rels(ranking, judged)[:k], start=1)
    )


def _dcg_of_rels(rels: Sequence[float], k: int) -> float:
    return sum(rel / math.log2(i + 1) for i, rel in enumerate(rels[:k], start=1))


def ndcg_at_k(ranking: Sequence[str], judged: Mapping[str, float], k: int) -> float:
    """DCG over the ideal (relevance-descending) reordering of the same list.

    Returns 0 when IDCG is 0 (nothing relevant was retrieved).
    """
    _check_k(k)
    rels = _rels(ranking, judged)
    idcg = _dcg_of_rels(sorted(rels, reverse=True), k)
    if idcg == 0:
        return 0.0
    return _dcg_of_rels(rels, k) / idcg


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation off token edges."""
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap between candidate and reference texts."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    match = sum(min(count, cand.get(gram, 0)) for gram, count in ref.items())
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    precision = match / cand_total if cand_total else 0.0
    recall = match / ref_total if ref_total else 0.0
    return RougeScore(precision, recall, f_beta(precision, recall))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b)) row-rolling DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """LCS-based overlap between candidate and reference token sequences."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand) if cand else 0.0
    recall = lcs / len(ref) if ref else 0.0
    return RougeScore(precision, recall, f_beta(precision, recall))
