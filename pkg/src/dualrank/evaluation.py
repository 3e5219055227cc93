"""Sampled top-K retrieval metrics and ranking-agreement analyses.

Recall@K and NDCG@K (binary relevance, 1/log2(rank+1) discounting) are
averaged per batch with percentile-bootstrap intervals. Agreement between
two scorers is measured with top-K Jaccard overlap and bidirectional
top-1 containment on softmax-normalized preference scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError

DEFAULT_KS = (1, 3, 5)


@dataclass
class RankedList:
    query_id: str
    item_ids: tuple[str, ...]     # descending score order
    scores: tuple[float, ...]
    positive_ids: frozenset[str]

    def __post_init__(self) -> None:
        if len(self.item_ids) != len(set(self.item_ids)):
            raise DataError(f"duplicate items in ranking for {self.query_id}")
        if any(self.scores[i] < self.scores[i + 1] for i in range(len(self.scores) - 1)):
            raise DataError(f"scores not non-increasing for {self.query_id}")
        if not self.positive_ids:
            raise DataError(f"empty positive set for {self.query_id}")
        missing = self.positive_ids - set(self.item_ids)
        if missing:
            raise DataError(f"positives {sorted(missing)} missing from ranking {self.query_id}")


def rank_items(
    query_id: str,
    item_ids: Sequence[str],
    scores: Sequence[float],
    positive_ids: Sequence[str],
) -> RankedList:
    """Sort by score descending; ties broken by ascending item id."""
    order = sorted(range(len(item_ids)), key=lambda k: (-scores[k], item_ids[k]))
    return RankedList(
        query_id=query_id,
        item_ids=tuple(item_ids[k] for k in order),
        scores=tuple(float(scores[k]) for k in order),
        positive_ids=frozenset(positive_ids),
    )


def recall_at_k(ranked: RankedList, k: int) -> float:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    top = set(ranked.item_ids[:k])
    return len(ranked.positive_ids & top) / len(ranked.positive_ids)


def ndcg_at_k(ranked: RankedList, k: int) -> float:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    dcg = 0.0
    for pos, item in enumerate(ranked.item_ids[:k], start=1):
        if item in ranked.positive_ids:
            dcg += 1.0 / math.log2(pos + 1)
    ideal_hits = min(k, len(ranked.positive_ids))
    idcg = sum(1.0 / math.log2(pos + 1) for pos in range(1, ideal_hits + 1))
    return dcg / idcg


# ---------------------------------------------------------------------------
# batched evaluation
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    task: str
    ks: tuple[int, ...]
    batch_count: int
    per_batch: dict[str, np.ndarray]  # "recall@1" -> values per batch

    def mean(self, metric: str, k: int) -> float:
        return float(np.mean(self.per_batch[f"{metric}@{k}"]))

    def ci(self, metric: str, k: int, n_resamples: int = 1000, seed: int = 0
           ) -> tuple[float, float]:
        return bootstrap_ci(self.per_batch[f"{metric}@{k}"], n_resamples, seed)

    def rows(self, n_resamples: int = 1000, seed: int = 0) -> list[dict]:
        out = []
        for metric in ("recall", "ndcg"):
            for k in self.ks:
                lo, hi = self.ci(metric, k, n_resamples, seed)
                out.append(
                    {
                        "task": self.task,
                        "K": k,
                        "metric": metric,
                        "value": self.mean(metric, k),
                        "ci_low": lo,
                        "ci_high": hi,
                    }
                )
        return out


def bootstrap_ci(values, n_resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap over batches; deterministic under the seed."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise DataError("bootstrap over empty values")
    rng = np.random.default_rng([seed, 29])
    idx = rng.integers(0, vals.size, size=(n_resamples, vals.size))
    means = vals[idx].mean(axis=1)
    return float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))


def evaluate_preference(
    score_fn: Callable[[str, list[str]], np.ndarray],
    batches,
    ks: tuple[int, ...] = DEFAULT_KS,
) -> MetricReport:
    """Rank each positive against its sampled negatives, average per batch."""
    if not batches:
        raise DataError("no preference batches to evaluate")
    per_batch: dict[str, list[float]] = {
        f"{m}@{k}": [] for m in ("recall", "ndcg") for k in ks
    }
    for batch in batches:
        batch.check(len(batch.negative_job_ids))
        items = list(batch.item_ids())
        scores = np.asarray(score_fn(batch.candidate_id, items), dtype=np.float64)
        ranked = rank_items(batch.candidate_id, items, scores, [batch.positive_job_id])
        for k in ks:
            per_batch[f"recall@{k}"].append(recall_at_k(ranked, k))
            per_batch[f"ndcg@{k}"].append(ndcg_at_k(ranked, k))
    return MetricReport(
        task="preference",
        ks=tuple(ks),
        batch_count=len(batches),
        per_batch={k: np.asarray(v) for k, v in per_batch.items()},
    )


def evaluate_qualification(
    score_fn: Callable[[str, list[str]], np.ndarray],
    batches,
    ks: tuple[int, ...] = DEFAULT_KS,
) -> MetricReport:
    """Rank each job's applicants; exactly one is labeled qualified."""
    if not batches:
        raise DataError("no qualification batches to evaluate")
    per_batch: dict[str, list[float]] = {
        f"{m}@{k}": [] for m in ("recall", "ndcg") for k in ks
    }
    for batch in batches:
        batch.check()
        items = list(batch.applicant_ids)
        scores = np.asarray(score_fn(batch.job_id, items), dtype=np.float64)
        ranked = rank_items(batch.job_id, items, scores, [batch.qualified_id])
        for k in ks:
            per_batch[f"recall@{k}"].append(recall_at_k(ranked, k))
            per_batch[f"ndcg@{k}"].append(ndcg_at_k(ranked, k))
    return MetricReport(
        task="qualification",
        ks=tuple(ks),
        batch_count=len(batches),
        per_batch={k: np.asarray(v) for k, v in per_batch.items()},
    )


# ---------------------------------------------------------------------------
# ranking agreement
# ---------------------------------------------------------------------------

def softmax_normalize(scores) -> np.ndarray:
    """Max-subtracted softmax; preserves the induced ranking exactly."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise DataError("softmax over empty scores")
    if not np.all(np.isfinite(s)):
        raise DataError("softmax over non-finite scores")
    e = np.exp(s - s.max())
    return e / e.sum()


def _top_k_set(ranked: RankedList, k: int) -> frozenset[str]:
    return frozenset(ranked.item_ids[:k])


def _check_same_universe(a: RankedList, b: RankedList) -> None:
    if set(a.item_ids) != set(b.item_ids):
        raise DataError(
            f"rankings {a.query_id} and {b.query_id} cover different item universes"
        )


def topk_jaccard(list_a: RankedList, list_b: RankedList, k: int) -> float:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    _check_same_universe(list_a, list_b)
    sa, sb = _top_k_set(list_a, k), _top_k_set(list_b, k)
    union = sa | sb
    return len(sa & sb) / len(union)


def top1_containment(source: RankedList, target: RankedList, k: int) -> bool:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    _check_same_universe(source, target)
    return source.item_ids[0] in _top_k_set(target, k)


@dataclass
class AgreementReport:
    ks: tuple[int, ...]
    jaccard_mean: dict[int, float]
    contain_a_in_b: dict[int, float]  # rate of A's top-1 inside B's top-K
    contain_b_in_a: dict[int, float]
    user_count: int

    def rows(self) -> list[dict]:
        return [
            {
                "k": k,
                "jaccard_mean": self.jaccard_mean[k],
                "contain_a_in_b": self.contain_a_in_b[k],
                "contain_b_in_a": self.contain_b_in_a[k],
            }
            for k in self.ks
        ]


def agreement_curves(
    scorer_a: Callable[[str], np.ndarray],
    scorer_b: Callable[[str], np.ndarray],
    users: Sequence[str],
    job_ids: Sequence[str],
    ks: Sequence[int],
) -> AgreementReport:
    """Per-user agreement between two preference scorers over one universe."""
    if not users:
        raise DataError("agreement over empty user list")
    job_ids = list(job_ids)
    ks = tuple(ks)
    jac = {k: [] for k in ks}
    a_in_b = {k: [] for k in ks}
    b_in_a = {k: [] for k in ks}
    # any item id works as the dummy positive; metrics below never use it
    dummy_pos = [job_ids[0]]
    for user in users:
        pa = softmax_normalize(scorer_a(user))
        pb = softmax_normalize(scorer_b(user))
        ra = rank_items(user, job_ids, pa, dummy_pos)
        rb = rank_items(user, job_ids, pb, dummy_pos)
        for k in ks:
            jac[k].append(topk_jaccard(ra, rb, k))
            a_in_b[k].append(1.0 if top1_containment(ra, rb, k) else 0.0)
            b_in_a[k].append(1.0 if top1_containment(rb, ra, k) else 0.0)
    return AgreementReport(
        ks=ks,
        jaccard_mean={k: float(np.mean(jac[k])) for k in ks},
        contain_a_in_b={k: float(np.mean(a_in_b[k])) for k in ks},
        contain_b_in_a={k: float(np.mean(b_in_a[k])) for k in ks},
        user_count=len(users),
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_metrics_csv(path, reports: list[MetricReport], seed: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("task,K,metric,value,ci_low,ci_high\n")
        for report in reports:
            for row in report.rows(seed=seed):
                fh.write(
                    f"{row['task']},{row['K']},{row['metric']},"
                    f"{row['value']:.6f},{row['ci_low']:.6f},{row['ci_high']:.6f}\n"
                )


def write_agreement_csv(path, report: AgreementReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,jaccard_mean,contain_a_in_b,contain_b_in_a\n")
        for row in report.rows():
            fh.write(
                f"{row['k']},{row['jaccard_mean']:.6f},"
                f"{row['contain_a_in_b']:.6f},{row['contain_b_in_a']:.6f}\n"
            )


def format_metric_table(reports: list[MetricReport], label: str) -> str:
    """Fixed-width table, one row per task: Recall@K then NDCG@K columns.

    NDCG uses 1/log2(rank+1) discounting with binary gains.
    """
    ks = reports[0].ks
    header = ["Model", "Task"] + [f"Recall@{k}" for k in ks] + [f"NDCG@{k}" for k in ks]
    widths = [max(14, len(label) + 2), 15] + [10] * (2 * len(ks))
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("-" * sum(widths))
    for report in reports:
        cells = [label, report.task]
        cells += [f"{report.mean('recall', k):.4f}" for k in ks]
        cells += [f"{report.mean('ndcg', k):.4f}" for k in ks]
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)
