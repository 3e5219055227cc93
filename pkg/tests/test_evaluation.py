import math

import numpy as np
import pytest

from dualrank.errors import DataError
from dualrank.evaluation import (
    AgreementReport,
    RankedList,
    agreement_curves,
    bootstrap_ci,
    evaluate_preference,
    evaluate_qualification,
    format_metric_table,
    ndcg_at_k,
    rank_items,
    recall_at_k,
    softmax_normalize,
    top1_containment,
    topk_jaccard,
    write_agreement_csv,
    write_metrics_csv,
)
from dualrank.synth import PreferenceBatch, QualificationBatch, Split


def ranked_with_positive_at(rank: int, total: int, positives=None) -> RankedList:
    ids = [f"d{k}" for k in range(total)]
    positives = positives or {ids[rank - 1]}
    scores = [float(total - k) for k in range(total)]
    return RankedList(query_id="q", item_ids=tuple(ids), scores=tuple(scores),
                      positive_ids=frozenset(positives))


# independent brute-force oracles used to freeze expected metric values
def brute_recall(item_ids, positives, k):
    hits = sum(1 for item in list(item_ids)[:k] if item in positives)
    return hits / len(positives)


def brute_ndcg(item_ids, positives, k):
    dcg = sum(
        1.0 / math.log2(pos + 2)
        for pos, item in enumerate(list(item_ids)[:k])
        if item in positives
    )
    ideal = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(positives))))
    return dcg / ideal


class TestRecall:
    def test_hit_at_top(self):
        assert recall_at_k(ranked_with_positive_at(1, 10), 1) == 1.0

    def test_miss_outside_cutoff(self):
        assert recall_at_k(ranked_with_positive_at(6, 10), 5) == 0.0

    def test_hit_inside_cutoff(self):
        assert recall_at_k(ranked_with_positive_at(4, 10), 5) == 1.0

    def test_k_must_be_positive(self):
        with pytest.raises(DataError):
            recall_at_k(ranked_with_positive_at(1, 5), 0)

    def test_empty_positive_set_fatal(self):
        with pytest.raises(DataError):
            RankedList("q", ("a", "b"), (2.0, 1.0), frozenset())


class TestNdcg:
    def test_ideal_ordering(self):
        for k in (1, 3, 5):
            assert ndcg_at_k(ranked_with_positive_at(1, 10), k) == 1.0

    def test_single_positive_rank_three(self):
        assert ndcg_at_k(ranked_with_positive_at(3, 10), 5) == 0.5  # 1/log2(4), exactly

    def test_outside_cutoff(self):
        assert ndcg_at_k(ranked_with_positive_at(6, 10), 5) == 0.0

    def test_bounds_and_oracle_agreement_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 11))
            ids = [f"d{k}" for k in range(n)]
            scores = rng.random(n)
            n_pos = int(rng.integers(1, n + 1))
            positives = set(rng.choice(ids, size=n_pos, replace=False))
            ranked = rank_items("q", ids, scores, positives)
            for k in (1, 2, 3, 5, 8):
                r = recall_at_k(ranked, k)
                nd = ndcg_at_k(ranked, k)
                assert abs(r - brute_recall(ranked.item_ids, positives, k)) < 1e-9
                assert abs(nd - brute_ndcg(ranked.item_ids, positives, k)) < 1e-9
                assert 0.0 <= nd <= 1.0

    def test_ndcg_is_one_iff_positives_fill_top(self):
        ids = ("a", "b", "c", "d")
        scores = (4.0, 3.0, 2.0, 1.0)
        top = RankedList("q", ids, scores, frozenset({"a", "b"}))
        assert ndcg_at_k(top, 4) == 1.0
        split = RankedList("q", ids, scores, frozenset({"a", "c"}))
        assert ndcg_at_k(split, 4) < 1.0


class TestRankItems:
    def test_ties_break_by_ascending_id(self):
        ranked = rank_items("q", ["b", "a", "c"], [1.0, 1.0, 2.0], ["a"])
        assert ranked.item_ids == ("c", "a", "b")

    def test_scores_sorted_descending(self):
        ranked = rank_items("q", ["a", "b", "c"], [0.1, 0.9, 0.5], ["a"])
        assert ranked.scores == (0.9, 0.5, 0.1)

    def test_duplicate_items_rejected(self):
        with pytest.raises(DataError):
            RankedList("q", ("a", "a"), (2.0, 1.0), frozenset({"a"}))


def _pref_batch(cand, pos, negs, split=Split.Test):
    return PreferenceBatch(candidate_id=cand, split=split, positive_job_id=pos,
                           negative_job_ids=tuple(negs))


def _qual_batch(job, applicants, qualified, split=Split.Test):
    return QualificationBatch(job_id=job, split=split, applicant_ids=tuple(applicants),
                              qualified_id=qualified)


class TestEvaluatePreference:
    def test_oracle_scorer_scores_perfectly(self):
        batches = [_pref_batch(f"u{k}", "jpos", [f"jn{i}" for i in range(9)])
                   for k in range(4)]

        def oracle(cand, items):
            return np.array([1.0 if j == "jpos" else 0.0 for j in items])

        report = evaluate_preference(oracle, batches, ks=(1, 3, 5))
        for k in (1, 3, 5):
            assert report.mean("recall", k) == 1.0
            assert report.mean("ndcg", k) == 1.0

    def test_anti_oracle_misses_everything(self):
        batches = [_pref_batch("u0", "jpos", [f"jn{i}" for i in range(9)])]

        def anti(cand, items):
            return np.array([0.0 if j == "jpos" else 1.0 for j in items])

        report = evaluate_preference(anti, batches, ks=(5,))
        assert report.mean("recall", 5) == 0.0

    def test_uniform_random_scorer_near_chance(self):
        # 50-item batches: expected Recall@1 is 1/50 = 0.02
        rng = np.random.default_rng(5)
        batches = [_pref_batch(f"u{k}", "jpos", [f"jn{i}" for i in range(49)])
                   for k in range(600)]

        def random_scorer(cand, items):
            return rng.random(len(items))

        report = evaluate_preference(random_scorer, batches, ks=(1,))
        assert abs(report.mean("recall", 1) - 0.02) < 0.012

    def test_empty_batches_fatal(self):
        with pytest.raises(DataError):
            evaluate_preference(lambda c, i: np.zeros(len(i)), [], ks=(1,))


class TestEvaluateQualification:
    def test_oracle_scorer(self):
        batches = [_qual_batch(f"j{k}", [f"u{i}" for i in range(6)], "u3")
                   for k in range(3)]

        def oracle(job, cands):
            return np.array([1.0 if c == "u3" else 0.0 for c in cands])

        report = evaluate_qualification(oracle, batches, ks=(1, 3, 5))
        assert report.mean("recall", 1) == 1.0
        assert report.mean("ndcg", 5) == 1.0

    def test_k_beyond_batch_size_gives_full_recall(self):
        batches = [_qual_batch("j0", ["u0", "u1", "u2"], "u2")]

        def worst(job, cands):
            return np.array([1.0 if c != "u2" else 0.0 for c in cands])

        report = evaluate_qualification(worst, batches, ks=(5,))
        assert report.mean("recall", 5) == 1.0

    def test_two_applicant_random_scorer_near_half(self):
        rng = np.random.default_rng(9)
        batches = [_qual_batch(f"j{k}", ["u0", "u1"], "u0") for k in range(800)]

        def random_scorer(job, cands):
            return rng.random(len(cands))

        report = evaluate_qualification(random_scorer, batches, ks=(1,))
        assert abs(report.mean("recall", 1) - 0.5) < 0.05


class TestSoftmax:
    def test_uniform_for_equal_scores(self):
        probs = softmax_normalize(np.full(5, 3.7))
        assert np.allclose(probs, 0.2)
        assert abs(probs.sum() - 1.0) < 1e-9

    def test_worked_example(self):
        probs = softmax_normalize(np.array([0.0, math.log(3)]))
        assert np.allclose(probs, [0.25, 0.75])

    def test_large_scores_do_not_overflow(self):
        probs = softmax_normalize(np.array([1e4, 1e4 - 5.0]))
        assert np.isfinite(probs).all()
        assert abs(probs.sum() - 1.0) < 1e-9

    def test_ranking_preserved(self):
        rng = np.random.default_rng(11)
        scores = rng.normal(size=20)
        assert np.array_equal(np.argsort(-scores), np.argsort(-softmax_normalize(scores)))

    def test_empty_and_nonfinite_rejected(self):
        with pytest.raises(DataError):
            softmax_normalize(np.array([]))
        with pytest.raises(DataError):
            softmax_normalize(np.array([1.0, np.inf]))


def _ranked(ids, scores):
    return rank_items("q", ids, scores, [ids[0]])


class TestAgreementMeasures:
    def test_jaccard_identical_rankings(self):
        a = _ranked(["a", "b", "c", "d"], [4, 3, 2, 1])
        for k in (1, 2, 3, 4):
            assert topk_jaccard(a, a, k) == 1.0

    def test_jaccard_disjoint_topk(self):
        ids = [f"d{k}" for k in range(8)]
        a = _ranked(ids, [8, 7, 6, 5, 4, 3, 2, 1])
        b = _ranked(ids, [1, 2, 3, 4, 5, 6, 7, 8])
        assert topk_jaccard(a, b, 3) == 0.0

    def test_jaccard_partial_overlap(self):
        # top-5 sets overlap in 2 of 8 distinct items
        ids = [f"d{k}" for k in range(10)]
        a = _ranked(ids, [10, 9, 8, 7, 6, 5, 4, 3, 2, 1])
        b = _ranked(ids, [10, 9, 1, 2, 3, 4, 5, 8, 7, 6])
        assert topk_jaccard(a, b, 5) == pytest.approx(2 / 8)

    def test_jaccard_symmetry(self):
        rng = np.random.default_rng(13)
        ids = [f"d{k}" for k in range(12)]
        a = _ranked(ids, rng.random(12))
        b = _ranked(ids, rng.random(12))
        for k in (1, 3, 5, 9):
            assert topk_jaccard(a, b, k) == topk_jaccard(b, a, k)

    def test_universe_mismatch_fatal(self):
        a = _ranked(["a", "b"], [2, 1])
        b = _ranked(["a", "c"], [2, 1])
        with pytest.raises(DataError):
            topk_jaccard(a, b, 1)
        with pytest.raises(DataError):
            top1_containment(a, b, 1)

    def test_containment_identical(self):
        a = _ranked(["a", "b", "c"], [3, 2, 1])
        for k in (1, 2, 3):
            assert top1_containment(a, a, k)

    def test_containment_boundary(self):
        ids = [f"d{k}" for k in range(6)]
        a = _ranked(ids, [6, 5, 4, 3, 2, 1])
        # a's top item sits at rank 4 of b
        b = _ranked(ids, [3, 5, 4, 6, 2, 1])
        assert not top1_containment(a, b, 3)
        assert top1_containment(a, b, 4)

    def test_containment_monotone_in_k(self):
        rng = np.random.default_rng(17)
        ids = [f"d{k}" for k in range(15)]
        for _ in range(20):
            a = _ranked(ids, rng.random(15))
            b = _ranked(ids, rng.random(15))
            flags = [top1_containment(a, b, k) for k in range(1, 16)]
            assert all(x <= y for x, y in zip(flags, flags[1:]))
            assert flags[-1]  # full list always contains the top item


class TestAgreementCurves:
    def test_self_comparison_is_all_ones(self):
        rng = np.random.default_rng(19)
        jobs = [f"j{k}" for k in range(25)]
        table = {f"u{k}": rng.normal(size=25) for k in range(8)}
        scorer = lambda user: table[user]
        report = agreement_curves(scorer, scorer, sorted(table), jobs, ks=(1, 3, 5, 10, 20))
        for k in report.ks:
            assert report.jaccard_mean[k] == 1.0
            assert report.contain_a_in_b[k] == 1.0
            assert report.contain_b_in_a[k] == 1.0

    def test_containment_rates_monotone_in_k(self):
        rng = np.random.default_rng(21)
        jobs = [f"j{k}" for k in range(30)]
        ta = {f"u{k}": rng.normal(size=30) for k in range(12)}
        tb = {f"u{k}": rng.normal(size=30) for k in range(12)}
        report = agreement_curves(lambda u: ta[u], lambda u: tb[u], sorted(ta), jobs,
                                  ks=(1, 2, 3, 5, 10, 20))
        rates_ab = [report.contain_a_in_b[k] for k in report.ks]
        rates_ba = [report.contain_b_in_a[k] for k in report.ks]
        assert all(x <= y for x, y in zip(rates_ab, rates_ab[1:]))
        assert all(x <= y for x, y in zip(rates_ba, rates_ba[1:]))

    def test_row_count_matches_ks(self):
        rng = np.random.default_rng(23)
        jobs = [f"j{k}" for k in range(10)]
        t = {f"u{k}": rng.normal(size=10) for k in range(3)}
        report = agreement_curves(lambda u: t[u], lambda u: t[u], sorted(t), jobs,
                                  ks=(1, 5, 9))
        assert len(report.rows()) == 3


class TestBootstrap:
    def test_deterministic_under_seed(self):
        values = np.random.default_rng(25).random(40)
        assert bootstrap_ci(values, seed=3) == bootstrap_ci(values, seed=3)
        assert bootstrap_ci(values, seed=3) != bootstrap_ci(values, seed=4)

    def test_interval_brackets_mean(self):
        values = np.random.default_rng(27).random(60)
        lo, hi = bootstrap_ci(values)
        assert lo <= values.mean() <= hi

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            bootstrap_ci([])


class TestReportFiles:
    def test_metrics_csv_round_trip(self, tmp_path):
        batches = [_pref_batch("u0", "jp", [f"jn{i}" for i in range(9)])]
        report = evaluate_preference(
            lambda c, items: np.array([1.0 if j == "jp" else 0.0 for j in items]),
            batches, ks=(1, 3),
        )
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [report])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "task,K,metric,value,ci_low,ci_high"
        assert len(lines) == 1 + 4  # 2 metrics x 2 ks
        assert "preference,1,recall,1.000000" in lines[1]

    def test_agreement_csv(self, tmp_path):
        report = AgreementReport(
            ks=(1, 3), jaccard_mean={1: 0.5, 3: 0.7},
            contain_a_in_b={1: 0.25, 3: 0.5}, contain_b_in_a={1: 0.3, 3: 0.6},
            user_count=4,
        )
        path = tmp_path / "agreement.csv"
        write_agreement_csv(path, report)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "k,jaccard_mean,contain_a_in_b,contain_b_in_a"
        assert len(lines) == 3

    def test_table_formatting(self):
        batches = [_pref_batch("u0", "jp", [f"jn{i}" for i in range(9)])]
        report = evaluate_preference(
            lambda c, items: np.array([1.0 if j == "jp" else 0.0 for j in items]),
            batches, ks=(1, 3, 5),
        )
        table = format_metric_table([report], "oracle")
        assert "Recall@1" in table and "NDCG@5" in table
        assert "preference" in table
