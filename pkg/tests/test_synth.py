import json

import numpy as np
import pytest

from dualrank.errors import ConfigError, DataError
from dualrank.schema import AcademicLevel, Modality, Subfield, validate_candidate, validate_job
from dualrank.synth import (
    PrefLabel,
    Split,
    SynthConfig,
    allocate_negative_pools,
    apply_overrides,
    build_annotations,
    build_preference_dataset,
    build_qualification_dataset,
    generate_candidates,
    generate_jobs,
    kcore_split,
    label_pair,
    rubric_score,
    run_pipeline,
    score_matrix,
    split_jobs,
    write_dataset,
)
from test_schema import make_candidate, make_job

SMALL = dict(n_candidates=150, n_jobs=40, seed=5, negative_count=8,
             qual_train_jobs=26, qual_test_jobs=12, embedding_dim=16)


@pytest.fixture(scope="module")
def small_result():
    return run_pipeline(SynthConfig(**SMALL))


class TestGenerators:
    def test_candidate_count_and_validity(self):
        cfg = SynthConfig(**SMALL)
        cands = generate_candidates(cfg)
        assert len(cands) == cfg.n_candidates
        assert all(validate_candidate(c).ok for c in cands)

    def test_single_candidate(self):
        cfg = SynthConfig(**{**SMALL, "n_candidates": 1})
        cands = generate_candidates(cfg)
        assert len(cands) == 1
        assert validate_candidate(cands[0]).ok

    def test_candidates_deterministic(self):
        cfg = SynthConfig(**SMALL)
        assert generate_candidates(cfg) == generate_candidates(cfg)

    def test_jobs_deterministic_and_valid(self):
        cfg = SynthConfig(**SMALL)
        jobs = generate_jobs(cfg)
        assert jobs == generate_jobs(cfg)
        assert len(jobs) == cfg.n_jobs
        assert all(validate_job(j).ok for j in jobs)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_candidates=0).validate()
        with pytest.raises(ConfigError):
            SynthConfig(hard_negative_floor=15.0).validate()
        with pytest.raises(ConfigError):
            SynthConfig(n_jobs=50, qual_train_jobs=40, qual_test_jobs=20).validate()


class TestRubric:
    def test_all_components_at_floor(self):
        cand = make_candidate(
            gpa=2.0,
            lvl_u=AcademicLevel.Undergraduate,
            major_master=Subfield.Theory,
            major_second=None,
            h_u=5.0,
            m_loc=Modality.Remote,
            skills=frozenset({"nothing_relevant"}),
            interests=frozenset({"unrelated_topic"}),
        )
        job = make_job(
            tau_gpa=3.5,
            min_lvl_i=AcademicLevel.PhD,
            acceptable_majors=frozenset({Subfield.CV}),
            h_i=20.0,
            m_job=Modality.Onsite,
        )
        assert rubric_score(cand, job).total == 0.0

    def test_all_components_at_ceiling(self):
        job = make_job(
            tau_gpa=2.0,
            min_lvl_i=AcademicLevel.Undergraduate,
            acceptable_majors=frozenset({Subfield.CV}),
            h_i=10.0,
            m_job=Modality.Remote,
            required_skills=frozenset({"opencv", "python"}),
        )
        cand = make_candidate(
            gpa=4.0,
            lvl_u=AcademicLevel.PhD,
            h_u=40.0,
            m_loc=Modality.Remote,
            skills=frozenset({"opencv", "python"}),
            interests=frozenset({"visual_computing", "opencv"}),
        )
        assert rubric_score(cand, job).total == 20.0

    def test_half_skill_overlap_scores_three(self):
        job = make_job(required_skills=frozenset({"opencv", "python", "git", "sql"}))
        cand = make_candidate(skills=frozenset({"opencv", "python"}))
        assert rubric_score(cand, job).skill_overlap == 3.0

    def test_total_is_sum_of_components(self):
        cfg = SynthConfig(**SMALL)
        cands = generate_candidates(cfg)[:20]
        jobs = generate_jobs(cfg)[:10]
        for c in cands:
            for j in jobs:
                b = rubric_score(c, j)
                parts = (b.skill_overlap + b.interest_alignment + b.gpa_margin
                         + b.level_match + b.major_match + b.availability + b.modality)
                assert np.isclose(b.total, parts)
                assert 0.0 <= b.total <= 20.0
                assert 0.0 <= b.skill_overlap <= 6.0
                assert 0.0 <= b.interest_alignment <= 4.0
                assert 0.0 <= b.gpa_margin <= 3.0

    def test_score_matrix_matches_per_pair_rubric(self):
        cfg = SynthConfig(**{**SMALL, "n_candidates": 15, "n_jobs": 10,
                             "qual_train_jobs": 6, "qual_test_jobs": 3})
        cands = generate_candidates(cfg)
        jobs = generate_jobs(cfg)
        grid = score_matrix(cands, jobs)
        for ci in range(len(cands)):
            for ji in range(len(jobs)):
                assert np.isclose(grid[ci, ji], rubric_score(cands[ci], jobs[ji]).total)


class TestLabeling:
    def test_threshold_boundaries(self):
        assert label_pair(14.0) == PrefLabel.Positive
        assert label_pair(10.0) == PrefLabel.HardNegative
        assert label_pair(9.99) == PrefLabel.Discarded
        assert label_pair(20.0) == PrefLabel.Positive
        assert label_pair(0.0) == PrefLabel.Discarded

    def test_out_of_range_score_is_fatal(self):
        with pytest.raises(DataError):
            label_pair(20.5)
        with pytest.raises(DataError):
            label_pair(-0.1)

    def test_every_pair_gets_exactly_one_label(self):
        for score in np.linspace(0, 20, 201):
            label_pair(float(score))


class TestKcore:
    def test_exact_pattern_with_five_positives(self):
        positives = {"u1": ["j1", "j2", "j3", "j4", "j5"]}
        assignment, excluded = kcore_split(positives, (3, 1, 1), seed=1,
                                           candidate_index={"u1": 0})
        assert not excluded
        splits = list(assignment.values())
        assert splits.count(Split.Train) == 3
        assert splits.count(Split.Validation) == 1
        assert splits.count(Split.Test) == 1

    def test_four_positives_excluded(self):
        assignment, excluded = kcore_split({"u1": ["j1", "j2", "j3", "j4"]}, (3, 1, 1),
                                           seed=1, candidate_index={"u1": 0})
        assert excluded == ["u1"]
        assert not assignment

    def test_nine_positives_keeps_five(self):
        jobs = [f"j{k}" for k in range(9)]
        assignment, excluded = kcore_split({"u1": jobs}, (3, 1, 1), seed=1,
                                           candidate_index={"u1": 0})
        assert not excluded
        assert len(assignment) == 5  # 4 surplus positives left unassigned

    def test_deterministic_under_seed(self):
        positives = {f"u{k}": [f"j{i}" for i in range(7)] for k in range(5)}
        index = {f"u{k}": k for k in range(5)}
        a1, _ = kcore_split(positives, (3, 1, 1), seed=9, candidate_index=index)
        a2, _ = kcore_split(positives, (3, 1, 1), seed=9, candidate_index=index)
        assert a1 == a2


class TestJobSplit:
    def test_counts_and_disjointness(self):
        cfg = SynthConfig(**SMALL)
        jobs = generate_jobs(cfg)
        assignment = split_jobs(jobs, 26, 12, seed=3)
        train = [j for j, s in assignment.items() if s == Split.Train]
        test = [j for j, s in assignment.items() if s == Split.Test]
        assert len(train) == 26 and len(test) == 12
        assert not set(train) & set(test)
        assert len(assignment) == 38  # two jobs left unassigned

    def test_deterministic(self):
        cfg = SynthConfig(**SMALL)
        jobs = generate_jobs(cfg)
        assert split_jobs(jobs, 26, 12, seed=3) == split_jobs(jobs, 26, 12, seed=3)

    def test_oversized_split_rejected(self):
        cfg = SynthConfig(**SMALL)
        jobs = generate_jobs(cfg)
        with pytest.raises(ConfigError):
            split_jobs(jobs, 30, 30, seed=3)


class TestNegativePools:
    def test_pools_are_disjoint_and_chunked(self):
        negatives = {"u1": [f"j{k}" for k in range(20)]}
        pools = allocate_negative_pools(negatives, ["u1"], 8, seed=2,
                                        candidate_index={"u1": 0})
        alloc = pools["u1"]
        all_ids = [j for s in alloc.values() for j in s]
        assert len(all_ids) == len(set(all_ids)) == 20
        sizes = sorted(len(v) for v in alloc.values())
        # 8 to the first priority, 8 to the second, 4 to the third, leftovers none
        assert sizes == [4, 8, 8]

    def test_leftovers_widen_first_pool(self):
        negatives = {"u1": [f"j{k}" for k in range(30)]}
        pools = allocate_negative_pools(negatives, ["u1"], 8, seed=2,
                                        candidate_index={"u1": 0})
        sizes = sorted(len(v) for v in pools["u1"].values())
        assert sizes == [8, 8, 14]


class TestDatasets:
    def test_preference_batch_invariants(self, small_result):
        cfg = small_result.config
        assert small_result.pref_batches, "expected at least one batch at this scale"
        for batch in small_result.pref_batches:
            items = batch.item_ids()
            assert len(items) == cfg.negative_count + 1
            assert len(set(items)) == len(items)
            assert batch.positive_job_id not in batch.negative_job_ids

    def test_no_split_leakage(self, small_result):
        for batch in small_result.pref_batches:
            pos_ann = small_result.annotations[(batch.candidate_id, batch.positive_job_id)]
            assert pos_ann.split == batch.split
            assert pos_ann.pref_label == PrefLabel.Positive
            for neg in batch.negative_job_ids:
                ann = small_result.annotations[(batch.candidate_id, neg)]
                assert ann.split == batch.split
                assert ann.pref_label == PrefLabel.HardNegative

    def test_retained_candidates_have_exact_kcore(self, small_result):
        per_candidate = {}
        for (cand_id, _), ann in small_result.annotations.items():
            if ann.pref_label == PrefLabel.Positive and ann.split is not None:
                per_candidate.setdefault(cand_id, []).append(ann.split)
        assert per_candidate
        for splits in per_candidate.values():
            assert sorted(s.value for s in splits) == ["test", "train", "train", "train",
                                                       "validation"]

    def test_qualification_top_scorer_wins(self, small_result):
        for batch in small_result.qual_batches:
            anns = [small_result.annotations[(c, batch.job_id)] for c in batch.applicant_ids]
            best = max(anns, key=lambda a: (a.score, a.candidate_id))
            top_score = max(a.score for a in anns)
            winners = sorted(a.candidate_id for a in anns if a.score == top_score)
            assert batch.qualified_id == winners[0]
            assert sum(1 for a in anns if a.qual_label) == 1

    def test_qualification_tie_breaks_to_smaller_id(self):
        annotations = {
            ("u2", "j1"): _ann("u2", "j1", 17.0),
            ("u1", "j1"): _ann("u1", "j1", 17.0),
            ("u3", "j1"): _ann("u3", "j1", 14.0),
        }
        batches, _ = build_qualification_dataset(annotations, {"j1": Split.Train})
        assert batches[0].qualified_id == "u1"

    def test_single_applicant_jobs_excluded(self):
        annotations = {("u1", "j1"): _ann("u1", "j1", 15.0)}
        batches, counts = build_qualification_dataset(annotations, {"j1": Split.Train})
        assert not batches
        assert counts["jobs_excluded_too_few_applicants"] == 1

    def test_conjunction_consistency(self, small_result):
        for ann in small_result.annotations.values():
            if ann.qual_label:
                assert ann.pref_label == PrefLabel.Positive


def _ann(cand_id, job_id, score):
    from dualrank.synth import PairAnnotation

    return PairAnnotation(candidate_id=cand_id, job_id=job_id, score=score,
                          pref_label=label_pair(score))


class TestOverrides:
    def _annotations(self):
        return {
            ("u1", "j1"): _ann("u1", "j1", 15.0),
            ("u1", "j2"): _ann("u1", "j2", 11.0),
            ("u2", "j1"): _ann("u2", "j1", 16.0),
        }

    def test_empty_overrides_change_nothing(self):
        anns = self._annotations()
        before = {k: (a.pref_label, a.qual_label) for k, a in anns.items()}
        applied, pins = apply_overrides(anns, [])
        assert applied == 0 and not pins
        assert before == {k: (a.pref_label, a.qual_label) for k, a in anns.items()}

    def test_single_flip(self):
        anns = self._annotations()
        applied, _ = apply_overrides(
            anns, [{"candidate_id": "u1", "job_id": "j2", "pref_label": "Positive"}]
        )
        assert applied == 1
        assert anns[("u1", "j2")].pref_label == PrefLabel.Positive
        assert anns[("u1", "j1")].pref_label == PrefLabel.Positive  # untouched

    def test_unknown_pair_is_fatal(self):
        with pytest.raises(DataError):
            apply_overrides(self._annotations(),
                            [{"candidate_id": "uX", "job_id": "j1", "pref_label": "Positive"}])

    def test_qualified_pin_respected(self):
        anns = self._annotations()
        _, pins = apply_overrides(
            anns, [{"candidate_id": "u1", "job_id": "j1", "qual_label": True}]
        )
        batches, _ = build_qualification_dataset(anns, {"j1": Split.Train}, pins)
        assert batches[0].qualified_id == "u1"  # u2 scores higher but u1 pinned

    def test_conflicting_pins_rejected(self):
        with pytest.raises(DataError):
            apply_overrides(
                self._annotations(),
                [
                    {"candidate_id": "u1", "job_id": "j1", "qual_label": True},
                    {"candidate_id": "u2", "job_id": "j1", "qual_label": True},
                ],
            )

    def test_bad_label_value_rejected(self):
        with pytest.raises(DataError):
            apply_overrides(self._annotations(),
                            [{"candidate_id": "u1", "job_id": "j1", "pref_label": "Great"}])

    def test_override_file_flows_through_pipeline(self, tmp_path):
        plain = run_pipeline(SynthConfig(**SMALL))
        ann = next(a for a in plain.annotations.values()
                   if a.pref_label == PrefLabel.HardNegative)
        override_path = tmp_path / "overrides.jsonl"
        override_path.write_text(json.dumps({
            "candidate_id": ann.candidate_id,
            "job_id": ann.job_id,
            "pref_label": "Positive",
        }) + "\n")
        cfg = SynthConfig(**{**SMALL, "override_path": str(override_path)})
        overridden = run_pipeline(cfg)
        assert overridden.report["counts"]["overrides_applied"] == 1
        key = (ann.candidate_id, ann.job_id)
        assert overridden.annotations[key].pref_label == PrefLabel.Positive


class TestPipelineDeterminism:
    def test_two_runs_are_byte_identical(self, tmp_path):
        cfg = SynthConfig(**{**SMALL, "n_candidates": 120, "n_jobs": 30,
                             "qual_train_jobs": 20, "qual_test_jobs": 9})
        for d in ("a", "b"):
            write_dataset(run_pipeline(cfg), tmp_path / d)
        for name in ("candidates.jsonl", "jobs.jsonl", "annotations.jsonl",
                     "pref_batches.jsonl", "qual_batches.jsonl", "run_report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_report_counts_are_consistent(self, small_result):
        counts = small_result.report["counts"]
        assert counts["pairs_scored"] == SMALL["n_candidates"] * SMALL["n_jobs"]
        assert sum(counts["labels"].values()) == counts["pairs_scored"]
        batch_counts = counts["preference"]["batches"]
        assert sum(batch_counts.values()) == len(small_result.pref_batches)
        qual_counts = counts["qualification"]["jobs_with_batches"]
        assert sum(qual_counts.values()) == len(small_result.qual_batches)

    def test_annotations_file_excludes_discarded(self, tmp_path, small_result):
        write_dataset(small_result, tmp_path)
        with open(tmp_path / "annotations.jsonl") as fh:
            rows = [json.loads(line) for line in fh]
        assert all(r["pref_label"] in ("Positive", "HardNegative") for r in rows)
        n_kept = (small_result.report["counts"]["labels"]["Positive"]
                  + small_result.report["counts"]["labels"]["HardNegative"])
        assert len(rows) == n_kept
