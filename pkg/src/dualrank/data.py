"""Dataset loading and the feature/scorer glue between modules."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import TASK_PREF, TASK_QUAL, ModelParams, TaskBatch, forward
from .policy import final_score
from .schema import (
    CandidateProfile,
    FeatureConfig,
    FeatureTables,
    JobPosting,
    candidate_from_dict,
    job_from_dict,
    read_jsonl,
)
from .synth import PreferenceBatch, QualificationBatch, Split


@dataclass
class Dataset:
    candidates: list[CandidateProfile]
    jobs: list[JobPosting]
    pref_batches: list[PreferenceBatch]
    qual_batches: list[QualificationBatch]
    report: dict

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig.from_dict(self.report["feature_config"])

    @property
    def feature_hash(self) -> str:
        return self.report["feature_hash"]

    def pref_split(self, split: Split) -> list[PreferenceBatch]:
        return [b for b in self.pref_batches if b.split == split]

    def qual_split(self, split: Split) -> list[QualificationBatch]:
        return [b for b in self.qual_batches if b.split == split]


def load_dataset(directory, strict: bool = True) -> Dataset:
    directory = Path(directory)
    report_path = directory / "run_report.json"
    if not report_path.exists():
        raise DataError(f"missing run_report.json in {directory}")
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)
    candidates = [
        candidate_from_dict(d, strict) for d in read_jsonl(directory / "candidates.jsonl")
    ]
    jobs = [job_from_dict(d, strict) for d in read_jsonl(directory / "jobs.jsonl")]
    pref_batches = [
        PreferenceBatch.from_dict(d) for d in read_jsonl(directory / "pref_batches.jsonl")
    ]
    qual_batches = [
        QualificationBatch.from_dict(d) for d in read_jsonl(directory / "qual_batches.jsonl")
    ]
    return Dataset(
        candidates=candidates,
        jobs=jobs,
        pref_batches=pref_batches,
        qual_batches=qual_batches,
        report=report,
    )


def build_tables(dataset: Dataset) -> FeatureTables:
    return FeatureTables(dataset.candidates, dataset.jobs, dataset.feature_config)


# ---------------------------------------------------------------------------
# training batches
# ---------------------------------------------------------------------------

def pref_task_batches(tables: FeatureTables, batches: list[PreferenceBatch]) -> list[TaskBatch]:
    out = []
    for b in batches:
        items = b.item_ids()
        ci = tables.cand_index[b.candidate_id]
        ji = [tables.job_index[j] for j in items]
        x = tables.pair_matrix(ci, ji)
        y = np.zeros(len(items))
        y[0] = 1.0
        out.append(TaskBatch(x=x, y=y))
    return out


def qual_task_batches(tables: FeatureTables, batches: list[QualificationBatch]
                      ) -> list[TaskBatch]:
    out = []
    for b in batches:
        ji = tables.job_index[b.job_id]
        ci = [tables.cand_index[c] for c in b.applicant_ids]
        x = tables.pair_rows(ci, np.full(len(ci), ji))
        y = np.array([1.0 if c == b.qualified_id else 0.0 for c in b.applicant_ids])
        out.append(TaskBatch(x=x, y=y))
    return out


# ---------------------------------------------------------------------------
# scorers for the evaluation harness
# ---------------------------------------------------------------------------

class ModelScorer:
    """Adapts a trained model to the evaluator's (query, items) callables."""

    def __init__(self, tables: FeatureTables, params: ModelParams,
                 lam: float = 0.0, epsilon: float = 0.0):
        self.tables = tables
        self.params = params
        self.lam = lam
        self.epsilon = epsilon

    def _pref_features(self, cand_id: str, job_ids: list[str]) -> np.ndarray:
        ci = self.tables.cand_index[cand_id]
        ji = [self.tables.job_index[j] for j in job_ids]
        return self.tables.pair_matrix(ci, ji)

    def _qual_features(self, job_id: str, cand_ids: list[str]) -> np.ndarray:
        ji = self.tables.job_index[job_id]
        ci = [self.tables.cand_index[c] for c in cand_ids]
        return self.tables.pair_rows(ci, np.full(len(ci), ji))

    # candidate-query scorers (preference task)
    def pref_head(self, cand_id: str, job_ids: list[str]) -> np.ndarray:
        return forward(self.params, self._pref_features(cand_id, job_ids), TASK_PREF)

    def qual_head_for_candidate(self, cand_id: str, job_ids: list[str]) -> np.ndarray:
        return forward(self.params, self._pref_features(cand_id, job_ids), TASK_QUAL)

    def final_for_candidate(self, cand_id: str, job_ids: list[str]) -> np.ndarray:
        x = self._pref_features(cand_id, job_ids)
        s_p = forward(self.params, x, TASK_PREF)
        s_q = forward(self.params, x, TASK_QUAL)
        return final_score(s_p, s_q, self.lam, self.epsilon)

    # job-query scorers (qualification task)
    def qual_head(self, job_id: str, cand_ids: list[str]) -> np.ndarray:
        return forward(self.params, self._qual_features(job_id, cand_ids), TASK_QUAL)

    def pref_head_for_job(self, job_id: str, cand_ids: list[str]) -> np.ndarray:
        return forward(self.params, self._qual_features(job_id, cand_ids), TASK_PREF)

    def final_for_job(self, job_id: str, cand_ids: list[str]) -> np.ndarray:
        x = self._qual_features(job_id, cand_ids)
        s_p = forward(self.params, x, TASK_PREF)
        s_q = forward(self.params, x, TASK_QUAL)
        return final_score(s_p, s_q, self.lam, self.epsilon)


def oracle_pref_scorer(batches: list[PreferenceBatch]):
    # a candidate can own several batches; the item set pins down which one
    positive = {
        (b.candidate_id, tuple(sorted(b.item_ids()))): b.positive_job_id for b in batches
    }

    def score(cand_id: str, job_ids: list[str]) -> np.ndarray:
        pos = positive[(cand_id, tuple(sorted(job_ids)))]
        return np.array([1.0 if j == pos else 0.0 for j in job_ids])

    return score


def oracle_qual_scorer(batches: list[QualificationBatch]):
    qualified = {b.job_id: b.qualified_id for b in batches}

    def score(job_id: str, cand_ids: list[str]) -> np.ndarray:
        return np.array([1.0 if c == qualified[job_id] else 0.0 for c in cand_ids])

    return score
