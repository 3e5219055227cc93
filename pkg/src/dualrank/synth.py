"""Synthetic population generator, pair rubric, labeling, and split datasets.

Every random step consumes a sub-seed derived from (config.seed, step tag,
entity index), so regenerating any slice of the data in any order, or in
parallel, produces identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .schema import (
    AcademicLevel,
    CandidateProfile,
    FeatureConfig,
    JobPosting,
    Modality,
    Subfield,
    candidate_to_dict,
    interest_overlap_ratio,
    job_to_dict,
    modality_compatible,
    read_jsonl,
    skill_overlap_ratio,
    validate_candidate,
    validate_job,
    write_jsonl,
)

# sub-seed tags, one per pipeline stage
_TAG_CANDIDATE = 1
_TAG_JOB = 2
_TAG_KCORE = 3
_TAG_NEG_POOL = 4
_TAG_NEG_SAMPLE = 5
_TAG_JOB_SPLIT = 6
_TAG_SUBSAMPLE = 7


class PrefLabel(str, Enum):
    Positive = "Positive"
    HardNegative = "HardNegative"
    Discarded = "Discarded"


class Split(str, Enum):
    Train = "train"
    Validation = "validation"
    Test = "test"


_SPLITS = (Split.Train, Split.Validation, Split.Test)


# ---------------------------------------------------------------------------
# vocabularies
# ---------------------------------------------------------------------------

SUBFIELD_SKILLS: dict[Subfield, tuple[str, ...]] = {
    Subfield.Robotics: (
        "ros", "slam", "control_systems", "kinematics", "motion_planning",
        "embedded_c", "sensor_fusion", "lidar", "manipulation", "real_time_systems",
    ),
    Subfield.CV: (
        "image_segmentation", "object_detection", "opencv", "3d_reconstruction",
        "image_classification", "video_tracking", "feature_matching",
        "pose_estimation", "image_generation", "camera_calibration",
    ),
    Subfield.NLP: (
        "text_classification", "named_entity_recognition", "machine_translation",
        "language_modeling", "information_extraction", "question_answering",
        "summarization", "speech_recognition", "tokenization_pipelines",
        "retrieval_systems",
    ),
    Subfield.Applications: (
        "web_development", "mobile_development", "database_design", "api_design",
        "cloud_services", "distributed_systems", "devops_pipelines", "frontend",
        "backend", "microservices",
    ),
    Subfield.RL: (
        "q_learning", "policy_gradients", "markov_decision_processes",
        "multi_agent_systems", "reward_shaping", "simulation_environments",
        "bandit_algorithms", "model_based_control", "exploration_strategies",
        "offline_rl",
    ),
    Subfield.Theory: (
        "algorithm_design", "complexity_analysis", "graph_algorithms",
        "optimization_theory", "cryptography", "randomized_algorithms",
        "approximation_algorithms", "combinatorics", "numerical_methods",
        "formal_verification",
    ),
}

GENERAL_SKILLS: tuple[str, ...] = (
    "python", "cpp", "git", "linux", "sql", "data_analysis", "testing",
    "technical_writing",
)

# industry <-> home subfield, one per discipline
INDUSTRY_SUBFIELD: dict[str, Subfield] = {
    "autonomous_systems": Subfield.Robotics,
    "visual_computing": Subfield.CV,
    "language_technology": Subfield.NLP,
    "software_services": Subfield.Applications,
    "decision_intelligence": Subfield.RL,
    "research_computing": Subfield.Theory,
}

INDUSTRIES: tuple[str, ...] = tuple(INDUSTRY_SUBFIELD)

_PROJECT_TEMPLATES = (
    "Built a {skill} prototype and benchmarked it on public datasets",
    "Led a course project applying {skill} to a {industry} case study",
    "Implemented {skill} from scratch and profiled the hot paths",
    "Shipped a {skill} demo used by two student teams",
    "Reproduced a published {skill} result and documented the gaps",
    "Extended an open source {skill} library with new evaluation tooling",
)

_EXTRACURRICULAR_TEMPLATES = (
    "Organizer of the campus {topic} reading group",
    "Mentor for first-year students learning {topic}",
    "Volunteer instructor for a community {topic} workshop",
    "Competition team member focused on {topic}",
)

_JD_TEMPLATE = (
    "We are hiring in {industry}. The role centers on {skills} with close "
    "collaboration across teams. Familiarity with {extra} is a plus."
)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    n_candidates: int = 5000
    n_jobs: int = 100
    seed: int = 7
    negative_count: int = 49
    positive_threshold: float = 14.0
    hard_negative_floor: float = 10.0
    rubric_max: float = 20.0
    kcore_pattern: tuple[int, int, int] = (3, 1, 1)
    qual_train_jobs: int = 68
    qual_test_jobs: int = 30
    embedding_dim: int = 64
    embedding_seed: int = 1337
    subsample_train_batches: int | None = None
    override_path: str | None = None
    # attribute marginals (documented defaults, tunable)
    level_probs: tuple[float, float, float] = (0.5, 0.35, 0.15)
    gpa_mean: float = 3.25
    gpa_sd: float = 0.45
    gpa_min: float = 2.0
    gpa_max: float = 4.0
    hours_choices: tuple[float, ...] = (10.0, 15.0, 20.0, 30.0, 40.0)
    hours_probs: tuple[float, ...] = (0.3, 0.25, 0.2, 0.15, 0.1)
    second_major_prob: float = 0.45

    def validate(self) -> None:
        if self.n_candidates < 1 or self.n_jobs < 1:
            raise ConfigError("n_candidates and n_jobs must be >= 1")
        if not (0 <= self.hard_negative_floor < self.positive_threshold <= self.rubric_max):
            raise ConfigError(
                "thresholds must satisfy 0 <= floor < positive_threshold <= rubric_max, got "
                f"floor={self.hard_negative_floor} positive={self.positive_threshold} "
                f"max={self.rubric_max}"
            )
        if len(self.kcore_pattern) != 3 or any(k < 1 for k in self.kcore_pattern):
            raise ConfigError(f"kcore_pattern must be three positive counts: {self.kcore_pattern}")
        if self.negative_count < 1:
            raise ConfigError("negative_count must be >= 1")
        if self.qual_train_jobs + self.qual_test_jobs > self.n_jobs:
            raise ConfigError(
                f"job split {self.qual_train_jobs}+{self.qual_test_jobs} exceeds n_jobs={self.n_jobs}"
            )
        if abs(sum(self.level_probs) - 1.0) > 1e-9 or abs(sum(self.hours_probs) - 1.0) > 1e-9:
            raise ConfigError("level_probs and hours_probs must each sum to 1")

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            industries=INDUSTRIES,
            embedding_dim=self.embedding_dim,
            embedding_seed=self.embedding_seed,
        )

    def to_dict(self) -> dict:
        d = {
            "n_candidates": self.n_candidates,
            "n_jobs": self.n_jobs,
            "seed": self.seed,
            "negative_count": self.negative_count,
            "positive_threshold": self.positive_threshold,
            "hard_negative_floor": self.hard_negative_floor,
            "rubric_max": self.rubric_max,
            "kcore_pattern": list(self.kcore_pattern),
            "qual_train_jobs": self.qual_train_jobs,
            "qual_test_jobs": self.qual_test_jobs,
            "embedding_dim": self.embedding_dim,
            "embedding_seed": self.embedding_seed,
            "subsample_train_batches": self.subsample_train_batches,
            "override_path": self.override_path,
            "level_probs": list(self.level_probs),
            "gpa_mean": self.gpa_mean,
            "gpa_sd": self.gpa_sd,
            "gpa_min": self.gpa_min,
            "gpa_max": self.gpa_max,
            "hours_choices": list(self.hours_choices),
            "hours_probs": list(self.hours_probs),
            "second_major_prob": self.second_major_prob,
        }
        return d


# ---------------------------------------------------------------------------
# population generators
# ---------------------------------------------------------------------------

def _truncated_normal(rng: np.random.Generator, mean, sd, lo, hi) -> float:
    # rejection sampling keeps the distribution an honest truncation
    for _ in range(1000):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return float(x)
    return float(min(max(mean, lo), hi))


def _sample_candidate(idx: int, config: SynthConfig) -> CandidateProfile:
    rng = np.random.default_rng([config.seed, _TAG_CANDIDATE, idx])
    subfields = list(Subfield)

    lvl = AcademicLevel(int(rng.choice(3, p=list(config.level_probs))))
    gpa = round(_truncated_normal(rng, config.gpa_mean, config.gpa_sd,
                                  config.gpa_min, config.gpa_max), 2)
    if lvl == AcademicLevel.Undergraduate:
        gpa_ug = gpa
    else:
        gpa_ug = round(_truncated_normal(rng, config.gpa_mean - 0.1, config.gpa_sd,
                                         config.gpa_min, config.gpa_max), 2)

    major = subfields[int(rng.integers(len(subfields)))]
    major_second = None
    if rng.random() < config.second_major_prob:
        others = [s for s in subfields if s != major]
        major_second = others[int(rng.integers(len(others)))]

    n_pub = {0: 0.3, 1: 1.5, 2: 4.0}[int(lvl)]
    n_pub = int(rng.poisson(n_pub))
    exp_choices = {0: [0.0, 1.0, 2.0], 1: [0.0, 1.0, 2.0, 3.0], 2: [1.0, 2.0, 3.0, 5.0]}[int(lvl)]
    experience = float(rng.choice(exp_choices))

    h_u = float(rng.choice(list(config.hours_choices), p=list(config.hours_probs)))
    c_summer = bool(rng.random() < 0.7)
    m_loc = Modality(str(rng.choice(["Onsite", "Remote", "Hybrid"], p=[0.35, 0.35, 0.3])))

    # skill sets run deep so overlap saturates among strong candidates;
    # screening thresholds (GPA) then decide the top of each applicant pool
    own_vocab = SUBFIELD_SKILLS[major]
    n_own = int(rng.integers(8, 10))
    skills = {str(s) for s in rng.choice(own_vocab, size=n_own, replace=False)}
    n_gen = int(rng.integers(6, 8))
    skills |= {str(s) for s in rng.choice(GENERAL_SKILLS, size=n_gen, replace=False)}
    if major_second is not None:
        extra = rng.choice(SUBFIELD_SKILLS[major_second], size=int(rng.integers(3, 5)),
                           replace=False)
        skills |= {str(s) for s in extra}

    own_industry = next(ind for ind, sf in INDUSTRY_SUBFIELD.items() if sf == major)
    interests: set[str] = {own_industry}
    if rng.random() < 0.5:
        other_inds = [i for i in INDUSTRIES if i != own_industry]
        interests.add(str(rng.choice(other_inds)))
    interests |= {str(s) for s in rng.choice(own_vocab, size=2, replace=False)}
    interests |= {str(s) for s in rng.choice(GENERAL_SKILLS, size=2, replace=False)}

    proj_skills = rng.choice(sorted(skills), size=3, replace=False)
    projects = tuple(
        _PROJECT_TEMPLATES[int(rng.integers(len(_PROJECT_TEMPLATES)))].format(
            skill=s, industry=own_industry
        )
        for s in proj_skills
    )
    topics = rng.choice(sorted(interests), size=2, replace=False)
    extracurriculars = tuple(
        _EXTRACURRICULAR_TEMPLATES[int(rng.integers(len(_EXTRACURRICULAR_TEMPLATES)))].format(
            topic=t
        )
        for t in topics
    )

    return CandidateProfile(
        id_u=f"u{idx:05d}",
        row_u=idx,
        lvl_u=lvl,
        gpa=gpa,
        gpa_ug=gpa_ug,
        major_master=major,
        major_second=major_second,
        n_pub=n_pub,
        experience_years=experience,
        h_u=h_u,
        c_summer=c_summer,
        m_loc=m_loc,
        skills=frozenset(skills),
        interests=frozenset(interests),
        projects=projects,
        extracurriculars=extracurriculars,
    )


def generate_candidates(config: SynthConfig) -> list[CandidateProfile]:
    config.validate()
    out = [_sample_candidate(i, config) for i in range(config.n_candidates)]
    for c in out:
        result = validate_candidate(c)
        if not result.ok:
            raise DataError(f"generator produced invalid candidate {c.id_u}: {result.problems}")
    return out


def _sample_job(idx: int, config: SynthConfig) -> JobPosting:
    rng = np.random.default_rng([config.seed, _TAG_JOB, idx])
    industry = INDUSTRIES[int(rng.integers(len(INDUSTRIES)))]
    subfield = INDUSTRY_SUBFIELD[industry]

    min_lvl = AcademicLevel(int(rng.choice(3, p=[0.85, 0.12, 0.03])))
    tau_gpa = round(float(rng.uniform(2.5, 3.5)), 1)
    tau_exp = float(rng.choice([0.0, 0.0, 1.0, 1.0, 2.0]))
    h_i = float(rng.choice([10.0, 15.0, 20.0], p=[0.5, 0.3, 0.2]))
    m_job = Modality(str(rng.choice(["Onsite", "Remote", "Hybrid"], p=[0.4, 0.3, 0.3])))

    acc = {subfield}
    others = [s for s in Subfield if s != subfield]
    n_extra = int(rng.integers(3, 6))
    acc |= {others[k] for k in rng.choice(len(others), size=n_extra, replace=False)}

    req = {str(s) for s in rng.choice(SUBFIELD_SKILLS[subfield], size=3, replace=False)}
    req |= {str(s) for s in rng.choice(GENERAL_SKILLS, size=3, replace=False)}

    req_sorted = sorted(req)
    jd_text = _JD_TEMPLATE.format(
        industry=industry.replace("_", " "),
        skills=", ".join(s.replace("_", " ") for s in req_sorted[:4]),
        extra=", ".join(s.replace("_", " ") for s in req_sorted[4:]),
    )

    return JobPosting(
        id_i=f"j{idx:04d}",
        ind_i=industry,
        min_lvl_i=min_lvl,
        tau_gpa=tau_gpa,
        tau_exp=tau_exp,
        acceptable_majors=frozenset(acc),
        h_i=h_i,
        m_job=m_job,
        required_skills=frozenset(req),
        jd_text=jd_text,
    )


def generate_jobs(config: SynthConfig) -> list[JobPosting]:
    config.validate()
    out = [_sample_job(i, config) for i in range(config.n_jobs)]
    for j in out:
        result = validate_job(j)
        if not result.ok:
            raise DataError(f"generator produced invalid job {j.id_i}: {result.problems}")
    return out


# ---------------------------------------------------------------------------
# rubric
# ---------------------------------------------------------------------------

@dataclass
class RubricBreakdown:
    skill_overlap: float      # [0, 6]
    interest_alignment: float  # [0, 4]
    gpa_margin: float         # [0, 3]
    level_match: float        # {0, 2}
    major_match: float        # {0, 2}
    availability: float       # {0, 2}
    modality: float           # {0, 1}

    @property
    def total(self) -> float:
        return (
            self.skill_overlap + self.interest_alignment + self.gpa_margin
            + self.level_match + self.major_match + self.availability + self.modality
        )


def rubric_score(candidate: CandidateProfile, job: JobPosting) -> RubricBreakdown:
    """Deterministic seven-component compatibility rubric, total in [0, 20]."""
    gpa_frac = min(max(candidate.gpa - job.tau_gpa, 0.0), 1.0)
    return RubricBreakdown(
        skill_overlap=6.0 * skill_overlap_ratio(candidate.skills, job.required_skills),
        interest_alignment=4.0 * interest_overlap_ratio(
            candidate.interests, job.ind_i, job.required_skills
        ),
        gpa_margin=3.0 * gpa_frac,
        level_match=2.0 if candidate.lvl_u >= job.min_lvl_i else 0.0,
        major_match=2.0 if candidate.majors() & job.acceptable_majors else 0.0,
        availability=2.0 if candidate.h_u >= job.h_i else 0.0,
        modality=1.0 if modality_compatible(candidate.m_loc, job.m_job) else 0.0,
    )


def score_matrix(candidates: list[CandidateProfile], jobs: list[JobPosting]) -> np.ndarray:
    """Rubric totals for the full candidate x job grid, vectorized."""
    n, m = len(candidates), len(jobs)
    lvl = np.array([float(c.lvl_u) for c in candidates])
    gpa = np.array([c.gpa for c in candidates])
    hu = np.array([c.h_u for c in candidates])
    minlvl = np.array([float(j.min_lvl_i) for j in jobs])
    tau = np.array([j.tau_gpa for j in jobs])
    hi = np.array([j.h_i for j in jobs])

    skill = np.zeros((n, m))
    interest = np.zeros((n, m))
    major = np.zeros((n, m))
    modal = np.zeros((n, m))
    for ji, job in enumerate(jobs):
        req = job.required_skills
        acc = job.acceptable_majors
        for ci, cand in enumerate(candidates):
            skill[ci, ji] = skill_overlap_ratio(cand.skills, req)
            interest[ci, ji] = interest_overlap_ratio(cand.interests, job.ind_i, req)
            if cand.majors() & acc:
                major[ci, ji] = 1.0
            if modality_compatible(cand.m_loc, job.m_job):
                modal[ci, ji] = 1.0

    total = (
        6.0 * skill
        + 4.0 * interest
        + 3.0 * np.clip(gpa[:, None] - tau[None, :], 0.0, 1.0)
        + 2.0 * (lvl[:, None] >= minlvl[None, :])
        + 2.0 * major
        + 2.0 * (hu[:, None] >= hi[None, :])
        + 1.0 * modal
    )
    return total


def label_pair(score: float, config: SynthConfig | None = None) -> PrefLabel:
    cfg = config or SynthConfig()
    if not 0.0 <= score <= cfg.rubric_max:
        raise DataError(f"rubric score {score} outside [0, {cfg.rubric_max}]; pipeline bug")
    if score >= cfg.positive_threshold:
        return PrefLabel.Positive
    if score >= cfg.hard_negative_floor:
        return PrefLabel.HardNegative
    return PrefLabel.Discarded


# ---------------------------------------------------------------------------
# annotations and batches
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class PairAnnotation:
    candidate_id: str
    job_id: str
    score: float
    pref_label: PrefLabel
    qual_label: bool | None = None
    split: Split | None = None

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "job_id": self.job_id,
            "score": round(self.score, 6),
            "pref_label": self.pref_label.value,
            "qual_label": self.qual_label,
            "split": None if self.split is None else self.split.value,
        }


@dataclass(frozen=True)
class PreferenceBatch:
    candidate_id: str
    split: Split
    positive_job_id: str
    negative_job_ids: tuple[str, ...]

    def item_ids(self) -> tuple[str, ...]:
        return (self.positive_job_id,) + self.negative_job_ids

    def check(self, expected_negatives: int) -> None:
        if len(self.negative_job_ids) != expected_negatives:
            raise DataError(
                f"batch for {self.candidate_id} has {len(self.negative_job_ids)} negatives, "
                f"expected {expected_negatives}"
            )
        ids = self.item_ids()
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate job ids in batch for {self.candidate_id}")

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "split": self.split.value,
            "positive_job_id": self.positive_job_id,
            "negative_job_ids": list(self.negative_job_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreferenceBatch":
        return cls(
            candidate_id=d["candidate_id"],
            split=Split(d["split"]),
            positive_job_id=d["positive_job_id"],
            negative_job_ids=tuple(d["negative_job_ids"]),
        )


@dataclass(frozen=True)
class QualificationBatch:
    job_id: str
    split: Split
    applicant_ids: tuple[str, ...]
    qualified_id: str

    def check(self) -> None:
        if len(self.applicant_ids) < 2:
            raise DataError(f"qualification batch for {self.job_id} needs >= 2 applicants")
        if len(set(self.applicant_ids)) != len(self.applicant_ids):
            raise DataError(f"duplicate applicants in batch for {self.job_id}")
        if self.qualified_id not in self.applicant_ids:
            raise DataError(f"qualified id {self.qualified_id} not among applicants")

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "split": self.split.value,
            "applicant_ids": list(self.applicant_ids),
            "qualified_id": self.qualified_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualificationBatch":
        return cls(
            job_id=d["job_id"],
            split=Split(d["split"]),
            applicant_ids=tuple(d["applicant_ids"]),
            qualified_id=d["qualified_id"],
        )


def build_annotations(
    candidates: list[CandidateProfile],
    jobs: list[JobPosting],
    config: SynthConfig,
    scores: np.ndarray | None = None,
) -> dict[tuple[str, str], PairAnnotation]:
    if scores is None:
        scores = score_matrix(candidates, jobs)
    annotations: dict[tuple[str, str], PairAnnotation] = {}
    for ci, cand in enumerate(candidates):
        for ji, job in enumerate(jobs):
            s = float(scores[ci, ji])
            annotations[(cand.id_u, job.id_i)] = PairAnnotation(
                candidate_id=cand.id_u,
                job_id=job.id_i,
                score=s,
                pref_label=label_pair(s, config),
            )
    return annotations


# ---------------------------------------------------------------------------
# expert overrides
# ---------------------------------------------------------------------------

def load_overrides(path) -> list[dict]:
    rows = read_jsonl(path)
    for row in rows:
        if "candidate_id" not in row or "job_id" not in row:
            raise DataError(f"override row missing candidate_id/job_id: {row}")
        extra = set(row) - {"candidate_id", "job_id", "pref_label", "qual_label"}
        if extra:
            raise DataError(f"override row has unknown fields {sorted(extra)}")
    return rows


def apply_overrides(
    annotations: dict[tuple[str, str], PairAnnotation],
    overrides: list[dict],
) -> tuple[int, dict[str, str]]:
    """Apply reviewed-label replacements in place.

    Returns (count applied, {job_id: pinned qualified candidate_id}). A
    pinned qualification wins over the top-score rule downstream.
    """
    qual_pins: dict[str, str] = {}
    applied = 0
    for row in overrides:
        key = (row["candidate_id"], row["job_id"])
        if key not in annotations:
            raise DataError(f"override references nonexistent pair {key}")
        ann = annotations[key]
        touched = False
        if "pref_label" in row and row["pref_label"] is not None:
            try:
                ann.pref_label = PrefLabel(row["pref_label"])
            except ValueError as exc:
                raise DataError(f"bad pref_label override for {key}: {row['pref_label']}") from exc
            touched = True
        if "qual_label" in row and row["qual_label"] is not None:
            if bool(row["qual_label"]):
                if row["job_id"] in qual_pins and qual_pins[row["job_id"]] != row["candidate_id"]:
                    raise DataError(
                        f"conflicting qualified overrides for job {row['job_id']}"
                    )
                qual_pins[row["job_id"]] = row["candidate_id"]
            else:
                ann.qual_label = False
            touched = True
        if touched:
            applied += 1
    return applied, qual_pins


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def kcore_split(
    positives_by_candidate: dict[str, list[str]],
    pattern: tuple[int, int, int],
    seed: int,
    candidate_index: dict[str, int],
) -> tuple[dict[tuple[str, str], Split], list[str]]:
    """Assign exactly pattern = (train, val, test) positives per candidate.

    Candidates short of sum(pattern) positives are excluded; surplus
    positives are left unassigned. Selection is uniform under a per
    candidate sub-seed, so the assignment is independent of dict order.
    """
    a, b, c = pattern
    need = a + b + c
    assignment: dict[tuple[str, str], Split] = {}
    excluded: list[str] = []
    for cand_id in sorted(positives_by_candidate):
        jobs_list = sorted(positives_by_candidate[cand_id])
        if len(jobs_list) < need:
            excluded.append(cand_id)
            continue
        rng = np.random.default_rng([seed, _TAG_KCORE, candidate_index[cand_id]])
        perm = rng.permutation(len(jobs_list))
        chosen = [jobs_list[k] for k in perm[:need]]
        for job_id in chosen[:a]:
            assignment[(cand_id, job_id)] = Split.Train
        for job_id in chosen[a : a + b]:
            assignment[(cand_id, job_id)] = Split.Validation
        for job_id in chosen[a + b : need]:
            assignment[(cand_id, job_id)] = Split.Test
    return assignment, excluded


def allocate_negative_pools(
    negatives_by_candidate: dict[str, list[str]],
    retained: Iterable[str],
    negative_count: int,
    seed: int,
    candidate_index: dict[str, int],
) -> dict[str, dict[Split, list[str]]]:
    """Partition each retained candidate's hard-negative pool across splits.

    A pair may serve only one split (leakage guard), and a split needs
    negative_count distinct pairs before any of its batches can be formed,
    so the pool is granted to splits in chunks of negative_count, in a per
    candidate seeded priority order. Leftovers widen the first-priority
    pool. With few jobs this means some splits starve for some candidates
    and their batches are dropped; the seeded priority keeps every split
    populated across the corpus.
    """
    pools: dict[str, dict[Split, list[str]]] = {}
    for cand_id in sorted(set(retained)):
        pool = sorted(negatives_by_candidate.get(cand_id, []))
        rng = np.random.default_rng([seed, _TAG_NEG_POOL, candidate_index[cand_id]])
        shuffled = [pool[k] for k in rng.permutation(len(pool))]
        priority = [_SPLITS[k] for k in rng.permutation(3)]
        alloc: dict[Split, list[str]] = {s: [] for s in _SPLITS}
        offset = 0
        for s in priority:
            take = shuffled[offset : offset + negative_count]
            alloc[s].extend(take)
            offset += len(take)
        alloc[priority[0]].extend(shuffled[offset:])
        pools[cand_id] = alloc
    return pools


def split_jobs(
    jobs: list[JobPosting], train_count: int, test_count: int, seed: int
) -> dict[str, Split]:
    if train_count + test_count > len(jobs):
        raise ConfigError(
            f"job split {train_count}+{test_count} exceeds {len(jobs)} jobs"
        )
    rng = np.random.default_rng([seed, _TAG_JOB_SPLIT])
    perm = rng.permutation(len(jobs))
    assignment: dict[str, Split] = {}
    for k in perm[:train_count]:
        assignment[jobs[k].id_i] = Split.Train
    for k in perm[train_count : train_count + test_count]:
        assignment[jobs[k].id_i] = Split.Test
    return assignment


# ---------------------------------------------------------------------------
# dataset builders
# ---------------------------------------------------------------------------

def build_preference_dataset(
    annotations: dict[tuple[str, str], PairAnnotation],
    config: SynthConfig,
    candidate_index: dict[str, int],
    job_index: dict[str, int],
) -> tuple[list[PreferenceBatch], dict]:
    """Form one ranked batch per retained positive, with split-local negatives.

    Mutates annotation split fields for both positives and allocated
    negatives. Returns the batches plus bookkeeping counts.
    """
    positives: dict[str, list[str]] = {}
    negatives: dict[str, list[str]] = {}
    for (cand_id, job_id), ann in annotations.items():
        if ann.pref_label == PrefLabel.Positive:
            positives.setdefault(cand_id, []).append(job_id)
        elif ann.pref_label == PrefLabel.HardNegative:
            negatives.setdefault(cand_id, []).append(job_id)

    assignment, excluded = kcore_split(
        positives, config.kcore_pattern, config.seed, candidate_index
    )
    retained = sorted({cand_id for cand_id, _ in assignment})
    for key, s in assignment.items():
        annotations[key].split = s

    pools = allocate_negative_pools(
        negatives, retained, config.negative_count, config.seed, candidate_index
    )
    for cand_id, alloc in pools.items():
        for s, job_ids in alloc.items():
            for job_id in job_ids:
                annotations[(cand_id, job_id)].split = s

    batches: list[PreferenceBatch] = []
    dropped = {s: 0 for s in _SPLITS}
    for (cand_id, pos_job), s in sorted(assignment.items()):
        pool = pools[cand_id][s]
        if len(pool) < config.negative_count:
            dropped[s] += 1
            continue
        rng = np.random.default_rng(
            [config.seed, _TAG_NEG_SAMPLE, candidate_index[cand_id], job_index[pos_job]]
        )
        chosen = rng.choice(len(pool), size=config.negative_count, replace=False)
        batch = PreferenceBatch(
            candidate_id=cand_id,
            split=s,
            positive_job_id=pos_job,
            negative_job_ids=tuple(pool[k] for k in chosen),
        )
        batch.check(config.negative_count)
        batches.append(batch)

    subsampled_out = 0
    if config.subsample_train_batches is not None:
        train = [b for b in batches if b.split == Split.Train]
        rest = [b for b in batches if b.split != Split.Train]
        keep = config.subsample_train_batches
        if keep < len(train):
            rng = np.random.default_rng([config.seed, _TAG_SUBSAMPLE])
            idx = sorted(rng.choice(len(train), size=keep, replace=False))
            subsampled_out = len(train) - keep
            train = [train[k] for k in idx]
        batches = train + rest

    retained_set = set(retained)
    unassigned_positives = sum(
        1
        for (cand_id, _), ann in annotations.items()
        if ann.pref_label == PrefLabel.Positive and ann.split is None and cand_id in retained_set
    )
    counts = {
        "retained_candidates": len(retained),
        "excluded_candidates": len(excluded),
        "batches": {s.value: sum(1 for b in batches if b.split == s) for s in _SPLITS},
        "dropped_batches": {s.value: dropped[s] for s in _SPLITS},
        "train_batches_subsampled_out": subsampled_out,
        "unassigned_surplus_positives": unassigned_positives,
    }
    return batches, counts


def build_qualification_dataset(
    annotations: dict[tuple[str, str], PairAnnotation],
    job_split: dict[str, Split],
    qual_pins: dict[str, str] | None = None,
) -> tuple[list[QualificationBatch], dict]:
    """Job-centric shortlist task: the top rubric scorer is the one qualified.

    Ties break toward the lexicographically smallest candidate id. Jobs
    with fewer than two applicants, or outside the job split, are excluded.
    """
    qual_pins = qual_pins or {}
    applicants: dict[str, list[PairAnnotation]] = {}
    for ann in annotations.values():
        if ann.pref_label == PrefLabel.Positive:
            applicants.setdefault(ann.job_id, []).append(ann)

    batches: list[QualificationBatch] = []
    excluded_small = 0
    excluded_unsplit = 0
    for job_id in sorted(applicants):
        pool = applicants[job_id]
        if len(pool) < 2:
            excluded_small += 1
            continue
        if job_id not in job_split:
            excluded_unsplit += 1
            continue
        ranked = sorted(pool, key=lambda a: (-a.score, a.candidate_id))
        if job_id in qual_pins:
            pinned = qual_pins[job_id]
            if pinned not in {a.candidate_id for a in pool}:
                raise DataError(
                    f"qualified override {pinned} is not an applicant of job {job_id}"
                )
            qualified = pinned
        else:
            qualified = next(
                (a.candidate_id for a in ranked if a.qual_label is not False),
                ranked[0].candidate_id,
            )
        for ann in pool:
            ann.qual_label = ann.candidate_id == qualified
        batch = QualificationBatch(
            job_id=job_id,
            split=job_split[job_id],
            applicant_ids=tuple(sorted(a.candidate_id for a in pool)),
            qualified_id=qualified,
        )
        batch.check()
        batches.append(batch)

    counts = {
        "jobs_with_batches": {
            s.value: sum(1 for b in batches if b.split == s) for s in (Split.Train, Split.Test)
        },
        "jobs_excluded_too_few_applicants": excluded_small,
        "jobs_excluded_unassigned_split": excluded_unsplit,
    }
    return batches, counts


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class SynthResult:
    config: SynthConfig
    candidates: list[CandidateProfile]
    jobs: list[JobPosting]
    annotations: dict[tuple[str, str], PairAnnotation]
    pref_batches: list[PreferenceBatch]
    qual_batches: list[QualificationBatch]
    job_split: dict[str, Split]
    report: dict


def run_pipeline(config: SynthConfig, overrides: list[dict] | None = None) -> SynthResult:
    config.validate()
    candidates = generate_candidates(config)
    jobs = generate_jobs(config)
    scores = score_matrix(candidates, jobs)
    annotations = build_annotations(candidates, jobs, config, scores)

    if overrides is None and config.override_path:
        overrides = load_overrides(config.override_path)
    applied, qual_pins = apply_overrides(annotations, overrides or [])

    candidate_index = {c.id_u: k for k, c in enumerate(candidates)}
    job_index = {j.id_i: k for k, j in enumerate(jobs)}
    pref_batches, pref_counts = build_preference_dataset(
        annotations, config, candidate_index, job_index
    )
    job_split = split_jobs(jobs, config.qual_train_jobs, config.qual_test_jobs, config.seed)
    qual_batches, qual_counts = build_qualification_dataset(annotations, job_split, qual_pins)

    label_counts = {label.value: 0 for label in PrefLabel}
    for ann in annotations.values():
        label_counts[ann.pref_label.value] += 1

    feature_config = config.feature_config()
    report = {
        "config": config.to_dict(),
        "counts": {
            "candidates": len(candidates),
            "jobs": len(jobs),
            "pairs_scored": len(candidates) * len(jobs),
            "labels": label_counts,
            "overrides_applied": applied,
            "preference": pref_counts,
            "qualification": qual_counts,
        },
        "feature_config": feature_config.to_dict(),
        "feature_hash": feature_config.hash(),
    }
    return SynthResult(
        config=config,
        candidates=candidates,
        jobs=jobs,
        annotations=annotations,
        pref_batches=pref_batches,
        qual_batches=qual_batches,
        job_split=job_split,
        report=report,
    )


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------

DATASET_FILES = (
    "candidates.jsonl",
    "jobs.jsonl",
    "annotations.jsonl",
    "pref_batches.jsonl",
    "qual_batches.jsonl",
    "run_report.json",
)


def write_dataset(result: SynthResult, outdir) -> None:
    """Emit the dataset as JSON Lines plus the run report.

    annotations.jsonl keeps the Positive and HardNegative rows; discarded
    pairs are only counted in the report to bound the file size.
    """
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_jsonl(outdir / "candidates.jsonl", (candidate_to_dict(c) for c in result.candidates))
    write_jsonl(outdir / "jobs.jsonl", (job_to_dict(j) for j in result.jobs))
    write_jsonl(
        outdir / "annotations.jsonl",
        (
            ann.to_dict()
            for ann in result.annotations.values()
            if ann.pref_label != PrefLabel.Discarded
        ),
    )
    write_jsonl(outdir / "pref_batches.jsonl", (b.to_dict() for b in result.pref_batches))
    write_jsonl(outdir / "qual_batches.jsonl", (b.to_dict() for b in result.qual_batches))
    with open(outdir / "run_report.json", "w", encoding="utf-8") as fh:
        json.dump(result.report, fh, indent=2, sort_keys=True)
        fh.write("\n")
