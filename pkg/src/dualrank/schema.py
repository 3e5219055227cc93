"""Four-layer candidate/job schema and the paired feature representation.

The two market sides are described by the same four layers: metadata,
capability, operational constraints, and free-text semantics. A
(candidate, job) pair maps to one numeric vector split into four blocks
so downstream scorers can mask whole layers per task.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError


class AcademicLevel(IntEnum):
    Undergraduate = 0
    Masters = 1
    PhD = 2


class Subfield(str, Enum):
    Robotics = "Robotics"
    CV = "CV"
    NLP = "NLP"
    Applications = "Applications"
    RL = "RL"
    Theory = "Theory"


class Modality(str, Enum):
    Onsite = "Onsite"
    Remote = "Remote"
    Hybrid = "Hybrid"


def modality_compatible(m_loc: Modality, m_job: Modality) -> bool:
    """Equal modalities match; Remote and Hybrid are mutually workable."""
    if m_loc == m_job:
        return True
    return {m_loc, m_job} == {Modality.Remote, Modality.Hybrid}


@dataclass
class CandidateProfile:
    id_u: str
    row_u: int  # opaque source record index
    lvl_u: AcademicLevel
    gpa: float
    gpa_ug: float
    major_master: Subfield
    major_second: Subfield | None
    n_pub: int
    experience_years: float
    h_u: float  # weekly bandwidth, hours
    c_summer: bool
    m_loc: Modality
    skills: frozenset[str]
    interests: frozenset[str]
    projects: tuple[str, str, str]
    extracurriculars: tuple[str, str]

    def majors(self) -> frozenset[Subfield]:
        out = {self.major_master}
        if self.major_second is not None:
            out.add(self.major_second)
        return frozenset(out)


@dataclass
class JobPosting:
    id_i: str
    ind_i: str
    min_lvl_i: AcademicLevel
    tau_gpa: float
    tau_exp: float
    acceptable_majors: frozenset[Subfield]
    h_i: float  # required weekly bandwidth, hours
    m_job: Modality
    required_skills: frozenset[str]
    jd_text: str


@dataclass
class ValidationResult:
    ok: bool
    problems: list[str] = field(default_factory=list)


def validate_candidate(profile: CandidateProfile) -> ValidationResult:
    """Check every field-level invariant; collects all violations."""
    problems = []
    if not 0.0 <= profile.gpa <= 4.0:
        problems.append(f"gpa out of [0,4.0]: {profile.gpa}")
    if not 0.0 <= profile.gpa_ug <= 4.0:
        problems.append(f"gpa_ug out of [0,4.0]: {profile.gpa_ug}")
    if profile.n_pub < 0:
        problems.append(f"n_pub must be >= 0: {profile.n_pub}")
    if profile.experience_years < 0:
        problems.append(f"experience_years must be >= 0: {profile.experience_years}")
    if profile.h_u < 0:
        problems.append(f"h_u must be >= 0: {profile.h_u}")
    if len(profile.projects) != 3:
        problems.append(f"projects must have exactly 3 entries: {len(profile.projects)}")
    if len(profile.extracurriculars) != 2:
        problems.append(
            f"extracurriculars must have exactly 2 entries: {len(profile.extracurriculars)}"
        )
    return ValidationResult(ok=not problems, problems=problems)


def validate_job(job: JobPosting) -> ValidationResult:
    problems = []
    if not 0.0 <= job.tau_gpa <= 4.0:
        problems.append(f"tau_gpa out of [0,4.0]: {job.tau_gpa}")
    if job.tau_exp < 0:
        problems.append(f"tau_exp must be >= 0: {job.tau_exp}")
    if job.h_i < 0:
        problems.append(f"h_i must be >= 0: {job.h_i}")
    if not job.acceptable_majors:
        problems.append("acceptable_majors must be non-empty")
    if not job.required_skills:
        problems.append("required_skills must be non-empty")
    return ValidationResult(ok=not problems, problems=problems)


# ---------------------------------------------------------------------------
# text embedding
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _token_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=True)
    ).digest()
    return int.from_bytes(digest, "little")


def embed_text(tokens: Sequence[str], dim: int, seed: int) -> np.ndarray:
    """Signed-hash bag-of-tokens embedding, L2-normalized when nonzero.

    Each token lands on one coordinate with a +/-1 sign, both derived from
    a keyed hash, so the result is order-invariant and stable across
    processes (no reliance on PYTHONHASHSEED).
    """
    if dim < 1:
        raise ConfigError(f"embedding dim must be >= 1, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        h = _token_hash(token, seed)
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def candidate_tokens(profile: CandidateProfile) -> list[str]:
    """Tokens feeding the candidate-side text embedding."""
    tokens: list[str] = []
    for text in (*profile.projects, *profile.extracurriculars):
        tokens.extend(tokenize(text))
    tokens.extend(tokenize(" ".join(sorted(profile.interests))))
    return tokens


def job_tokens(job: JobPosting) -> list[str]:
    tokens = tokenize(job.jd_text)
    tokens.extend(tokenize(" ".join(sorted(job.required_skills))))
    return tokens


# ---------------------------------------------------------------------------
# overlap ratios shared by features and the rubric
# ---------------------------------------------------------------------------

def skill_overlap_ratio(skills: frozenset[str], required: frozenset[str]) -> float:
    if not required:
        raise DataError("required_skills must be non-empty")
    return len(skills & required) / len(required)


def interest_overlap_ratio(
    interests: frozenset[str], industry: str, required: frozenset[str]
) -> float:
    targets = {industry} | required
    return len(interests & targets) / max(1, len(interests))


# ---------------------------------------------------------------------------
# pair features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureConfig:
    industries: tuple[str, ...]
    embedding_dim: int = 64
    embedding_seed: int = 1337

    def layout(self) -> "FeatureLayout":
        return FeatureLayout.from_config(self)

    def hash(self) -> str:
        payload = json.dumps(
            {
                "industries": list(self.industries),
                "embedding_dim": self.embedding_dim,
                "embedding_seed": self.embedding_seed,
                "layout_version": 1,
            },
            sort_keys=True,
        )
        return hashlib.blake2b(payload.encode(), digest_size=16).hexdigest()

    def to_dict(self) -> dict:
        return {
            "industries": list(self.industries),
            "embedding_dim": self.embedding_dim,
            "embedding_seed": self.embedding_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(
            industries=tuple(d["industries"]),
            embedding_dim=int(d["embedding_dim"]),
            embedding_seed=int(d["embedding_seed"]),
        )


@dataclass(frozen=True)
class FeatureLayout:
    """Block boundaries of the concatenated pair vector."""

    base_dim: int
    cap_dim: int
    con_dim: int
    sem_dim: int

    @classmethod
    def from_config(cls, config: FeatureConfig) -> "FeatureLayout":
        return cls(
            base_dim=3 + len(config.industries),
            cap_dim=5,
            con_dim=5,
            sem_dim=3 * config.embedding_dim + 2,
        )

    @property
    def dim_total(self) -> int:
        return self.base_dim + self.cap_dim + self.con_dim + self.sem_dim

    @property
    def base_slice(self) -> slice:
        return slice(0, self.base_dim)

    @property
    def cap_slice(self) -> slice:
        start = self.base_dim
        return slice(start, start + self.cap_dim)

    @property
    def con_slice(self) -> slice:
        start = self.base_dim + self.cap_dim
        return slice(start, start + self.con_dim)

    @property
    def sem_slice(self) -> slice:
        start = self.base_dim + self.cap_dim + self.con_dim
        return slice(start, start + self.sem_dim)

    def task_mask(self, task: str) -> np.ndarray:
        """Active-coordinate mask: preference sees sem+con, qualification cap+sem."""
        mask = np.zeros(self.dim_total, dtype=np.float64)
        if task == "pref":
            mask[self.con_slice] = 1.0
            mask[self.sem_slice] = 1.0
        elif task == "qual":
            mask[self.cap_slice] = 1.0
            mask[self.sem_slice] = 1.0
        else:
            raise ConfigError(f"unknown task {task!r}")
        return mask

    def to_dict(self) -> dict:
        return {
            "base_dim": self.base_dim,
            "cap_dim": self.cap_dim,
            "con_dim": self.con_dim,
            "sem_dim": self.sem_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureLayout":
        return cls(
            base_dim=int(d["base_dim"]),
            cap_dim=int(d["cap_dim"]),
            con_dim=int(d["con_dim"]),
            sem_dim=int(d["sem_dim"]),
        )


@dataclass
class PairFeatures:
    base: np.ndarray
    cap: np.ndarray
    con: np.ndarray
    sem: np.ndarray
    dim_total: int

    def concat(self) -> np.ndarray:
        return np.concatenate([self.base, self.cap, self.con, self.sem])


def extract_pair_features(
    candidate: CandidateProfile, job: JobPosting, config: FeatureConfig
) -> PairFeatures:
    """Reference per-pair featurizer; a pure function of its arguments.

    Margins are candidate value minus job threshold; indicators are 0/1.
    Reals keep their source units (GPA points, hours, years, counts).
    """
    cand_check = validate_candidate(candidate)
    if not cand_check.ok:
        raise DataError(f"invalid candidate {candidate.id_u}: {cand_check.problems}")
    job_check = validate_job(job)
    if not job_check.ok:
        raise DataError(f"invalid job {job.id_i}: {job_check.problems}")
    if job.ind_i not in config.industries:
        raise ConfigError(
            f"job industry {job.ind_i!r} not in configured industries {config.industries}"
        )

    ind_onehot = np.zeros(len(config.industries))
    ind_onehot[config.industries.index(job.ind_i)] = 1.0
    base = np.concatenate(
        [
            [float(candidate.lvl_u), float(job.min_lvl_i), float(candidate.lvl_u - job.min_lvl_i)],
            ind_onehot,
        ]
    )

    major_ok = 1.0 if candidate.majors() & job.acceptable_majors else 0.0
    cap = np.array(
        [
            candidate.gpa,
            candidate.gpa - job.tau_gpa,
            candidate.experience_years - job.tau_exp,
            major_ok,
            float(candidate.n_pub),
        ]
    )

    con = np.array(
        [
            candidate.h_u,
            job.h_i,
            candidate.h_u - job.h_i,
            1.0 if modality_compatible(candidate.m_loc, job.m_job) else 0.0,
            1.0 if candidate.c_summer else 0.0,
        ]
    )

    z_u = embed_text(candidate_tokens(candidate), config.embedding_dim, config.embedding_seed)
    z_i = embed_text(job_tokens(job), config.embedding_dim, config.embedding_seed)
    sem = np.concatenate(
        [
            z_u,
            z_i,
            z_u * z_i,
            [
                skill_overlap_ratio(candidate.skills, job.required_skills),
                interest_overlap_ratio(candidate.interests, job.ind_i, job.required_skills),
            ],
        ]
    )

    feats = PairFeatures(base=base, cap=cap, con=con, sem=sem, dim_total=0)
    feats.dim_total = len(base) + len(cap) + len(con) + len(sem)
    layout = config.layout()
    if feats.dim_total != layout.dim_total:
        raise ConfigError(
            f"feature dimension {feats.dim_total} does not match layout {layout.dim_total}"
        )
    if not np.all(np.isfinite(feats.concat())):
        raise DataError(f"non-finite feature for pair ({candidate.id_u}, {job.id_i})")
    return feats


class FeatureTables:
    """Column-oriented entity tables for batched pair featurization.

    Produces vectors identical to extract_pair_features but assembles
    whole batches with numpy indexing, which is what training and
    evaluation use on the inner loop.
    """

    def __init__(self, candidates: list[CandidateProfile], jobs: list[JobPosting],
                 config: FeatureConfig):
        self.config = config
        self.layout = config.layout()
        self.candidates = candidates
        self.jobs = jobs
        self.cand_index = {c.id_u: k for k, c in enumerate(candidates)}
        self.job_index = {j.id_i: k for k, j in enumerate(jobs)}

        n, m, dim = len(candidates), len(jobs), config.embedding_dim
        self.c_lvl = np.array([float(c.lvl_u) for c in candidates])
        self.c_gpa = np.array([c.gpa for c in candidates])
        self.c_exp = np.array([c.experience_years for c in candidates])
        self.c_npub = np.array([float(c.n_pub) for c in candidates])
        self.c_hu = np.array([c.h_u for c in candidates])
        self.c_summer = np.array([1.0 if c.c_summer else 0.0 for c in candidates])
        self.z_u = np.zeros((n, dim))
        for k, c in enumerate(candidates):
            self.z_u[k] = embed_text(candidate_tokens(c), dim, config.embedding_seed)

        self.j_minlvl = np.array([float(j.min_lvl_i) for j in jobs])
        self.j_taugpa = np.array([j.tau_gpa for j in jobs])
        self.j_tauexp = np.array([j.tau_exp for j in jobs])
        self.j_hi = np.array([j.h_i for j in jobs])
        self.j_onehot = np.zeros((m, len(config.industries)))
        for k, j in enumerate(jobs):
            if j.ind_i not in config.industries:
                raise ConfigError(f"job industry {j.ind_i!r} not in configured industries")
            self.j_onehot[k, config.industries.index(j.ind_i)] = 1.0
        self.z_i = np.zeros((m, dim))
        for k, j in enumerate(jobs):
            self.z_i[k] = embed_text(job_tokens(j), dim, config.embedding_seed)

        # pairwise set-derived entries, built once
        self.major_ok = np.zeros((n, m))
        self.skill_ratio = np.zeros((n, m))
        self.interest_ratio = np.zeros((n, m))
        self.modality_ok = np.zeros((n, m))
        for ji, j in enumerate(jobs):
            acc = j.acceptable_majors
            req = j.required_skills
            for ci, c in enumerate(candidates):
                if c.majors() & acc:
                    self.major_ok[ci, ji] = 1.0
                self.skill_ratio[ci, ji] = skill_overlap_ratio(c.skills, req)
                self.interest_ratio[ci, ji] = interest_overlap_ratio(c.interests, j.ind_i, req)
                if modality_compatible(c.m_loc, j.m_job):
                    self.modality_ok[ci, ji] = 1.0

    def pair_rows(self, cand_idxs: Sequence[int], job_idxs: Sequence[int]) -> np.ndarray:
        """Feature rows for paired index arrays of equal length."""
        ci = np.asarray(cand_idxs, dtype=np.intp)
        ji = np.asarray(job_idxs, dtype=np.intp)
        if ci.shape != ji.shape:
            raise ConfigError("cand_idxs and job_idxs must have equal length")
        out = np.empty((ci.size, self.layout.dim_total))
        out[:, 0] = self.c_lvl[ci]
        out[:, 1] = self.j_minlvl[ji]
        out[:, 2] = self.c_lvl[ci] - self.j_minlvl[ji]
        out[:, 3 : self.layout.base_dim] = self.j_onehot[ji]

        cap = out[:, self.layout.cap_slice]
        cap[:, 0] = self.c_gpa[ci]
        cap[:, 1] = self.c_gpa[ci] - self.j_taugpa[ji]
        cap[:, 2] = self.c_exp[ci] - self.j_tauexp[ji]
        cap[:, 3] = self.major_ok[ci, ji]
        cap[:, 4] = self.c_npub[ci]

        con = out[:, self.layout.con_slice]
        con[:, 0] = self.c_hu[ci]
        con[:, 1] = self.j_hi[ji]
        con[:, 2] = self.c_hu[ci] - self.j_hi[ji]
        con[:, 3] = self.modality_ok[ci, ji]
        con[:, 4] = self.c_summer[ci]

        dim = self.config.embedding_dim
        sem = out[:, self.layout.sem_slice]
        sem[:, :dim] = self.z_u[ci]
        sem[:, dim : 2 * dim] = self.z_i[ji]
        sem[:, 2 * dim : 3 * dim] = self.z_u[ci] * self.z_i[ji]
        sem[:, 3 * dim] = self.skill_ratio[ci, ji]
        sem[:, 3 * dim + 1] = self.interest_ratio[ci, ji]
        return out

    def pair_matrix(self, cand_idx: int, job_idxs: Sequence[int]) -> np.ndarray:
        """Feature rows for one candidate against a list of jobs."""
        ji = np.asarray(job_idxs, dtype=np.intp)
        return self.pair_rows(np.full(ji.size, cand_idx, dtype=np.intp), ji)

    def pair_row(self, cand_id: str, job_id: str) -> np.ndarray:
        ci = self.cand_index[cand_id]
        ji = self.job_index[job_id]
        return self.pair_matrix(ci, [ji])[0]


# ---------------------------------------------------------------------------
# JSON Lines serialization
# ---------------------------------------------------------------------------

_CANDIDATE_FIELDS = {f.name for f in fields(CandidateProfile)}
_JOB_FIELDS = {f.name for f in fields(JobPosting)}


def candidate_to_dict(profile: CandidateProfile) -> dict:
    return {
        "id_u": profile.id_u,
        "row_u": profile.row_u,
        "lvl_u": profile.lvl_u.name,
        "gpa": profile.gpa,
        "gpa_ug": profile.gpa_ug,
        "major_master": profile.major_master.value,
        "major_second": None if profile.major_second is None else profile.major_second.value,
        "n_pub": profile.n_pub,
        "experience_years": profile.experience_years,
        "h_u": profile.h_u,
        "c_summer": profile.c_summer,
        "m_loc": profile.m_loc.value,
        "skills": sorted(profile.skills),
        "interests": sorted(profile.interests),
        "projects": list(profile.projects),
        "extracurriculars": list(profile.extracurriculars),
    }


def candidate_from_dict(d: dict, strict: bool = True) -> CandidateProfile:
    unknown = set(d) - _CANDIDATE_FIELDS
    if unknown and strict:
        raise DataError(f"unknown candidate fields {sorted(unknown)} (strict mode)")
    try:
        profile = CandidateProfile(
            id_u=str(d["id_u"]),
            row_u=int(d["row_u"]),
            lvl_u=AcademicLevel[d["lvl_u"]],
            gpa=float(d["gpa"]),
            gpa_ug=float(d["gpa_ug"]),
            major_master=Subfield(d["major_master"]),
            major_second=None if d["major_second"] is None else Subfield(d["major_second"]),
            n_pub=int(d["n_pub"]),
            experience_years=float(d["experience_years"]),
            h_u=float(d["h_u"]),
            c_summer=bool(d["c_summer"]),
            m_loc=Modality(d["m_loc"]),
            skills=frozenset(d["skills"]),
            interests=frozenset(d["interests"]),
            projects=tuple(d["projects"]),
            extracurriculars=tuple(d["extracurriculars"]),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed candidate record: {exc}") from exc
    result = validate_candidate(profile)
    if not result.ok:
        raise DataError(f"candidate {profile.id_u} invalid: {result.problems}")
    return profile


def job_to_dict(job: JobPosting) -> dict:
    return {
        "id_i": job.id_i,
        "ind_i": job.ind_i,
        "min_lvl_i": job.min_lvl_i.name,
        "tau_gpa": job.tau_gpa,
        "tau_exp": job.tau_exp,
        "acceptable_majors": sorted(m.value for m in job.acceptable_majors),
        "h_i": job.h_i,
        "m_job": job.m_job.value,
        "required_skills": sorted(job.required_skills),
        "jd_text": job.jd_text,
    }


def job_from_dict(d: dict, strict: bool = True) -> JobPosting:
    unknown = set(d) - _JOB_FIELDS
    if unknown and strict:
        raise DataError(f"unknown job fields {sorted(unknown)} (strict mode)")
    try:
        job = JobPosting(
            id_i=str(d["id_i"]),
            ind_i=str(d["ind_i"]),
            min_lvl_i=AcademicLevel[d["min_lvl_i"]],
            tau_gpa=float(d["tau_gpa"]),
            tau_exp=float(d["tau_exp"]),
            acceptable_majors=frozenset(Subfield(m) for m in d["acceptable_majors"]),
            h_i=float(d["h_i"]),
            m_job=Modality(d["m_job"]),
            required_skills=frozenset(d["required_skills"]),
            jd_text=str(d["jd_text"]),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed job record: {exc}") from exc
    result = validate_job(job)
    if not result.ok:
        raise DataError(f"job {job.id_i} invalid: {result.problems}")
    return job


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
