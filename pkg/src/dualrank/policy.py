"""Constraint-aligned ranking: saddle-point tuning of the policy head.

The policy maximizes preference subject to a minimum qualification level.
A single nonnegative multiplier prices violations; primal ascent moves the
head/task-embedding parameters while the shared encoder stays frozen, and
projected dual steps move the multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .model import (
    TASK_PREF,
    TASK_QUAL,
    ModelParams,
    ScorePair,
    encoder_digest,
    forward,
    logistic,
)


@dataclass
class DualState:
    lam: float = 0.0          # multiplier, projected to stay >= 0
    epsilon: float = 0.05     # screening threshold in [0, 1]
    alpha: float = 0.01       # primal step size
    beta: float = 0.1         # dual step size
    lambda_history: list[float] = field(default_factory=list)

    def validate(self) -> None:
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("step sizes must be >= 0")


def lagrangian_value(scores: ScorePair, dual: DualState) -> float:
    return scores.s_pref + dual.lam * (scores.s_qual - dual.epsilon)


def final_score(s_pref, s_qual, lam: float, epsilon: float):
    """Inference-time ranking score; same form as the training Lagrangian."""
    return s_pref + lam * (np.asarray(s_qual) - epsilon)


def primal_step(params: ModelParams, x: np.ndarray, dual: DualState,
                alpha: float | None = None) -> None:
    """One ascent step on the batch-mean Lagrangian, policy parameters only.

    Gradients reach the two heads and the task embedding; w_in and b_in are
    never touched, which keeps the shared encoder bit-frozen.
    """
    a = dual.alpha if alpha is None else alpha
    n = x.shape[0]
    masks = params.masks()
    grad_emb = np.zeros_like(params.task_emb)

    for task, w_head, lam_scale in (
        (TASK_PREF, params.w_pref, 1.0),
        (TASK_QUAL, params.w_qual, dual.lam),
    ):
        xn = (x * masks[task] - params.norm_mean) / params.norm_std
        h = np.tanh(xn @ params.w_in + params.b_in + params.task_emb[task])
        z = h @ w_head + (params.b_pref if task == TASK_PREF else params.b_qual)
        s = logistic(z)
        g_z = lam_scale * s * (1.0 - s) / n  # d mean(objective) / d z
        g_w = h.T @ g_z
        g_b = float(np.sum(g_z))
        g_a = np.outer(g_z, w_head) * (1.0 - h * h)
        grad_emb[task] = g_a.sum(axis=0)
        if not np.all(np.isfinite(g_w)):
            raise NumericalError("non-finite primal gradient")
        if task == TASK_PREF:
            params.w_pref = params.w_pref + a * g_w
            params.b_pref = params.b_pref + a * g_b
        else:
            params.w_qual = params.w_qual + a * g_w
            params.b_qual = params.b_qual + a * g_b

    params.task_emb = params.task_emb + a * grad_emb


def dual_step(dual: DualState, s_qual: np.ndarray) -> DualState:
    """Projected multiplier update from a batch of qualification scores."""
    s_qual = np.asarray(s_qual)
    if s_qual.size == 0:
        raise ConfigError("dual_step needs a non-empty batch")
    violation = float(np.mean(s_qual - dual.epsilon))
    dual.lam = max(0.0, dual.lam - dual.beta * violation)
    dual.lambda_history.append(dual.lam)
    return dual


# ---------------------------------------------------------------------------
# stage-2 alignment
# ---------------------------------------------------------------------------

@dataclass
class AlignConfig:
    epochs: int = 8
    lambda_init: float = 0.0
    epsilon: float = 0.05
    alpha: float = 0.01
    beta: float = 0.1
    lambda_ceiling: float = 100.0
    lambda_select: str = "final"  # or "trajectory"
    seed: int = 7

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("align epochs must be >= 1")
        if self.lambda_init < 0:
            raise ConfigError("lambda_init must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("alpha and beta must be > 0")
        if self.lambda_ceiling <= 0:
            raise ConfigError("lambda_ceiling must be > 0")
        if self.lambda_select not in ("final", "trajectory"):
            raise ConfigError(f"lambda_select must be final|trajectory: {self.lambda_select}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lambda_init": self.lambda_init,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda_ceiling": self.lambda_ceiling,
            "lambda_select": self.lambda_select,
            "seed": self.seed,
        }


@dataclass
class TraceRow:
    step: int
    lam: float          # multiplier after this step's dual update
    mean_s_qual: float  # batch mean the dual update consumed
    mean_s_pref: float


@dataclass
class AlignedPolicy:
    params: ModelParams
    lambda_star: float
    epsilon: float
    encoder_sha: str
    trace: list[TraceRow]
    terminal_mean_s_qual: float
    terminal_mean_s_pref: float

    def score(self, x: np.ndarray) -> np.ndarray:
        s_p = forward(self.params, x, TASK_PREF)
        s_q = forward(self.params, x, TASK_QUAL)
        return final_score(s_p, s_q, self.lambda_star, self.epsilon)


def write_trace(path, trace: list[TraceRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,lambda,mean_s_qual,mean_s_pref\n")
        for row in trace:
            fh.write(f"{row.step},{row.lam:.8f},{row.mean_s_qual:.8f},{row.mean_s_pref:.8f}\n")


def align_stage2(
    stage1_params: ModelParams,
    batches: list[np.ndarray],
    config: AlignConfig,
) -> AlignedPolicy:
    """Alternate primal ascent and projected dual descent over the batches.

    Raises NumericalError when the multiplier crosses the ceiling, which
    reads as "this epsilon is not attainable for this model/data".
    """
    config.validate()
    if not batches:
        raise ConfigError("alignment needs at least one batch")

    params = stage1_params.copy()
    frozen = encoder_digest(params)
    dual = DualState(
        lam=config.lambda_init,
        epsilon=config.epsilon,
        alpha=config.alpha,
        beta=config.beta,
    )
    dual.validate()

    trace: list[TraceRow] = []
    step = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, 23, epoch]).permutation(len(batches))
        for k in order:
            x = batches[k]
            primal_step(params, x, dual)
            s_p = forward(params, x, TASK_PREF)
            s_q = forward(params, x, TASK_QUAL)
            dual_step(dual, s_q)
            trace.append(
                TraceRow(
                    step=step,
                    lam=dual.lam,
                    mean_s_qual=float(np.mean(s_q)),
                    mean_s_pref=float(np.mean(s_p)),
                )
            )
            step += 1
            if dual.lam > config.lambda_ceiling:
                raise NumericalError(
                    f"lambda {dual.lam:.3f} exceeded ceiling {config.lambda_ceiling}; "
                    f"epsilon={config.epsilon} looks infeasible",
                    history=trace,
                )
        if encoder_digest(params) != frozen:
            raise NumericalError("shared encoder changed during alignment", history=trace)

    lam_star = dual.lam
    if config.lambda_select == "trajectory":
        tail = trace[max(0, int(len(trace) * 0.9)) :]
        lam_star = min(tail, key=lambda r: abs(r.mean_s_qual - config.epsilon)).lam

    total_q, total_p, count = 0.0, 0.0, 0
    for x in batches:
        total_q += float(np.sum(forward(params, x, TASK_QUAL)))
        total_p += float(np.sum(forward(params, x, TASK_PREF)))
        count += x.shape[0]

    return AlignedPolicy(
        params=params,
        lambda_star=lam_star,
        epsilon=config.epsilon,
        encoder_sha=encoder_digest(params),
        trace=trace,
        terminal_mean_s_qual=total_q / count,
        terminal_mean_s_pref=total_p / count,
    )


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

@dataclass
class RankedJob:
    job_id: str
    score: float
    s_pref: float
    s_qual: float


def rank_jobs(
    params: ModelParams,
    lam: float,
    epsilon: float,
    job_ids: list[str],
    features: np.ndarray,
) -> list[RankedJob]:
    """Jobs ordered by the aligned score, ties broken by ascending job id."""
    if len(job_ids) == 0:
        return []
    s_p = np.atleast_1d(forward(params, features, TASK_PREF))
    s_q = np.atleast_1d(forward(params, features, TASK_QUAL))
    s_final = final_score(s_p, s_q, lam, epsilon)
    order = sorted(range(len(job_ids)), key=lambda k: (-s_final[k], job_ids[k]))
    return [
        RankedJob(job_id=job_ids[k], score=float(s_final[k]),
                  s_pref=float(s_p[k]), s_qual=float(s_q[k]))
        for k in order
    ]


def solve_lambda_for_target(
    s_pref_per_user: list[np.ndarray],
    s_qual_per_user: list[np.ndarray],
    epsilon: float,
    ceiling: float = 100.0,
    iters: int = 60,
) -> float:
    """Smallest multiplier whose top-1 picks average at least epsilon in
    qualification, on frozen scores.

    The top-1 qualification under score s_pref + lam * s_qual is
    non-decreasing in lam, so bisection applies. Raises NumericalError if
    even the ceiling cannot reach the target.
    """

    def rank1_mean(lam: float) -> float:
        vals = []
        for s_p, s_q in zip(s_pref_per_user, s_qual_per_user):
            combined = s_p + lam * s_q
            best = np.flatnonzero(combined == combined.max())
            vals.append(float(s_q[best].max()))
        return float(np.mean(vals))

    if rank1_mean(0.0) >= epsilon:
        return 0.0
    if rank1_mean(ceiling) < epsilon:
        raise NumericalError(
            f"target epsilon={epsilon} unreachable even at lambda={ceiling}"
        )
    lo, hi = 0.0, ceiling
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if rank1_mean(mid) >= epsilon:
            hi = mid
        else:
            lo = mid
    return hi
