"""Shared-encoder scorer with independent preference/qualification heads.

One tanh hidden layer over the masked pair features, a per-task additive
embedding on the pre-activation, and logistic heads. Gradients are
accumulated by hand in reverse mode so they can be audited coordinate by
coordinate against finite differences.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .schema import FeatureLayout

TASK_PREF = 0
TASK_QUAL = 1

_CLIP = 1e-7


@dataclass
class ModelParams:
    w_in: np.ndarray       # (dim, hidden)
    b_in: np.ndarray       # (hidden,)
    task_emb: np.ndarray   # (2, hidden), row 0 pref / row 1 qual
    w_pref: np.ndarray     # (hidden,)
    b_pref: float
    w_qual: np.ndarray     # (hidden,)
    b_qual: float
    norm_mean: np.ndarray  # (dim,) input normalizer, fixed after fit
    norm_std: np.ndarray   # (dim,)
    layout: FeatureLayout
    feature_hash: str

    def masks(self) -> np.ndarray:
        return np.stack([self.layout.task_mask("pref"), self.layout.task_mask("qual")])

    def copy(self) -> "ModelParams":
        return ModelParams(
            w_in=self.w_in.copy(),
            b_in=self.b_in.copy(),
            task_emb=self.task_emb.copy(),
            w_pref=self.w_pref.copy(),
            b_pref=float(self.b_pref),
            w_qual=self.w_qual.copy(),
            b_qual=float(self.b_qual),
            norm_mean=self.norm_mean.copy(),
            norm_std=self.norm_std.copy(),
            layout=self.layout,
            feature_hash=self.feature_hash,
        )


@dataclass
class TaskWeights:
    w_pref: float = 0.0
    w_qual: float = 0.0

    @property
    def eta_pref(self) -> float:
        return float(np.exp(-self.w_pref))

    @property
    def eta_qual(self) -> float:
        return float(np.exp(-self.w_qual))


@dataclass
class ScorePair:
    s_pref: float
    s_qual: float


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    weight_lr: float = 0.01      # adaptive task weights move slower than the model
    weight_clamp: float = 3.0    # |w| bound, so eta stays within [e^-3, e^3]
    epochs: int = 30
    batch_size: int = 2          # preference batches folded into one step
    hidden_dim: int = 64
    seed: int = 7
    grad_clip: float = 5.0
    patience: int = 6
    select_on: str = "pref"      # validation loss used for checkpoint choice

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.weight_lr < 0 or self.weight_clamp <= 0:
            raise ConfigError("weight_lr must be >= 0 and weight_clamp > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.select_on not in ("pref", "combined"):
            raise ConfigError(f"select_on must be 'pref' or 'combined', got {self.select_on}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_lr": self.weight_lr,
            "weight_clamp": self.weight_clamp,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "hidden_dim": self.hidden_dim,
            "seed": self.seed,
            "grad_clip": self.grad_clip,
            "patience": self.patience,
            "select_on": self.select_on,
        }


def init_params(layout: FeatureLayout, hidden_dim: int, seed: int,
                feature_hash: str = "") -> ModelParams:
    """Uniform +-1/sqrt(fan_in) encoder, zero heads: the prior score is 0.5."""
    rng = np.random.default_rng([seed, 11])
    dim = layout.dim_total
    bound = 1.0 / np.sqrt(dim)
    return ModelParams(
        w_in=rng.uniform(-bound, bound, size=(dim, hidden_dim)),
        b_in=np.zeros(hidden_dim),
        task_emb=rng.uniform(-bound, bound, size=(2, hidden_dim)),
        w_pref=np.zeros(hidden_dim),
        b_pref=0.0,
        w_qual=np.zeros(hidden_dim),
        b_qual=0.0,
        norm_mean=np.zeros(dim),
        norm_std=np.ones(dim),
        layout=layout,
        feature_hash=feature_hash,
    )


def fit_normalizer(params: ModelParams, batches: list[np.ndarray]) -> None:
    """Per-dimension affine conditioning, accumulated without stacking."""
    dim = params.layout.dim_total
    count = 0
    total = np.zeros(dim)
    total_sq = np.zeros(dim)
    for x in batches:
        count += x.shape[0]
        total += x.sum(axis=0)
        total_sq += (x * x).sum(axis=0)
    if count == 0:
        raise DataError("cannot fit normalizer on empty data")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    params.norm_mean = mean
    params.norm_std = np.maximum(np.sqrt(var), 1e-8)


def _hidden(params: ModelParams, x: np.ndarray, task: int) -> np.ndarray:
    mask = params.masks()[task]
    xn = (x * mask - params.norm_mean) / params.norm_std
    return np.tanh(xn @ params.w_in + params.b_in + params.task_emb[task])


def logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def forward(params: ModelParams, x: np.ndarray, task: int) -> np.ndarray:
    """Score rows of x for one task; inactive feature layers are zeroed."""
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != params.layout.dim_total:
        raise ConfigError(
            f"feature dim {x2.shape[1]} does not match model dim {params.layout.dim_total}"
        )
    h = _hidden(params, x2, task)
    if task == TASK_PREF:
        z = h @ params.w_pref + params.b_pref
    elif task == TASK_QUAL:
        z = h @ params.w_qual + params.b_qual
    else:
        raise ConfigError(f"unknown task {task}")
    s = logistic(z)
    return float(s[0]) if single else s


def score_pair(params: ModelParams, x: np.ndarray) -> ScorePair:
    return ScorePair(
        s_pref=float(forward(params, x, TASK_PREF)),
        s_qual=float(forward(params, x, TASK_QUAL)),
    )


def bce(prediction, label):
    """Binary cross-entropy with the prediction clamped away from {0, 1}."""
    p = np.clip(prediction, _CLIP, 1.0 - _CLIP)
    y = np.asarray(label, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


# ---------------------------------------------------------------------------
# exact gradients
# ---------------------------------------------------------------------------

@dataclass
class ParamGrads:
    w_in: np.ndarray
    b_in: np.ndarray
    task_emb: np.ndarray
    w_pref: np.ndarray
    b_pref: float
    w_qual: np.ndarray
    b_qual: float
    w_taskweight_pref: float = 0.0
    w_taskweight_qual: float = 0.0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "ParamGrads":
        return cls(
            w_in=np.zeros_like(params.w_in),
            b_in=np.zeros_like(params.b_in),
            task_emb=np.zeros_like(params.task_emb),
            w_pref=np.zeros_like(params.w_pref),
            b_pref=0.0,
            w_qual=np.zeros_like(params.w_qual),
            b_qual=0.0,
        )

    def scaled_add(self, other: "ParamGrads", scale: float) -> None:
        self.w_in += scale * other.w_in
        self.b_in += scale * other.b_in
        self.task_emb += scale * other.task_emb
        self.w_pref += scale * other.w_pref
        self.b_pref += scale * other.b_pref
        self.w_qual += scale * other.w_qual
        self.b_qual += scale * other.b_qual

    def global_norm(self) -> float:
        sq = (
            np.sum(self.w_in ** 2) + np.sum(self.b_in ** 2) + np.sum(self.task_emb ** 2)
            + np.sum(self.w_pref ** 2) + self.b_pref ** 2
            + np.sum(self.w_qual ** 2) + self.b_qual ** 2
            + self.w_taskweight_pref ** 2 + self.w_taskweight_qual ** 2
        )
        return float(np.sqrt(sq))

    def scale(self, factor: float) -> None:
        self.w_in *= factor
        self.b_in *= factor
        self.task_emb *= factor
        self.w_pref *= factor
        self.b_pref *= factor
        self.w_qual *= factor
        self.b_qual *= factor
        self.w_taskweight_pref *= factor
        self.w_taskweight_qual *= factor


def _task_loss_and_grads(
    params: ModelParams, x: np.ndarray, y: np.ndarray, task: int
) -> tuple[float, ParamGrads]:
    """Mean BCE over one task batch plus exact reverse-mode gradients."""
    n = x.shape[0]
    mask = params.masks()[task]
    xn = (x * mask - params.norm_mean) / params.norm_std
    a = xn @ params.w_in + params.b_in + params.task_emb[task]
    h = np.tanh(a)
    w_head = params.w_pref if task == TASK_PREF else params.w_qual
    b_head = params.b_pref if task == TASK_PREF else params.b_qual
    z = h @ w_head + b_head
    p = logistic(z)
    pc = np.clip(p, _CLIP, 1.0 - _CLIP)
    loss = float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))

    # d loss / d z, with the clamp's flat regions handled explicitly
    inside = ((p > _CLIP) & (p < 1.0 - _CLIP)).astype(np.float64)
    dl_dpc = (-y / pc + (1.0 - y) / (1.0 - pc)) / n
    g_z = dl_dpc * inside * p * (1.0 - p)

    grads = ParamGrads.zeros_like(params)
    g_head_w = h.T @ g_z
    g_head_b = float(np.sum(g_z))
    g_h = np.outer(g_z, w_head)
    g_a = g_h * (1.0 - h * h)
    grads.w_in = xn.T @ g_a
    grads.b_in = g_a.sum(axis=0)
    grads.task_emb[task] = g_a.sum(axis=0)
    if task == TASK_PREF:
        grads.w_pref = g_head_w
        grads.b_pref = g_head_b
    else:
        grads.w_qual = g_head_w
        grads.b_qual = g_head_b
    return loss, grads


def stage1_loss(
    params: ModelParams,
    weights: TaskWeights,
    pref_x: np.ndarray,
    pref_y: np.ndarray,
    qual_x: np.ndarray | None,
    qual_y: np.ndarray | None,
) -> tuple[float, ParamGrads, dict]:
    """Adaptive-weighted two-task objective with exact gradients.

    loss = exp(-w_p) * BCE_pref + exp(-w_q) * BCE_qual + w_p + w_q.
    The additive w terms stop both weights from drifting to +inf.
    When qual_x is None the qualification term is skipped entirely
    (preference-only ablation) and task weights receive no gradient.
    """
    loss_p, grads_p = _task_loss_and_grads(params, pref_x, pref_y, TASK_PREF)
    total = ParamGrads.zeros_like(params)
    if qual_x is None:
        total.scaled_add(grads_p, 1.0)
        loss = loss_p
        parts = {"pref_bce": loss_p, "qual_bce": float("nan")}
    else:
        loss_q, grads_q = _task_loss_and_grads(params, qual_x, qual_y, TASK_QUAL)
        eta_p, eta_q = weights.eta_pref, weights.eta_qual
        loss = eta_p * loss_p + eta_q * loss_q + weights.w_pref + weights.w_qual
        total.scaled_add(grads_p, eta_p)
        total.scaled_add(grads_q, eta_q)
        total.w_taskweight_pref = -eta_p * loss_p + 1.0
        total.w_taskweight_qual = -eta_q * loss_q + 1.0
        parts = {"pref_bce": loss_p, "qual_bce": loss_q}
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite stage-1 loss: {loss}")
    return float(loss), total, parts


def apply_update(params: ModelParams, weights: TaskWeights, grads: ParamGrads,
                 lr: float, grad_clip: float | None,
                 weight_lr: float | None = None, weight_clamp: float = 3.0) -> None:
    if grad_clip is not None:
        norm = grads.global_norm()
        if norm > grad_clip:
            grads.scale(grad_clip / norm)
    params.w_in -= lr * grads.w_in
    params.b_in -= lr * grads.b_in
    params.task_emb -= lr * grads.task_emb
    params.w_pref -= lr * grads.w_pref
    params.b_pref -= lr * grads.b_pref
    params.w_qual -= lr * grads.w_qual
    params.b_qual -= lr * grads.b_qual
    wlr = lr if weight_lr is None else weight_lr
    # the clamp keeps eta = exp(-w) positive and bounded both ways
    weights.w_pref = float(np.clip(weights.w_pref - wlr * grads.w_taskweight_pref,
                                   -weight_clamp, weight_clamp))
    weights.w_qual = float(np.clip(weights.w_qual - wlr * grads.w_taskweight_qual,
                                   -weight_clamp, weight_clamp))


# ---------------------------------------------------------------------------
# finite-difference audit
# ---------------------------------------------------------------------------

def _pack(params: ModelParams, weights: TaskWeights) -> np.ndarray:
    return np.concatenate(
        [
            params.w_in.ravel(),
            params.b_in,
            params.task_emb.ravel(),
            params.w_pref,
            [params.b_pref],
            params.w_qual,
            [params.b_qual],
            [weights.w_pref, weights.w_qual],
        ]
    )


def _unpack(vec: np.ndarray, template: ModelParams) -> tuple[ModelParams, TaskWeights]:
    out = template.copy()
    i = 0

    def take(shape):
        nonlocal i
        size = int(np.prod(shape))
        chunk = vec[i : i + size].reshape(shape)
        i += size
        return chunk

    out.w_in = take(out.w_in.shape)
    out.b_in = take(out.b_in.shape)
    out.task_emb = take(out.task_emb.shape)
    out.w_pref = take(out.w_pref.shape)
    out.b_pref = float(vec[i]); i += 1
    out.w_qual = take(out.w_qual.shape)
    out.b_qual = float(vec[i]); i += 1
    weights = TaskWeights(w_pref=float(vec[i]), w_qual=float(vec[i + 1]))
    return out, weights


def pack_grads(grads: ParamGrads) -> np.ndarray:
    return np.concatenate(
        [
            grads.w_in.ravel(),
            grads.b_in,
            grads.task_emb.ravel(),
            grads.w_pref,
            [grads.b_pref],
            grads.w_qual,
            [grads.b_qual],
            [grads.w_taskweight_pref, grads.w_taskweight_qual],
        ]
    )


def finite_difference_grads(
    params: ModelParams,
    weights: TaskWeights,
    pref_x: np.ndarray,
    pref_y: np.ndarray,
    qual_x: np.ndarray,
    qual_y: np.ndarray,
    epsilon_fd: float = 1e-5,
    coordinates: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the stage-1 loss, coordinate by coordinate.

    Returns (coordinate indices, fd gradient values). This path never
    calls the analytic gradient code, so it stands as an independent
    oracle for gradient_check.
    """
    theta0 = _pack(params, weights)
    idxs = np.arange(theta0.size) if coordinates is None else np.asarray(coordinates)

    def loss_at(theta):
        p, w = _unpack(theta, params)
        loss, _, _ = stage1_loss(p, w, pref_x, pref_y, qual_x, qual_y)
        return loss

    fd = np.zeros(idxs.size)
    for k, j in enumerate(idxs):
        up = theta0.copy()
        up[j] += epsilon_fd
        down = theta0.copy()
        down[j] -= epsilon_fd
        fd[k] = (loss_at(up) - loss_at(down)) / (2.0 * epsilon_fd)
    return idxs, fd


def gradient_check(
    params: ModelParams,
    weights: TaskWeights,
    pref_x: np.ndarray,
    pref_y: np.ndarray,
    qual_x: np.ndarray,
    qual_y: np.ndarray,
    epsilon_fd: float = 1e-5,
    coordinate_limit: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    if epsilon_fd <= 0:
        raise ConfigError("epsilon_fd must be > 0")
    _, grads, _ = stage1_loss(params, weights, pref_x, pref_y, qual_x, qual_y)
    analytic = pack_grads(grads)
    coords = None
    if coordinate_limit is not None and coordinate_limit < analytic.size:
        rng = np.random.default_rng([seed, 17])
        coords = rng.choice(analytic.size, size=coordinate_limit, replace=False)
    idxs, fd = finite_difference_grads(
        params, weights, pref_x, pref_y, qual_x, qual_y, epsilon_fd, coords
    )
    ga = analytic[idxs]
    rel = np.abs(ga - fd) / np.maximum(1e-8, np.abs(ga) + np.abs(fd))
    return float(rel.max())


# ---------------------------------------------------------------------------
# stage-1 training loop
# ---------------------------------------------------------------------------

@dataclass
class TaskBatch:
    x: np.ndarray
    y: np.ndarray


@dataclass
class TrainHistory:
    rows: list[dict] = field(default_factory=list)

    def to_csv(self, path) -> None:
        cols = ["epoch", "train_pref_bce", "train_qual_bce", "val_pref_bce",
                "val_qual_bce", "eta_pref", "eta_qual"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _mean_bce(params: ModelParams, batches: list[TaskBatch], task: int) -> float:
    if not batches:
        return float("nan")
    total, count = 0.0, 0
    for b in batches:
        s = forward(params, b.x, task)
        total += float(np.sum(bce(s, b.y)))
        count += b.x.shape[0]
    return total / count


@dataclass
class TrainResult:
    params: ModelParams
    weights: TaskWeights
    history: TrainHistory
    best_epoch: int


def train_stage1(
    pref_train: list[TaskBatch],
    qual_train: list[TaskBatch],
    pref_val: list[TaskBatch],
    qual_val: list[TaskBatch],
    layout: FeatureLayout,
    config: TrainConfig,
    feature_hash: str = "",
    pref_only: bool = False,
    start_state: dict | None = None,
    on_epoch=None,
) -> TrainResult:
    """Interleaved two-task mini-batch descent with adaptive weighting.

    Each optimization step consumes config.batch_size preference batches
    and one qualification batch (qualification cycles; its labels are much
    sparser). Checkpoint selection uses validation preference loss by
    default, the combined validation loss behind config.select_on.
    """
    config.validate()
    if not pref_train:
        raise DataError("no preference training batches")
    if not pref_only and not qual_train:
        raise DataError("no qualification training batches")

    if start_state is None:
        params = init_params(layout, config.hidden_dim, config.seed, feature_hash)
        fit_normalizer(params, [b.x for b in pref_train] + [b.x for b in qual_train])
        weights = TaskWeights()
        history = TrainHistory()
        first_epoch = 0
        best = {"loss": float("inf"), "epoch": -1,
                "params": params.copy(), "weights": TaskWeights(weights.w_pref, weights.w_qual)}
        bad_epochs = 0
    else:
        params = start_state["params"]
        weights = start_state["weights"]
        history = start_state["history"]
        first_epoch = start_state["epoch"] + 1
        best = start_state["best"]
        bad_epochs = start_state["bad_epochs"]

    n_steps = int(np.ceil(len(pref_train) / config.batch_size))
    # cursor is a pure function of the epoch so resumed runs stay identical
    qual_cursor = n_steps * first_epoch

    for epoch in range(first_epoch, config.epochs):
        order = np.random.default_rng([config.seed, 21, epoch]).permutation(len(pref_train))
        epoch_pref_loss = 0.0
        epoch_qual_loss = 0.0
        qual_steps = 0
        for step in range(n_steps):
            take = order[step * config.batch_size : (step + 1) * config.batch_size]
            px = np.concatenate([pref_train[k].x for k in take])
            py = np.concatenate([pref_train[k].y for k in take])
            if pref_only:
                qx = qy = None
            else:
                qb = qual_train[qual_cursor % len(qual_train)]
                qual_cursor += 1
                qx, qy = qb.x, qb.y
            loss, grads, parts = stage1_loss(params, weights, px, py, qx, qy)
            if not np.isfinite(loss) or loss > 1e3:
                raise NumericalError(
                    f"stage-1 loss diverged at epoch {epoch} step {step}: {loss}",
                    history=history,
                )
            epoch_pref_loss += parts["pref_bce"]
            if not pref_only:
                epoch_qual_loss += parts["qual_bce"]
                qual_steps += 1
            apply_update(params, weights, grads, config.learning_rate, config.grad_clip,
                         config.weight_lr, config.weight_clamp)

        val_pref = _mean_bce(params, pref_val, TASK_PREF)
        val_qual = _mean_bce(params, qual_val, TASK_QUAL)
        history.rows.append(
            {
                "epoch": epoch,
                "train_pref_bce": epoch_pref_loss / n_steps,
                "train_qual_bce": (epoch_qual_loss / qual_steps) if qual_steps else float("nan"),
                "val_pref_bce": val_pref,
                "val_qual_bce": val_qual,
                "eta_pref": weights.eta_pref,
                "eta_qual": weights.eta_qual,
            }
        )

        if config.select_on == "pref" or pref_only:
            select_loss = val_pref
        else:
            select_loss = val_pref + (0.0 if np.isnan(val_qual) else val_qual)
        if np.isnan(select_loss):
            select_loss = epoch_pref_loss / n_steps
        if select_loss < best["loss"] - 1e-12:
            best = {"loss": select_loss, "epoch": epoch, "params": params.copy(),
                    "weights": TaskWeights(weights.w_pref, weights.w_qual)}
            bad_epochs = 0
        else:
            bad_epochs += 1

        if on_epoch is not None:
            on_epoch(
                {
                    "params": params,
                    "weights": weights,
                    "history": history,
                    "epoch": epoch,
                    "best": best,
                    "bad_epochs": bad_epochs,
                }
            )
        if bad_epochs > config.patience:
            break

    return TrainResult(
        params=best["params"],
        weights=best["weights"],
        history=history,
        best_epoch=best["epoch"],
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def encoder_digest(params: ModelParams) -> str:
    """Fingerprint of the shared encoder only; heads excluded on purpose."""
    h = hashlib.blake2b(digest_size=16)
    for arr in (params.w_in, params.b_in):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def _encode_array(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).copy()


def save_checkpoint(path, params: ModelParams, weights: TaskWeights, kind: str,
                    extra: dict | None = None) -> None:
    payload = {
        "format_version": 1,
        "kind": kind,
        "feature_hash": params.feature_hash,
        "layout": params.layout.to_dict(),
        "encoder_digest": encoder_digest(params),
        "arrays": {
            "w_in": _encode_array(params.w_in),
            "b_in": _encode_array(params.b_in),
            "task_emb": _encode_array(params.task_emb),
            "w_pref": _encode_array(params.w_pref),
            "w_qual": _encode_array(params.w_qual),
            "norm_mean": _encode_array(params.norm_mean),
            "norm_std": _encode_array(params.norm_std),
        },
        "scalars": {"b_pref": params.b_pref, "b_qual": params.b_qual},
        "task_weights": {"w_pref": weights.w_pref, "w_qual": weights.w_qual},
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def _params_payload(params: ModelParams) -> dict:
    return {
        "feature_hash": params.feature_hash,
        "layout": params.layout.to_dict(),
        "arrays": {
            "w_in": _encode_array(params.w_in),
            "b_in": _encode_array(params.b_in),
            "task_emb": _encode_array(params.task_emb),
            "w_pref": _encode_array(params.w_pref),
            "w_qual": _encode_array(params.w_qual),
            "norm_mean": _encode_array(params.norm_mean),
            "norm_std": _encode_array(params.norm_std),
        },
        "scalars": {"b_pref": params.b_pref, "b_qual": params.b_qual},
    }


def _params_from_payload(payload: dict) -> ModelParams:
    arrays = payload["arrays"]
    return ModelParams(
        w_in=_decode_array(arrays["w_in"]),
        b_in=_decode_array(arrays["b_in"]),
        task_emb=_decode_array(arrays["task_emb"]),
        w_pref=_decode_array(arrays["w_pref"]),
        b_pref=float(payload["scalars"]["b_pref"]),
        w_qual=_decode_array(arrays["w_qual"]),
        b_qual=float(payload["scalars"]["b_qual"]),
        norm_mean=_decode_array(arrays["norm_mean"]),
        norm_std=_decode_array(arrays["norm_std"]),
        layout=FeatureLayout.from_dict(payload["layout"]),
        feature_hash=payload["feature_hash"],
    )


def save_train_state(path, state: dict) -> None:
    """Epoch snapshot for resumable training; contents mirror the loop state."""
    payload = {
        "format_version": 1,
        "epoch": state["epoch"],
        "bad_epochs": state["bad_epochs"],
        "params": _params_payload(state["params"]),
        "weights": {"w_pref": state["weights"].w_pref, "w_qual": state["weights"].w_qual},
        "history": state["history"].rows,
        "best": {
            "loss": state["best"]["loss"],
            "epoch": state["best"]["epoch"],
            "params": _params_payload(state["best"]["params"]),
            "weights": {
                "w_pref": state["best"]["weights"].w_pref,
                "w_qual": state["best"]["weights"].w_qual,
            },
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_train_state(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise DataError(f"unsupported train-state version in {path}")
    history = TrainHistory(rows=payload["history"])
    best = {
        "loss": float(payload["best"]["loss"]),
        "epoch": int(payload["best"]["epoch"]),
        "params": _params_from_payload(payload["best"]["params"]),
        "weights": TaskWeights(
            w_pref=float(payload["best"]["weights"]["w_pref"]),
            w_qual=float(payload["best"]["weights"]["w_qual"]),
        ),
    }
    return {
        "params": _params_from_payload(payload["params"]),
        "weights": TaskWeights(
            w_pref=float(payload["weights"]["w_pref"]),
            w_qual=float(payload["weights"]["w_qual"]),
        ),
        "history": history,
        "epoch": int(payload["epoch"]),
        "best": best,
        "bad_epochs": int(payload["bad_epochs"]),
    }


@dataclass
class Checkpoint:
    params: ModelParams
    weights: TaskWeights
    kind: str
    extra: dict


def load_checkpoint(path, expect_feature_hash: str | None = None) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise DataError(f"unsupported checkpoint version in {path}")
    feature_hash = payload["feature_hash"]
    if expect_feature_hash is not None and feature_hash != expect_feature_hash:
        raise DataError(
            f"checkpoint feature hash {feature_hash} does not match dataset "
            f"hash {expect_feature_hash}"
        )
    arrays = payload["arrays"]
    params = ModelParams(
        w_in=_decode_array(arrays["w_in"]),
        b_in=_decode_array(arrays["b_in"]),
        task_emb=_decode_array(arrays["task_emb"]),
        w_pref=_decode_array(arrays["w_pref"]),
        b_pref=float(payload["scalars"]["b_pref"]),
        w_qual=_decode_array(arrays["w_qual"]),
        b_qual=float(payload["scalars"]["b_qual"]),
        norm_mean=_decode_array(arrays["norm_mean"]),
        norm_std=_decode_array(arrays["norm_std"]),
        layout=FeatureLayout.from_dict(payload["layout"]),
        feature_hash=feature_hash,
    )
    weights = TaskWeights(
        w_pref=float(payload["task_weights"]["w_pref"]),
        w_qual=float(payload["task_weights"]["w_qual"]),
    )
    if payload["encoder_digest"] != encoder_digest(params):
        raise DataError(f"checkpoint {path} encoder digest mismatch; file corrupted")
    return Checkpoint(params=params, weights=weights, kind=payload["kind"],
                      extra=payload.get("extra", {}))
