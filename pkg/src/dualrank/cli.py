"""Pipeline driver: synth, train, align, eval, sweep, compare, plot.

Every command is a deterministic function of (config file, seed, input
artifacts). Exit codes: 0 success, 1 validation error, 2 numerical
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .data import (
    Dataset,
    ModelScorer,
    build_tables,
    load_dataset,
    oracle_pref_scorer,
    oracle_qual_scorer,
    pref_task_batches,
    qual_task_batches,
)
from .errors import ConfigError, DataError, DualRankError, NumericalError
from .evaluation import (
    agreement_curves,
    evaluate_preference,
    evaluate_qualification,
    format_metric_table,
    write_agreement_csv,
    write_metrics_csv,
)
from .model import (
    TASK_QUAL,
    TaskWeights,
    forward,
    gradient_check,
    init_params,
    fit_normalizer,
    load_checkpoint,
    load_train_state,
    save_checkpoint,
    save_train_state,
    train_stage1,
)
from .plots import PLOT_KINDS, plot_agreement, plot_history, plot_metrics, plot_sweep, plot_trace
from .policy import (
    AlignConfig,
    align_stage2,
    solve_lambda_for_target,
    write_trace,
)
from .evaluation import rank_items
from .schema import FeatureLayout
from .synth import Split, run_pipeline, write_dataset

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

OUTPUT_ROOT_ENV = "DUALRANK_OUTPUT_ROOT"


class _Parser(argparse.ArgumentParser):
    # argparse normally exits(2) on bad usage; route through our codes instead
    def error(self, message):
        raise ConfigError(message)


def _resolve_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


@contextlib.contextmanager
def _lock(outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    lock_path = outdir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OSError(
            f"output directory {outdir} is locked by another run (remove {lock_path} "
            "if that run is dead)"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _parse_overrides(extras: list[str]) -> list[tuple[str, str]]:
    overrides = []
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            path, value = body.split("=", 1)
            i += 1
        else:
            path = body
            if i + 1 >= len(extras):
                raise ConfigError(f"override {token} is missing a value")
            value = extras[i + 1]
            i += 2
        if "." not in path:
            raise ConfigError(f"unknown flag --{path} (overrides use dotted paths)")
        overrides.append((path, value))
    return overrides


def _load_run_config(args, extras) -> RunConfig:
    overrides = _parse_overrides(extras)
    cfg = load_config(args.config, overrides)
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    if getattr(args, "lenient", False):
        cfg.strict = False
    if getattr(args, "no_plots", False):
        cfg.plots = False
    return cfg


def _dataset_dir(cfg: RunConfig) -> Path:
    return _resolve_out(cfg) / "dataset"


def _reports_dir(cfg: RunConfig) -> Path:
    d = _resolve_out(cfg) / "reports"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _checkpoints_dir(cfg: RunConfig) -> Path:
    d = _resolve_out(cfg) / "checkpoints"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_dataset(cfg: RunConfig) -> Dataset:
    dataset_dir = _dataset_dir(cfg)
    if not dataset_dir.exists():
        raise DataError(f"no dataset at {dataset_dir}; run `dualrank synth` first")
    return load_dataset(dataset_dir, strict=cfg.strict)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    out = _resolve_out(cfg)
    with _lock(out):
        result = run_pipeline(cfg.synth)
        write_dataset(result, out / "dataset")
    counts = result.report["counts"]
    pref, qual = counts["preference"], counts["qualification"]
    print(f"candidates: {counts['candidates']}  jobs: {counts['jobs']}")
    print(f"labels: {counts['labels']}")
    print(
        f"k-core retained {pref['retained_candidates']} candidates "
        f"(excluded {pref['excluded_candidates']})"
    )
    print(f"preference batches per split: {pref['batches']}")
    print(f"dropped short-pool batches: {pref['dropped_batches']}")
    print(f"qualification jobs per split: {qual['jobs_with_batches']}")
    print(f"dataset written to {out / 'dataset'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _pretrain_gradient_audit(layout, pref_batches, qual_batches, seed) -> float:
    """Sampled-coordinate finite-difference audit on the real problem size."""
    params = init_params(layout, hidden_dim=8, seed=seed)
    rng = np.random.default_rng([seed, 31])
    params.w_pref = rng.normal(size=8) * 0.3
    params.w_qual = rng.normal(size=8) * 0.3
    px, py = pref_batches[0].x[:16], pref_batches[0].y[:16]
    qx, qy = qual_batches[0].x[:16], qual_batches[0].y[:16]
    fit_normalizer(params, [px, qx])
    return gradient_check(
        params, TaskWeights(0.1, -0.1), px, py, qx, qy,
        coordinate_limit=256, seed=seed,
    )


def cmd_train(cfg: RunConfig, pref_only: bool, resume: bool) -> int:
    dataset = _load_dataset(cfg)
    tables = build_tables(dataset)
    kind = "pref_only" if pref_only else "stage1"
    out = _resolve_out(cfg)

    pref_train = pref_task_batches(tables, dataset.pref_split(Split.Train))
    pref_val = pref_task_batches(tables, dataset.pref_split(Split.Validation))
    qual_train = qual_task_batches(tables, dataset.qual_split(Split.Train))

    audit_qual = qual_train if qual_train else pref_train
    err = _pretrain_gradient_audit(tables.layout, pref_train, audit_qual, cfg.train.seed)
    print(f"pre-training gradient audit: max rel err {err:.3e}")
    if err >= 1e-4:
        raise NumericalError(f"gradient audit failed before training: {err:.3e}")

    with _lock(out):
        state_path = _checkpoints_dir(cfg) / f"{kind}_state.json"
        start_state = None
        if resume:
            if not state_path.exists():
                raise DataError(f"--resume requested but {state_path} does not exist")
            start_state = load_train_state(state_path)
            print(f"resuming from epoch {start_state['epoch'] + 1}")

        def on_epoch(state):
            save_train_state(state_path, state)
            row = state["history"].rows[-1]
            print(
                f"epoch {row['epoch']:3d}  train pref {row['train_pref_bce']:.4f}  "
                f"qual {row['train_qual_bce']:.4f}  val pref {row['val_pref_bce']:.4f}  "
                f"eta ({row['eta_pref']:.3f}, {row['eta_qual']:.3f})"
            )

        try:
            result = train_stage1(
                pref_train,
                qual_train if not pref_only else [],
                pref_val,
                [],
                tables.layout,
                cfg.train,
                feature_hash=dataset.feature_hash,
                pref_only=pref_only,
                start_state=start_state,
                on_epoch=on_epoch,
            )
        except NumericalError as exc:
            if exc.history is not None:
                exc.history.to_csv(_reports_dir(cfg) / f"{kind}_history.csv")
            raise

        ckpt_path = _checkpoints_dir(cfg) / f"{kind}.json"
        save_checkpoint(
            ckpt_path,
            result.params,
            result.weights,
            kind=kind,
            extra={
                "best_epoch": result.best_epoch,
                "train_config": cfg.train.to_dict(),
                "pref_only": pref_only,
            },
        )
        history_csv = _reports_dir(cfg) / f"{kind}_history.csv"
        result.history.to_csv(history_csv)
        if cfg.plots:
            plot_history(history_csv)
    print(f"best epoch {result.best_epoch}; checkpoint written to {ckpt_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------

def cmd_align(cfg: RunConfig, checkpoint: str | None) -> int:
    dataset = _load_dataset(cfg)
    tables = build_tables(dataset)
    out = _resolve_out(cfg)
    ckpt_path = Path(checkpoint) if checkpoint else _checkpoints_dir(cfg) / "stage1.json"
    ckpt = load_checkpoint(ckpt_path, expect_feature_hash=dataset.feature_hash)

    batches = [b.x for b in pref_task_batches(tables, dataset.pref_split(Split.Train))]
    with _lock(out):
        trace_csv = _reports_dir(cfg) / "lambda_trace.csv"
        try:
            policy = align_stage2(ckpt.params, batches, cfg.align)
        except NumericalError as exc:
            if exc.history:
                write_trace(trace_csv, exc.history)
                print(f"lambda trace written to {trace_csv}")
            raise
        aligned_path = _checkpoints_dir(cfg) / "aligned.json"
        save_checkpoint(
            aligned_path,
            policy.params,
            ckpt.weights,
            kind="aligned",
            extra={
                "lambda_star": policy.lambda_star,
                "epsilon": policy.epsilon,
                "align_config": cfg.align.to_dict(),
                "stage1_checkpoint": ckpt_path.name,
                "terminal_mean_s_qual": policy.terminal_mean_s_qual,
                "terminal_mean_s_pref": policy.terminal_mean_s_pref,
            },
        )
        write_trace(trace_csv, policy.trace)
        if cfg.plots:
            plot_trace(trace_csv)
    slack = policy.lambda_star * (policy.terminal_mean_s_qual - policy.epsilon)
    print(
        f"lambda* {policy.lambda_star:.4f}  epsilon {policy.epsilon}  "
        f"terminal mean s_qual {policy.terminal_mean_s_qual:.4f}  "
        f"complementary slackness {slack:+.4f}"
    )
    print(f"aligned checkpoint written to {aligned_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _final_params_for(ckpt, lam_flag, eps_flag):
    lam = ckpt.extra.get("lambda_star") if lam_flag is None else lam_flag
    eps = ckpt.extra.get("epsilon") if eps_flag is None else eps_flag
    if lam is None or eps is None:
        raise ConfigError(
            "final-score evaluation needs an aligned checkpoint or explicit "
            "--lambda-star/--epsilon"
        )
    return float(lam), float(eps)


def cmd_eval(cfg: RunConfig, checkpoint: str | None, task: str, tag: str,
             lam_flag, eps_flag) -> int:
    dataset = _load_dataset(cfg)
    tables = build_tables(dataset)
    split = Split(cfg.eval.split)
    scorer_kind = cfg.eval.scorer
    ks = cfg.eval.ks

    ckpt = None
    if scorer_kind != "oracle":
        if checkpoint is None:
            raise ConfigError("--checkpoint is required unless eval.scorer=oracle")
        ckpt = load_checkpoint(checkpoint, expect_feature_hash=dataset.feature_hash)

    reports = []
    tasks = ("preference", "qualification") if task == "both" else (task,)
    for t in tasks:
        if t == "preference":
            batches = dataset.pref_split(split)
            if not batches:
                raise DataError(f"no preference batches in split {split.value}")
            if scorer_kind == "oracle":
                fn = oracle_pref_scorer(batches)
            else:
                lam, eps = (0.0, 0.0)
                if scorer_kind == "final":
                    lam, eps = _final_params_for(ckpt, lam_flag, eps_flag)
                ms = ModelScorer(tables, ckpt.params, lam, eps)
                fn = {
                    "auto": ms.pref_head,
                    "pref": ms.pref_head,
                    "qual": ms.qual_head_for_candidate,
                    "final": ms.final_for_candidate,
                }[scorer_kind]
            reports.append(evaluate_preference(fn, batches, ks))
        else:
            batches = dataset.qual_split(split)
            if not batches:
                raise DataError(f"no qualification batches in split {split.value}")
            if scorer_kind == "oracle":
                fn = oracle_qual_scorer(batches)
            else:
                lam, eps = (0.0, 0.0)
                if scorer_kind == "final":
                    lam, eps = _final_params_for(ckpt, lam_flag, eps_flag)
                ms = ModelScorer(tables, ckpt.params, lam, eps)
                fn = {
                    "auto": ms.qual_head,
                    "pref": ms.pref_head_for_job,
                    "qual": ms.qual_head,
                    "final": ms.final_for_job,
                }[scorer_kind]
            reports.append(evaluate_qualification(fn, batches, ks))

    out = _resolve_out(cfg)
    with _lock(out):
        name = f"metrics_{tag}.csv" if tag else "metrics.csv"
        csv_path = _reports_dir(cfg) / name
        write_metrics_csv(csv_path, reports, seed=cfg.eval.bootstrap_seed)
        if cfg.plots:
            plot_metrics(csv_path)
    label = scorer_kind if ckpt is None else f"{ckpt.kind}/{scorer_kind}"
    print(format_metric_table(reports, label))
    print(f"metrics written to {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def rank1_mean_qualification(tables, rank_params, lam, eps, yardstick_params, batches
                             ) -> float:
    """Mean frozen-model qualification score of each batch's top-ranked job."""
    vals = []
    for b in batches:
        items = list(b.item_ids())
        ci = tables.cand_index[b.candidate_id]
        ji = [tables.job_index[j] for j in items]
        x = tables.pair_matrix(ci, ji)
        scorer = ModelScorer(tables, rank_params, lam, eps)
        scores = scorer.final_for_candidate(b.candidate_id, items)
        ranked = rank_items(b.candidate_id, items, scores, [b.positive_job_id])
        top_idx = items.index(ranked.item_ids[0])
        vals.append(float(forward(yardstick_params, x[top_idx], TASK_QUAL)))
    return float(np.mean(vals))


def cmd_sweep(cfg: RunConfig, checkpoint: str | None) -> int:
    dataset = _load_dataset(cfg)
    tables = build_tables(dataset)
    out = _resolve_out(cfg)
    ckpt_path = Path(checkpoint) if checkpoint else _checkpoints_dir(cfg) / "stage1.json"
    ckpt = load_checkpoint(ckpt_path, expect_feature_hash=dataset.feature_hash)

    train_feats = [b.x for b in pref_task_batches(tables, dataset.pref_split(Split.Train))]
    test_pref = dataset.pref_split(Split.Test)
    test_qual = dataset.qual_split(Split.Test)
    if not test_pref or not test_qual:
        raise DataError("sweep needs test batches for both tasks")

    # frozen stage-1 scores over each test batch, for the rescore mode
    frozen_scores = None
    if cfg.sweep.mode == "rescore":
        ms = ModelScorer(tables, ckpt.params)
        frozen_scores = [
            (ms.pref_head(b.candidate_id, list(b.item_ids())),
             ms.qual_head_for_candidate(b.candidate_id, list(b.item_ids())))
            for b in test_pref
        ]

    rows = []
    for eps in cfg.sweep.epsilons:
        status = "ok"
        lam = float("nan")
        eval_params = ckpt.params
        if cfg.sweep.mode == "realign":
            acfg = replace(cfg.align, epsilon=float(eps))
            try:
                policy = align_stage2(ckpt.params, train_feats, acfg)
                lam = policy.lambda_star
                eval_params = policy.params
            except NumericalError as exc:
                status = "infeasible"
                lam = exc.history[-1].lam if exc.history else float("nan")
        else:
            try:
                lam = solve_lambda_for_target(
                    [s for s, _ in frozen_scores],
                    [q for _, q in frozen_scores],
                    float(eps),
                    ceiling=cfg.align.lambda_ceiling,
                )
            except NumericalError:
                status = "infeasible"

        if status != "ok":
            rows.append(
                {"epsilon": eps, "lambda_star": lam, "status": status,
                 "task": "", "K": "", "metric": "", "value": ""}
            )
            print(f"epsilon {eps}: infeasible (lambda reached {lam})")
            continue

        scorer = ModelScorer(tables, eval_params, lam, float(eps))
        pref_report = evaluate_preference(scorer.final_for_candidate, test_pref, cfg.eval.ks)
        qual_report = evaluate_qualification(scorer.final_for_job, test_qual, cfg.eval.ks)
        for report in (pref_report, qual_report):
            for r in report.rows(seed=cfg.eval.bootstrap_seed):
                rows.append(
                    {"epsilon": eps, "lambda_star": lam, "status": status,
                     "task": r["task"], "K": r["K"], "metric": r["metric"],
                     "value": f"{r['value']:.6f}"}
                )
        rank1 = rank1_mean_qualification(
            tables, eval_params, lam, float(eps), ckpt.params, test_pref
        )
        rows.append(
            {"epsilon": eps, "lambda_star": lam, "status": status,
             "task": "qualification", "K": 1, "metric": "rank1_mean_s_qual",
             "value": f"{rank1:.6f}"}
        )
        print(f"epsilon {eps}: lambda* {lam:.4f}  rank-1 mean s_qual {rank1:.4f}")

    with _lock(out):
        csv_path = _reports_dir(cfg) / "sweep.csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("epsilon,lambda_star,status,task,K,metric,value\n")
            for r in rows:
                lam_txt = "" if isinstance(r["lambda_star"], float) and np.isnan(r["lambda_star"]) \
                    else f"{float(r['lambda_star']):.6f}"
                fh.write(
                    f"{r['epsilon']},{lam_txt},{r['status']},{r['task']},"
                    f"{r['K']},{r['metric']},{r['value']}\n"
                )
        if cfg.plots and any(r["status"] == "ok" for r in rows):
            plot_sweep(csv_path)
    print(f"sweep written to {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(cfg: RunConfig, checkpoint_a: str, checkpoint_b: str) -> int:
    dataset = _load_dataset(cfg)
    tables = build_tables(dataset)
    out = _resolve_out(cfg)
    ckpt_a = load_checkpoint(checkpoint_a, expect_feature_hash=dataset.feature_hash)
    ckpt_b = load_checkpoint(checkpoint_b, expect_feature_hash=dataset.feature_hash)

    users = sorted({b.candidate_id for b in dataset.pref_split(Split.Test)})
    if not users:
        raise DataError("no test users to compare on")
    job_ids = [j.id_i for j in dataset.jobs]

    def make_scorer(ckpt, kind):
        if kind == "final":
            lam, eps = _final_params_for(ckpt, None, None)
            ms = ModelScorer(tables, ckpt.params, lam, eps)
            return lambda user: ms.final_for_candidate(user, job_ids)
        ms = ModelScorer(tables, ckpt.params)
        return lambda user: ms.pref_head(user, job_ids)

    report = agreement_curves(
        make_scorer(ckpt_a, cfg.compare.scorer_a),
        make_scorer(ckpt_b, cfg.compare.scorer_b),
        users,
        job_ids,
        cfg.compare.ks,
    )
    with _lock(out):
        csv_path = _reports_dir(cfg) / "agreement.csv"
        write_agreement_csv(csv_path, report)
        if cfg.plots:
            plot_agreement(csv_path)
    for row in report.rows():
        print(
            f"K={row['k']:>3}  jaccard {row['jaccard_mean']:.3f}  "
            f"A-top1-in-B {row['contain_a_in_b']:.3f}  B-top1-in-A {row['contain_b_in_a']:.3f}"
        )
    print(f"agreement over {report.user_count} users written to {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck / plot
# ---------------------------------------------------------------------------

def cmd_gradcheck(cfg: RunConfig, draws: int) -> int:
    rng = np.random.default_rng([cfg.seed, 37])
    worst = 0.0
    for _ in range(draws):
        layout = FeatureLayout(base_dim=4, cap_dim=5, con_dim=5,
                               sem_dim=int(rng.integers(6, 12)))
        hidden = int(rng.integers(4, 9))
        params = init_params(layout, hidden, seed=int(rng.integers(1 << 30)))
        params.w_pref = rng.normal(size=hidden) * 0.5
        params.b_pref = float(rng.normal() * 0.3)
        params.w_qual = rng.normal(size=hidden) * 0.5
        params.b_qual = float(rng.normal() * 0.3)
        n_p, n_q = int(rng.integers(3, 9)), int(rng.integers(3, 9))
        px = rng.normal(size=(n_p, layout.dim_total))
        py = (rng.random(n_p) > 0.5).astype(float)
        qx = rng.normal(size=(n_q, layout.dim_total))
        qy = (rng.random(n_q) > 0.5).astype(float)
        fit_normalizer(params, [px, qx])
        weights = TaskWeights(float(rng.normal() * 0.3), float(rng.normal() * 0.3))
        err = gradient_check(params, weights, px, py, qx, qy)
        worst = max(worst, err)
    print(f"gradient check over {draws} draws: max rel err {worst:.3e}")
    if worst >= 1e-4:
        raise NumericalError(f"gradient check failed: {worst:.3e}")
    return EXIT_OK


def cmd_plot(kind: str, input_path: str, output_path: str | None) -> int:
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; choices: {sorted(PLOT_KINDS)}")
    out = PLOT_KINDS[kind](input_path, output_path)
    print(f"figure written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="dualrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--output-dir", help="override output directory")
        p.add_argument("--lenient", action="store_true",
                       help="ignore unknown fields in JSONL inputs")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    common(sub.add_parser("synth", help="generate the synthetic dataset"))

    p_train = sub.add_parser("train", help="stage-1 multi-task training")
    common(p_train)
    p_train.add_argument("--pref-only", action="store_true",
                         help="train with preference supervision only (ablation)")
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the last epoch state")

    p_align = sub.add_parser("align", help="stage-2 constraint alignment")
    common(p_align)
    p_align.add_argument("--checkpoint", help="stage-1 checkpoint (default: run's stage1.json)")

    p_eval = sub.add_parser("eval", help="ranking metrics on a split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint to evaluate")
    p_eval.add_argument("--task", choices=["preference", "qualification", "both"],
                        default="both")
    p_eval.add_argument("--tag", default="", help="suffix for the metrics csv name")
    p_eval.add_argument("--lambda-star", type=float, default=None)
    p_eval.add_argument("--epsilon", type=float, default=None)

    p_sweep = sub.add_parser("sweep", help="controllability sweep over epsilon")
    common(p_sweep)
    p_sweep.add_argument("--checkpoint", help="stage-1 checkpoint (default: run's stage1.json)")

    p_cmp = sub.add_parser("compare", help="ranking agreement between two checkpoints")
    common(p_cmp)
    p_cmp.add_argument("--checkpoint-a", required=True)
    p_cmp.add_argument("--checkpoint-b", required=True)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(p_grad)
    p_grad.add_argument("--draws", type=int, default=50)

    p_plot = sub.add_parser("plot", help="render a figure from a report csv")
    p_plot.add_argument("--kind", required=True, choices=sorted(PLOT_KINDS))
    p_plot.add_argument("--input", required=True)
    p_plot.add_argument("--output", default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        if args.command == "plot":
            if extras:
                raise ConfigError(f"unexpected arguments: {extras}")
            return cmd_plot(args.kind, args.input, args.output)
        cfg = _load_run_config(args, extras)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg, pref_only=args.pref_only, resume=args.resume)
        if args.command == "align":
            return cmd_align(cfg, args.checkpoint)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.task, args.tag,
                            args.lambda_star, args.epsilon)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.checkpoint)
        if args.command == "compare":
            return cmd_compare(cfg, args.checkpoint_a, args.checkpoint_b)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.draws)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
