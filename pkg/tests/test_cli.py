import json
import os

import numpy as np
import pytest
import yaml

from dualrank.cli import main
from dualrank.model import load_checkpoint

TINY = {
    "seed": 5,
    "strict": True,
    "plots": True,
    "synth": {
        "n_candidates": 150,
        "n_jobs": 40,
        "negative_count": 8,
        "qual_train_jobs": 26,
        "qual_test_jobs": 12,
        "embedding_dim": 16,
    },
    "train": {
        "epochs": 4,
        "hidden_dim": 16,
        "batch_size": 2,
        "patience": 10,
        "select_on": "combined",
    },
    "align": {"epochs": 2, "epsilon": 0.05, "alpha": 0.001, "beta": 0.1},
    "eval": {"ks": [1, 3, 5]},
    "sweep": {"epsilons": [0.01, 0.05]},
    "compare": {"ks": [1, 2, 3, 5, 10, 20]},
}


def write_config(tmp_path, out_name="run", **patch):
    cfg = json.loads(json.dumps(TINY))
    for key, value in patch.items():
        section = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            section = section.setdefault(p, {})
        section[parts[-1]] = value
    cfg["output_dir"] = str(tmp_path / out_name)
    path = tmp_path / f"{out_name}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path, tmp_path / out_name


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny end-to-end run shared by the read-only CLI tests."""
    tmp_path = tmp_path_factory.mktemp("cli")
    cfg_path, out = write_config(tmp_path)
    assert main(["synth", "--config", str(cfg_path)]) == 0
    assert main(["train", "--config", str(cfg_path)]) == 0
    assert main(["train", "--config", str(cfg_path), "--pref-only"]) == 0
    assert main(["align", "--config", str(cfg_path)]) == 0
    return cfg_path, out


class TestSynth:
    def test_emits_all_dataset_files(self, pipeline):
        _, out = pipeline
        for name in ("candidates.jsonl", "jobs.jsonl", "annotations.jsonl",
                     "pref_batches.jsonl", "qual_batches.jsonl", "run_report.json"):
            assert (out / "dataset" / name).exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_a, out_a = write_config(tmp_path, "a")
        cfg_b, out_b = write_config(tmp_path, "b")
        assert main(["synth", "--config", str(cfg_a)]) == 0
        assert main(["synth", "--config", str(cfg_b)]) == 0
        for name in ("candidates.jsonl", "annotations.jsonl", "pref_batches.jsonl"):
            assert (out_a / "dataset" / name).read_bytes() == \
                (out_b / "dataset" / name).read_bytes()

    def test_dotted_override(self, tmp_path, capsys):
        cfg_path, out = write_config(tmp_path, "ov")
        assert main(["synth", "--config", str(cfg_path),
                     "--synth.n_candidates", "80"]) == 0
        report = json.loads((out / "dataset" / "run_report.json").read_text())
        assert report["counts"]["candidates"] == 80

    def test_unknown_flag_rejected(self, tmp_path):
        cfg_path, _ = write_config(tmp_path, "bad")
        assert main(["synth", "--config", str(cfg_path), "--nonsense", "1"]) == 1

    def test_invalid_config_value_exits_one(self, tmp_path):
        cfg_path, _ = write_config(tmp_path, "badval")
        assert main(["synth", "--config", str(cfg_path),
                     "--synth.hard_negative_floor", "19"]) == 1

    def test_lock_conflict_exits_three(self, tmp_path):
        cfg_path, out = write_config(tmp_path, "locked")
        out.mkdir(parents=True)
        (out / ".lock").write_text("held")
        assert main(["synth", "--config", str(cfg_path)]) == 3

    def test_output_root_env(self, tmp_path, monkeypatch):
        cfg_path, _ = write_config(tmp_path, "envroot")
        monkeypatch.setenv("DUALRANK_OUTPUT_ROOT", str(tmp_path / "rooted"))
        assert main(["synth", "--config", str(cfg_path),
                     "--output-dir", "nested/run"]) == 0
        assert (tmp_path / "rooted" / "nested" / "run" / "dataset"
                / "run_report.json").exists()


class TestTrain:
    def test_outputs(self, pipeline):
        _, out = pipeline
        assert (out / "checkpoints" / "stage1.json").exists()
        assert (out / "reports" / "stage1_history.csv").exists()
        assert (out / "reports" / "stage1_history.png").exists()

    def test_pref_only_checkpoint_keeps_initial_qual_head(self, pipeline):
        _, out = pipeline
        ckpt = load_checkpoint(out / "checkpoints" / "pref_only.json")
        assert np.all(ckpt.params.w_qual == 0.0)
        assert ckpt.params.b_qual == 0.0
        assert ckpt.extra["pref_only"] is True

    def test_resume_matches_straight_run(self, tmp_path):
        cfg_half, out_half = write_config(tmp_path, "half", **{"train.epochs": 2})
        assert main(["synth", "--config", str(cfg_half)]) == 0
        assert main(["train", "--config", str(cfg_half)]) == 0
        # extend the same run to 4 epochs from the saved state
        assert main(["train", "--config", str(cfg_half), "--resume",
                     "--train.epochs", "4"]) == 0
        resumed = load_checkpoint(out_half / "checkpoints" / "stage1.json")

        cfg_full, out_full = write_config(tmp_path, "full4", **{"train.epochs": 4})
        assert main(["synth", "--config", str(cfg_full)]) == 0
        assert main(["train", "--config", str(cfg_full)]) == 0
        straight = load_checkpoint(out_full / "checkpoints" / "stage1.json")
        assert np.array_equal(resumed.params.w_in, straight.params.w_in)
        assert np.array_equal(resumed.params.w_qual, straight.params.w_qual)

    def test_resume_without_state_fails(self, tmp_path):
        cfg_path, _ = write_config(tmp_path, "nostate")
        assert main(["synth", "--config", str(cfg_path)]) == 0
        assert main(["train", "--config", str(cfg_path), "--resume"]) == 1


class TestAlign:
    def test_outputs_and_encoder_freeze(self, pipeline):
        _, out = pipeline
        aligned = load_checkpoint(out / "checkpoints" / "aligned.json")
        stage1 = load_checkpoint(out / "checkpoints" / "stage1.json")
        assert np.array_equal(aligned.params.w_in, stage1.params.w_in)
        assert np.array_equal(aligned.params.b_in, stage1.params.b_in)
        assert "lambda_star" in aligned.extra and "epsilon" in aligned.extra

        trace = (out / "reports" / "lambda_trace.csv").read_text().strip().splitlines()
        report = json.loads((out / "dataset" / "run_report.json").read_text())
        n_train = report["counts"]["preference"]["batches"]["train"]
        assert len(trace) - 1 == n_train * TINY["align"]["epochs"]
        assert (out / "reports" / "lambda_trace.png").exists()

    def test_infeasible_epsilon_exits_two(self, tmp_path):
        cfg_path, out = write_config(
            tmp_path, "infeasible",
            **{"align.epsilon": 1.0, "align.beta": 5.0, "align.epochs": 30,
               "align.lambda_ceiling": 10.0},
        )
        assert main(["synth", "--config", str(cfg_path)]) == 0
        assert main(["train", "--config", str(cfg_path)]) == 0
        assert main(["align", "--config", str(cfg_path)]) == 2
        # the trajectory is still written for diagnosis
        assert (out / "reports" / "lambda_trace.csv").exists()


class TestEval:
    def test_oracle_scorer_gives_perfect_metrics(self, pipeline, capsys):
        cfg_path, out = pipeline
        assert main(["eval", "--config", str(cfg_path), "--task", "both",
                     "--tag", "oracle", "--eval.scorer", "oracle"]) == 0
        rows = (out / "reports" / "metrics_oracle.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 12  # 2 tasks x 2 metrics x 3 ks
        for row in rows[1:]:
            assert ",1.000000," in row

    def test_stage1_eval_and_determinism(self, pipeline):
        cfg_path, out = pipeline
        ckpt = str(out / "checkpoints" / "stage1.json")
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", ckpt,
                     "--tag", "s1"]) == 0
        first = (out / "reports" / "metrics_s1.csv").read_bytes()
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", ckpt,
                     "--tag", "s1"]) == 0
        assert (out / "reports" / "metrics_s1.csv").read_bytes() == first
        assert (out / "reports" / "metrics_s1.png").exists()

    def test_final_scorer_uses_aligned_extras(self, pipeline):
        cfg_path, out = pipeline
        ckpt = str(out / "checkpoints" / "aligned.json")
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", ckpt,
                     "--tag", "aligned", "--eval.scorer", "final"]) == 0
        assert (out / "reports" / "metrics_aligned.csv").exists()

    def test_missing_checkpoint_is_validation_error(self, pipeline):
        cfg_path, _ = pipeline
        assert main(["eval", "--config", str(cfg_path)]) == 1

    def test_feature_hash_mismatch_rejected(self, pipeline, tmp_path):
        cfg_path, out = pipeline
        other_cfg, other_out = write_config(tmp_path, "otherdim",
                                            **{"synth.embedding_dim": 8})
        assert main(["synth", "--config", str(other_cfg)]) == 0
        ckpt = str(out / "checkpoints" / "stage1.json")
        assert main(["eval", "--config", str(other_cfg), "--checkpoint", ckpt]) == 1


class TestSweep:
    def test_sweep_rows_and_figure(self, pipeline):
        cfg_path, out = pipeline
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        rows = (out / "reports" / "sweep.csv").read_text().strip().splitlines()
        assert rows[0] == "epsilon,lambda_star,status,task,K,metric,value"
        # per feasible epsilon: 2 tasks x 2 metrics x 3 ks + 1 rank-1 row
        assert len(rows) - 1 == 2 * 13
        assert (out / "reports" / "sweep.png").exists()

    def test_single_epsilon_sweep_matches_align_plus_eval(self, pipeline):
        cfg_path, out = pipeline
        assert main(["sweep", "--config", str(cfg_path),
                     "--sweep.epsilons", "[0.05]"]) == 0
        sweep_rows = {}
        for line in (out / "reports" / "sweep.csv").read_text().strip().splitlines()[1:]:
            eps, lam, status, task, k, metric, value = line.split(",")
            if metric in ("recall", "ndcg"):
                sweep_rows[(task, k, metric)] = value

        aligned = str(out / "checkpoints" / "aligned.json")
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", aligned,
                     "--tag", "cmp", "--eval.scorer", "final"]) == 0
        for line in (out / "reports" / "metrics_cmp.csv").read_text().strip().splitlines()[1:]:
            task, k, metric, value, _, _ = line.split(",")
            assert sweep_rows[(task, k, metric)] == value

    def test_rescore_mode_on_frozen_scores(self, pipeline):
        cfg_path, out = pipeline
        assert main(["sweep", "--config", str(cfg_path),
                     "--sweep.mode", "rescore",
                     "--sweep.epsilons", "[0.001, 0.01]"]) == 0
        lines = (out / "reports" / "sweep.csv").read_text().strip().splitlines()
        lams = {}
        for line in lines[1:]:
            eps, lam, status, *_ = line.split(",")
            assert status == "ok"
            lams[float(eps)] = float(lam)
        assert lams[0.001] <= lams[0.01]

    def test_infeasible_epsilon_recorded_not_fatal(self, tmp_path):
        cfg_path, out = write_config(
            tmp_path, "sweepinf",
            **{"align.beta": 5.0, "align.epochs": 30, "align.lambda_ceiling": 10.0,
               "sweep.epsilons": [0.01, 1.0]},
        )
        assert main(["synth", "--config", str(cfg_path)]) == 0
        assert main(["train", "--config", str(cfg_path)]) == 0
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        lines = (out / "reports" / "sweep.csv").read_text().strip().splitlines()
        statuses = {line.split(",")[2] for line in lines[1:]}
        assert "infeasible" in statuses and "ok" in statuses


class TestCompare:
    def test_self_comparison_all_ones(self, pipeline):
        cfg_path, out = pipeline
        ckpt = str(out / "checkpoints" / "stage1.json")
        assert main(["compare", "--config", str(cfg_path),
                     "--checkpoint-a", ckpt, "--checkpoint-b", ckpt]) == 0
        lines = (out / "reports" / "agreement.csv").read_text().strip().splitlines()
        assert len(lines) - 1 == len(TINY["compare"]["ks"])
        for line in lines[1:]:
            _, jac, ab, ba = line.split(",")
            assert float(jac) == 1.0 and float(ab) == 1.0 and float(ba) == 1.0
        assert (out / "reports" / "agreement.png").exists()

    def test_two_model_comparison(self, pipeline):
        cfg_path, out = pipeline
        a = str(out / "checkpoints" / "stage1.json")
        b = str(out / "checkpoints" / "pref_only.json")
        assert main(["compare", "--config", str(cfg_path),
                     "--checkpoint-a", a, "--checkpoint-b", b]) == 0
        lines = (out / "reports" / "agreement.csv").read_text().strip().splitlines()
        assert len(lines) - 1 == len(TINY["compare"]["ks"])


class TestPlotCommand:
    def test_replot_from_csv(self, pipeline, tmp_path):
        cfg_path, out = pipeline
        target = tmp_path / "trace_replot.png"
        assert main(["plot", "--kind", "trace",
                     "--input", str(out / "reports" / "lambda_trace.csv"),
                     "--output", str(target)]) == 0
        assert target.exists()

    def test_unknown_kind_rejected(self, tmp_path):
        assert main(["plot", "--kind", "mystery", "--input", "x.csv"]) == 1


class TestGradcheckCommand:
    def test_passes(self, tmp_path):
        cfg_path, _ = write_config(tmp_path, "grad")
        assert main(["gradcheck", "--config", str(cfg_path), "--draws", "10"]) == 0
