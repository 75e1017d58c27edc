"""End-to-end command-line behavior: output, files, exit codes, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from nbrnas import Objective, RelaxedCell, load_benchmark, parse_cell, relax
from nbrnas.bench import multilinear_eval_raw
from nbrnas.cli import main


@pytest.fixture(scope="session")
def space_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "space.json"
    path.write_text(json.dumps({
        "edges": 3,
        "ops": ["zero", "skip", "conv"],
        "zero_op": 0,
        "skip_op": 1,
    }))
    return str(path)


@pytest.fixture(scope="session")
def bench_file(tmp_path_factory, space_file):
    path = tmp_path_factory.mktemp("cli") / "bench.jsonl"
    rc = main(["gen-bench", "--space", space_file, "--out", str(path), "--seed", "1"])
    assert rc == 0
    return str(path)


def run_cli(capsys, argv):
    capsys.readouterr()
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestGenBench:
    def test_writes_loadable_benchmark(self, bench_file):
        b = load_benchmark(bench_file)
        assert b.num_cells == 27
        assert b.datasets == ("search", "transfer")

    def test_byte_identical_across_runs_and_paths(self, capsys, tmp_path, space_file):
        outs = []
        for name in ("one.jsonl.gz", "two.jsonl.gz"):
            path = tmp_path / name
            rc, out, _ = run_cli(capsys, ["gen-bench", "--space", space_file,
                                          "--out", str(path), "--seed", "7"])
            assert rc == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_content(self, capsys, tmp_path, space_file):
        paths = []
        for seed in ("1", "2"):
            path = tmp_path / f"s{seed}.jsonl"
            rc, _, _ = run_cli(capsys, ["gen-bench", "--space", space_file,
                                        "--out", str(path), "--seed", seed])
            assert rc == 0
            paths.append(path.read_bytes())
        assert paths[0] != paths[1]

    def test_bad_fraction_is_usage_error(self, capsys, tmp_path, space_file):
        rc, _, err = run_cli(capsys, ["gen-bench", "--space", space_file,
                                      "--out", str(tmp_path / "x.jsonl"),
                                      "--spike-fraction", "1.5"])
        assert rc == 2
        assert "--spike-fraction" in err

    def test_missing_required_flag_is_usage_error(self, capsys):
        rc, _, err = run_cli(capsys, ["gen-bench"])
        assert rc == 2
        assert "--space" in err or "required" in err

    def test_missing_space_file_is_runtime_error(self, capsys, tmp_path):
        rc, _, err = run_cli(capsys, ["gen-bench", "--space", str(tmp_path / "nope.json"),
                                      "--out", str(tmp_path / "x.jsonl")])
        assert rc == 1
        assert "error:" in err


class TestSearch:
    def test_rs_outputs_and_trace(self, capsys, tmp_path, bench_file):
        trace_path = tmp_path / "trace.json"
        rc, out, _ = run_cli(capsys, ["search", "rs", "--bench", bench_file,
                                      "--budget", "50", "--seed", "3",
                                      "--out", str(trace_path)])
        assert rc == 0
        assert "incumbent " in out and "total_evaluations 50" in out
        assert "val_error " in out and "test_error search" in out
        payload = json.loads(trace_path.read_text())
        assert payload["algorithm"] == "rs"
        assert len(payload["steps"]) == 50

    def test_na_rs_outputs_and_trace(self, capsys, tmp_path, bench_file):
        trace_path = tmp_path / "trace.json"
        rc, out, _ = run_cli(capsys, ["search", "na-rs", "--bench", bench_file,
                                      "--T", "20", "--n-nbr", "5", "--seed", "3",
                                      "--agg", "var:0.5", "--out", str(trace_path)])
        assert rc == 0
        assert "total_evaluations 100" in out
        payload = json.loads(trace_path.read_text())
        assert payload["config"]["agg"] == "var:0.5"

    def test_stdout_deterministic(self, capsys, bench_file):
        argv = ["search", "na-rs", "--bench", bench_file, "--T", "15", "--n-nbr", "6", "--seed", "9"]
        rc1, out1, _ = run_cli(capsys, argv)
        rc2, out2, _ = run_cli(capsys, argv)
        assert rc1 == rc2 == 0
        assert out1 == out2

    def test_threads_do_not_change_bytes(self, capsys, tmp_path, bench_file):
        outs, files = [], []
        for threads, name in (("1", "t1.json"), ("8", "t8.json")):
            path = tmp_path / name
            rc, out, _ = run_cli(capsys, ["search", "na-rs", "--bench", bench_file,
                                          "--T", "20", "--n-nbr", "6", "--seed", "5",
                                          "--threads", threads, "--out", str(path)])
            assert rc == 0
            outs.append(out)
            files.append(path.read_bytes())
        assert outs[0] == outs[1]
        assert files[0] == files[1]

    def test_env_var_thread_default(self, capsys, monkeypatch, bench_file):
        argv = ["search", "na-rs", "--bench", bench_file, "--T", "10", "--n-nbr", "6", "--seed", "2"]
        monkeypatch.setenv("NBRNAS_THREADS", "8")
        _, out_env, _ = run_cli(capsys, argv)
        monkeypatch.delenv("NBRNAS_THREADS")
        _, out_plain, _ = run_cli(capsys, argv)
        assert out_env == out_plain

    def test_missing_bench_is_runtime_error(self, capsys, tmp_path):
        rc, _, err = run_cli(capsys, ["search", "rs", "--bench", str(tmp_path / "no.jsonl")])
        assert rc == 1
        assert "error:" in err

    def test_bad_budget_is_usage_error(self, capsys, bench_file):
        rc, _, err = run_cli(capsys, ["search", "rs", "--bench", bench_file, "--budget", "0"])
        assert rc == 2
        assert "--budget" in err


class TestGradSearch:
    def test_runs_and_writes_trace(self, capsys, tmp_path, bench_file):
        trace_path = tmp_path / "descent.json"
        rc, out, _ = run_cli(capsys, ["grad-search", "--bench", bench_file,
                                      "--T", "30", "--seed", "4", "--out", str(trace_path)])
        assert rc == 0
        assert "final " in out
        payload = json.loads(trace_path.read_text())
        assert len(payload["steps_trace"]) == 30
        assert payload["steps_trace"][0]["weight_update"] == "skipped"

    def test_zero_steps_prints_uniform_argmax(self, capsys, bench_file):
        rc, out, _ = run_cli(capsys, ["grad-search", "--bench", bench_file, "--T", "0"])
        assert rc == 0
        assert "final zero|zero|zero" in out

    def test_median_rejected_as_usage_error(self, capsys, bench_file):
        rc, _, err = run_cli(capsys, ["grad-search", "--bench", bench_file,
                                      "--agg", "median"])
        assert rc == 2
        assert "non-differentiable" in err

    def test_max_aggregation_accepted(self, capsys, bench_file):
        rc, out, _ = run_cli(capsys, ["grad-search", "--bench", bench_file,
                                      "--T", "5", "--agg", "max", "--seed", "1"])
        assert rc == 0
        assert "final " in out

    def test_threads_do_not_change_bytes(self, capsys, bench_file):
        argv = ["grad-search", "--bench", bench_file, "--T", "10", "--seed", "6"]
        _, out1, _ = run_cli(capsys, argv + ["--threads", "1"])
        _, out8, _ = run_cli(capsys, argv + ["--threads", "8"])
        assert out1 == out8


class TestStudies:
    def test_rank_eval_output(self, capsys, tmp_path, bench_file):
        report_path = tmp_path / "rank.json"
        rc, out, _ = run_cli(capsys, ["rank-eval", "--bench", bench_file,
                                      "--samples", "15", "--repeats", "4",
                                      "--seed", "2", "--out", str(report_path)])
        assert rc == 0
        assert "baseline search tau " in out
        assert "mean search tau " in out
        payload = json.loads(report_path.read_text())
        assert payload["repeats"] == 4
        assert set(payload["criteria"]) == {"mean", "median", "max", "var:1"}

    def test_rank_eval_custom_aggs(self, capsys, bench_file):
        rc, out, _ = run_cli(capsys, ["rank-eval", "--bench", bench_file,
                                      "--samples", "10", "--repeats", "2",
                                      "--aggs", "mean,var:2.0"])
        assert rc == 0
        assert "var:2 search tau " in out
        assert "median" not in out

    def test_rank_eval_deterministic(self, capsys, bench_file):
        argv = ["rank-eval", "--bench", bench_file, "--samples", "12", "--repeats", "3"]
        _, out1, _ = run_cli(capsys, argv)
        _, out2, _ = run_cli(capsys, argv)
        assert out1 == out2

    def test_flat_analysis_output(self, capsys, tmp_path, bench_file):
        report_path = tmp_path / "flat.json"
        rc, out, _ = run_cli(capsys, ["flat-analysis", "--bench", bench_file,
                                      "--top-k", "10", "--out", str(report_path)])
        assert rc == 0
        assert "flat size 5 " in out and "sharp size 5 " in out
        payload = json.loads(report_path.read_text())
        assert payload["flat"]["size"] == payload["sharp"]["size"] == 5

    def test_flat_analysis_odd_k_is_runtime_error(self, capsys, bench_file):
        rc, _, err = run_cli(capsys, ["flat-analysis", "--bench", bench_file, "--top-k", "9"])
        assert rc == 1
        assert "even" in err

    def test_top_k_baseline_and_criterion(self, capsys, tmp_path, bench_file):
        report_path = tmp_path / "topk.json"
        rc, out, _ = run_cli(capsys, ["top-k", "--bench", bench_file,
                                      "--top-k", "5", "--out", str(report_path)])
        assert rc == 0
        assert "criterion baseline k 5" in out
        rc, out, _ = run_cli(capsys, ["top-k", "--bench", bench_file,
                                      "--top-k", "5", "--agg", "var:1.0"])
        assert rc == 0
        assert "criterion var:1 k 5" in out
        payload = json.loads(report_path.read_text())
        assert len(payload["cells"]) == 5


class TestLandscape:
    def test_writes_grid_files(self, capsys, tmp_path, bench_file):
        prefix = str(tmp_path / "land")
        rc, out, _ = run_cli(capsys, ["landscape", "--bench", bench_file,
                                      "--cell", "conv|skip|zero", "--grid", "7",
                                      "--out", prefix])
        assert rc == 0
        assert "eigenvalues " in out
        payload = json.loads((tmp_path / "land.json").read_text())
        assert len(payload["values"]) == 7
        csv_lines = (tmp_path / "land.csv").read_text().strip().split("\n")
        assert len(csv_lines) == 8
        assert csv_lines[0].startswith("coef0\\coef1,")

    def test_center_value_matches_blended_cell(self, capsys, tmp_path, bench_file):
        prefix = str(tmp_path / "land2")
        rc, out, _ = run_cli(capsys, ["landscape", "--bench", bench_file,
                                      "--cell", "zero|zero|zero", "--grid", "5",
                                      "--smooth", "0.2", "--out", prefix])
        assert rc == 0
        bench = load_benchmark(bench_file)
        obj = Objective(bench, "search", epoch=-1)
        one_hot = relax(parse_cell("zero|zero|zero", bench.spec), bench.spec).dists
        center = 0.8 * one_hot + 0.2 * np.full_like(one_hot, 1.0 / 3.0)
        expected = multilinear_eval_raw(obj, center)
        line = next(l for l in out.splitlines() if l.startswith("center_value "))
        assert line == f"center_value {expected:.6g}"
        payload = json.loads((tmp_path / "land2.json").read_text())
        assert payload["values"][2][2] == expected

    def test_bad_smooth_is_usage_error(self, capsys, tmp_path, bench_file):
        rc, _, err = run_cli(capsys, ["landscape", "--bench", bench_file,
                                      "--cell", "zero|zero|zero",
                                      "--smooth", "1.5", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "--smooth" in err

    def test_even_grid_is_runtime_error(self, capsys, tmp_path, bench_file):
        rc, _, err = run_cli(capsys, ["landscape", "--bench", bench_file,
                                      "--cell", "zero|zero|zero", "--grid", "6",
                                      "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "odd" in err

    def test_unknown_cell_is_runtime_error(self, capsys, tmp_path, bench_file):
        rc, _, err = run_cli(capsys, ["landscape", "--bench", bench_file,
                                      "--cell", "conv|conv|wat",
                                      "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "error:" in err


class TestHelp:
    @pytest.mark.parametrize("argv", [
        ["--help"],
        ["gen-bench", "--help"],
        ["search", "--help"],
        ["search", "rs", "--help"],
        ["search", "na-rs", "--help"],
        ["grad-search", "--help"],
        ["rank-eval", "--help"],
        ["flat-analysis", "--help"],
        ["top-k", "--help"],
        ["landscape", "--help"],
    ])
    def test_help_exits_zero(self, capsys, argv):
        rc, out, _ = run_cli(capsys, argv)
        assert rc == 0
        assert "usage:" in out

    def test_help_shows_defaults(self, capsys):
        rc, out, _ = run_cli(capsys, ["search", "na-rs", "--help"])
        assert rc == 0
        assert "(default: 100)" in out  # --T
        assert "(default: mean)" in out  # --agg

    def test_no_subcommand_is_usage_error(self, capsys):
        rc, _, _ = run_cli(capsys, [])
        assert rc == 2


class TestConsoleScript:
    def test_installed_entry_point(self, tmp_path, space_file):
        out_path = tmp_path / "b.jsonl"
        proc = subprocess.run(
            [sys.executable, "-m", "nbrnas.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        proc = subprocess.run(
            ["nbrnas", "gen-bench", "--space", space_file, "--out", str(out_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert out_path.exists()
