import os
from pathlib import Path

import pytest

from dlb.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("DLB_OUT_DIR", str(tmp_path / "out"))
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def make_data(workdir):
    out = Path(os.environ["DLB_OUT_DIR"])
    assert run("gen-data", "--dist", "lognormal", "--count", 3000, "--seed", 1, "--out", "train.dlbk") == 0
    assert run("gen-data", "--dist", "lognormal", "--count", 3000, "--seed", 2, "--out", "test.dlbk") == 0
    assert run("train", "--data", out / "train.dlbk", "--epochs", 2, "--seed", 7, "--out", "model.json") == 0
    return out


def test_gen_data_respects_env_and_out_dir(workdir):
    assert run("gen-data", "--dist", "normal", "--count", 10, "--seed", 3, "--out", "a.dlbk") == 0
    assert (workdir / "out" / "a.dlbk").stat().st_size == 16 + 80
    assert run("gen-data", "--dist", "normal", "--count", 10, "--seed", 3, "--out", "b.dlbk",
               "--out-dir", workdir / "elsewhere") == 0
    assert (workdir / "elsewhere" / "b.dlbk").exists()


def test_usage_errors(workdir, capsys):
    out = make_data(workdir)
    assert run("eval-balance", "--test", out / "test.dlbk", "--methods", "ch-bkdr,nope") == 2
    assert "unknown method" in capsys.readouterr().err
    assert run("eval-balance", "--test", out / "test.dlbk", "--methods", "ch-bkdr,dlb") == 2
    assert run("eval-balance", "--test", out / "test.dlbk", "--methods", "ch-bkdr,dlb", "--model", "missing.json") == 2
    assert run("train", "--data", "nowhere.dlbk", "--seed", 1) == 2
    assert run("gen-data", "--dist", "normal", "--stddev", -1, "--seed", 1, "--out", "x.dlbk") == 2
    assert run("frobnicate") == 2
    assert run("train", "--data", out / "train.dlbk") == 2  # seed is required


def test_data_errors(workdir):
    (workdir / "bad.dlbk").write_bytes(b"DLBK")
    assert run("train", "--data", "bad.dlbk", "--seed", 1) == 3
    (workdir / "model.json").write_text("{not json")
    out = make_data(workdir)
    assert run("eval-balance", "--test", out / "test.dlbk", "--model", "model.json") == 3


def test_eval_balance_single_repeat_has_no_spread_columns(workdir):
    out = make_data(workdir)
    assert run("eval-balance", "--test", out / "test.dlbk", "--model", out / "model.json", "--servers", 8,
               "--methods", "ch-bkdr,ch-murmur3,dlb", "--repeats", 1) == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0] == "method,mean_std,ratio_vs_dlb,excess_ratio_vs_dlb"
    assert [line.split(",")[0] for line in lines[1:]] == ["ch-bkdr", "ch-murmur3", "dlb"]


def test_simulate_round_robin(workdir, capsys):
    assert run("simulate", "--balancer", "round-robin", "--seed", 1) == 0
    assert "makespan 640.0 s" in capsys.readouterr().out
    assert len((workdir / "out" / "trace.csv").read_text().splitlines()) == 8193


def outputs(directory):
    return {p: (directory / p).read_bytes() for p in sorted(os.listdir(directory)) if p.endswith(".csv")}


def test_every_command_is_byte_reproducible(workdir, monkeypatch):
    runs = []
    for attempt in ("a", "b"):
        monkeypatch.setenv("DLB_OUT_DIR", str(workdir / attempt))
        out = make_data(workdir)
        model = out / "model.json"
        assert run("eval-balance", "--test", out / "test.dlbk", "--model", model, "--servers", 8, "--repeats", 2,
                   "--remove-server", 3) == 0
        assert run("simulate", "--balancer", "dlb", "--model", model, "--dist", "lognormal", "--seed", 7,
                   "--jobs", 512, "--servers", 8) == 0
        assert run("simulate", "--balancer", "chbl", "--hash", "fnv1a", "--seed", 7, "--jobs", 512,
                   "--servers", 8, "--out", "trace_chbl.csv") == 0
        assert run("compare", "--dist", "lognormal", "--model", model, "--seed", 7, "--jobs", 512,
                   "--servers", 8, "--trace-dir", "traces") == 0
        assert run("fig1", "--count", 2048, "--epochs", 2, "--seed", 7) == 0
        files = outputs(out)
        files.update({f"traces/{k}": v for k, v in outputs(out / "traces").items()})
        files["model.json"] = model.read_bytes()
        files["train.dlbk"] = (out / "train.dlbk").read_bytes()
        runs.append(files)
    assert set(runs[0]) >= {"bins.csv", "compare.csv", "migrations.csv", "sim_compare.csv", "spread.csv",
                            "trace.csv", "trace_chbl.csv", "train_loss.csv"}
    assert len([k for k in runs[0] if k.startswith("traces/")]) == 7
    assert runs[0] == runs[1]
