import shutil
import subprocess
import sys
from importlib import resources

import pytest

from gpnqap.bench import read_csv
from gpnqap.cli import build_parser, main, train_config
from gpnqap.instances import read_instance

DATA = resources.files("gpnqap") / "data"
FAST = ["--hidden", "8", "--layers", "2"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_train_defaults_mirror_table():
    args = build_parser().parse_args(["train", "--task", "tsp", "--n", "50"])
    cfg = train_config(args)
    assert (cfg.epochs, cfg.batch_size, cfg.steps_per_epoch, cfg.lr, cfg.lr_decay) == \
        (10, 150, 2500, 1e-3, 0.96)
    assert cfg.train_n == 50
    qap = train_config(build_parser().parse_args(["train", "--task", "qap"]))
    assert qap.n_for("two_stage_qap") == 49


def test_train_smoke_and_determinism(tmp_path, capsys):
    common = ["train", "--task", "qap", "--n", "12", "--epochs", "2", "--steps", "3",
              "--batch", "4", *FAST]
    for tag in "ab":
        code, out, _ = run(capsys, *common, "--checkpoint", tmp_path / f"{tag}.gpnckpt",
                           "--out-csv", tmp_path / f"{tag}.csv")
        assert code == 0 and f"{tag}.gpnckpt" in out
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.gpnckpt").read_bytes() == (tmp_path / "b.gpnckpt").read_bytes()


def test_train_default_paths_and_bank(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, _ = run(capsys, "train", "--task", "tsp", "--n", "5", "--epochs", "1", "--steps",
                     "2", "--batch", "2", "--lstm", *FAST)
    assert code == 0
    assert (tmp_path / "tsp_n5.gpnckpt").exists() and (tmp_path / "tsp_n5.curve.csv").exists()
    code, _, _ = run(capsys, "train", "--task", "qap", "--n", "5", "--epochs", "1", "--steps",
                     "2", "--batch", "2", "--bank", "--checkpoint", "m.gpnckpt", *FAST)
    assert code == 0
    for name in ("m.dense.gpnckpt", "m.sparse.gpnckpt", "m.curve.dense.csv", "m.curve.sparse.csv"):
        assert (tmp_path / name).exists(), name


def test_gen_then_solve(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--task", "qap", "--n", "7", "--seed", "3", "--out",
                     tmp_path / "g.dat")
    assert code == 0 and read_instance(tmp_path / "g.dat").n == 7
    code, _, _ = run(capsys, "gen", "--task", "tsp", "--n", "6", "--out", tmp_path / "g.tsp")
    assert code == 0 and read_instance(tmp_path / "g.tsp").n == 6
    code, out, _ = run(capsys, "solve", tmp_path / "g.dat", *FAST)
    assert code == 0 and "solution:" in out
    sol = [int(x) for x in out.split("solution:")[1].split()]
    assert sorted(sol) == list(range(1, 8))


def test_solve_greedy_twice_identical(tmp_path, capsys):
    inst = DATA / "qaplib" / "had12.dat"
    for tag in "ab":
        assert run(capsys, "solve", inst, "--best-known", "1652", "--out-csv",
                   tmp_path / f"{tag}.csv", *FAST)[0] == 0
    a, b = read_csv(tmp_path / "a.csv")[0], read_csv(tmp_path / "b.csv")[0]
    a.time_s = b.time_s = 0.0
    assert a == b
    assert a.gap_percent is not None and round(a.zero_ratio, 2) == 15.97


def test_solve_with_checkpoint_and_bank(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run(capsys, "train", "--task", "qap", "--n", "5", "--epochs", "1", "--steps", "1",
        "--batch", "2", "--bank", "--checkpoint", "m.gpnckpt", *FAST)
    inst = DATA / "qaplib" / "chr12a.dat"
    code, out, _ = run(capsys, "solve", inst, "--checkpoint", "m.dense.gpnckpt",
                       "--sparse-checkpoint", "m.sparse.gpnckpt", "--mode", "sample",
                       "--samples", "4")
    assert code == 0 and "chr12a" in out
    code, _, err = run(capsys, "solve", DATA / "tsplib" / "gr17.tsp", "--checkpoint",
                       "m.dense.gpnckpt", "--sparse-checkpoint", "m.sparse.gpnckpt")
    assert code == 1 and "QAP instances only" in err


def test_bench_command(tmp_path, capsys, monkeypatch):
    d = tmp_path / "suite"
    d.mkdir()
    for n in (12, 16, 20):
        shutil.copy(DATA / "qaplib" / f"had{n}.dat", d)
    monkeypatch.setenv("GPN_THREADS", "2")
    code, out, _ = run(capsys, "bench", d, "--methods", "gpn,greedy,random", "--out-csv",
                       tmp_path / "b.csv", *FAST)
    assert code == 0
    rows = read_csv(tmp_path / "b.csv")
    assert len(rows) == 9 and {r.method for r in rows} == {"gpn", "greedy", "random"}
    assert "15.97" in out and "12.11" in out and "9.75" in out
    empty = tmp_path / "empty"
    empty.mkdir()
    code, out, _ = run(capsys, "bench", empty, "--out-csv", tmp_path / "e.csv")
    assert code == 0 and read_csv(tmp_path / "e.csv") == []


def test_exit_codes(tmp_path, capsys, monkeypatch):
    assert run(capsys)[0] == 1
    assert run(capsys, "train", "--task", "knapsack")[0] == 1
    assert run(capsys, "train", "--task", "qap", "--lr-decay", "1.5")[0] == 1
    assert run(capsys, "train", "--task", "tsp", "--bank")[0] == 1
    assert run(capsys, "bench", tmp_path, "--methods", "gpn,magic")[0] == 1
    monkeypatch.setenv("GPN_THREADS", "zero")
    assert run(capsys, "bench", tmp_path)[0] == 1
    monkeypatch.delenv("GPN_THREADS")
    assert run(capsys, "solve", tmp_path / "missing.dat")[0] == 2
    assert run(capsys, "bench", tmp_path / "nowhere")[0] == 2
    bad = tmp_path / "bad.dat"
    bad.write_text("3\n1 2 3\n")
    code, _, err = run(capsys, "solve", bad)
    assert code == 2 and "bad.dat" in err
    (tmp_path / "x.gpnckpt").write_bytes(b"garbage")
    code, _, err = run(capsys, "solve", DATA / "qaplib" / "had12.dat", "--checkpoint",
                       tmp_path / "x.gpnckpt")
    assert code == 2 and "data error" in err


def test_numeric_failure_exit_code(tmp_path, capsys):
    big = tmp_path / "big.dat"
    row = "0 1e200 1e200\n1e200 0 1e200\n1e200 1e200 0\n"
    big.write_text(f"3\n\n{row}\n{row}")
    code, out, err = run(capsys, "solve", big, *FAST)
    assert code == 3 and "numeric failure" in err and "inf" not in out
    assert run(capsys, "bench", tmp_path, "--methods", "greedy")[0] == 3


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "gpnqap.cli", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "gpnqap" in out.stdout
    if shutil.which("gpnqap"):
        assert subprocess.run(["gpnqap", "--help"], capture_output=True).returncode == 0
