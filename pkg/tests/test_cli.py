import json
import subprocess
import sys

import pytest

from lethal_dose.cli import build_parser, fmt, run

SUBCOMMANDS = ["accuracy", "min-n", "attack", "sweep", "dpa-curve", "certify-check", "tv", "couple"]


def test_bound_only_memorization(capsys):
    assert run(["min-n", "--task", "memorization", "--m", "100", "--k", "10", "--tau", "0.9", "--bound-only"]) == 0
    assert capsys.readouterr().out.strip() == "218.62"


def test_bound_only_bijection(capsys):
    assert run(["min-n", "--task", "bijection", "--k", "10", "--tau", "0.9", "--bound-only"]) == 0
    assert capsys.readouterr().out.strip() == "7.21"


def test_bound_only_rejects_tau(capsys):
    assert run(["min-n", "--task", "bijection", "--k", "10", "--tau", "0.4", "--bound-only"]) == 1
    assert "--tau" in capsys.readouterr().err


def test_tv_gaussian(capsys):
    assert run(["tv", "--gaussian", "--dist", "2.0"]) == 0
    assert capsys.readouterr().out.strip() == "0.682689"


def test_tv_finite(capsys):
    assert run(["tv", "--p", "[0.5,0.5]", "--q", "[0.8,0.2]"]) == 0
    assert capsys.readouterr().out.strip() == "0.300000"


def test_tv_bad_distribution(capsys):
    assert run(["tv", "--p", "[0.5,0.6]", "--q", "[0.8,0.2]"]) == 1
    assert "--p" in capsys.readouterr().err


@pytest.mark.parametrize("argv, flag", [
    (["nonsense"], "invalid choice"),
    (["tv", "--gaussian", "--bogus", "1"], "--bogus"),
    (["sweep", "--task", "bijection", "--grid", "4,x", "--tau", "0.75", "--N", "10"], "--grid"),
    (["accuracy", "--task", "bijection", "--k", "4", "--n", "1", "--trials", "10"], "--trials"),
    (["accuracy", "--task", "memorization", "--k", "4", "--n", "1"], "--m"),
    (["dpa-curve", "--task", "gaussian", "--k", "2", "--d", "2", "--k-part", "0", "--N", "10"], "--k-part"),
    (["attack", "--task", "bijection", "--k", "4", "--N", "10", "--threads", "0"], "--threads"),
])
def test_usage_errors(argv, flag, capsys):
    assert run(argv) == 1
    assert flag in capsys.readouterr().err


def test_no_subcommand():
    assert run([]) == 1


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_on_every_subcommand(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        run([cmd, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in text


def test_runtime_failure_exit_code(capsys):
    argv = ["min-n", "--task", "memorization", "--m", "100", "--k", "2", "--tau", "0.999", "--trials", "30",
            "--cap", "4"]
    assert run(argv) == 2
    assert "SearchError" in capsys.readouterr().err


def test_equidistant_gaussian_query_is_usage_error(capsys):
    argv = ["attack", "--task", "gaussian", "--centers", "[[-1],[1]]", "--x0", "[0]", "--N", "10", "--trials", "2"]
    assert run(argv) == 1
    assert "--x0" in capsys.readouterr().err


def test_certify_check(tmp_path, capsys):
    out = tmp_path / "check.csv"
    argv = ["certify-check", "--task", "memorization", "--m", "3", "--k", "2", "--n", "6", "--k-part", "3",
            "--t-max", "2", "--seed", "1", "--out", str(out)]
    assert run(argv) == 0
    lines = out.read_bytes().split(b"\r\n")
    assert lines[0] == b"x0,prediction,certified_size,raw_bound,checked_radius,datasets_checked,ok"
    assert len([ln for ln in lines if ln]) == 4


def test_csv_and_manifest(tmp_path):
    out = tmp_path / "acc.csv"
    argv = ["accuracy", "--task", "memorization", "--m", "10", "--k", "3", "--n", "5", "--trials", "100",
            "--seed", "3", "--out", str(out)]
    assert run(argv) == 0
    header, row = out.read_text().splitlines()
    assert header == "task,k,m,d,n,trials,p_hat,ci_lo,ci_hi"
    assert row.startswith("memorization,3,10,,5,100,")
    manifest = json.loads((tmp_path / "acc.csv.manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["command"] == "accuracy"
    assert len(manifest["input_hash"]) == 64
    assert {"config", "version", "wall_time"} <= set(manifest)


def test_same_seed_same_bytes_any_threads(tmp_path):
    base = ["attack", "--task", "memorization", "--m", "20", "--k", "4", "--N", "100", "--trials", "50",
            "--seed", "5"]
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    assert run(base + ["--threads", "1", "--out", str(a)]) == 0
    assert run(base + ["--threads", "4", "--out", str(b)]) == 0
    assert run(base + ["--threads", "2", "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_different_seed_differs(tmp_path):
    base = ["accuracy", "--task", "memorization", "--m", "20", "--k", "4", "--n", "10", "--trials", "200"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(base + ["--seed", "1", "--out", str(a)])
    run(base + ["--seed", "2", "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_env_threads(tmp_path, monkeypatch):
    base = ["dpa-curve", "--task", "gaussian", "--centers", "[[0,0],[6,0]]", "--k-part", "5,10", "--N", "200",
            "--queries", "40", "--seed", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("LDC_THREADS", "1")
    assert run(base + ["--out", str(a)]) == 0
    monkeypatch.setenv("LDC_THREADS", "3")
    assert run(base + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "memorization", "m": 100, "k": 10, "tau": 0.9, "bound_only": True}))
    assert run(["min-n", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.strip() == "218.62"
    # explicit flags override the file
    assert run(["min-n", "--config", str(cfg), "--tau", "0.8"]) == 0
    assert capsys.readouterr().out.strip() != "218.62"


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run(["tv", "--config", str(cfg), "--gaussian", "--dist", "1"]) == 1
    assert "--config" in capsys.readouterr().err


def test_sweep_rows(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    argv = ["sweep", "--task", "bijection", "--grid", "4,8", "--tau", "0.75", "--N", "2000", "--trials", "200",
            "--seed", "7", "--out", str(out)]
    assert run(argv) == 0
    assert "max/min product ratio" in capsys.readouterr().out
    assert len(out.read_text().splitlines()) == 3


def test_couple_finite(tmp_path, capsys):
    out = tmp_path / "couple.csv"
    assert run(["couple", "--p", "[0.5,0.5]", "--q", "[0.8,0.2]", "--draws", "2000", "--out", str(out)]) == 0
    assert "tv=0.300000" in capsys.readouterr().out
    assert out.read_text().splitlines()[0] == "statistic,value"


def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(True) == "1"
    assert fmt(7) == "7"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lethal_dose", "tv", "--gaussian", "--dist", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.682689"
