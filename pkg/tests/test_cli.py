import json
from pathlib import Path

import pytest

from consym.cli import main
from consym.model import build_model, save_model

GOLDEN = Path(__file__).parent / "golden"


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("command", ["", "gen", "symmetries", "sample", "bench", "oracle"])
def test_help_matches_golden(command, capsys):
    argv = ([command] if command else []) + ["--help"]
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 0
    name = f"help_{command}.txt" if command else "help.txt"
    assert capsys.readouterr().out == (GOLDEN / name).read_text()


@pytest.fixture
def reduction_model(tmp_path):
    m = build_model(["P", "Q", "R", "S"], [(1.5, ["P", "Q"]), (1.5, ["R", "Q", "S"])])
    path = tmp_path / "pqrs.model"
    save_model(m, path)
    return path


def test_symmetries_of_reduced_model(reduction_model, capsys):
    code, out, _ = run(["symmetries", "--model", str(reduction_model), "--context", "R=0",
                        "--names"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# config ")
    assert json.loads(lines[0][len("# config "):])["context"] == "R=0"
    # reduced model {P v Q, Q v S}: P and S are interchangeable, R is fixed
    assert lines[1:] == ["# generators 1", "(P S)"]


def test_symmetries_with_evidence_file(tmp_path, capsys):
    m = build_model(["P", "Q", "R"], [(1.0, ["P", "R"]), (1.0, ["Q"])])
    save_model(m, tmp_path / "m.model")
    (tmp_path / "ev.txt").write_text("R=0\n")
    code, out, _ = run(["symmetries", "--model", str(tmp_path / "m.model"),
                        "--evidence", str(tmp_path / "ev.txt")], capsys)
    assert code == 0 and out.splitlines()[-1] == "(0 1)"


def test_oracle_movie_stationarity(capsys):
    code, out, _ = run(["oracle", "--movie", "--alpha", "0.01", "--stationarity"], capsys)
    assert code == 0
    line = [ln for ln in out.splitlines() if ln.startswith("stationarity residual")][0]
    assert float(line.split()[-1]) < 1e-10


def test_oracle_distribution(capsys):
    code, out, _ = run(["oracle", "--movie", "--distribution"], capsys)
    assert code == 0 and "elimination vs enumeration" in out


def test_sample_is_byte_identical(tmp_path, capsys):
    args = ["sample", "--movie", "--kind", "con_mcmc", "--alpha", "0.1", "--seed", "4",
            "--steps", "5000"]
    assert run(args + ["--out", str(tmp_path / "a.csv")], capsys)[0] == 0
    assert run(args + ["--out", str(tmp_path / "b.csv")], capsys)[0] == 0
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b and a.startswith(b"# config ")


def test_gen_then_sample(tmp_path, capsys):
    prefix = tmp_path / "yo"
    code, _, _ = run(["gen", "--domain", "young_old", "--set", "num_people=3", "--single",
                      "--out", str(prefix)], capsys)
    assert code == 0
    assert (tmp_path / "yo.ctx").read_text() == "context IsYoung\n"
    assert "single_side=true" in (tmp_path / "yo.cfg").read_text()
    code, out, _ = run(["sample", "--model", str(tmp_path / "yo.model"), "--sidecar",
                        str(tmp_path / "yo.ctx"), "--kind", "con_mcmc", "--seed", "1",
                        "--steps", "1000", "--out", "-"], capsys)
    assert code == 0 and "IsYoung" in out


SPEC = """[experiment]
domain = young_old
repeats = 2
steps = 2000
points = 2

[params]
num_people = 2

[chain gibbs]
kind = gibbs

[chain con]
kind = con_mcmc
alpha = 0.01
"""


def test_bench_outputs_are_byte_identical(tmp_path, capsys):
    (tmp_path / "s.ini").write_text(SPEC)
    for out in ("r1", "r2"):
        code, _, _ = run(["bench", "--spec", str(tmp_path / "s.ini"), "--seed", "3",
                          "--out", str(tmp_path / out), "--quiet"], capsys)
        assert code == 0
    for name in ("runs.csv", "summary.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_bench_sweep(tmp_path, capsys):
    (tmp_path / "s.ini").write_text(SPEC)
    code, out, _ = run(["bench", "--spec", str(tmp_path / "s.ini"), "--seed", "3", "--out",
                        str(tmp_path / "sw"), "--sweep", "alpha", "--values", "0.01,0.1",
                        "--quiet"], capsys)
    assert code == 0 and (tmp_path / "sw" / "index.csv").exists()


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["sample", "--movie", "--steps", "10"],
                                  ["sample", "--movie", "--seed", "1", "--out", "-"],
                                  ["symmetries", "--model", "x", "--bogus"],
                                  ["oracle", "--movie"],
                                  ["gen", "--domain", "movie", "--single", "--out", "x"]])
def test_usage_errors_exit_1(argv, capsys):
    assert run(argv, capsys)[0] == 1


def test_input_errors_exit_2(tmp_path, reduction_model, capsys):
    assert run(["symmetries", "--model", str(tmp_path / "missing.model")], capsys)[0] == 2
    bad = tmp_path / "bad.model"
    bad.write_text("var A\n1.0 : B\n")
    assert run(["symmetries", "--model", str(bad)], capsys)[0] == 2
    assert run(["symmetries", "--model", str(reduction_model), "--context", "R=7"], capsys)[0] == 2
    assert run(["sample", "--model", str(reduction_model), "--kind", "con_mcmc", "--alpha", "0.5",
                "--seed", "1", "--steps", "5", "--out", "-"], capsys)[0] == 2


def test_resource_guard_exits_3(tmp_path, capsys):
    m = build_model([f"v{i}" for i in range(13)], [(1.0, ["v0"])])
    save_model(m, tmp_path / "big.model")
    code, _, err = run(["oracle", "--model", str(tmp_path / "big.model"), "--stationarity"], capsys)
    assert code == 3 and "resource limit" in err
