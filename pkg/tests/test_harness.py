import io

import numpy as np
import pytest

from neurocomp import harness as hz


def test_parse_grid():
    assert hz.parse_grid("0.05:0.30:0.05") == [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
    assert hz.parse_grid("1:12:1") == [float(k) for k in range(1, 13)]
    assert hz.parse_grid("2:2:1") == [2.0]
    for bad in ("1:2", "a:2:1", "0:1:0", "3:1:1"):
        with pytest.raises(hz.ConfigError):
            hz.parse_grid(bad)


def test_substreams_are_reproducible_and_distinct():
    a = hz.substream(3, 0).uniform(size=5)
    assert np.array_equal(a, hz.substream(3, 0).uniform(size=5))
    assert not np.array_equal(a, hz.substream(3, 1).uniform(size=5))
    assert not np.array_equal(a, hz.substream(4, 0).uniform(size=5))


def test_config_precedence(tmp_path):
    exp = hz.EXPERIMENTS["cover"]
    cfg_file = tmp_path / "c.cfg"
    cfg_file.write_text("# comment\nm = 3\ntrials = 40   # trailing\np_grid = 1:4:1\n")
    values = hz.read_config_file(cfg_file)
    cfg = hz.resolve_config(exp, values, {"trials": "25"})
    assert cfg["m"] == 3 and cfg["trials"] == 25 and cfg["p-grid"] == "1:4:1" and cfg["seed"] == 0
    with pytest.raises(hz.ConfigError):
        hz.resolve_config(exp, {}, {"bogus": "1"})
    with pytest.raises(hz.ConfigError):
        hz.resolve_config(exp, {}, {"m": "four"})
    (tmp_path / "bad.cfg").write_text("m 3\n")
    with pytest.raises(hz.ConfigError):
        hz.read_config_file(tmp_path / "bad.cfg")


def test_cli_writes_deterministic_csv(tmp_path, capsys):
    args = ["cover", "--m", "2", "--p-grid", "1:5:1", "--trials=30", "--seed", "5"]
    assert hz.main(args + ["--output", str(tmp_path / "a.csv")]) == 0
    assert hz.main(args + ["--output", str(tmp_path / "b.csv")]) == 0
    a, b = (tmp_path / "a.csv").read_text(), (tmp_path / "b.csv").read_text()
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "# experiment = cover"
    header = next(ln for ln in lines if not ln.startswith("#"))
    assert header == "p,m,P_exact,P_float,P_mc,stderr"
    rows = [ln.split(",") for ln in lines if ln and not ln.startswith("#")][1:]
    assert [r[2] for r in rows] == ["1", "1", "3/4", "1/2", "5/16"]
    footer = next(ln for ln in lines if ln.startswith("# expected_max_separable = "))
    assert float(footer.split("=")[1]) == pytest.approx(4.0, abs=1e-9)
    assert "wrote" in capsys.readouterr().out


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(hz.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    assert hz.main(["rbf-xor", "--steps", "2000"]) == 0
    text = (tmp_path / "out" / "rbf-xor.csv").read_text()
    signs = [ln.rsplit(",", 1)[1] for ln in text.splitlines() if ln and not ln.startswith("#")][1:]
    assert signs == ["-1", "1", "1", "-1"]


def test_cli_errors_exit_with_two(tmp_path, capsys):
    assert hz.main(["no-such-experiment"]) == 2
    assert hz.main(["cover", "--colour", "red"]) == 2
    assert hz.main(["cover", "--m"]) == 2
    assert hz.main(["cover", "stray"]) == 2
    assert hz.main([]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert hz.main(["cover", "--trials", "5", "--output", str(blocker / "x.csv")]) == 2
    err = capsys.readouterr().err
    assert "unknown experiment" in err and "unknown key" in err and "cannot write" in err


def test_list_names_every_experiment(capsys):
    assert hz.main(["--list"]) == 0
    out = capsys.readouterr().out
    for name in hz.EXPERIMENTS:
        assert f"{name}:" in out


def test_check_without_criteria_runs_nothing(tmp_path):
    buf = io.StringIO()
    assert hz.run_checks((), out=buf) == [] and buf.getvalue() == ""
    assert hz.main(["rbf-xor", "--steps", "100", "--output", str(tmp_path / "r.csv"), "--check"]) == 0


def test_every_criterion_is_registered():
    assert sorted(hz.CRITERIA) == list(range(1, 15))
    covered = {n for exp in hz.EXPERIMENTS.values() for n in exp.criteria}
    assert covered <= set(hz.CRITERIA)


def test_outcome_line():
    line = hz.Outcome(3, "example", False, "detail", 1.25).line()
    assert line == "[FAIL]  3 example: detail (1.2 s)"
