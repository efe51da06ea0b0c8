import csv
import io

import pytest

from pvchart.cli import run


def invoke(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bounds(capsys):
    assert invoke(capsys, "bounds", "--alpha", "0.01", "--k", "5")[:2] == (0, "250.5\n")
    assert invoke(capsys, "bounds", "--alpha", "0.05", "--conditional")[1] == "20\n"


def test_simulate_grid_and_logging(capsys):
    code, out, err = invoke(capsys, "simulate", "--chart", "raw,qbar", "--lambda", "0.9", "--r", "1",
                            "--alpha", "0.05,0.1", "--reps", "30", "--seed", "4")
    assert code == 0
    table = rows(out)
    assert len(table) == 4
    assert {r["chart"] for r in table} == {"raw", "qbar"}
    assert table[0]["bound"] == "20"
    assert "seed: 4" in err
    again = invoke(capsys, "simulate", "--chart", "raw,qbar", "--lambda", "0.9", "--r", "1",
                   "--alpha", "0.05,0.1", "--reps", "30", "--seed", "4")[1]
    assert again == out


@pytest.mark.parametrize(
    "argv,needle",
    [
        (("simulate", "--chart", "qbar", "--lambda", "0.9", "--r", "0.5"), "r >= 1"),
        (("simulate", "--chart", "q"), "--lambda"),
        (("simulate", "--scenario", "iid-uniform", "--n0", "20"), "--n0"),
        (("simulate", "--scenario", "ks", "--n0", "5"), "n0"),
        (("simulate", "--scenario", "mv-cauchy"), "--n0"),
        (("simulate", "--alpha", "0"), "alpha"),
        (("density", "--lambda", "0.5", "--t", "40"), "cap"),
        (("localize",), "--input"),
    ],
)
def test_invalid_combinations_fail_fast(capsys, argv, needle):
    code, out, err = invoke(capsys, *argv)
    assert code != 0
    assert out == ""
    assert needle in err.strip().splitlines()[-1]


def test_argparse_errors_are_nonzero(capsys):
    assert invoke(capsys, "simulate", "--scenario", "bogus")[0] == 2
    assert invoke(capsys)[0] == 2


def test_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# ks run\nscenario = ks\nn0 = 20\nreps = 5\nalpha = 0.05,0.1\nseed = 9\n")
    code, out, err = invoke(capsys, "--config", str(cfg), "simulate", "--reps", "3")
    assert code == 0
    table = rows(out)
    assert [r["reps"] for r in table] == ["3", "3"]
    assert table[0]["n0"] == "20" and table[0]["ks_mode"] == "auto"
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    code, _, err = invoke(capsys, "--config", str(bad), "simulate")
    assert code == 2 and "nonsense" in err


def test_density(capsys, tmp_path):
    code, out, _ = invoke(capsys, "density", "--lambda", "0.5", "--t", "2", "--grid", "5", "--plot-data")
    assert code == 0
    table = rows(out)
    assert list(table[0]) == ["u", "pdf", "cdf", "uniform_cdf"]
    assert table[2]["cdf"] == "0.5"


def test_localize(tmp_path, capsys):
    src = tmp_path / "p.csv"
    src.write_text("time,p_le_1,p_ge_1,p_le_2,p_ge_2\n1,0.4,0.6,0.5,0.5\n2,0.0001,0.9999,0.3,0.7\n3,0.9,0.0001,0.5,0.5\n")
    code, out, _ = invoke(capsys, "localize", "--input", str(src))
    assert code == 0
    table = rows(out)
    assert [r["alarm"] for r in table] == ["false", "true", "true"]
    assert table[1]["directions"] == "1<="
    assert table[2]["directions"] == "1>="
    out = invoke(capsys, "localize", "--input", str(src), "--stop-at-first")[1]
    assert len(rows(out)) == 2


def test_multivariate_simulation(capsys):
    code, out, _ = invoke(capsys, "simulate", "--scenario", "mv-normal", "--delta", "1",
                          "--reps", "20", "--fwe-reps", "200")
    assert code == 0
    row = rows(out)[0]
    assert row["scenario"] == "mv-normal" and float(row["mean"]) >= 1


def test_geometric_example_and_byte_identical_files(tmp_path, capsys):
    argv = ["simulate", "--scenario", "iid-uniform", "--chart", "raw", "--alpha", "0.05", "--k", "1",
            "--reps", "100000", "--seed", "7"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert invoke(capsys, *argv, "--out", str(first))[0] == 0
    assert invoke(capsys, *argv, "--out", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()
    row = rows(first.read_text())[0]
    assert abs(float(row["mean"]) - 20) <= 3 * float(row["st_err"])
