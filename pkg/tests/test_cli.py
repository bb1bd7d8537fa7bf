import csv
import io
import math
import subprocess
import sys

import pytest

from cfshrink.cli import CSV_HEADER, ExperimentGrid, fmt, main, read_config

E1 = math.exp(-1.0)

SINGLE_CELL = ["simulate", "--ell", "8", "--s", "20", "--kappa", "2", "--rho", "0.5",
               "--lambda", "6", "--reps", "200000", "--seed", "7"]


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _table(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestFmt:
    def test_round_trip(self):
        for x in (0.1, 1 / 3, -2.5e-300, 12345.678901234567):
            assert float(fmt(x)) == x

    def test_special(self):
        assert fmt(None) == ""
        assert fmt(True) == "true" and fmt(False) == "false"
        assert fmt(7) == "7"


class TestConfig:
    def test_read(self, tmp_path):
        path = tmp_path / "grid.cfg"
        path.write_text("# grid\nell = 4, 8\nkappa=0.5 # inline\n\nreps = 100\n")
        assert read_config(str(path)) == {"ell": "4, 8", "kappa": "0.5", "reps": "100"}

    def test_bad_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("ell 4\n")
        assert main(["simulate", "--config", str(path)]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_flags_override_file(self, tmp_path, capsys):
        path = tmp_path / "grid.cfg"
        path.write_text("ell = 4, 8\nkappa = 1\nreps = 500\nseed = 3\nvariants = harmonic, james_stein\n")
        code, out, _ = _run(capsys, "simulate", "--config", str(path), "--ell", "6")
        assert code == 0
        rows = _table(out)
        assert {r["ell"] for r in rows} == {"6"}
        assert [r["estimator"] for r in rows] == ["ols", "tsls", "harmonic", "james_stein"]
        assert all(r["lambda"] == "4" and r["reps"] == "500" for r in rows)

    def test_grid_cross_product(self):
        grid = ExperimentGrid.from_settings(
            {"ell": "4,8", "s": "20", "kappa": "0.5,2,8", "rho": "0.5", "p": "0.1,0.2",
             "variants": "harmonic", "beta": "0", "sigma": "1", "tau": "1", "reps": "10",
             "seed": "0", "mode": "rb"}
        )
        cells = list(grid.cells())
        assert len(cells) == 12
        assert sorted({lam for lam, _ in cells}) == pytest.approx([2.0, 4.0])


class TestSimulate:
    def test_header_and_single_cell(self, capsys):
        code, out, _ = _run(capsys, *SINGLE_CELL)
        assert code == 0
        assert out.splitlines()[0] == ",".join(CSV_HEADER)
        rows = _table(out)
        assert [r["estimator"] for r in rows] == ["ols", "tsls", "harmonic"]
        h = rows[2]
        assert h["dominates_2sls"] == "true"
        assert rows[1]["dominates_2sls"] == "false"
        assert rows[0]["oracle_bias"] == ""
        assert abs(float(h["emp_bias"]) - float(h["oracle_bias"])) <= 3 * float(h["mc_se"])

    def test_byte_identical_rerun(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--ell", "4,8", "--kappa", "0.5,2", "--reps", "3000", "--seed", "11"]
        assert main([*args, "--out", str(a)]) == 0
        assert main([*args, "--out", str(b), "--workers", "3"]) == 0
        capsys.readouterr()
        assert a.read_bytes() == b.read_bytes()

    def test_summary_numbers_in_csv(self, tmp_path, capsys):
        path = tmp_path / "out.csv"
        code, out, _ = _run(capsys, "simulate", "--reps", "800", "--out", str(path))
        assert code == 0
        body = path.read_text()
        for line in out.splitlines():
            for token in line.split():
                if "=" in token:
                    assert token.split("=", 1)[1] in body

    @pytest.mark.parametrize("flag", ["--ell", "--kappa", "--rho", "--variants", "--lambda"])
    def test_empty_grid(self, capsys, flag):
        code, _, err = _run(capsys, "simulate", flag, "", "--reps", "10")
        assert code != 0
        assert "empty grid" in err

    @pytest.mark.parametrize(
        "extra",
        [["--reps", "0"], ["--rho", "1.5"], ["--variants", "ridge"], ["--reps", "x"],
         ["--lambda", "1", "--p", "0.1"], ["--kappa", "-1"]],
    )
    def test_invalid_grid(self, capsys, extra):
        code, _, err = _run(capsys, "simulate", "--reps", "10", *extra)
        assert code == 2
        assert err.startswith("error:")

    def test_unwritable_path(self, tmp_path, capsys):
        code, _, err = _run(capsys, "simulate", "--reps", "10", "--out", str(tmp_path / "no" / "x.csv"))
        assert code == 2
        assert "cannot write" in err

    def test_cell_error_is_reported(self, capsys):
        code, out, err = _run(capsys, "simulate", "--reps", "50", "--p", "1e12",
                              "--variants", "james_stein_positive")
        assert code == 3
        assert "undefined" in err
        assert out.splitlines() == [",".join(CSV_HEADER)]

    def test_mode_rb(self, capsys):
        code, out, _ = _run(capsys, "simulate", "--reps", "200", "--mode", "rb")
        assert code == 0
        assert {r["mode"] for r in _table(out)} == {"rao_blackwell"}


class TestOracle:
    def test_example(self, capsys):
        code, out, _ = _run(capsys, "oracle", "--ell", "4", "--kappa", "1")
        assert code == 0
        lines = dict(l.split(" = ") for l in out.splitlines() if " = " in l and not l.startswith("ell"))
        assert float(lines["P"]) == pytest.approx(0.6321206, abs=1e-7)
        assert float(lines["Q"]) == pytest.approx(0.6321206, abs=1e-7)
        assert float(lines["lambda_star"]) == pytest.approx(4.7844, abs=1e-4)
        assert "2,0.36787944117144" in out

    def test_kappa_zero(self, capsys):
        code, out, _ = _run(capsys, "oracle", "--ell", "5", "--kappa", "0", "--lambda", "0,1,9")
        assert code == 0
        assert "P = 1\n" in out and "Q = 0\n" in out and "lambda_star = inf" in out
        assert out.count(",1\n") == 3

    def test_ell_two(self, capsys):
        code, _, err = _run(capsys, "oracle", "--ell", "2", "--kappa", "1")
        assert code == 3
        assert "ell" in err


class TestInvariance:
    def test_pass(self, capsys):
        code, out, _ = _run(capsys, "invariance", "--ell", "3", "--s", "5", "--trials", "1000")
        assert code == 0
        assert out.rstrip().splitlines()[-1].startswith("PASS")
        assert "harmonic" in out and "log_density" in out

    def test_no_trials(self, capsys):
        code, _, err = _run(capsys, "invariance", "--trials", "0")
        assert code != 0
        assert "no trials" in err

    def test_mutation_hook(self, capsys):
        code, out, _ = _run(capsys, "invariance", "--trials", "50", "--shear-only-z")
        assert code != 0
        assert "FAIL" in out


class TestSample:
    def test_canonical(self, capsys):
        code, out, _ = _run(capsys, "sample", "--ell", "3", "--s", "4", "--seed", "2")
        assert code == 0
        rows = out.splitlines()
        assert rows[0] == "block,index,x,y"
        assert len(rows) == 1 + 3 + 4
        assert _run(capsys, "sample", "--ell", "3", "--s", "4", "--seed", "2")[1] == out

    def test_raw(self, tmp_path, capsys):
        path = tmp_path / "raw.csv"
        code, _, err = _run(capsys, "sample", "--kind", "raw", "--n", "30", "--k", "2", "--ell", "3",
                            "--out", str(path), "--canonical-mu")
        assert code == 0
        rows = path.read_text().splitlines()
        assert rows[0] == "y,x,z1,z2,z3,w1,w2"
        assert len(rows) == 31
        assert err.startswith("# mu = ")
        assert len(err.split("=")[1].split(",")) == 3

    def test_raw_too_small(self, capsys):
        code, _, _ = _run(capsys, "sample", "--kind", "raw", "--n", "3", "--k", "2", "--ell", "3")
        assert code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cfshrink", "oracle", "--ell", "4", "--kappa", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert "P = 0.632120558828557" in proc.stdout
