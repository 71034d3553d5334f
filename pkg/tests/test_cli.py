import csv
import json
import math

import numpy as np
import pytest

from bdsvie.cli import OutputError, main, write_csv, write_json


def _config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_certificate_worked_example(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "lipschitz-demo", "C": 1.0, "alpha": 0.5},
                             "solver": {"theta": 3.0}})
    assert main(["certificate", cfg, "--out-dir", str(tmp_path / "out")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["lambda_factor"] == pytest.approx(0.8333333333333334, abs=0)
    assert printed["max_step"] == 0.75
    assert printed["n_intervals"] == 2
    saved = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert saved == printed


def test_certificate_alpha_one(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "martingale", "alpha": 1.0}})
    assert main(["certificate", cfg]) != 0
    assert "alpha must lie strictly inside (0,1)" in capsys.readouterr().err


def test_certificate_violated_override(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "lipschitz-demo", "C": 1.0}, "solver": {"theta": 1.0}})
    assert main(["certificate", cfg]) != 0
    assert "C/(1-alpha) < theta" in capsys.readouterr().err


def test_certificate_zero_c(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "martingale", "alpha": 0.3}})
    assert main(["certificate", cfg]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n_intervals"] == 1 and printed["lambda_factor"] == 0.3


@pytest.fixture(scope="module")
def martingale_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("solve")
    cfg = _config(root, {"problem": {"catalog": "martingale"}})
    for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["solve", cfg, "--out-dir", str(root / name), "--threads", threads]) == 0
    return root


@pytest.mark.parametrize("other", ["b", "c"])
@pytest.mark.parametrize("fname", ["solution_y.csv", "solution_z.csv", "diagnostics.json"])
def test_solve_is_byte_deterministic(martingale_runs, other, fname):
    assert (martingale_runs / "a" / fname).read_bytes() == (martingale_runs / other / fname).read_bytes()


def test_solve_outputs(martingale_runs):
    with open(martingale_runs / "a" / "solution_y.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "y1_mean", "y1_std"]
    assert len(rows) == 34
    # regression keeps path means, so every row's mean is the sample mean of W_T
    se = float(rows[-1][2]) / math.sqrt(8192)
    for t, mean, std in rows[1:]:
        assert abs(float(mean)) <= 4 * se
    raw = (martingale_runs / "a" / "solution_z.csv").read_bytes()
    assert b"\r" not in raw
    z_rows = raw.decode().strip().split("\n")
    assert z_rows[0] == "t,s,z11_mean,z11_std" and len(z_rows) == 1 + 32 * 33 // 2
    diag = json.loads((martingale_runs / "a" / "diagnostics.json").read_text())
    assert diag["converged"] and "timings" not in diag
    assert diag["certificate"]["n_intervals"] == 1


def test_seed_flag_changes_output(tmp_path):
    cfg = _config(tmp_path, {"problem": {"catalog": "martingale"}, "solver": {"N": 8, "M": 500}})
    main(["solve", cfg, "--out-dir", str(tmp_path / "a")])
    main(["solve", cfg, "--out-dir", str(tmp_path / "b"), "--seed", "7"])
    assert (tmp_path / "a" / "solution_y.csv").read_bytes() != (tmp_path / "b" / "solution_y.csv").read_bytes()


def test_timings_opt_in(tmp_path):
    cfg = _config(tmp_path, {"problem": {"catalog": "martingale"}, "solver": {"N": 8, "M": 500},
                             "output": {"timings": True, "formats": ["json"]}})
    assert main(["solve", cfg, "--out-dir", str(tmp_path / "o")]) == 0
    assert "timings" in json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert not (tmp_path / "o" / "solution_y.csv").exists()


def test_malformed_expression(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"f": "0.5*sin(y1", "g": "0", "xi": "wT", "C": 0.25, "alpha": 0.5}})
    assert main(["solve", cfg, "--out-dir", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert "position 10" in err
    assert not (tmp_path / "o").exists()


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "absent.json")]) != 0


def test_unreachable_tolerance(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "lipschitz-demo"},
                             "solver": {"N": 8, "M": 1000, "tol": 1e-15, "max_iter": 4}})
    assert main(["verify", cfg, "--out-dir", str(tmp_path / "o"), "--checks", "contraction"]) != 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    contraction = report["checks"]["contraction"]
    assert contraction["converged"] is False and not contraction["passed"]
    assert len(contraction["windows"][0]["residuals"]) == 4


def test_checks_subset(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "lipschitz-demo"}})
    assert main(["verify", cfg, "--out-dir", str(tmp_path / "o"), "--checks=certificate"]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert list(report["checks"]) == ["certificate"]
    assert "certificate  PASS" in capsys.readouterr().out


def test_unknown_check(tmp_path, capsys):
    cfg = _config(tmp_path, {"problem": {"catalog": "lipschitz-demo"}})
    assert main(["verify", cfg, "--checks", "certificate,bogus"]) == 2


def test_failing_check_does_not_abort_others(tmp_path, monkeypatch):
    import bdsvie.cli as cli

    def boom(run):
        raise RuntimeError("synthetic failure")

    monkeypatch.setitem(cli.CHECK_FUNCS, "apriori", boom)
    cfg = _config(tmp_path, {"problem": {"catalog": "martingale"}, "solver": {"N": 8, "M": 500}})
    assert main(["verify", cfg, "--out-dir", str(tmp_path / "o"), "--checks", "apriori,certificate"]) == 1
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert "synthetic failure" in report["checks"]["apriori"]["error"]
    assert report["checks"]["certificate"]["passed"]


def test_default_verify_on_catalog(tmp_path):
    cfg = _config(tmp_path, {"problem": {"catalog": "lipschitz-demo"}})
    assert main(["verify", cfg, "--out-dir", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert set(report["checks"]) == {"certificate", "apriori", "uniqueness", "contraction", "oracles"}
    for row in report["checks"]["oracles"]["rows"]:
        assert row["passed"] == (row["converged"] and row["y_error"] <= row["y_max"]
                                 and (row["z_max"] is None or row["z_error"] <= row["z_max"])
                                 and (row["y_sup_max"] is None or row["y_sup_error"] <= row["y_sup_max"]))


def test_writers_reject_non_finite(tmp_path):
    with pytest.raises(OutputError, match="row 2"):
        write_csv(tmp_path / "x.csv", ["a"], [[1.0], [float("nan")]])
    with pytest.raises(OutputError, match="x.json.b"):
        write_json(tmp_path / "x.json", {"a": 1.0, "b": float("inf")})
    write_csv(tmp_path / "ok.csv", ["a", "b"], [[np.float64(0.1), 2]])
    assert (tmp_path / "ok.csv").read_bytes() == b"a,b\n0.1,2.0\n"
