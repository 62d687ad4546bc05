import csv
import json

import numpy as np
import pytest

from ellrisk.cli import main, read_returns_csv
from ellrisk.errors import ParseError

from .conftest import MU6, SIGMA6

SIGMA6_ARG = ";".join(",".join(str(v) for v in row) for row in SIGMA6)
MU6_ARG = ",".join(str(v) for v in MU6)


def _write_csv(path, rows, header=("a", "b")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_two_points(tmp_path, capsys):
    src = tmp_path / "r.csv"
    _write_csv(src, [[0.0, 0.0], [2.0, 2.0]])
    code, out, _ = _run(capsys, "fit", "--family", "normal", "--input", str(src))
    # two identical columns give a singular scale matrix
    assert code == 2
    _write_csv(src, [[0.0, 1.0], [2.0, 0.0], [1.0, 3.0]])
    code, out, _ = _run(capsys, "fit", "--family", "normal", "--input", str(src))
    assert code == 0
    model = json.loads(out)
    assert np.allclose(model["mu"], [1.0, 4 / 3])
    x = np.array([[0.0, 1.0], [2.0, 0.0], [1.0, 3.0]])
    assert np.allclose(model["sigma"], np.cov(x.T, bias=True))


def test_fit_recovers_parameters(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x = rng.multivariate_normal(MU6, SIGMA6, size=200_000)
    src = tmp_path / "r.csv"
    _write_csv(src, x, header=("x1", "x2", "x3"))
    out_path = tmp_path / "m.json"
    assert main(["fit", "--input", str(src), "--output", str(out_path)]) == 0
    model = json.loads(out_path.read_text())
    assert np.allclose(model["mu"], MU6, atol=0.02)
    assert np.allclose(model["sigma"], SIGMA6, atol=0.05)


def test_ragged_csv_names_row(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ParseError, match="row 3"):
        read_returns_csv(str(src))
    code, _, err = _run(capsys, "fit", "--input", str(src))
    assert code == 2
    assert json.loads(err)["error"] == "ParseError"


def test_non_numeric_cell(tmp_path):
    src = tmp_path / "bad.csv"
    src.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ParseError, match="row 3, column 2"):
        read_returns_csv(str(src))


def test_measure_schema_and_reproducibility(tmp_path, capsys):
    args = ["measure", "--mu", "1,2,3", "--sigma", "1,0.2,0;0.2,2,0.1;0,0.1,1", "--family", "logistic",
            "--p", "0.3", "--q", "0.7", "--measures", "mdte,mdtcov,dte", "--seed", "4"]
    code, out1, _ = _run(capsys, *args)
    assert code == 0
    code, out2, _ = _run(capsys, *args)
    assert out1 == out2
    rep = json.loads(out1)
    assert set(rep) == {"band_prob", "results"}
    for rec in rep["results"]:
        assert set(rec) == {"measure", "value", "error_estimate", "band", "family", "seed"}
        assert rec["seed"] == 4


def test_measure_model_file(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"mu": [0.0], "sigma": [[1.0]], "family": "t", "shape": 5}))
    code, out, _ = _run(capsys, "measure", "--model", str(path), "--p", "0.2", "--q", "0.8")
    assert code == 0
    assert json.loads(out)["results"][0]["value"] == pytest.approx([0.0], abs=1e-12)


def test_measure_band_inverted_by_standardization(capsys):
    code, _, err = _run(capsys, "measure", "--mu", MU6_ARG, "--sigma", SIGMA6_ARG, "--p", "0.1", "--q", "0.8")
    assert code == 2
    assert json.loads(err)["error"] == "BandInvertedAfterStandardization"


def test_measure_inverted_band_is_domain_error(capsys):
    code, _, err = _run(capsys, "measure", "--mu", "0,0", "--sigma", "1,0;0,1", "--p", "0.9", "--q", "0.1")
    assert code == 2
    assert json.loads(err)["error"] == "InvalidBand"


def test_usage_errors(capsys):
    assert _run(capsys, "measure", "--mu", "0", "--sigma", "1", "--p", "0.1", "--q", "0.9",
                "--measures", "bogus")[0] == 1
    assert _run(capsys, "measure", "--mu", "0", "--sigma", "1", "--p", "0.1", "--q", "0.9",
                "--family", "cauchy")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["measure"])
    assert exc.value.code == 1


def _curve(capsys, *extra):
    code, out, _ = _run(capsys, "curve", "--mu", MU6_ARG, "--sigma", SIGMA6_ARG, "--component", "1", *extra)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "parameter,DTE,DTV"
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def test_curve_increasing_in_q(capsys):
    rows = _curve(capsys, "--fix", "p=0.05", "--sweep", "q=0.1:0.95:0.05")
    assert rows.shape == (18, 3)
    assert np.all(np.diff(rows[:, 1]) > 0)


def test_curve_symmetric_sweep(capsys):
    rows = _curve(capsys, "--fix", "q=1-p", "--sweep", "p=0.05:0.45:0.05")
    assert np.allclose(rows[:, 1], 1.2, atol=1e-6)
    assert np.all(np.diff(rows[:, 2]) < 0)


def test_fit_then_measure_converges(tmp_path, capsys):
    rng = np.random.default_rng(1)
    x = rng.multivariate_normal([0.0, 1.0], [[1.0, 0.0], [0.0, 4.0]], size=100_000)
    src = tmp_path / "r.csv"
    _write_csv(src, x)
    model = tmp_path / "m.json"
    assert main(["fit", "--input", str(src), "--output", str(model)]) == 0
    code, out, _ = _run(capsys, "measure", "--model", str(model), "--p", "0.05", "--q", "1",
                        "--measures", "mdte")
    assert code == 0
    got = json.loads(out)["results"][0]["value"]
    # exact: mu + sigma * phi(z_.05) / 0.95
    from scipy import stats
    shift = stats.norm.pdf(stats.norm.ppf(0.05)) / 0.95
    assert np.allclose(got, [shift, 1.0 + 2.0 * shift], atol=0.02)
