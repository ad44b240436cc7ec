import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hubreg import __version__
from hubreg.cli import main
from hubreg.huber import Dataset
from hubreg.io import FormatError, dataset_to_csv, parse_dataset, parse_vector, read_vector, vector_to_csv

floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=floats), st.data())
def test_dataset_round_trip(X, data):
    y = data.draw(arrays(np.float64, X.shape[0], elements=floats))
    back = parse_dataset(dataset_to_csv(Dataset(X, y), ["a comment"]))
    assert back.X.tobytes() == X.tobytes() and back.y.tobytes() == y.tobytes()


@given(arrays(np.float64, st.integers(0, 8), elements=floats))
def test_vector_round_trip(v):
    assert parse_vector(vector_to_csv(v)).tobytes() == v.tobytes()


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("y,x2\n1,2\n", 1),
    ("# c\ny,x1\n1,2\n3\n", 4),
    ("y,x1\n1,abc\n", 2),
    ("y,x1\n1,inf\n", 2),
    ("y,x1\n", 1),
])
def test_dataset_errors_carry_line_numbers(text, line):
    with pytest.raises(FormatError, match=f"line {line}:"):
        parse_dataset(text)


def test_vector_errors():
    with pytest.raises(FormatError, match="line 1:"):
        parse_vector("i,v\n")
    with pytest.raises(FormatError, match="line 3: index"):
        parse_vector("index,value\n0,1.0\n2,1.0\n")


@pytest.fixture
def orthogonal_file(tmp_path, orthogonal_design):
    data, _ = orthogonal_design
    path = tmp_path / "orth.csv"
    path.write_text(dataset_to_csv(data))
    return path


def test_fit_orthogonal_fixture(orthogonal_file, tmp_path, capsys):
    out = tmp_path / "beta.csv"
    code = main(["fit", str(orthogonal_file), "--lambda-o", "100", "--lambda-s", "0.6", "--out", str(out)])
    assert code == 0
    np.testing.assert_allclose(read_vector(out), [1.4, 0, 0, 0], atol=1e-8)
    text = out.read_text()
    assert text.startswith(f"# hubreg {__version__}\n")
    assert "# seed: 0" in text and '"lambda_s": 0.6' in text
    assert "kkt_residual" in capsys.readouterr().out
    first = text
    main(["fit", str(orthogonal_file), "--lambda-o", "100", "--lambda-s", "0.6", "--out", str(out)])
    assert out.read_text() == first


def test_fit_huge_penalty_gives_zero(orthogonal_file, capsys):
    code = main(["fit", str(orthogonal_file), "--lambda-o", "1", "--lambda-s", "1e9"])
    assert code == 0
    np.testing.assert_array_equal(parse_vector(capsys.readouterr().out), 0.0)


def test_fit_squared_and_cv(orthogonal_file, tmp_path, capsys):
    assert main(["fit", str(orthogonal_file), "--loss", "squared", "--lambda-s", "0.6"]) == 0
    np.testing.assert_allclose(parse_vector(capsys.readouterr().out), [1.4, 0, 0, 0], atol=1e-8)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 5))
    path = tmp_path / "d.csv"
    path.write_text(dataset_to_csv(Dataset(X, X @ [2.0, 0, 0, -1.0, 0] + 0.1 * rng.standard_normal(60))))
    assert main(["fit", str(path), "--cv", "--folds", "3"]) == 0
    beta = parse_vector(capsys.readouterr().out)
    assert abs(beta[0] - 2) < 0.3 and abs(beta[3] + 1) < 0.3


def test_fit_error_paths(tmp_path, orthogonal_file, capsys):
    assert main(["fit", str(tmp_path / "missing.csv"), "--lambda-o", "1", "--lambda-s", "1"]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1\n1.0,2.0\n1.0\n")
    assert main(["fit", str(bad), "--lambda-o", "1", "--lambda-s", "1"]) == 1
    assert "line 3" in capsys.readouterr().err
    assert main(["fit", str(orthogonal_file), "--lambda-s", "1"]) == 1
    assert main(["fit", str(orthogonal_file), "--lambda-o", "-1", "--lambda-s", "1"]) == 1


def test_fit_nonconvergence_exit_code(tmp_path, capsys):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 20))
    path = tmp_path / "d.csv"
    path.write_text(dataset_to_csv(Dataset(X, rng.standard_normal(40))))
    assert main(["fit", str(path), "--lambda-o", "0.3", "--lambda-s", "0.01", "--max-iter", "2"]) == 2
    assert "status=max_iter" in capsys.readouterr().err


def test_simulate_files(tmp_path, capsys):
    args = ["simulate", "--n", "10", "--d", "4", "--s", "1", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("dataset.csv", "beta_star.csv", "xi.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert a.startswith(b"# hubreg")
    beta = read_vector(tmp_path / "a" / "beta_star.csv")
    assert np.count_nonzero(beta) == 1
    capsys.readouterr()
    code = main(["fit", str(tmp_path / "a" / "dataset.csv"), "--lambda-o", "1", "--lambda-s", "0.1"])
    assert code == 0
    assert parse_vector(capsys.readouterr().out).size == 4


def test_simulate_requires_out():
    assert main(["simulate"]) == 1


def test_sweep_rows_and_outputs(tmp_path, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--n-values", "40,80", "--d", "12", "--s", "2", "--replicates", "1",
                 "--threads", "1", "--out", str(out)])
    assert code == 0
    body = [ln for ln in (out / "sweep.csv").read_text().splitlines() if not ln.startswith("#")]
    rows = body[1:]
    assert sum(r.split(",")[3] == "huber_l1" for r in rows) == 2
    assert sum(r.split(",")[3] == "lasso" for r in rows) == 2
    assert (out / "plot.csv").read_text().startswith("# hubreg")
    assert "<!-- hubreg" in (out / "plot.svg").read_text()
    assert "slope =" in capsys.readouterr().out


def test_sweep_theory_mode_prints_failing(tmp_path, capsys):
    code = main(["sweep", "--mode", "theory", "--n-values", "50", "--d", "12", "--s", "2",
                 "--replicates", "1", "--threads", "1", "--out", str(tmp_path)])
    assert code == 0
    assert "failing: " in capsys.readouterr().out


def test_sweep_fixed_mode_needs_penalties(tmp_path):
    assert main(["sweep", "--mode", "fixed", "--n-values", "50", "--d", "12", "--s", "2",
                 "--out", str(tmp_path)]) == 1


def test_probe_unknown_kind(capsys):
    assert main(["probe", "bogus", "--out", "x"]) == 1
    assert "usage" in capsys.readouterr().err


def test_probe_multiplier_noiseless(tmp_path):
    code = main(["probe", "multiplier", "--sigma", "0", "--d", "20", "--s", "2", "--n-values", "50,100",
                 "--replicates", "3", "--threads", "1", "--out", str(tmp_path)])
    assert code == 0
    lines = [ln for ln in (tmp_path / "probe_multiplier.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 1 + 6
    assert all(float(ln.split(",")[3]) == 0.0 for ln in lines[1:])


def test_probe_curvature(tmp_path, capsys):
    code = main(["probe", "curvature", "--n", "200", "--d", "20", "--s", "2", "--v-samples", "5",
                 "--out", str(tmp_path)])
    assert code == 0
    assert "all_terms_nonnegative = True" in capsys.readouterr().out


def test_config_precedence_and_env_seed(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 12, "d": 5, "s": 1, "seed": 3}))
    assert main(["simulate", "--config", str(cfg), "--d", "6", "--out", str(tmp_path / "a")]) == 0
    text = (tmp_path / "a" / "dataset.csv").read_text()
    assert '"d": 6' in text and '"n": 12' in text and "# seed: 3" in text
    assert read_vector(tmp_path / "a" / "beta_star.csv").size == 6

    monkeypatch.setenv("HUBREG_SEED", "17")
    assert main(["simulate", "--n", "5", "--d", "3", "--s", "1", "--out", str(tmp_path / "b")]) == 0
    assert "# seed: 17" in (tmp_path / "b" / "dataset.csv").read_text()
    monkeypatch.setenv("HUBREG_SEED", "abc")
    assert main(["simulate", "--out", str(tmp_path / "c")]) == 1

    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1
    cfg.write_text("{not json")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1


def test_config_supplies_out_and_n_values(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"out": str(tmp_path / "o"), "n-values": "40,80", "d": 10, "s": 2,
                               "replicates": 1, "threads": 1}))
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert (tmp_path / "o" / "sweep.csv").exists()
