import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwot.cli import (
    InputError,
    PointCloud,
    format_matrix_csv,
    load_matrix,
    pairwise_sqdist,
    run_command,
)
from gwot.cnd import certify_cnd


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_command(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def write(path, M):
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")
    return str(path)


def test_load_matrix_examples(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("0,1\n1,0")
    np.testing.assert_array_equal(load_matrix(p), [[0, 1], [1, 0]])
    p.write_text("0.5")
    np.testing.assert_array_equal(load_matrix(p), [[0.5]])
    p.write_bytes(b"1,2\r\n3,4\r\n")
    np.testing.assert_array_equal(load_matrix(p), [[1, 2], [3, 4]])


@pytest.mark.parametrize(
    "text, needle",
    [("1,2\n3", "ragged row 2"), ("1,x\n", ":1:2:"), ("1,nan", "non-finite"), ("inf", "non-finite"), ("", "empty")],
)
def test_load_matrix_errors(tmp_path, text, needle):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=needle):
        load_matrix(p)


def test_load_matrix_missing_file(tmp_path):
    with pytest.raises(InputError):
        load_matrix(tmp_path / "nope.csv")


def test_pairwise_sqdist_examples():
    np.testing.assert_array_equal(pairwise_sqdist(PointCloud(np.array([0.0, 1.0]))).matrix, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(pairwise_sqdist(np.array([[0.0, 0.0], [3.0, 4.0]])).matrix, [[0, 25], [25, 0]])


@given(n=st.integers(1, 10), d=st.integers(1, 3), seed=st.integers(0, 2**31 - 1))
def test_pairwise_sqdist_is_cnd(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d))
    D = pairwise_sqdist(X).matrix
    assert np.all(D == D.T) and np.all(np.diag(D) == 0)
    assert certify_cnd(D).is_cnd


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=12))
def test_csv_round_trip(values):
    M = np.array(values).reshape(1, -1)
    import tempfile, os

    with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as fh:
        fh.write(format_matrix_csv(M))
    try:
        np.testing.assert_array_equal(load_matrix(fh.name), M)
    finally:
        os.unlink(fh.name)


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    X, Y = rng.random((4, 2)), rng.random((4, 3))
    sq = lambda Z: ((Z[:, None] - Z[None]) ** 2).sum(-1)
    perms = [np.eye(3)[list(p)] for p in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]]
    P = sum(w * Q for w, Q in zip(rng.dirichlet(np.ones(3)), perms)) / 3
    return {
        "c": write(tmp_path / "c.csv", sq(X)),
        "cb": write(tmp_path / "cb.csv", sq(Y)),
        "x": write(tmp_path / "x.csv", X),
        "y": write(tmp_path / "y.csv", Y),
        "zero": write(tmp_path / "z.csv", np.zeros((3, 3))),
        "plan": write(tmp_path / "p.csv", P),
        "a1": write(tmp_path / "a1.csv", [[0, 1], [1, 0]]),
        "a2": write(tmp_path / "a2.csv", [[0, -1], [-1, 0]]),
        "anti": write(tmp_path / "anti.csv", [[0, 0.5], [0.5, 0]]),
        "w": write(tmp_path / "w.csv", [0.2, 0.3, 0.5]),
    }


def report(out):
    rep = json.loads(out)
    assert set(rep) == {"schema_version", "command", "instance", "results", "timings_ms"}
    return rep


def test_check_cnd_concave(files):
    code, out, _ = run(["gw", "check-cnd", "--cost", files["c"], "--cost2", files["cb"], "--loss", "square"])
    assert code == 0 and report(out)["results"]["verdict"] == "concave"


def test_check_cnd_refuted_exits_one(files):
    code, out, _ = run(["gw", "check-cnd", "--cost", files["a1"], "--cost2", files["a2"]])
    res = report(out)["results"]
    assert code == 1 and res["verdict"] == "not concave" and res["witness"]["midpoint_gap"] < 0


def test_decompose_birkhoff(files):
    code, out, _ = run(["polytope", "decompose", "--cost", "ignored", "--plan", files["plan"], "--weights", "uniform"])
    res = report(out)["results"]
    assert code == 0 and res["all_permutations"] and res["reconstruction_error"] <= 1e-9


def test_decompose_uses_cost_path_without_plan(files):
    code, out, _ = run(["polytope", "decompose", "--cost", files["plan"]])
    assert code == 0


def test_lot_solve_zero_cost(files):
    code, out, _ = run(["lot", "solve", "--cost", files["zero"]])
    res = report(out)["results"]
    assert code == 0 and res["value"] == 0.0 and res["support_size"] <= 5


def test_lot_solve_weights(files):
    code, out, _ = run(["lot", "solve", "--cost", files["zero"], "--weights", files["w"], "--weights2", "uniform"])
    assert code == 0


def test_lot_monotonicity_verdicts(files):
    assert run(["lot", "monotonicity", "--cost", files["a1"]])[0] == 0
    code, out, _ = run(["lot", "monotonicity", "--cost", files["a1"], "--plan", files["anti"]])
    assert code == 1 and report(out)["results"]["verdict"] == "fail"


@pytest.mark.parametrize("action", ["solve", "tightness", "stationarity"])
def test_gw_commands(files, action):
    code, out, _ = run(["gw", action, "--points", files["x"], "--points2", files["y"]])
    assert code == 0
    report(out)


def test_gw_non_concave_tightness_is_relaxation_only(files):
    code, out, _ = run(["gw", "tightness", "--cost", files["a1"], "--cost2", files["a2"]])
    res = report(out)["results"]
    assert code == 0 and res["status"].startswith("relaxation only")


def test_polytope_vertices_csv(files):
    code, out, _ = run(["polytope", "vertices", "--cost", files["zero"], "--format", "csv"])
    assert code == 0 and len(out.strip().splitlines()) == 6 * 3


def test_usage_errors():
    code, out, err = run(["lot", "bogus"])
    assert code == 2 and "usage" in err and out == ""
    code, _, err = run(["gw", "solve", "--frobnicate"])
    assert code == 2 and "usage" in err
    code, _, err = run(["lot", "solve"])
    assert code == 2 and "--cost" in err


def test_input_errors(tmp_path, files):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3")
    code, _, err = run(["lot", "solve", "--cost", str(bad)])
    assert code == 2 and "ragged row 2" in err
    code, _, err = run(["gw", "solve", "--cost", files["c"], "--cost2", files["a1"], "--loss", "kl"])
    assert code == 2


def test_determinism_except_timing(files):
    argv = ["gw", "solve", "--cost", files["c"], "--cost2", files["cb"], "--seed", "3"]
    r1, r2 = report(run(argv)[1]), report(run(argv)[1])
    r1.pop("timings_ms"), r2.pop("timings_ms")
    assert json.dumps(r1) == json.dumps(r2)


def test_report_matrices_round_trip(files):
    C = load_matrix(files["c"])
    code, out, _ = run(["lot", "solve", "--cost", files["c"]])
    plan = np.array(report(out)["results"]["plan"])
    from gwot.linear_ot import solve_linear_ot
    from gwot.core import uniform

    np.testing.assert_array_equal(plan, solve_linear_ot(C, uniform(4), uniform(4)).plan.matrix)


def test_main_entry(files, capsys):
    from gwot.cli import main

    assert main(["lot", "solve", "--cost", files["zero"]]) == 0
    assert "schema_version" in capsys.readouterr().out
