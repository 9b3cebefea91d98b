import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from varcheck.cli import run
from varcheck.conditions import profile_from_csv
from varcheck.estimator import DirectMethodSolver
from varcheck.problem_file import PRESETS, ProblemFileError, parse_problem_file, preset
from varcheck.trajectory import trajectory_from_csv

GOOD = """\
[problem]
lagrangian = pow(xdd1, 2)
a = 0
b = 1
x_a = 0
x_b = 1
xd_a = 0
xd_b = 0

[solver]
mesh = 8
"""


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_presets_parse():
    for name in PRESETS:
        pf = preset(name)
        assert pf.problem.L.declared_autonomous
    pf = preset("cv90")
    k = (3 / 5) ** (5 / 3)
    assert pf.problem.bc.x_b[0] == k and pf.problem.bc.xd_b[0] == 5 * k / 3
    with pytest.raises(KeyError):
        preset("nope")


def test_unknown_key_reports_line():
    text = GOOD.replace("x_b = 1", "xb=")
    with pytest.raises(ProblemFileError) as info:
        parse_problem_file(text, "f.ini")
    assert info.value.line == 6 and "xb" in str(info.value) and "f.ini:6" in str(info.value)


@pytest.mark.parametrize("bad, line", [
    ("[solver]\nmesh = 8\n[extra]\n", 3),
    (GOOD.replace("pow(xdd1, 2)", "pow(xdd1,2"), 2),
    ("garbage\n", 1),
    ("[problem]\na = 0\na = 1\n", 3),
    (GOOD.replace("pow(xdd1, 2)", "xdd2"), 2),
    (GOOD.replace("x_a = 0", "x_a = zero"), 5),
])
def test_parse_errors(bad, line):
    with pytest.raises(ProblemFileError) as info:
        parse_problem_file(bad)
    assert info.value.line == line


def test_missing_required_key():
    with pytest.raises(ProblemFileError):
        parse_problem_file(GOOD.replace("xd_b = 0\n", ""))


def test_cli_parse_error_exit(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(GOOD.replace("x_b = 1", "xb="))
    assert run(["solve", str(path), "--out", str(tmp_path / "o")]) == 2


def test_cli_unknown_flag_aborts(tmp_path):
    with pytest.raises(SystemExit) as info:
        run(["solve", "--preset", "quadratic", "--bogus", "--out", str(tmp_path / "o")])
    assert info.value.code == 2
    assert not (tmp_path / "o").exists()


def test_cli_solve_file(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text(GOOD)
    out = tmp_path / "o"
    assert run(["solve", str(path), "--out", str(out), "--refinements", "1"]) == 0
    s = summary(out)
    assert s["results"]["J"] == pytest.approx(12.0, abs=1e-8) and s["results"]["K"] == 16
    for entry in s["files"]:
        data = (out / entry["name"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
    traj = trajectory_from_csv((out / "trajectory.csv").read_text())
    assert traj.K == 16


def test_cli_nonconvergence_exit(tmp_path):
    out = tmp_path / "o"
    path = tmp_path / "p.ini"
    path.write_text(GOOD.replace("lagrangian = pow(xdd1, 2)", "lagrangian = pow(xdd1, 2) + pow(x1, 4)")
                    + "max_iters = 1\n")
    assert run(["solve", str(path), "--out", str(out)]) == 3
    assert summary(out)["exit_status"] == 3


def test_cli_domain_error_exit(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text(GOOD.replace("pow(xdd1, 2)", "sqrt(x1 - 2)"))
    out = tmp_path / "o"
    assert run(["solve", str(path), "--out", str(out)]) == 4
    assert summary(out)["exit_status"] == 4


def test_check_conditions_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["check-conditions", "--preset", "quadratic", "--out", str(out), "--grid", "64"]) == 0
    s, phi, meta = profile_from_csv((out / "profile_dbr.csv").read_text())
    assert len(s) == 64 and "deviation" in meta
    profile_from_csv((out / "profile_el1.csv").read_text())
    # reuse the emitted trajectory
    out2 = tmp_path / "o2"
    assert run(["check-conditions", "--preset", "quadratic", "--out", str(out2), "--grid", "64",
                "--trajectory", str(out / "trajectory.csv")]) == 0
    assert (out2 / "profile_dbr.csv").read_bytes() == (out / "profile_dbr.csv").read_bytes()


def test_check_regularity_cv90(tmp_path):
    out = tmp_path / "o"
    assert run(["check-regularity", "--preset", "cv90", "--out", str(out)]) == 0
    payload = json.loads((out / "certificates.json").read_text())
    certs = {c["kind"]: c for c in payload["certificates"]}
    assert certs["superlinearity"]["verdict"] == "violated"
    assert certs["superlinearity"]["witness"]["xdd"] == [0.0]
    assert certs["convexity"]["verdict"] == "holds-on-samples"
    assert certs["coercivity"]["verdict"] == "positive"
    for c in payload["certificates"]:
        if "margin" in c:
            assert {"kind", "verdict", "constants", "witness", "margin", "sample_count",
                    "rng_seed"} <= set(c)


def test_probe_lavrentiev_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["probe-lavrentiev", "--preset", "quadratic", "--out", str(out), "--cap", "3",
                "--refinements", "1"]) == 0
    lines = (out / "gap_M3.csv").read_text().splitlines()
    assert lines[0] == "level,K,J_unc,J_cap,max_abs_xdd" and len(lines) == 3
    report = json.loads((out / "gap_report.json").read_text())
    assert report[0]["gap_estimate"] > 0


def test_console_script_runs(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "varcheck.cli", "solve", "--preset", "zero",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert summary(out)["results"]["J"] == 0.0


def test_presets_solve():
    zero = preset("zero")
    est = DirectMethodSolver(mesh=8).fit(zero.problem)
    assert est.functional_ == 0.0 and np.all(est.trajectory_.values == 0.0)
    q = DirectMethodSolver(mesh=8).fit(preset("quadratic").problem)
    qa = DirectMethodSolver(mesh=8).fit(preset("quadratic-affine").problem)
    np.testing.assert_allclose(qa.trajectory_.values, q.trajectory_.values, atol=1e-8)
    np.testing.assert_allclose(qa.trajectory_.slopes, q.trajectory_.slopes, atol=1e-8)


def test_estimator_api():
    p = preset("quadratic").problem
    est = DirectMethodSolver(mesh=4, refinements=1)
    assert est.get_params()["mesh"] == 4
    est.fit(p)
    assert est.converged_ and est.score() == pytest.approx(-12.0, abs=1e-10)
    np.testing.assert_allclose(est.predict([0.0, 0.5, 1.0])[:, 0], [0.0, 0.5, 1.0], atol=1e-10)
    with pytest.raises(TypeError):
        DirectMethodSolver().fit(np.zeros((3, 2)))
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        DirectMethodSolver().predict([0.5])
