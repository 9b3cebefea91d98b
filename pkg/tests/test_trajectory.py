import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from varcheck.trajectory import (Trajectory, arc_length_chart, boundary_cubic, graded_mesh,
                                 refine, sobolev_norms, trajectory_from_csv,
                                 trajectory_to_csv, uniform_mesh)

from conftest import K_CV90, make_problem


def cubic():
    return lambda t: 3 * t**2 - 2 * t**3, lambda t: 6 * t - 6 * t**2


def cubic_traj(K=4, mesh=None):
    f, df = cubic()
    return Trajectory.from_function(uniform_mesh(0, 1, K) if mesh is None else mesh, f, df)


def random_traj(rng, K=6, n=1):
    mesh = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.05, 0.95, K - 1)]))
    return Trajectory(mesh, rng.normal(size=(K + 1, n)), rng.normal(size=(K + 1, n)))


@pytest.mark.parametrize("mesh", [uniform_mesh(0, 1, 3), np.array([0, 0.1, 0.45, 0.5, 1.0])])
def test_cubic_is_exact(mesh):
    x, xd, xdd = cubic_traj(mesh=mesh).evaluate(0.5)
    assert x[0] == pytest.approx(0.5, abs=1e-14)
    assert xd[0] == pytest.approx(1.5, abs=1e-14)
    assert xdd[0] == pytest.approx(0.0, abs=1e-12)


def test_constant_trajectory():
    traj = Trajectory(uniform_mesh(0, 2, 3), np.full((4, 1), 1.5), np.zeros((4, 1)))
    for t in np.linspace(0, 2, 9):
        x, xd, xdd = traj.evaluate(t)
        assert (x[0], xd[0], xdd[0]) == (1.5, 0.0, 0.0)


def test_end_value_and_admissibility(quadratic):
    traj = boundary_cubic(quadratic, uniform_mesh(0, 1, 5))
    assert traj.is_admissible(quadratic)
    x, xd, _ = traj.evaluate(1.0)
    assert x[0] == 1.0 and xd[0] == 0.0


def test_outside_interval():
    with pytest.raises(ValueError):
        cubic_traj().evaluate(1.1)


def test_invalid_mesh():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.5, 0.5, 1.0]), np.zeros(4), np.zeros(4))


def test_right_limit_at_interior_knot():
    traj = Trajectory(uniform_mesh(0, 1, 2), np.array([0.0, 0.0, 1.0]), np.zeros(3))
    left, right = traj.knot_second_derivatives()
    assert traj.evaluate(0.5)[2][0] == right[1][0]
    assert left[1][0] != right[1][0]


def test_norms_of_cubic():
    norms = sobolev_norms(cubic_traj())
    assert norms.norm2_xdd**2 == pytest.approx(12.0, rel=1e-13)
    assert norms.ess_sup_xdd == pytest.approx(6.0, rel=1e-13)


def test_norms_of_zero():
    norms = sobolev_norms(Trajectory(uniform_mesh(0, 1, 3), np.zeros(4), np.zeros(4)))
    assert (norms.norm2_x, norms.norm2_xd, norms.norm2_xdd, norms.ess_sup_xdd) == (0, 0, 0, 0)


def test_singular_candidate_norms_on_graded_meshes():
    k = K_CV90
    target = 100 * k**2 / 27
    sups = []
    for K in (20, 30, 40):
        traj = Trajectory.from_function(graded_mesh(0, 1, K), lambda t: k * t ** (5 / 3),
                                        lambda t: 5 * k / 3 * t ** (2 / 3))
        norms = sobolev_norms(traj)
        assert norms.norm2_xdd**2 == pytest.approx(target, rel=0.02)
        sups.append(norms.ess_sup_xdd)
    assert sups[0] < sups[1] < sups[2] and sups[2] > 1e3


def test_refine_nests_exactly():
    rng = np.random.default_rng(1)
    traj = Trajectory(uniform_mesh(0, 1, 2), rng.normal(size=3), rng.normal(size=3))
    fine = refine(traj)
    assert fine.K == 4 and refine(fine).K == 8
    np.testing.assert_allclose(fine.mesh, uniform_mesh(0, 1, 4), rtol=0, atol=1e-15)
    t = np.linspace(0, 1, 101)
    x0, xd0, _ = traj.evaluate_batch(t)
    x1, xd1, _ = fine.evaluate_batch(t)
    np.testing.assert_allclose(x1, x0, atol=1e-14)
    np.testing.assert_allclose(xd1, xd0, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_norms_preserved_by_refinement(seed):
    traj = random_traj(np.random.default_rng(seed))
    a, b = sobolev_norms(traj), sobolev_norms(refine(traj))
    for u, v in ((a.norm2_x, b.norm2_x), (a.norm2_xd, b.norm2_xd), (a.norm2_xdd, b.norm2_xdd)):
        assert v == pytest.approx(u, rel=1e-12)


def test_chart_straight_line():
    traj = Trajectory(uniform_mesh(0, 1, 4), np.linspace(0, 1, 5), np.ones(5))
    chart = arc_length_chart(traj, 64)
    assert chart.l == pytest.approx(np.sqrt(2), rel=1e-14)
    np.testing.assert_allclose(chart.tprime_of_s, 1 / np.sqrt(2), rtol=1e-14)
    np.testing.assert_allclose(chart.tsecond_of_s, 0.0, atol=1e-14)


def test_chart_identity():
    traj = Trajectory(uniform_mesh(0, 1, 4), np.zeros(5), np.zeros(5))
    chart = arc_length_chart(traj, 33)
    assert chart.l == pytest.approx(1.0, rel=1e-15)
    np.testing.assert_allclose(chart.t_of_s, chart.s_uniform, atol=1e-14)
    np.testing.assert_allclose(chart.tprime_of_s, 1.0)


def test_chart_length_of_cubic_against_adaptive_quadrature():
    chart = arc_length_chart(cubic_traj(8))
    oracle, _ = quad(lambda t: np.sqrt(1 + (6 * t - 6 * t**2) ** 2), 0, 1, epsabs=1e-13, epsrel=1e-13)
    assert chart.l == pytest.approx(oracle, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_chart_invariants(seed):
    traj = random_traj(np.random.default_rng(seed), n=2)
    chart = arc_length_chart(traj)
    assert np.all(np.diff(chart.s_of_t) > 0)
    assert chart.l == chart.s_of_t[-1]
    assert np.all(chart.tprime_of_s > 0) and np.all(chart.tprime_of_s <= 1)
    np.testing.assert_allclose(chart.time_at(chart.s_of_t), chart.grid, atol=1e-9)
    t, _, tp, Xp, _, _ = chart.theta(chart.s_uniform)
    _, xd, _ = traj.evaluate_batch(t)
    assert np.all(np.abs(Xp - xd * tp[:, None]) <= 1e-6 * (1 + np.abs(xd)))


def test_chart_second_derivative_matches_differences():
    traj = cubic_traj(8)
    chart = arc_length_chart(traj, 2001)
    s = chart.s_uniform[500:1500]
    h = 1e-5
    _, _, tp_up, _, _, _ = chart.theta(s + h)
    _, _, tp_dn, _, _, _ = chart.theta(s - h)
    _, _, _, _, tpp, _ = chart.theta(s)
    np.testing.assert_allclose(tpp, (tp_up - tp_dn) / (2 * h), atol=1e-6)


def test_csv_round_trip():
    traj = random_traj(np.random.default_rng(3), n=2)
    text = trajectory_to_csv(traj)
    assert text.splitlines()[0] == "t,x1,x2,xd1,xd2"
    back = trajectory_from_csv(text)
    for u, v in ((traj.mesh, back.mesh), (traj.values, back.values), (traj.slopes, back.slopes)):
        np.testing.assert_array_equal(u, v)


def test_csv_bad_header():
    with pytest.raises(ValueError):
        trajectory_from_csv("time,x1,xd1\n0,0,0\n1,1,0\n")


def test_problem_validation():
    with pytest.raises(ValueError):
        make_problem("pow(xdd1,2)", a=1.0, b=0.0)
    with pytest.raises(ValueError):
        make_problem("pow(xdd1,2)", bc=([0.0], [1.0, 2.0], [0.0], [0.0]))
