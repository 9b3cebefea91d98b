"""Admissible curves as C1 piecewise-cubic Hermite functions, and their
arc-length chart."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .expr import LagrangianExpr
from ._validation import check_mesh, check_vector


@dataclass(frozen=True)
class BoundaryConditions:
    x_a: np.ndarray
    x_b: np.ndarray
    xd_a: np.ndarray
    xd_b: np.ndarray


@dataclass(frozen=True)
class Problem:
    """Minimize the integral of ``L`` over [a, b] under the four boundary
    conditions on x and its first derivative."""

    a: float
    b: float
    L: LagrangianExpr
    bc: BoundaryConditions

    @classmethod
    def create(cls, a, b, L, x_a, x_b, xd_a, xd_b):
        a, b = float(a), float(b)
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            raise ValueError(f"need finite a < b, got [{a}, {b}]")
        bc = BoundaryConditions(
            *(check_vector(v, L.n, name) for v, name in
              ((x_a, "x_a"), (x_b, "x_b"), (xd_a, "xd_a"), (xd_b, "xd_b")))
        )
        return cls(a, b, L, bc)

    @property
    def n(self):
        return self.L.n


# -- Hermite basis on the unit interval -------------------------------------


def hermite_basis(tau):
    """Cubic Hermite basis and its first two tau-derivatives.

    Returns three arrays of shape (4, ...) ordered (h00, h10, h01, h11).
    """
    tau = np.asarray(tau, float)
    t2 = tau * tau
    t3 = t2 * tau
    b0 = np.stack([2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + tau, -2 * t3 + 3 * t2, t3 - t2])
    b1 = np.stack([6 * t2 - 6 * tau, 3 * t2 - 4 * tau + 1, -6 * t2 + 6 * tau, 3 * t2 - 2 * tau])
    b2 = np.stack([12 * tau - 6, 6 * tau - 4, -12 * tau + 6, 6 * tau - 2])
    return b0, b1, b2


@dataclass(frozen=True, eq=False)
class Trajectory:
    """C1 piecewise-cubic Hermite curve.

    ``values`` and ``slopes`` have shape (K+1, n) and hold x and its first
    derivative at the knots of ``mesh``.
    """

    mesh: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        mesh = check_mesh(self.mesh)
        values = np.array(self.values, float)
        slopes = np.array(self.slopes, float)
        if values.ndim == 1:
            values = values[:, None]
        if slopes.ndim == 1:
            slopes = slopes[:, None]
        if values.shape != slopes.shape or values.shape[0] != mesh.shape[0]:
            raise ValueError("values and slopes must have one row per knot")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(slopes))):
            raise ValueError("trajectory has non-finite knot data")
        for name, arr in (("mesh", mesh), ("values", values), ("slopes", slopes)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def K(self):
        return self.mesh.shape[0] - 1

    @property
    def a(self):
        return float(self.mesh[0])

    @property
    def b(self):
        return float(self.mesh[-1])

    @classmethod
    def from_function(cls, mesh, f, df):
        """Sample values ``f(t)`` and slopes ``df(t)`` at the knots."""
        mesh = check_mesh(mesh)
        values = np.array([np.atleast_1d(f(t)) for t in mesh], float)
        slopes = np.array([np.atleast_1d(df(t)) for t in mesh], float)
        return cls(mesh, values, slopes)

    def interval_index(self, t):
        t = np.asarray(t, float)
        k = np.searchsorted(self.mesh, t, side="right") - 1
        return np.clip(k, 0, self.K - 1)

    def evaluate_batch(self, t):
        """x, xd, xdd at the times ``t`` (each of shape (N, n)).

        Interior knots use the right limit of xdd.
        """
        t = np.atleast_1d(np.asarray(t, float))
        if np.any(t < self.a) or np.any(t > self.b):
            raise ValueError(f"t outside [{self.a}, {self.b}]")
        k = self.interval_index(t)
        h = (self.mesh[k + 1] - self.mesh[k])[:, None]
        tau = (t - self.mesh[k]) / h[:, 0]
        b0, b1, b2 = (arr[:, :, None] for arr in hermite_basis(tau))
        y0, y1 = self.values[k], self.values[k + 1]
        m0, m1 = self.slopes[k], self.slopes[k + 1]
        x = b0[0] * y0 + h * b0[1] * m0 + b0[2] * y1 + h * b0[3] * m1
        xd = (b1[0] * y0 + b1[2] * y1) / h + b1[1] * m0 + b1[3] * m1
        xdd = (b2[0] * y0 + b2[2] * y1) / h**2 + (b2[1] * m0 + b2[3] * m1) / h
        return x, xd, xdd

    def evaluate(self, t):
        x, xd, xdd = self.evaluate_batch([t])
        return x[0], xd[0], xdd[0]

    def knot_second_derivatives(self):
        """Left and right limits of xdd at every knot, shape (K+1, n) each.

        The left limit at ``a`` and the right limit at ``b`` repeat the
        one-sided value.
        """
        h = np.diff(self.mesh)[:, None]
        y0, y1 = self.values[:-1], self.values[1:]
        m0, m1 = self.slopes[:-1], self.slopes[1:]
        start = (-6 * y0 + 6 * y1) / h**2 + (-4 * m0 - 2 * m1) / h
        end = (6 * y0 - 6 * y1) / h**2 + (2 * m0 + 4 * m1) / h
        right = np.vstack([start, end[-1:]])
        left = np.vstack([start[:1], end])
        return left, right

    def with_knot_data(self, values, slopes):
        return Trajectory(self.mesh, values, slopes)

    def is_admissible(self, problem):
        bc = problem.bc
        return (
            self.n == problem.n
            and self.a == problem.a
            and self.b == problem.b
            and np.array_equal(self.values[0], bc.x_a)
            and np.array_equal(self.values[-1], bc.x_b)
            and np.array_equal(self.slopes[0], bc.xd_a)
            and np.array_equal(self.slopes[-1], bc.xd_b)
        )


# -- meshes -----------------------------------------------------------------


def uniform_mesh(a, b, K):
    if K < 1:
        raise ValueError("need at least one interval")
    mesh = np.linspace(a, b, K + 1)
    mesh[0], mesh[-1] = a, b
    return mesh


def graded_mesh(a, b, K, ratio=2.0):
    """Geometric mesh clustered toward ``a``: widths h, ratio*h, ratio^2*h, ..."""
    if K < 1:
        raise ValueError("need at least one interval")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    widths = ratio ** np.arange(K, dtype=float)
    edges = np.concatenate([[0.0], np.cumsum(widths)]) / widths.sum()
    mesh = a + (b - a) * edges
    mesh[0], mesh[-1] = a, b
    return mesh


def make_mesh(a, b, K, kind="uniform", ratio=2.0):
    if kind == "uniform":
        return uniform_mesh(a, b, K)
    if kind == "graded":
        return graded_mesh(a, b, K, ratio)
    raise ValueError(f"unknown mesh kind {kind!r}")


def boundary_cubic(problem, mesh):
    """The cubic matching all four boundary conditions, sampled on ``mesh``."""
    a, b = problem.a, problem.b
    h = b - a
    bc = problem.bc

    def shape(t):
        tau = (np.asarray(t, float) - a) / h
        b0, b1, _ = hermite_basis(tau)
        return b0, b1

    mesh = check_mesh(mesh)
    b0, b1 = shape(mesh)
    values = (np.outer(b0[0], bc.x_a) + h * np.outer(b0[1], bc.xd_a)
              + np.outer(b0[2], bc.x_b) + h * np.outer(b0[3], bc.xd_b))
    slopes = (np.outer(b1[0], bc.x_a) / h + np.outer(b1[1], bc.xd_a)
              + np.outer(b1[2], bc.x_b) / h + np.outer(b1[3], bc.xd_b))
    values[0], values[-1] = bc.x_a, bc.x_b
    slopes[0], slopes[-1] = bc.xd_a, bc.xd_b
    return Trajectory(mesh, values, slopes)


def refine(traj: Trajectory) -> Trajectory:
    """Bisect every interval; new knots are sampled from the parent cubic."""
    mid = 0.5 * (traj.mesh[:-1] + traj.mesh[1:])
    x, xd, _ = traj.evaluate_batch(mid)
    K = traj.K
    mesh = np.empty(2 * K + 1)
    mesh[0::2], mesh[1::2] = traj.mesh, mid
    values = np.empty((2 * K + 1, traj.n))
    slopes = np.empty_like(values)
    values[0::2], values[1::2] = traj.values, x
    slopes[0::2], slopes[1::2] = traj.slopes, xd
    return Trajectory(mesh, values, slopes)


# -- norms ------------------------------------------------------------------

_GL4 = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class SobolevNorms:
    norm2_x: float
    norm2_xd: float
    norm2_xdd: float
    ess_sup_xdd: float


def sobolev_norms(traj: Trajectory) -> SobolevNorms:
    """L2 norms of x, xd, xdd and the ess-sup of |xdd|.

    Four Gauss points per interval integrate the squared cubic (degree 6)
    exactly.
    """
    nodes, weights = _GL4
    h = np.diff(traj.mesh)
    t = (traj.mesh[:-1, None] + 0.5 * h[:, None] * (nodes + 1.0)).ravel()
    w = (0.5 * h[:, None] * weights).ravel()
    x, xd, xdd = traj.evaluate_batch(t)
    norms = [float(np.sqrt(np.sum(w * np.sum(arr * arr, axis=1)))) for arr in (x, xd, xdd)]
    left, right = traj.knot_second_derivatives()
    sup = float(max(np.max(np.linalg.norm(left, axis=1)), np.max(np.linalg.norm(right, axis=1))))
    return SobolevNorms(*norms, sup)


# -- analytic paths -----------------------------------------------------------


@dataclass(frozen=True)
class AnalyticPath:
    """A curve given by closed-form x, xd, xdd (vectorized callables)."""

    a: float
    b: float
    x: object
    xd: object
    xdd: object
    n: int = 1

    def evaluate_batch(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        return tuple(np.asarray(f(t), float).reshape(t.shape[0], self.n)
                     for f in (self.x, self.xd, self.xdd))

    def evaluate(self, t):
        x, xd, xdd = self.evaluate_batch([t])
        return x[0], xd[0], xdd[0]


def power_law_path(k, p, a=0.0, b=1.0):
    """x(t) = k t^p on [a, b] with a >= 0."""
    return AnalyticPath(
        a, b,
        lambda t: k * t**p,
        lambda t: k * p * t ** (p - 1),
        lambda t: k * p * (p - 1) * t ** (p - 2),
    )


# -- arc-length chart ---------------------------------------------------------

_GL8 = np.polynomial.legendre.leggauss(8)


def _speed(traj, t):
    _, xd, _ = traj.evaluate_batch(t)
    return np.sqrt(1.0 + np.sum(xd * xd, axis=1))


@dataclass(frozen=True, eq=False)
class ArcLengthChart:
    """Arc length s(t) of a trajectory and the inverse map t(s).

    ``grid``/``s_of_t`` tabulate s at sample times (all knots included);
    ``s_uniform`` is the uniform s-grid on which ``t_of_s``, ``tprime_of_s``
    and ``tsecond_of_s`` are tabulated.
    """

    trajectory: Trajectory
    grid: np.ndarray
    s_of_t: np.ndarray
    length: float
    s_uniform: np.ndarray
    t_of_s: np.ndarray
    tprime_of_s: np.ndarray
    tsecond_of_s: np.ndarray
    _inverse: PchipInterpolator = field(repr=False)

    @property
    def l(self):
        return self.length

    def time_at(self, s):
        """t(s) by monotone interpolation polished with Newton steps on the
        exact arc-length integral."""
        s = np.clip(np.atleast_1d(np.asarray(s, float)), 0.0, self.length)
        t = np.clip(self._inverse(s), self.grid[0], self.grid[-1])
        nodes, weights = _GL8
        for _ in range(3):
            j = np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, len(self.grid) - 2)
            t0 = self.grid[j]
            half = 0.5 * (t - t0)
            q = t0[:, None] + half[:, None] * (nodes + 1.0)
            seg = half * (_speed(self.trajectory, q.ravel()).reshape(q.shape) @ weights)
            residual = self.s_of_t[j] + seg - s
            t = np.clip(t - residual / _speed(self.trajectory, t), self.grid[j], self.grid[j + 1])
        t[s == 0.0] = self.grid[0]
        t[s == self.length] = self.grid[-1]
        return t

    def theta(self, s):
        """(t, X, t', X', t'', X'') at arc-length parameters ``s``."""
        t = self.time_at(s)
        x, xd, xdd = self.trajectory.evaluate_batch(t)
        speed2 = 1.0 + np.sum(xd * xd, axis=1)
        tp = 1.0 / np.sqrt(speed2)
        tpp = -np.sum(xd * xdd, axis=1) / speed2**2
        Xp = xd * tp[:, None]
        Xpp = xdd * (tp**2)[:, None] + xd * tpp[:, None]
        return t, x, tp, Xp, tpp, Xpp


def default_chart_samples(traj):
    return 8 * traj.K


def arc_length_chart(traj: Trajectory, samples: int | None = None) -> ArcLengthChart:
    """Tabulate s(t) by composite Gauss-Legendre and invert it.

    ``samples`` is the number of points on the uniform s-grid; the time grid
    subdivides every mesh interval so it has at least as many points.
    """
    if samples is None:
        samples = default_chart_samples(traj)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    per = max(1, -(-(samples - 1) // traj.K))
    sub = np.linspace(0.0, 1.0, per + 1)[:-1]
    h = np.diff(traj.mesh)
    grid = np.concatenate([(traj.mesh[:-1, None] + h[:, None] * sub).ravel(), traj.mesh[-1:]])
    nodes, weights = _GL8
    dt = np.diff(grid)
    q = grid[:-1, None] + 0.5 * dt[:, None] * (nodes + 1.0)
    seg = 0.5 * dt * (_speed(traj, q.ravel()).reshape(q.shape) @ weights)
    s_of_t = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(s_of_t[-1])
    inverse = PchipInterpolator(s_of_t, grid)
    chart = ArcLengthChart(traj, grid, s_of_t, length, np.empty(0), np.empty(0),
                           np.empty(0), np.empty(0), inverse)
    s_uniform = np.linspace(0.0, length, samples)
    t, _, tp, _, tpp, _ = chart.theta(s_uniform)
    for name, arr in (("s_uniform", s_uniform), ("t_of_s", t), ("tprime_of_s", tp),
                      ("tsecond_of_s", tpp)):
        object.__setattr__(chart, name, arr)
    return chart


# -- CSV ----------------------------------------------------------------------


def _fmt(v):
    return format(float(v), ".17g")


def trajectory_to_csv(traj: Trajectory) -> str:
    n = traj.n
    header = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"xd{i}" for i in range(1, n + 1)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for t, x, xd in zip(traj.mesh, traj.values, traj.slopes):
        writer.writerow([_fmt(t)] + [_fmt(v) for v in x] + [_fmt(v) for v in xd])
    return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    if not header or header[0] != "t" or (len(header) - 1) % 2:
        raise ValueError("trajectory CSV header must be t,x1..xn,xd1..xdn")
    n = (len(header) - 1) // 2
    expected = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"xd{i}" for i in range(1, n + 1)]
    if header != expected:
        raise ValueError(f"trajectory CSV header must be {','.join(expected)}")
    data = np.array(body, float)
    return Trajectory(data[:, 0], data[:, 1 : 1 + n], data[:, 1 + n :])
