"""Integral-form duBois-Reymond and Euler-Lagrange profiles along a
trajectory, computed in the arc-length parameter.

With s the arc length, the functional is rewritten as the integral over
[0, l] of

    F(t, x, t', x', t'', x'') = L(t, x, x'/t', (x'' - (x'/t') t'') / t'^2) * t'

and the profiles are

    phi_0(s) = F_t''(s) - int_0^s F_t' + int_0^s int_0^tau F_t
    phi_i(s) = F_x''_i(s) - int_0^s F_x'_i + int_0^s int_0^tau F_x_i
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .expr import LagrangianExpr
from .trajectory import ArcLengthChart, Problem, sobolev_norms

MIN_GRID = 16


@dataclass(frozen=True)
class ReparamPoint:
    t: float
    X: np.ndarray
    tprime: float
    Xprime: np.ndarray
    tsecond: float
    Xsecond: np.ndarray


@dataclass(frozen=True)
class FPartials:
    F: np.ndarray
    dt: np.ndarray
    dtp: np.ndarray
    dtpp: np.ndarray
    dx: np.ndarray
    dxp: np.ndarray
    dxpp: np.ndarray


def F_partials_batch(L: LagrangianExpr, t, X, tp, Xp, tpp, Xpp) -> FPartials:
    """F and its partials at N reparametrized points.

    ``t``, ``tp``, ``tpp`` have shape (N,); ``X``, ``Xp``, ``Xpp`` (N, n).
    """
    t = np.atleast_1d(np.asarray(t, float))
    tp = np.atleast_1d(np.asarray(tp, float))
    tpp = np.atleast_1d(np.asarray(tpp, float))
    X, Xp, Xpp = (np.asarray(a, float).reshape(t.shape[0], L.n) for a in (X, Xp, Xpp))
    if np.any(tp <= 0):
        raise ValueError("t' must be positive")
    xd = Xp / tp[:, None]
    xdd = (Xpp - xd * tpp[:, None]) / (tp**2)[:, None]
    val, Lt, Lx, Lxd, Lxdd = L.partials_batch(t, X, xd, xdd)
    ratio = (tpp / tp**2)[:, None]
    return FPartials(
        F=val * tp,
        dt=Lt * tp,
        dtp=val - np.sum(Lxd * xd, axis=1) + np.sum(Lxdd * (-2.0 * xdd + xd * ratio), axis=1),
        dtpp=-np.sum(Lxdd * xd, axis=1) / tp,
        dx=Lx * tp[:, None],
        dxp=Lxd - Lxdd * ratio,
        dxpp=Lxdd / tp[:, None],
    )


def F_partials(L: LagrangianExpr, q: ReparamPoint):
    """``(F, dF/dt, dF/dt', dF/dt'', dF/dx, dF/dx', dF/dx'')`` at one point."""
    if not q.tprime > 0:
        raise ValueError("t' must be positive")
    out = F_partials_batch(L, [q.t], np.atleast_1d(q.X)[None], [q.tprime],
                           np.atleast_1d(q.Xprime)[None], [q.tsecond],
                           np.atleast_1d(q.Xsecond)[None])
    return (float(out.F[0]), float(out.dt[0]), float(out.dtp[0]), float(out.dtpp[0]),
            out.dx[0], out.dxp[0], out.dxpp[0])


@dataclass(frozen=True)
class ConditionProfile:
    kind: str  # "dbr" or "el"
    component: int  # 0 for dbr, i for el
    s_grid: np.ndarray
    values: np.ndarray
    c_hat: float
    deviation: float
    # spread left after removing the least-squares affine trend, same scaling
    affine_deviation: float
    flags: tuple = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# c_hat={self.c_hat:.17g} deviation={self.deviation:.17g}\n")
        buf.write("s,phi\n")
        for s, v in zip(self.s_grid, self.values):
            buf.write(f"{s:.17g},{v:.17g}\n")
        return buf.getvalue()


def profile_from_csv(text: str):
    """Parse a profile CSV back into ``(s, phi, metadata)``."""
    lines = text.splitlines()
    if not lines[0].startswith("# "):
        raise ValueError("missing metadata line")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    if lines[1] != "s,phi":
        raise ValueError("profile header must be 's,phi'")
    data = np.array([line.split(",") for line in lines[2:] if line], float)
    return data[:, 0], data[:, 1], {k: float(v) for k, v in meta.items()}


def constancy(values):
    """``(median, (max - min) / (1 + |median|))``."""
    c_hat = float(np.median(values))
    return c_hat, float((np.max(values) - np.min(values)) / (1.0 + abs(c_hat)))


def affine_spread(s, values, c_hat):
    A = np.vstack([np.ones_like(s), s]).T
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = values - A @ coef
    return float((np.max(resid) - np.min(resid)) / (1.0 + abs(c_hat)))


def singular_endpoint(traj, factor=100.0):
    """True when |xdd| at an end knot dwarfs the RMS of xdd."""
    norms = sobolev_norms(traj)
    rms = norms.norm2_xdd / np.sqrt(traj.b - traj.a)
    left, right = traj.knot_second_derivatives()
    ends = max(np.linalg.norm(right[0]), np.linalg.norm(left[-1]))
    return bool(ends > factor * (1.0 + rms))


def _profile_inputs(p, traj, chart, grid_size):
    if chart.trajectory is not traj:
        raise ValueError("chart was not built from this trajectory")
    if traj.n != p.n or traj.a != p.a or traj.b != p.b:
        raise ValueError("trajectory does not match the problem")
    if grid_size < MIN_GRID:
        raise ValueError(f"grid_size must be >= {MIN_GRID}")
    s = np.linspace(0.0, chart.length, grid_size)
    t, X, tp, Xp, tpp, Xpp = chart.theta(s)
    return s, F_partials_batch(p.L, t, X, tp, Xp, tpp, Xpp)


def _assemble(kind, component, s, pointwise, first, second, traj):
    """pointwise - int first + int int second, by cumulative trapezoid."""
    single = cumulative_trapezoid(first, s, initial=0.0)
    if np.any(second != 0.0):
        double = cumulative_trapezoid(cumulative_trapezoid(second, s, initial=0.0), s, initial=0.0)
    else:
        double = np.zeros_like(s)
    values = pointwise - single + double
    c_hat, deviation = constancy(values)
    flags = ("singular-endpoint",) if singular_endpoint(traj) else ()
    return ConditionProfile(kind, component, s, values, c_hat, deviation,
                            affine_spread(s, values, c_hat), flags)


def dbr_profile(p: Problem, traj, chart: ArcLengthChart, grid_size: int = 256) -> ConditionProfile:
    """Integral duBois-Reymond profile phi_0 on a uniform s-grid."""
    s, fp = _profile_inputs(p, traj, chart, grid_size)
    return _assemble("dbr", 0, s, fp.dtpp, fp.dtp, fp.dt, traj)


def el_profile(p: Problem, traj, chart: ArcLengthChart, i: int = 1,
               grid_size: int = 256) -> ConditionProfile:
    """Integral Euler-Lagrange profile phi_i (1-based component ``i``)."""
    if not 1 <= i <= p.n:
        raise IndexError(f"component {i} out of range 1..{p.n}")
    s, fp = _profile_inputs(p, traj, chart, grid_size)
    j = i - 1
    return _assemble("el", i, s, fp.dxpp[:, j], fp.dxp[:, j], fp.dx[:, j], traj)


# -- classical forms -----------------------------------------------------------


@dataclass(frozen=True)
class ClassicalResiduals:
    t: np.ndarray
    el_residual: np.ndarray  # (N, n)
    dbr_values: np.ndarray  # (N,)


def _sample_times(path, grid_size, step):
    a, b = path.a, path.b
    t = a + (np.arange(grid_size) + 0.5) * (b - a) / grid_size
    keep = (t - 2 * step > a) & (t + 2 * step < b)
    mesh = getattr(path, "mesh", None)
    if mesh is not None:
        k = np.searchsorted(mesh, t, side="right") - 1
        k = np.clip(k, 0, len(mesh) - 2)
        keep &= (t - 2 * step > mesh[k]) & (t + 2 * step < mesh[k + 1])
    return t[keep]


def classical_residuals(p: Problem, path, grid_size: int = 256,
                        step: float | None = None) -> ClassicalResiduals:
    """Smooth-case Euler-Lagrange residual and duBois-Reymond expression.

    ``path`` is anything with ``a``, ``b`` and ``evaluate_batch(t)``; for a
    :class:`~varcheck.trajectory.Trajectory` the samples avoid the knots.
    Time derivatives of the partials are central differences with ``step``.
    """
    if step is None:
        step = 0.05 * min((path.b - path.a) / grid_size,
                          np.min(np.diff(path.mesh)) if hasattr(path, "mesh") else np.inf)
    t = _sample_times(path, grid_size, step)
    offsets = np.array([-2, -1, 0, 1, 2]) * step
    tt = (t[:, None] + offsets).ravel()
    x, xd, xdd = path.evaluate_batch(tt)
    val, _, Lx, Lxd, Lxdd = p.L.partials_batch(tt, x, xd, xdd)
    shape = (t.shape[0], 5, p.n)
    Lx, Lxd, Lxdd = (a.reshape(shape) for a in (Lx, Lxd, Lxdd))
    d_Lxd = (Lxd[:, 3] - Lxd[:, 1]) / (2 * step)
    d_Lxdd = (Lxdd[:, 3] - Lxdd[:, 1]) / (2 * step)
    dd_Lxdd = (-Lxdd[:, 4] + 16 * Lxdd[:, 3] - 30 * Lxdd[:, 2] + 16 * Lxdd[:, 1] - Lxdd[:, 0]) / (
        12 * step**2
    )
    el = Lx[:, 2] - d_Lxd + dd_Lxdd
    xd0 = xd.reshape(shape)[:, 2]
    xdd0 = xdd.reshape(shape)[:, 2]
    L0 = val.reshape(shape[:2])[:, 2]
    dbr = (L0 - np.sum(xd0 * Lxd[:, 2], axis=1) - np.sum(xdd0 * Lxdd[:, 2], axis=1)
           + np.sum(xd0 * d_Lxdd, axis=1))
    return ClassicalResiduals(t, el, dbr)
