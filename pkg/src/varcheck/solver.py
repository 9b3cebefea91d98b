"""Direct-method minimization of J[x] = int_a^b L(t, x, xd, xdd) dt over
Hermite trajectories with the boundary data built in."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .expr import ExprDomainError
from .trajectory import Problem, Trajectory, boundary_cubic, hermite_basis, make_mesh, refine, sobolev_norms

log = logging.getLogger(__name__)

QUAD_ORDERS = (3, 5, 7)
ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolveOptions:
    grad_tol: float = 1e-9
    max_iters: int = 1000
    quad_order: int = 5
    refinements: int = 0
    initial_mesh: int = 8
    mesh_kind: str = "uniform"
    graded_ratio: float = 2.0
    cap: float | None = None
    penalty_mu: float = 0.0
    # multiplies penalty_mu at every refinement level
    penalty_growth: float = 1.0
    memory: int = 10

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.quad_order not in QUAD_ORDERS:
            raise ValueError(f"quad_order must be one of {QUAD_ORDERS}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if int(self.refinements) != self.refinements or self.refinements < 0:
            raise ValueError("refinements must be a non-negative integer")
        if int(self.initial_mesh) != self.initial_mesh or self.initial_mesh < 1:
            raise ValueError("initial_mesh must be a positive integer")
        if self.penalty_mu < 0:
            raise ValueError("penalty_mu must be >= 0")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be positive")
        if self.mesh_kind not in ("uniform", "graded"):
            raise ValueError("mesh_kind must be 'uniform' or 'graded'")

    def penalty_active(self):
        return self.cap is not None and np.isfinite(self.cap) and self.penalty_mu > 0


# -- quadrature -----------------------------------------------------------------


def _gauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


class _Layout:
    """Quadrature points of a mesh, interval-major and point-minor."""

    def __init__(self, mesh, order):
        tau, w = _gauss(order)
        K = len(mesh) - 1
        self.K, self.q = K, order
        self.h = np.diff(mesh)
        self.k = np.repeat(np.arange(K), order)
        self.tau = np.tile(tau, K)
        self.t = mesh[self.k] + self.h[self.k] * self.tau
        self.w = np.tile(w, K) * self.h[self.k]
        self.basis = hermite_basis(self.tau)

    def reduce(self, values):
        """Weighted sum, per interval first and then across intervals."""
        return float((values * self.w).reshape(self.K, self.q).sum(axis=1).sum())

    def evaluate(self, traj):
        hh = self.h[self.k][:, None]
        b0, b1, b2 = (arr[:, :, None] for arr in self.basis)
        k = self.k
        y0, y1 = traj.values[k], traj.values[k + 1]
        m0, m1 = traj.slopes[k], traj.slopes[k + 1]
        x = b0[0] * y0 + hh * b0[1] * m0 + b0[2] * y1 + hh * b0[3] * m1
        xd = (b1[0] * y0 + b1[2] * y1) / hh + b1[1] * m0 + b1[3] * m1
        xdd = (b2[0] * y0 + b2[2] * y1) / hh**2 + (b2[1] * m0 + b2[3] * m1) / hh
        return x, xd, xdd


def _with_location(err, t):
    if err.index is not None:
        err.t = float(t[err.index])
    return err


def _penalty(xdd, cap, mu):
    r = np.linalg.norm(xdd, axis=1)
    excess = np.maximum(r - cap, 0.0)
    value = mu * excess**2
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(excess > 0, 2.0 * mu * excess / r, 0.0)
    return value, scale[:, None] * xdd


def _evaluate(problem, traj, layout, cap=None, mu=0.0, with_grad=False):
    """Return (functional, penalized objective, knot gradients or None)."""
    x, xd, xdd = layout.evaluate(traj)
    L = problem.L
    try:
        if with_grad:
            val, _, Lx, Lxd, Lxdd = L.partials_batch(layout.t, x, xd, xdd)
        else:
            val = L.evaluate_batch(layout.t, x, xd, xdd)
    except ExprDomainError as err:
        raise _with_location(err, layout.t)
    functional = layout.reduce(val)
    total = functional
    if cap is not None and np.isfinite(cap) and mu > 0:
        pen, dpen = _penalty(xdd, cap, mu)
        total = layout.reduce(val + pen)
        if with_grad:
            Lxdd = Lxdd + dpen
    if not with_grad:
        return functional, total, None
    hh = layout.h[layout.k][:, None]
    w = layout.w[:, None]
    b0, b1, b2 = layout.basis
    gv = np.zeros_like(traj.values)
    gs = np.zeros_like(traj.slopes)
    av = np.zeros_like(gv)
    as_ = np.zeros_like(gs)
    k = layout.k
    for j, (target, absolute, offset) in enumerate(
        ((gv, av, 0), (gs, as_, 0), (gv, av, 1), (gs, as_, 1))
    ):
        if target is gv:
            terms = (Lx * b0[j][:, None], Lxd * b1[j][:, None] / hh, Lxdd * b2[j][:, None] / hh**2)
        else:
            terms = (Lx * hh * b0[j][:, None], Lxd * b1[j][:, None], Lxdd * b2[j][:, None] / hh)
        np.add.at(target, k + offset, w * (terms[0] + terms[1] + terms[2]))
        np.add.at(absolute, k + offset, w * (np.abs(terms[0]) + np.abs(terms[1]) + np.abs(terms[2])))
    return functional, total, (gv, gs, av, as_)


def _interior(pair):
    return np.concatenate([pair[0][1:-1].ravel(), pair[1][1:-1].ravel()])


# components below this multiple of eps times their absolute contributions are
# indistinguishable from zero in floating point
ROUNDING_FLOOR = 64 * np.finfo(float).eps


def free_dofs(traj: Trajectory) -> np.ndarray:
    """Interior knot values then interior slopes, flattened."""
    return np.concatenate([traj.values[1:-1].ravel(), traj.slopes[1:-1].ravel()])


def with_free_dofs(traj: Trajectory, theta) -> Trajectory:
    K, n = traj.K, traj.n
    m = (K - 1) * n
    values = traj.values.copy()
    slopes = traj.slopes.copy()
    values[1:-1] = np.reshape(theta[:m], (K - 1, n))
    slopes[1:-1] = np.reshape(theta[m:], (K - 1, n))
    return Trajectory(traj.mesh, values, slopes)


def _check_admissible(problem, traj):
    if not traj.is_admissible(problem):
        raise ValueError("trajectory is not admissible for the problem")


def objective(p: Problem, traj: Trajectory, quad_order: int = 5) -> float:
    """Composite Gauss-Legendre value of the functional along ``traj``."""
    _check_admissible(p, traj)
    return _evaluate(p, traj, _Layout(traj.mesh, quad_order))[0]


def penalized_objective(p, traj, quad_order=5, cap=None, penalty_mu=0.0):
    _check_admissible(p, traj)
    return _evaluate(p, traj, _Layout(traj.mesh, quad_order), cap, penalty_mu)[1]


def gradient(p: Problem, traj: Trajectory, quad_order: int = 5, cap=None, penalty_mu=0.0):
    """Exact gradient of the quadrature objective with respect to the free
    degrees of freedom (see :func:`free_dofs` for the ordering)."""
    _check_admissible(p, traj)
    grads = _evaluate(p, traj, _Layout(traj.mesh, quad_order), cap, penalty_mu, True)[2]
    return _interior(grads[:2])


# -- L-BFGS -------------------------------------------------------------------


@dataclass
class MinimizeResult:
    trajectory: Trajectory
    iterations: int
    converged: bool
    value: float
    functional: float
    grad_norm: float
    message: str = ""
    # objective after every accepted step, starting with the initial value
    history: list = field(default_factory=list)
    # (previous value, new value, step, directional derivative) per step
    steps: list = field(default_factory=list)


def curvature_metric(mesh, n):
    """Gram matrix of int |xdd|^2 dt restricted to the free dofs.

    Used as the initial inverse-Hessian metric of the quasi-Newton method.
    Returns a factorization with a ``solve`` method.
    """
    mesh = np.asarray(mesh, float)
    K = len(mesh) - 1
    tau, w = _gauss(2)
    _, _, b2 = hermite_basis(tau)
    rows, cols, vals = [], [], []
    for k in range(K):
        h = mesh[k + 1] - mesh[k]
        phi = b2 / np.array([h * h, h, h * h, h])[:, None]
        local = (phi * (w * h)) @ phi.T
        # global knot-major index: 2*knot for the value, 2*knot+1 for the slope
        idx = np.array([2 * k, 2 * k + 1, 2 * k + 2, 2 * k + 3])
        rows.append(np.repeat(idx, 4))
        cols.append(np.tile(idx, 4))
        vals.append(local.ravel())
    G = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(2 * K + 2, 2 * K + 2)).tocsc()
    interior = np.arange(1, K)
    order = np.concatenate([2 * interior, 2 * interior + 1])
    G = G[order][:, order]
    G = sparse.kron(G, sparse.identity(n), format="csc")
    # kron puts the component index fastest, matching free_dofs' row-major ravel
    return splu(G)


def _two_loop(g, S, Y, metric=None):
    def h0(v):
        return v if metric is None else metric.solve(v)

    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if S:
        hy = h0(Y[-1])
        q = h0(q) * ((S[-1] @ Y[-1]) / (Y[-1] @ hy))
    else:
        q = h0(q)
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(p: Problem, init: Trajectory, opts: SolveOptions | None = None,
             penalty_mu: float | None = None) -> MinimizeResult:
    """Limited-memory quasi-Newton descent with Armijo backtracking.

    Stops when the sup-norm of the gradient drops below ``opts.grad_tol``.
    On fine or strongly graded meshes that tolerance can sit below the
    rounding floor; when progress stalls, the iterate also counts as
    converged if the quasi-Newton predicted decrease is below the rounding
    resolution of J, or the gradient is within its measured floor (gradient
    change under a few-ulp perturbation of the dofs).  A failed line search
    otherwise returns the last iterate with ``converged=False``.
    """
    opts = opts or SolveOptions()
    _check_admissible(p, init)
    mu = opts.penalty_mu if penalty_mu is None else penalty_mu
    cap = opts.cap if (opts.cap is not None and mu > 0) else None
    layout = _Layout(init.mesh, opts.quad_order)

    def value(theta):
        try:
            return _evaluate(p, with_free_dofs(init, theta), layout, cap, mu)[1]
        except ExprDomainError:
            return np.inf

    def value_grad(theta):
        traj = with_free_dofs(init, theta)
        grads = _evaluate(p, traj, layout, cap, mu, True)
        return grads[1], _interior(grads[2][:2]), ROUNDING_FLOOR * _interior(grads[2][2:])

    def at_rounding_floor(theta, g, floor):
        signs = np.ones_like(theta)
        signs[1::2] = -1.0
        measured = np.zeros_like(g)
        for pattern in (np.ones_like(theta), signs):
            delta = 4.0 * np.finfo(float).eps * np.abs(theta) * pattern
            measured = np.maximum(measured, np.abs(value_grad(theta + delta)[1] - g))
        return bool(np.all(np.abs(g) <= np.maximum(opts.grad_tol, 8.0 * measured + floor)))

    theta = free_dofs(init)
    metric = curvature_metric(init.mesh, init.n) if theta.size else None
    f, g, floor = value_grad(theta)
    S, Y = deque(maxlen=opts.memory), deque(maxlen=opts.memory)
    history, steps = [f], []
    converged, message, it, stalled = False, "max_iters reached", 0, 0
    while True:
        if np.all(np.abs(g) < np.maximum(opts.grad_tol, floor)):
            converged, message = True, "gradient below tolerance"
            break
        if it >= opts.max_iters:
            break
        d = _two_loop(g, S, Y, metric)
        gd = float(g @ d)
        if not gd < 0:
            S.clear()
            Y.clear()
            d = -metric.solve(g)
            gd = float(g @ d)
        if stalled >= 3:
            stalled = 0
            # the predicted decrease can no longer be resolved in J itself
            if -gd <= 16.0 * np.finfo(float).eps * abs(f) or at_rounding_floor(theta, g, floor):
                converged, message = True, "gradient at rounding floor"
                break
        step = 1.0
        for _ in range(MAX_BACKTRACKS + 1):
            trial = theta + step * d
            ft = value(trial)
            if ft <= f + ARMIJO_C * step * gd:
                break
            step *= BACKTRACK
        else:
            if at_rounding_floor(theta, g, floor):
                converged, message = True, "gradient at rounding floor"
            else:
                message = f"line search failed after {MAX_BACKTRACKS} backtracks"
                log.debug("iteration %d: %s", it, message)
            break
        ft, gt, floor = value_grad(trial)
        steps.append((f, ft, step, gd))
        stalled = stalled + 1 if f - ft <= 4.0 * np.finfo(float).eps * abs(f) else 0
        s, y = trial - theta, gt - g
        if s @ y > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            S.append(s)
            Y.append(y)
        theta, f, g = trial, ft, gt
        history.append(f)
        it += 1
    traj = with_free_dofs(init, theta)
    functional = _evaluate(p, traj, layout)[0]
    return MinimizeResult(traj, it, converged, f, functional,
                          float(np.max(np.abs(g))) if g.size else 0.0, message, history, steps)


# -- refinement driver ----------------------------------------------------------


@dataclass(frozen=True)
class LevelRecord:
    K: int
    J_value: float
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    penalty_mu: float
    max_abs_xdd: float = float("nan")

    def to_dict(self):
        return {
            "K": self.K,
            "J_value": self.J_value,
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "penalty_mu": self.penalty_mu,
            "max_abs_xdd": self.max_abs_xdd,
        }


@dataclass
class SolveReport:
    levels: list
    trajectory: Trajectory

    @property
    def converged(self):
        return all(level.converged for level in self.levels)

    @property
    def final(self):
        return self.levels[-1]

    def to_dict(self):
        return {"levels": [level.to_dict() for level in self.levels],
                "converged": self.converged}


def initial_trajectory(p: Problem, opts: SolveOptions) -> Trajectory:
    mesh = make_mesh(p.a, p.b, opts.initial_mesh, opts.mesh_kind, opts.graded_ratio)
    return boundary_cubic(p, mesh)


def solve_refined(p: Problem, opts: SolveOptions | None = None,
                  init: Trajectory | None = None) -> SolveReport:
    """Solve on the initial mesh, then bisect and re-solve ``refinements``
    times, warm-starting each level from the previous solution."""
    opts = opts or SolveOptions()
    traj = init if init is not None else initial_trajectory(p, opts)
    levels = []
    for level in range(opts.refinements + 1):
        if level:
            traj = refine(traj)
        mu = opts.penalty_mu * opts.penalty_growth**level
        res = minimize(p, traj, opts, penalty_mu=mu)
        if not res.converged:
            log.warning("level %d (K=%d) did not converge: %s", level, traj.K, res.message)
        traj = res.trajectory
        levels.append(LevelRecord(traj.K, res.functional, res.value, res.grad_norm,
                                  res.iterations, res.converged,
                                  mu if opts.penalty_active() else 0.0,
                                  sobolev_norms(traj).ess_sup_xdd))
    return SolveReport(levels, traj)


def options_with(opts: SolveOptions, **changes) -> SolveOptions:
    return replace(opts, **changes)
