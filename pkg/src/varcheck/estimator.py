"""Estimator-style wrapper around the direct-method solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .solver import SolveOptions, objective, solve_refined
from .trajectory import Problem


class DirectMethodSolver(BaseEstimator):
    """Minimize a second-order functional over Hermite trajectories.

    ``fit`` takes a :class:`~varcheck.trajectory.Problem` instead of a data
    matrix; afterwards ``trajectory_`` holds the minimizer and ``report_``
    the per-level solver records.  ``predict(t)`` returns x(t), and
    ``score`` returns -J so that larger is better.
    """

    def __init__(self, mesh=8, refinements=0, grad_tol=1e-9, max_iters=1000,
                 quad_order=5, mesh_kind="uniform", cap=None, penalty_mu=0.0):
        self.mesh = mesh
        self.refinements = refinements
        self.grad_tol = grad_tol
        self.max_iters = max_iters
        self.quad_order = quad_order
        self.mesh_kind = mesh_kind
        self.cap = cap
        self.penalty_mu = penalty_mu

    def _options(self):
        return SolveOptions(grad_tol=self.grad_tol, max_iters=self.max_iters,
                            quad_order=self.quad_order, refinements=self.refinements,
                            initial_mesh=self.mesh, mesh_kind=self.mesh_kind,
                            cap=self.cap, penalty_mu=self.penalty_mu)

    def fit(self, problem: Problem, y=None, init=None):
        if not isinstance(problem, Problem):
            raise TypeError("fit expects a Problem")
        self.report_ = solve_refined(problem, self._options(), init)
        self.trajectory_ = self.report_.trajectory
        self.problem_ = problem
        self.functional_ = self.report_.final.J_value
        self.converged_ = self.report_.converged
        return self

    def predict(self, t):
        """x at the times ``t``, shape (len(t), n)."""
        check_is_fitted(self, "trajectory_")
        x, _, _ = self.trajectory_.evaluate_batch(np.atleast_1d(t))
        return x

    def score(self, problem: Problem | None = None, y=None):
        check_is_fitted(self, "trajectory_")
        p = problem if problem is not None else self.problem_
        return -objective(p, self.trajectory_, self.quad_order)
