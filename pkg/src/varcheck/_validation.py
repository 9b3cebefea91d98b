"""Input validation helpers shared by the public entry points."""

import numpy as np


def check_vector(value, n, name="vector"):
    """Return ``value`` as a finite float array of shape (n,)."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_mesh(mesh):
    """Return ``mesh`` as a strictly increasing finite float array."""
    arr = np.asarray(mesh, dtype=float)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError("mesh needs at least two knots")
    if not np.all(np.isfinite(arr)):
        raise ValueError("mesh has non-finite knots")
    if np.any(np.diff(arr) <= 0):
        raise ValueError("mesh knots must be strictly increasing")
    return arr


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_problem(problem):
    from .trajectory import Problem

    if not isinstance(problem, Problem):
        raise TypeError(f"expected a Problem, got {type(problem).__name__}")
    return problem
