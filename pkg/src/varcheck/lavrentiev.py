"""Numerical probe of the gap between the unconstrained infimum and the
infimum under an essential bound |xdd| <= M.

The bounded class is approximated by a quadratic penalty on |xdd| above M,
the unconstrained class by mesh refinement.  A positive gap that survives
refinement is evidence, not proof.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .solver import SolveOptions, objective, options_with, solve_refined
from .trajectory import Problem, Trajectory, graded_mesh

DEFAULT_PENALTY_MU = 1e3
DEFAULT_PENALTY_GROWTH = 2.0
SEED_KNOTS = 40
SEED_RATIO = 2.0


@dataclass(frozen=True)
class GapLevel:
    K: int
    J_unconstrained: float
    J_capped: float
    cap_M: float
    penalty_mu: float
    max_abs_xdd_unconstrained: float
    converged: bool

    def to_dict(self):
        return {
            "K": self.K,
            "J_unconstrained": self.J_unconstrained,
            "J_capped": self.J_capped,
            "cap_M": self.cap_M,
            "penalty_mu": self.penalty_mu,
            "max_abs_xdd_unconstrained": self.max_abs_xdd_unconstrained,
            "converged": self.converged,
        }


@dataclass
class GapReport:
    levels: list
    gap_estimate: float
    singular_seed_value: float | None = None
    flags: list = field(default_factory=list)

    @property
    def cap_M(self):
        return self.levels[-1].cap_M

    @property
    def converged(self):
        return all(level.converged for level in self.levels)

    def to_dict(self):
        return {
            "cap_M": self.cap_M,
            "gap_estimate": self.gap_estimate,
            "singular_seed_value": self.singular_seed_value,
            "flags": list(self.flags),
            "levels": [level.to_dict() for level in self.levels],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("level,K,J_unc,J_cap,max_abs_xdd\n")
        for i, lv in enumerate(self.levels):
            buf.write(f"{i},{lv.K},{lv.J_unconstrained:.17g},{lv.J_capped:.17g},"
                      f"{lv.max_abs_xdd_unconstrained:.17g}\n")
        return buf.getvalue()


def lavrentiev_options(opts: SolveOptions | None = None, penalty_mu: float | None = None) -> SolveOptions:
    """Options with the default stiffening penalty unless one is already set."""
    opts = opts or SolveOptions()
    if penalty_mu is not None:
        return options_with(opts, penalty_mu=penalty_mu)
    if opts.penalty_mu == 0:
        return options_with(opts, penalty_mu=DEFAULT_PENALTY_MU, penalty_growth=DEFAULT_PENALTY_GROWTH)
    return opts


def singular_seed(p: Problem, k: float, power: float, knots: int = SEED_KNOTS,
                  ratio: float = SEED_RATIO) -> Trajectory:
    """Hermite sample of x = x_a + k (t - a)^power on a mesh graded toward a.

    The end data are copied from the boundary conditions so the seed is
    admissible exactly.
    """
    if p.n != 1:
        raise ValueError("power-law seeds are scalar")
    mesh = graded_mesh(p.a, p.b, knots - 1, ratio)
    tau = mesh - p.a
    values = (p.bc.x_a[0] + k * tau**power)[:, None]
    with np.errstate(divide="ignore"):
        slopes = (k * power * tau ** (power - 1))[:, None]
    values[0], values[-1] = p.bc.x_a, p.bc.x_b
    slopes[0], slopes[-1] = p.bc.xd_a, p.bc.xd_b
    return Trajectory(mesh, values, slopes)


def probe_gap(p: Problem, opts: SolveOptions, cap_M: float,
              seed: Trajectory | None = None) -> GapReport:
    """Compare refined infima without and with the penalized cap ``cap_M``.

    ``opts.penalty_mu`` drives the capped leg; with a zero penalty or an
    infinite cap the capped leg is the unconstrained run itself.  A seed is
    scored and then used as an extra warm start for the unconstrained leg;
    J_unconstrained at each level is the better of the two starts.
    """
    if not cap_M > 0:
        raise ValueError("cap_M must be positive")
    flags = []
    unc_opts = options_with(opts, cap=None, penalty_mu=0.0)
    unc = solve_refined(p, unc_opts)
    penalized = math.isfinite(cap_M) and opts.penalty_mu > 0
    if penalized:
        cap = solve_refined(p, options_with(opts, cap=float(cap_M)))
    else:
        cap = unc

    seed_value = None
    seeded = None
    if seed is not None:
        seed_value = objective(p, seed, opts.quad_order)
        seeded = solve_refined(p, unc_opts, init=seed)
        if not seeded.converged:
            flags.append("seed-run-not-converged")

    levels = []
    for i, (u, c) in enumerate(zip(unc.levels, cap.levels)):
        J_unc, sup = u.J_value, u.max_abs_xdd
        if seeded is not None and seeded.levels[i].J_value < J_unc:
            J_unc, sup = seeded.levels[i].J_value, seeded.levels[i].max_abs_xdd
        levels.append(GapLevel(u.K, J_unc, c.J_value, float(cap_M),
                               c.penalty_mu if penalized else 0.0, sup,
                               u.converged and c.converged))
    if not unc.converged:
        flags.append("unconstrained-not-converged")
    if penalized and not cap.converged:
        flags.append("capped-not-converged")
    final = levels[-1]
    gap = final.J_capped - final.J_unconstrained
    if gap < -1e-8:
        flags.append("capped-below-unconstrained")
    return GapReport(levels, gap, seed_value, flags)


def cap_sweep(p: Problem, opts: SolveOptions, caps, seed: Trajectory | None = None) -> list:
    """One :func:`probe_gap` per cap, in cap order."""
    caps = [float(c) for c in caps]
    if not caps:
        raise ValueError("caps must be nonempty")
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise ValueError("caps must be strictly increasing")
    return [probe_gap(p, opts, c, seed) for c in caps]
