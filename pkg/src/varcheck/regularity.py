"""Sampled certification of growth and regularity conditions on a Lagrangian.

Every check works on a finite sample set, so a positive verdict only says
the inequality holds on those samples ("holds-on-samples").  A violation
comes with the sample where the inequality fails worst.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .expr import EvalPoint, LagrangianExpr

HOLDS = "holds-on-samples"
VIOLATED = "violated"

# floor for fitted leading constants that must stay strictly positive
MIN_CONSTANT = 1e-12


@dataclass(frozen=True)
class SampleDomain:
    """Box of sample points: t-range plus per-component boxes for x, xd, xdd.

    Box bounds are scalars (shared by every component) or length-n arrays.
    """

    t_range: tuple = (0.0, 1.0)
    x_box: tuple = (-1.0, 1.0)
    xd_box: tuple = (-1.0, 1.0)
    xdd_box: tuple = (-2.0, 2.0)
    grid_count: int = 5
    random_count: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("t_range", "x_box", "xd_box", "xdd_box"):
            lo, hi = (np.asarray(v, float) for v in getattr(self, name))
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
                raise ValueError(f"{name} needs finite lower < upper bounds")
        if self.grid_count < 2:
            raise ValueError("grid_count must be >= 2")
        if self.random_count < 0:
            raise ValueError("random_count must be >= 0")

    def bounds(self, name, n):
        lo, hi = getattr(self, name)
        return np.broadcast_to(np.asarray(lo, float), (n,)), np.broadcast_to(np.asarray(hi, float), (n,))

    def base_points(self, n):
        """(t, x, xd) samples: the tensor grid followed by random points."""
        axes = [np.linspace(*map(float, self.t_range), self.grid_count)]
        for name in ("x_box", "xd_box"):
            lo, hi = self.bounds(name, n)
            axes += [np.linspace(lo[i], hi[i], self.grid_count) for i in range(n)]
        grid = np.array(list(itertools.product(*axes)))
        rng = np.random.default_rng(self.rng_seed)
        lows = np.concatenate([[self.t_range[0]], *(self.bounds(b, n)[0] for b in ("x_box", "xd_box"))])
        highs = np.concatenate([[self.t_range[1]], *(self.bounds(b, n)[1] for b in ("x_box", "xd_box"))])
        rand = rng.uniform(lows, highs, size=(self.random_count, 1 + 2 * n))
        pts = np.vstack([grid, rand])
        return pts[:, 0], pts[:, 1 : 1 + n], pts[:, 1 + n :]

    def samples(self, n):
        """Full sample set ``(t, x, xd, xdd)``.

        Order: tensor grid over all variables, then the forced points (xdd = 0
        when the box contains it, and xdd = box extreme along each axis, at
        every grid (t, x, xd)), then uniform random points.
        """
        axes = [np.linspace(*map(float, self.t_range), self.grid_count)]
        for name in ("x_box", "xd_box", "xdd_box"):
            lo, hi = self.bounds(name, n)
            axes += [np.linspace(lo[i], hi[i], self.grid_count) for i in range(n)]
        grid = np.array(list(itertools.product(*axes)))

        base_axes = axes[: 1 + 2 * n]
        base = np.array(list(itertools.product(*base_axes)))
        lo, hi = self.bounds("xdd_box", n)
        specials = [np.zeros(n)] if np.all((lo <= 0) & (hi >= 0)) else []
        for i in range(n):
            for v in (lo[i], hi[i]):
                e = np.zeros(n)
                e[i] = v
                specials.append(e)
        forced = np.vstack([np.hstack([base, np.tile(w, (base.shape[0], 1))]) for w in specials])

        rng = np.random.default_rng(self.rng_seed)
        lows = np.concatenate([[self.t_range[0]], *(self.bounds(b, n)[0] for b in ("x_box", "xd_box", "xdd_box"))])
        highs = np.concatenate([[self.t_range[1]], *(self.bounds(b, n)[1] for b in ("x_box", "xd_box", "xdd_box"))])
        rand = rng.uniform(lows, highs, size=(self.random_count, 1 + 3 * n))

        pts = np.vstack([grid, forced, rand])
        return pts[:, 0], pts[:, 1 : 1 + n], pts[:, 1 + n : 1 + 2 * n], pts[:, 1 + 2 * n :]

    def to_dict(self):
        def plain(v):
            arr = np.asarray(v, float)
            return arr.tolist()

        return {
            "t_range": plain(self.t_range),
            "x_box": plain(self.x_box),
            "xd_box": plain(self.xd_box),
            "xdd_box": plain(self.xdd_box),
            "grid_count": self.grid_count,
            "random_count": self.random_count,
            "rng_seed": self.rng_seed,
        }


@dataclass
class Certificate:
    kind: str
    verdict: str
    constants: dict
    witness: EvalPoint | None
    margin: float
    sample_count: int
    rng_seed: int
    details: dict = field(default_factory=dict)

    @property
    def holds(self):
        return self.verdict == HOLDS

    def to_dict(self):
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "constants": {k: float(v) for k, v in self.constants.items()},
            "witness": None if self.witness is None else self.witness.to_dict(),
            "margin": float(self.margin),
            "sample_count": self.sample_count,
            "rng_seed": self.rng_seed,
            **({"details": self.details} if self.details else {}),
        }


def certificate_from_dict(d) -> Certificate:
    """Rebuild a :class:`Certificate` from its JSON form."""
    w = d.get("witness")
    witness = None if w is None else EvalPoint(w["t"], w["x"], w["xd"], w["xdd"])
    return Certificate(d["kind"], d["verdict"], dict(d["constants"]), witness, d["margin"],
                       d["sample_count"], d["rng_seed"], dict(d.get("details", {})))


def _norm(arr):
    return np.sqrt(np.sum(arr * arr, axis=-1))


def _slack_or_violation(slack):
    return np.where(np.isnan(slack), -np.inf, slack)


def _certificate(kind, constants, slack, pts, dom, details=None):
    slack = _slack_or_violation(slack)
    j = int(np.argmin(slack))
    margin = float(slack[j])
    witness = None
    if margin < 0:
        t, x, xd, xdd = pts
        witness = EvalPoint(float(t[j]), x[j], xd[j], xdd[j])
    return Certificate(kind, VIOLATED if margin < 0 else HOLDS, constants, witness, margin,
                       int(slack.shape[0]), dom.rng_seed, details or {})


# -- (H4) and the quadratic variant -------------------------------------------


def _growth_slack(L, pts, a, b_min, power):
    _, _, _, _, Lxdd = L.partials_batch(*pts)
    g = _norm(Lxdd)
    return g - a * _norm(pts[3]) ** power - b_min


def _fit_growth(L, dom, b_min, power, kind):
    if not L.declared_autonomous:
        raise ValueError(f"{kind} check needs an autonomous Lagrangian (no t)")
    if not b_min > 0:
        raise ValueError("b_min must be positive")
    pts = dom.samples(L.n)
    _, _, _, _, Lxdd = L.partials_batch(*pts)
    g = _norm(Lxdd)
    wn = _norm(pts[3]) ** power
    pos = wn > 0
    a = float(np.min((g[pos] - b_min) / wn[pos])) if np.any(pos) else np.inf
    if not (np.isfinite(a) and a > 0):
        a = 0.0
    else:
        # step a down until rounding cannot push a fitted sample below zero
        while a > 0 and np.min(_growth_slack(L, pts, a, b_min, power)[pos]) < 0:
            a = float(np.nextafter(a, 0.0)) * (1.0 - 2.0**-48)
    slack = _growth_slack(L, pts, a, b_min, power)
    return _certificate(kind, {"a": a, "b": float(b_min)}, slack, pts, dom)


def check_superlinearity(L: LagrangianExpr, dom: SampleDomain, b_min: float = 1e-3) -> Certificate:
    """Largest a with a|w| + b_min <= |dL/dxdd| on every sample."""
    return _fit_growth(L, dom, b_min, 1, "superlinearity")


def check_quadratic_coercivity(L: LagrangianExpr, dom: SampleDomain, b_min: float = 1e-3) -> Certificate:
    """Largest a with a|w|^2 + b_min <= |dL/dxdd| on every sample."""
    return _fit_growth(L, dom, b_min, 2, "quadratic-coercivity")


# -- (H2) convexity in the last argument ----------------------------------------


def _convexity_pairs(dom, n):
    t, x, xd = dom.base_points(n)
    lo, hi = dom.bounds("xdd_box", n)
    axes = [np.linspace(lo[i], hi[i], dom.grid_count) for i in range(n)]
    W = np.array(list(itertools.product(*axes)))
    pairs = np.array([(i, j) for i in range(len(W)) for j in range(i + 1, len(W))])
    rng = np.random.default_rng(dom.rng_seed + 1)
    if len(pairs) > 64:
        pairs = pairs[np.sort(rng.choice(len(pairs), 64, replace=False))]
    base = np.repeat(np.arange(t.shape[0]), len(pairs))
    w1 = W[np.tile(pairs[:, 0], t.shape[0])]
    w2 = W[np.tile(pairs[:, 1], t.shape[0])]
    extra = rng.uniform(lo, hi, size=(2, dom.random_count, n))
    eb = rng.integers(0, t.shape[0], dom.random_count)
    base = np.concatenate([base, eb])
    w1 = np.vstack([w1, extra[0]])
    w2 = np.vstack([w2, extra[1]])
    return t[base], x[base], xd[base], w1, w2


def convexity_slack(L, t, x, xd, w1, w2):
    L1 = L.evaluate_batch(t, x, xd, w1)
    L2 = L.evaluate_batch(t, x, xd, w2)
    Lm = L.evaluate_batch(t, x, xd, 0.5 * w1 + 0.5 * w2)
    chord = 0.5 * L1 + 0.5 * L2
    return chord + 1e-12 * (1.0 + np.abs(chord)) - Lm


def check_convexity_last_arg(L: LagrangianExpr, dom: SampleDomain) -> Certificate:
    """Midpoint convexity in xdd at shared (t, x, xd)."""
    t, x, xd, w1, w2 = _convexity_pairs(dom, L.n)
    slack = convexity_slack(L, t, x, xd, w1, w2)
    cert = _certificate("convexity", {}, slack, (t, x, xd, w1), dom)
    if cert.witness is not None:
        j = int(np.argmin(_slack_or_violation(slack)))
        cert.details["pair_xdd"] = [float(v) for v in w2[j]]
    return cert


# -- (H3) coercivity ------------------------------------------------------------


@dataclass
class CoercivityReport:
    radii: list
    theta: list
    ratios: list
    verdict: str  # "positive" or "negative"

    @property
    def positive(self):
        return self.verdict == "positive"

    def to_dict(self):
        return {"kind": "coercivity", "verdict": self.verdict,
                "radii": [float(r) for r in self.radii],
                "theta": [float(v) for v in self.theta],
                "ratios": [float(v) for v in self.ratios]}


def _shell_directions(n, dom):
    dirs = [np.eye(n)[i] * s for i in range(n) for s in (1.0, -1.0)]
    if n > 1:
        rng = np.random.default_rng(dom.rng_seed + 2)
        v = rng.normal(size=(16, n))
        dirs += list(v / _norm(v)[:, None])
    return np.array(dirs)


def check_coercivity(L: LagrangianExpr, dom: SampleDomain, radii=(1.0, 2.0, 4.0, 8.0)) -> CoercivityReport:
    """Sampled growth function min{L : |xdd| = r} and its ratio to r.

    Positive when the ratio strictly increases over the last three radii.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("radii must be nonempty")
    if any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and increasing")
    t, x, xd = dom.base_points(L.n)
    dirs = _shell_directions(L.n, dom)
    theta = []
    for r in radii:
        values = [L.evaluate_batch(t, x, xd, np.tile(r * d, (t.shape[0], 1))) for d in dirs]
        theta.append(float(np.min(np.concatenate(values))))
    ratios = [v / r for v, r in zip(theta, radii)]
    tail = ratios[-3:]
    increasing = len(tail) >= 2 and all(b > a for a, b in zip(tail, tail[1:]))
    return CoercivityReport(radii, theta, ratios, "positive" if increasing else "negative")


# -- envelope fits ------------------------------------------------------------------


def fit_affine_majorant(lhs, scale, floor=MIN_CONSTANT):
    """Fit lhs <= c * scale + r over samples.

    Minimizes c + r with c >= ``floor`` and r >= 0.  When the minimum is
    attained on a whole interval of c, the largest such c (smallest r) is
    taken.  The cost is convex and piecewise linear in c, so a ternary search
    followed by a bisection for the edge of the minimizing set gives a result
    independent of the sample order.
    """
    lhs = np.asarray(lhs, float)
    scale = np.asarray(scale, float)

    def residual(c):
        return max(0.0, float(np.max(lhs - c * scale))) if lhs.size else 0.0

    def cost(c):
        return c + residual(c)

    pos = scale > 0
    hi = floor
    if np.any(pos):
        hi = max(floor, float(np.max(lhs[pos] / scale[pos])))
    lo_, hi_ = floor, hi
    for _ in range(200):
        m1 = lo_ + (hi_ - lo_) / 3
        m2 = hi_ - (hi_ - lo_) / 3
        if cost(m1) <= cost(m2):
            hi_ = m2
        else:
            lo_ = m1
    best_c = min((floor, lo_, hi), key=cost)
    best = cost(best_c)
    target = best + 1e-12 * (1.0 + abs(best))
    if cost(hi) <= target:
        c = hi
    else:
        a_, b_ = best_c, hi
        for _ in range(200):
            mid = 0.5 * (a_ + b_)
            if cost(mid) <= target:
                a_ = mid
            else:
                b_ = mid
        c = a_
    r = residual(c)
    # rounding in c * scale + r must not undercut any sample
    for _ in range(8):
        worst = float(np.min(c * scale + r - lhs)) if lhs.size else 0.0
        if worst >= 0:
            break
        r = float(np.nextafter(r - worst, np.inf))
    return c, r


def _fit_certificate(kind, names, lhs, scale, pts, dom, fixed=None):
    finite = np.isfinite(lhs) & np.isfinite(scale)
    if fixed is not None:
        c = float(fixed)
        r = max(0.0, float(np.max(lhs[finite] - c * scale[finite]))) if np.any(finite) else 0.0
        for _ in range(8):
            worst = float(np.min(c * scale[finite] + r - lhs[finite])) if np.any(finite) else 0.0
            if worst >= 0:
                break
            r = float(np.nextafter(r - worst, np.inf))
    else:
        c, r = fit_affine_majorant(lhs[finite], scale[finite])
    slack = np.where(finite, c * scale + r - lhs, -np.inf)
    return _certificate(kind, {names[0]: c, names[1]: r}, slack, pts, dom)


def tonelli_morrey_terms(L, pts):
    val, _, Lx, Lxd, _ = L.partials_batch(*pts)
    return _norm(Lx) + _norm(Lxd), np.abs(val)


def check_tonelli_morrey(L: LagrangianExpr, dom: SampleDomain, c: float | None = None) -> Certificate:
    """Fit |dL/dx| + |dL/dxd| <= c|L| + r on the samples.

    With ``c`` given only r is fitted.
    """
    pts = dom.samples(L.n)
    lhs, scale = tonelli_morrey_terms(L, pts)
    return _fit_certificate("tonelli-morrey", ("c", "r"), lhs, scale, pts, dom, c)


def autonomy_terms(L, pts):
    val, Lt, _, _, _ = L.partials_batch(*pts)
    return np.abs(Lt), np.abs(val)


def check_autonomy_condition(L: LagrangianExpr, dom: SampleDomain, c: float | None = None) -> Certificate:
    """Fit |dL/dt| <= c|L| + k with k constant in t; trivial when L has no t."""
    pts = dom.samples(L.n)
    lhs, scale = autonomy_terms(L, pts)
    if L.declared_autonomous:
        return _certificate("autonomy", {"c": 0.0, "k": 0.0}, 0.0 * scale + 0.0 - lhs, pts, dom)
    return _fit_certificate("autonomy", ("c", "k"), lhs, scale, pts, dom, c)


def sarychev_torres_terms(L, pts, beta, mu):
    val, Lt, Lx, _, _ = L.partials_batch(*pts)
    first = np.abs(Lt) + _norm(Lx)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = _norm(pts[2]) ** mu
        lhs = np.where(first == 0.0, 0.0, first * weight)
        scale = val**beta
    return lhs, scale


def check_sarychev_torres(L: LagrangianExpr, dom: SampleDomain, beta: float = 1.0, mu: float = 0.0,
                          gamma: float | None = None) -> Certificate:
    """Fit (|dL/dt| + |dL/dx|) |xd|^mu <= gamma L^beta + eta on the samples."""
    if not beta < 2:
        raise ValueError("beta must be < 2")
    if mu < max(beta - 1.0, -1.0):
        raise ValueError("mu must be >= max(beta - 1, -1)")
    pts = dom.samples(L.n)
    if not float(beta).is_integer():
        values = L.evaluate_batch(*pts)
        if np.any(values < 0):
            raise ValueError("L must be nonnegative on the samples for non-integer beta")
    lhs, scale = sarychev_torres_terms(L, pts, beta, mu)
    cert = _fit_certificate("sarychev-torres", ("gamma", "eta"), lhs, scale, pts, dom, gamma)
    cert.constants.update({"beta": float(beta), "mu": float(mu)})
    return cert


# -- re-checking a stored witness ------------------------------------------------------


def recheck_margin(cert: Certificate, L: LagrangianExpr) -> float:
    """Re-evaluate the defining inequality of ``cert`` at its witness."""
    w = cert.witness
    if w is None:
        raise ValueError("certificate has no witness")
    pts = (np.array([w.t]), w.x[None], w.xd[None], w.xdd[None])
    k = cert.constants
    if cert.kind == "superlinearity":
        slack = _growth_slack(L, pts, k["a"], k["b"], 1)
    elif cert.kind == "quadratic-coercivity":
        slack = _growth_slack(L, pts, k["a"], k["b"], 2)
    elif cert.kind == "convexity":
        w2 = np.asarray(cert.details["pair_xdd"], float)[None]
        slack = convexity_slack(L, pts[0], pts[1], pts[2], pts[3], w2)
    elif cert.kind == "tonelli-morrey":
        lhs, scale = tonelli_morrey_terms(L, pts)
        slack = k["c"] * scale + k["r"] - lhs
    elif cert.kind == "autonomy":
        lhs, scale = autonomy_terms(L, pts)
        slack = k["c"] * scale + k["k"] - lhs
    elif cert.kind == "sarychev-torres":
        lhs, scale = sarychev_torres_terms(L, pts, k["beta"], k["mu"])
        slack = k["gamma"] * scale + k["eta"] - lhs
    else:
        raise ValueError(f"unknown certificate kind {cert.kind!r}")
    return float(_slack_or_violation(np.where(np.isfinite(slack), slack, -np.inf))[0])


def check_all(L: LagrangianExpr, dom: SampleDomain, b_min: float = 1e-3,
              radii=(1.0, 2.0, 4.0, 8.0), beta: float = 1.0, mu: float = 0.0):
    """Every check that applies to ``L``; the growth checks need autonomy."""
    out = []
    if L.declared_autonomous:
        out.append(check_superlinearity(L, dom, b_min))
        out.append(check_quadratic_coercivity(L, dom, b_min))
    out.append(check_convexity_last_arg(L, dom))
    out.append(check_coercivity(L, dom, radii))
    out.append(check_tonelli_morrey(L, dom))
    out.append(check_autonomy_condition(L, dom))
    out.append(check_sarychev_torres(L, dom, beta, mu))
    return out
