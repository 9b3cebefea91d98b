"""INI-style problem files and the shipped presets.

Sections and keys::

    [problem]     a, b, n, lagrangian, x_a, x_b, xd_a, xd_b
    [solver]      mesh, mesh_kind, refinements, grad_tol, max_iters, quad_order
    [domain]      t_range, x_box, xd_box, xdd_box, grid_count, random_count,
                  b_min, radii, beta, mu
    [lavrentiev]  caps, penalty_mu, seed_k, seed_p

Vectors and ranges are comma-separated.  Unknown sections or keys, repeated
keys and malformed lines are errors that carry the line number.  The
``seed_k``/``seed_p`` pair describes a power-law singular candidate
x = x_a + seed_k (t - a)^seed_p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .expr import ExprError, parse
from .regularity import SampleDomain
from .solver import SolveOptions
from .trajectory import Problem

SCHEMA = {
    "problem": ("a", "b", "n", "lagrangian", "x_a", "x_b", "xd_a", "xd_b"),
    "solver": ("mesh", "mesh_kind", "refinements", "grad_tol", "max_iters", "quad_order"),
    "domain": ("t_range", "x_box", "xd_box", "xdd_box", "grid_count", "random_count",
               "b_min", "radii", "beta", "mu"),
    "lavrentiev": ("caps", "penalty_mu", "seed_k", "seed_p"),
}
REQUIRED = ("a", "b", "lagrangian", "x_a", "x_b", "xd_a", "xd_b")
DEFAULT_CAPS = (5.0, 10.0, 20.0)


class ProblemFileError(ValueError):
    def __init__(self, message, source="<string>", line=None, key=None):
        self.source = source
        self.line = line
        self.key = key
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass
class ProblemFile:
    problem: Problem
    solve_options: SolveOptions
    domain: SampleDomain
    caps: tuple = DEFAULT_CAPS
    penalty_mu: float | None = None
    seed_power: tuple | None = None
    b_min: float = 1e-3
    radii: tuple = (1.0, 2.0, 4.0, 8.0)
    beta: float = 1.0
    mu: float = 0.0
    text: str = ""
    source: str = "<string>"
    lines: dict = field(default_factory=dict)


def _read_entries(text, source):
    entries = {name: {} for name in SCHEMA}
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ProblemFileError(f"malformed section header {line!r}", source, lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ProblemFileError(f"unknown section [{section}]", source, lineno)
            continue
        if section is None:
            raise ProblemFileError("key outside of any section", source, lineno)
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ProblemFileError(f"expected 'key = value', got {line!r}", source, lineno)
        if key not in SCHEMA[section]:
            raise ProblemFileError(f"unknown key {key!r} in [{section}]", source, lineno, key)
        if key in entries[section]:
            raise ProblemFileError(f"repeated key {key!r} in [{section}]", source, lineno, key)
        if not value:
            raise ProblemFileError(f"empty value for {key!r} in [{section}]", source, lineno, key)
        entries[section][key] = value
        lines[(section, key)] = lineno
    return entries, lines


def parse_problem_file(text: str, source: str = "<string>") -> ProblemFile:
    entries, lines = _read_entries(text, source)

    def fail(section, key, message):
        raise ProblemFileError(message, source, lines.get((section, key)), key)

    def get(section, key, convert, default=None):
        if key not in entries[section]:
            return default
        try:
            return convert(entries[section][key])
        except (ValueError, TypeError) as err:
            fail(section, key, f"bad value for {key!r}: {err}")

    def vector(s):
        return [float(v) for v in s.split(",")]

    def integer(s):
        v = float(s)
        if not v.is_integer():
            raise ValueError(f"{s!r} is not an integer")
        return int(v)

    def pair(s):
        v = vector(s)
        if len(v) != 2:
            raise ValueError("expected 'lower, upper'")
        return tuple(v)

    prob = entries["problem"]
    for key in REQUIRED:
        if key not in prob:
            raise ProblemFileError(f"missing key {key!r} in [problem]", source)
    vecs = {k: get("problem", k, vector) for k in ("x_a", "x_b", "xd_a", "xd_b")}
    n = get("problem", "n", integer, len(vecs["x_a"]))
    for k, v in vecs.items():
        if len(v) != n:
            fail("problem", k, f"{k!r} has {len(v)} components, expected {n}")
    try:
        L = parse(prob["lagrangian"], n)
    except ExprError as err:
        fail("problem", "lagrangian", f"lagrangian: {err}")
    try:
        problem = Problem.create(get("problem", "a", float), get("problem", "b", float), L,
                                 vecs["x_a"], vecs["x_b"], vecs["xd_a"], vecs["xd_b"])
    except ValueError as err:
        raise ProblemFileError(str(err), source, lines.get(("problem", "a"))) from None

    solver = {}
    for key, field_name, conv in (("mesh", "initial_mesh", integer), ("mesh_kind", "mesh_kind", str),
                                  ("refinements", "refinements", integer), ("grad_tol", "grad_tol", float),
                                  ("max_iters", "max_iters", integer), ("quad_order", "quad_order", integer)):
        value = get("solver", key, conv)
        if value is not None:
            solver[field_name] = value
    try:
        opts = SolveOptions(**solver)
    except ValueError as err:
        raise ProblemFileError(f"[solver]: {err}", source) from None

    dom_kwargs = {}
    for key in ("t_range", "x_box", "xd_box", "xdd_box"):
        value = get("domain", key, pair)
        if value is not None:
            dom_kwargs[key] = value
    for key in ("grid_count", "random_count"):
        value = get("domain", key, integer)
        if value is not None:
            dom_kwargs[key] = value
    if "t_range" not in dom_kwargs:
        dom_kwargs["t_range"] = (problem.a, problem.b)
    try:
        domain = SampleDomain(**dom_kwargs)
    except ValueError as err:
        raise ProblemFileError(f"[domain]: {err}", source) from None

    caps = get("lavrentiev", "caps", lambda s: tuple(vector(s)), DEFAULT_CAPS)
    if any(c <= 0 for c in caps) or any(b <= a for a, b in zip(caps, caps[1:])):
        fail("lavrentiev", "caps", "caps must be positive and strictly increasing")
    seed_k = get("lavrentiev", "seed_k", float)
    seed_p = get("lavrentiev", "seed_p", float)
    if (seed_k is None) != (seed_p is None):
        raise ProblemFileError("seed_k and seed_p must be given together", source)
    return ProblemFile(
        problem=problem,
        solve_options=opts,
        domain=domain,
        caps=caps,
        penalty_mu=get("lavrentiev", "penalty_mu", float),
        seed_power=None if seed_k is None else (seed_k, seed_p),
        b_min=get("domain", "b_min", float, 1e-3),
        radii=get("domain", "radii", lambda s: tuple(vector(s)), (1.0, 2.0, 4.0, 8.0)),
        beta=get("domain", "beta", float, 1.0),
        mu=get("domain", "mu", float, 0.0),
        text=text,
        source=source,
        lines=lines,
    )


def load_problem_file(path) -> ProblemFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ProblemFileError(f"cannot read file: {err.strerror}", str(path)) from None
    return parse_problem_file(text, str(path))


# -- presets ------------------------------------------------------------------------

CV90_K = (3 / 5) ** (5 / 3)

_QUADRATIC_BODY = """\
a = 0
b = 1
x_a = 0
x_b = 1
xd_a = 0
xd_b = 0

[solver]
mesh = 8
refinements = 3
"""

PRESETS = {
    "quadratic": "[problem]\nlagrangian = pow(xdd1, 2)\n" + _QUADRATIC_BODY,
    "quadratic-affine": "[problem]\nlagrangian = 1 * pow(xdd1, 2) + 2 * xdd1\n" + _QUADRATIC_BODY,
    "zero": """\
[problem]
lagrangian = pow(xdd1, 2)
a = 0
b = 1
x_a = 0
x_b = 0
xd_a = 0
xd_b = 0

[solver]
mesh = 8
""",
    "cv90": f"""\
[problem]
lagrangian = pow(abs(pow(x1, 2) - pow(xd1, 5)), 2) * pow(abs(xdd1), 22) + 0.01 * pow(xdd1, 2)
a = 0
b = 1
x_a = 0
x_b = {CV90_K!r}
xd_a = 0
xd_b = {5 * CV90_K / 3!r}

[solver]
mesh = 8
refinements = 2

[domain]
x_box = -1, 1
xd_box = -1, 1
xdd_box = -2, 2

[lavrentiev]
caps = 5, 10, 20
seed_k = {CV90_K!r}
seed_p = {5 / 3!r}
""",
}


def preset(name: str) -> ProblemFile:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return parse_problem_file(PRESETS[name], f"preset:{name}")
