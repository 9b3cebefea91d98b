"""Command-line entry point: ``varcheck <command> <file|--preset NAME> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import conditions, lavrentiev, regularity
from .expr import ExprDomainError
from .problem_file import PRESETS, ProblemFileError, load_problem_file, preset
from .solver import options_with, solve_refined
from .trajectory import arc_length_chart, sobolev_norms, trajectory_from_csv, trajectory_to_csv

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NONCONVERGENCE = 3
EXIT_DOMAIN = 4

COMMANDS = ("solve", "check-conditions", "check-regularity", "probe-lavrentiev")
SEED_KNOTS = (20, 30, 40)


class NonConvergence(Exception):
    pass


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


class Artifact:
    """Output directory whose files are recorded with their sha256."""

    def __init__(self, out: Path):
        self.out = out
        self.files = []
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name, text):
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files.append({"name": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    def finish(self, command, source, status, message, results):
        summary = {
            "command": command,
            "source": source,
            "exit_status": status,
            "message": message,
            "results": results,
            "files": self.files,
        }
        (self.out / "summary.json").write_text(_json(summary), encoding="utf-8")


def build_parser():
    parser = argparse.ArgumentParser(prog="varcheck", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("file", nargs="?", help="problem file (INI)")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="use a shipped example problem")
    parser.add_argument("--out", default="varcheck-out", help="output directory")
    parser.add_argument("--mesh", type=int, help="initial number of mesh intervals")
    parser.add_argument("--refinements", type=int, help="number of bisection refinements")
    parser.add_argument("--grad-tol", type=float, help="gradient tolerance")
    parser.add_argument("--seed", type=int, default=0, help="rng seed for regularity sampling")
    parser.add_argument("--grid", type=int, help="s-grid size for profiles, grid count for sampling")
    parser.add_argument("--cap", type=float, help="single cap M for probe-lavrentiev")
    parser.add_argument("--trajectory", help="trajectory CSV for check-conditions (skips solving)")
    return parser


def _options(pf, args):
    changes = {}
    if args.mesh is not None:
        changes["initial_mesh"] = args.mesh
    if args.refinements is not None:
        changes["refinements"] = args.refinements
    if args.grad_tol is not None:
        changes["grad_tol"] = args.grad_tol
    return options_with(pf.solve_options, **changes)


def _solve(pf, opts, art, results):
    report = solve_refined(pf.problem, opts)
    art.write("trajectory.csv", trajectory_to_csv(report.trajectory))
    art.write("solve_report.json", _json(report.to_dict()))
    results["J"] = report.final.J_value
    results["K"] = report.final.K
    results["converged"] = report.converged
    return report


def cmd_solve(pf, args, art, results):
    report = _solve(pf, _options(pf, args), art, results)
    if not report.converged:
        raise NonConvergence("solver did not reach the gradient tolerance")


def cmd_check_conditions(pf, args, art, results):
    report = None
    if args.trajectory:
        try:
            traj = trajectory_from_csv(Path(args.trajectory).read_text(encoding="utf-8"))
        except (OSError, ValueError) as err:
            raise ProblemFileError(f"bad trajectory: {err}", args.trajectory) from None
    else:
        report = _solve(pf, _options(pf, args), art, results)
        traj = report.trajectory
    grid = args.grid or 256
    chart = arc_length_chart(traj)
    profiles = [conditions.dbr_profile(pf.problem, traj, chart, grid)]
    profiles += [conditions.el_profile(pf.problem, traj, chart, i, grid) for i in range(1, pf.problem.n + 1)]
    summary = []
    for prof in profiles:
        name = "profile_dbr.csv" if prof.kind == "dbr" else f"profile_el{prof.component}.csv"
        art.write(name, prof.to_csv())
        summary.append({"kind": prof.kind, "component": prof.component, "file": name,
                        "c_hat": prof.c_hat, "deviation": prof.deviation,
                        "affine_deviation": prof.affine_deviation, "flags": list(prof.flags)})
    art.write("conditions.json", _json({"grid": grid, "arc_length": chart.length, "profiles": summary}))
    results["profiles"] = summary
    if report is not None and not report.converged:
        raise NonConvergence("solver did not reach the gradient tolerance")


def _seed(pf, knots=lavrentiev.SEED_KNOTS):
    if pf.seed_power is None:
        return None
    return lavrentiev.singular_seed(pf.problem, *pf.seed_power, knots=knots)


def cmd_check_regularity(pf, args, art, results):
    dom = pf.domain
    changes = {"rng_seed": args.seed}
    if args.grid is not None:
        changes["grid_count"] = args.grid
    dom = regularity.SampleDomain(**{**dom.__dict__, **changes})
    L = pf.problem.L
    checks = regularity.check_all(L, dom, pf.b_min, pf.radii, pf.beta, pf.mu)
    payload = {"domain": dom.to_dict(), "certificates": [c.to_dict() for c in checks]}
    if pf.seed_power is not None:
        rows = []
        for knots in SEED_KNOTS:
            norms = sobolev_norms(_seed(pf, knots))
            rows.append({"knots": knots, "norm2_xdd_sq": norms.norm2_xdd**2,
                         "ess_sup_xdd": norms.ess_sup_xdd})
        payload["singular_candidate"] = {"k": pf.seed_power[0], "p": pf.seed_power[1], "graded": rows}
    art.write("certificates.json", _json(payload))
    results["verdicts"] = {c.to_dict()["kind"]: c.verdict for c in checks}


def cmd_probe_lavrentiev(pf, args, art, results):
    opts = lavrentiev.lavrentiev_options(_options(pf, args), pf.penalty_mu)
    caps = (args.cap,) if args.cap is not None else pf.caps
    reports = lavrentiev.cap_sweep(pf.problem, opts, caps, _seed(pf))
    for rep in reports:
        art.write(f"gap_M{rep.cap_M:g}.csv", rep.to_csv())
    art.write("gap_report.json", _json([rep.to_dict() for rep in reports]))
    results["gap_estimates"] = {f"{rep.cap_M:g}": rep.gap_estimate for rep in reports}
    if not all(rep.converged for rep in reports):
        raise NonConvergence("a solver leg did not converge")


HANDLERS = {
    "solve": cmd_solve,
    "check-conditions": cmd_check_conditions,
    "check-regularity": cmd_check_regularity,
    "probe-lavrentiev": cmd_probe_lavrentiev,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if (args.file is None) == (args.preset is None):
        print("varcheck: give exactly one of a problem file or --preset", file=sys.stderr)
        return EXIT_PARSE
    try:
        pf = preset(args.preset) if args.preset else load_problem_file(args.file)
    except ProblemFileError as err:
        print(f"varcheck: {err}", file=sys.stderr)
        return EXIT_PARSE

    art = Artifact(Path(args.out))
    art.write("problem.ini", pf.text)
    results = {}
    status, message = EXIT_OK, "ok"
    try:
        HANDLERS[args.command](pf, args, art, results)
    except NonConvergence as err:
        status, message = EXIT_NONCONVERGENCE, str(err)
    except ExprDomainError as err:
        status, message = EXIT_DOMAIN, str(err)
    except (ProblemFileError, ValueError) as err:
        status, message = EXIT_PARSE, str(err)
    if status:
        print(f"varcheck: {message}", file=sys.stderr)
    art.finish(args.command, pf.source, status, message, results)
    return status


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
