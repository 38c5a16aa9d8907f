"""Batch command-line interface.

Commands:
  tsvar eval     --problem P --trajectory T.csv       print J_delta, J_nabla, J
  tsvar residual --problem P --trajectory T.csv --form el1|el2|iso1|iso2|nbc
  tsvar solve    --problem P [--out DIR]              solve and write report files
  tsvar verify   [--case ID]                          run the bundled example suite

Problem files are INI-style documents with sections [timescale], [lagrangian],
[boundary] and optional [constraint] and [solver]; unknown sections or keys
are rejected.  The default random seed comes from the TSVAR_SEED environment
variable and can be overridden per file ([solver] seed = ...) or with --seed.

Exit codes: 0 success/converged, 1 verification failure, 2 no extremal or
no convergence, 3 infeasible constraint, 64 parse error, 65 trajectory/scale
mismatch, 66 inapplicable residual form.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import calculus as ca
from . import expr as ex
from . import solver as so
from . import timescale as tsc
from . import variational as va

__all__ = [
    "main",
    "ProblemFileError",
    "InapplicableFormError",
    "parse_problem_file",
    "parse_problem_text",
    "run_verify_cases",
    "load_bundled_manifest",
]

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_NOT_CONVERGED = 2
EXIT_INFEASIBLE = 3
EXIT_PARSE = 64
EXIT_SCALE_MISMATCH = 65
EXIT_BAD_FORM = 66


class ProblemFileError(ValueError):
    pass


class InapplicableFormError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


# ---------------------------------------------------------------------------
# Problem files

_SECTION_KEYS = {
    "timescale": {"timescale"},
    "lagrangian": {"delta", "nabla"},
    "boundary": {"a", "b"},
    "constraint": {"delta", "nabla", "k"},
    "solver": {
        "grad_tol",
        "constraint_tol",
        "max_iter",
        "multistarts",
        "seed",
        "penalty_growth",
        "ab_box",
        "consistency_starts",
    },
}
_REQUIRED_SECTIONS = ("timescale", "lagrangian", "boundary")


def _parse_timescale_literal(text: str) -> tsc.TimeScale:
    body = text.strip()
    if body.startswith("explicit"):
        rest = body[len("explicit") :].strip()
        if not (rest.startswith("[") and rest.endswith("]")):
            raise ProblemFileError(f"explicit time scale needs [..] list: {text!r}")
        cells = [c for c in rest[1:-1].split(",") if c.strip()]
        try:
            return tsc.from_points([float(c) for c in cells])
        except (ValueError, tsc.TimeScaleError) as err:
            raise ProblemFileError(f"bad explicit time scale: {err}") from None
    parts = body.split()
    try:
        if parts and parts[0] == "uniform" and len(parts) == 4:
            return tsc.uniform(float(parts[1]), float(parts[2]), int(parts[3]))
        if parts and parts[0] == "hz" and len(parts) == 4:
            return tsc.h_integers(float(parts[1]), float(parts[2]), float(parts[3]))
        if parts and parts[0] == "qscale" and len(parts) == 4:
            return tsc.q_scale(float(parts[1]), int(parts[2]), int(parts[3]))
    except (ValueError, tsc.TimeScaleError) as err:
        raise ProblemFileError(f"bad time scale literal: {err}") from None
    raise ProblemFileError(f"unrecognized time scale literal: {text!r}")


def _parse_boundary(text: str, name: str) -> float | None:
    body = text.strip()
    if body == "free":
        return None
    if body.startswith("fixed:"):
        try:
            return float(body[len("fixed:") :])
        except ValueError:
            raise ProblemFileError(f"bad boundary value for {name}: {text!r}") from None
    raise ProblemFileError(f"boundary {name} must be 'fixed:<value>' or 'free'")


def _parse_expression(text: str, where: str) -> ex.Expression:
    try:
        return ex.parse(text)
    except ex.ExprSyntaxError as err:
        raise ProblemFileError(f"bad expression for {where}: {err}") from None


def parse_problem_text(text: str) -> tuple[va.VariationalProblem, dict]:
    """Parse problem-file content; returns the problem and solver overrides."""
    cp = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), interpolation=None, strict=True
    )
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ProblemFileError(f"malformed problem file: {err}") from None
    if cp.defaults():
        raise ProblemFileError("keys outside a known section are not allowed")
    for section in cp.sections():
        if section not in _SECTION_KEYS:
            raise ProblemFileError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SECTION_KEYS[section]:
                raise ProblemFileError(f"unknown key {key!r} in section [{section}]")
    for section in _REQUIRED_SECTIONS:
        if section not in cp:
            raise ProblemFileError(f"missing required section [{section}]")

    def need(section: str, key: str) -> str:
        if key not in cp[section]:
            raise ProblemFileError(f"missing key {key!r} in section [{section}]")
        return cp[section][key]

    scale = _parse_timescale_literal(need("timescale", "timescale"))
    L_delta = _parse_expression(need("lagrangian", "delta"), "[lagrangian] delta")
    L_nabla = _parse_expression(need("lagrangian", "nabla"), "[lagrangian] nabla")
    bc_a = _parse_boundary(need("boundary", "a"), "a")
    bc_b = _parse_boundary(need("boundary", "b"), "b")

    constraint = None
    if "constraint" in cp:
        try:
            k = float(need("constraint", "k"))
        except ValueError:
            raise ProblemFileError("constraint level k must be a number") from None
        constraint = va.IsoperimetricConstraint(
            _parse_expression(need("constraint", "delta"), "[constraint] delta"),
            _parse_expression(need("constraint", "nabla"), "[constraint] nabla"),
            k,
        )

    overrides: dict = {}
    if "solver" in cp:
        ints = {"max_iter", "multistarts", "seed", "consistency_starts"}
        for key, raw in cp["solver"].items():
            try:
                overrides[key] = int(raw) if key in ints else float(raw)
            except ValueError:
                raise ProblemFileError(f"bad numeric value for solver {key}") from None

    try:
        problem = va.VariationalProblem(scale, L_delta, L_nabla, bc_a, bc_b, constraint)
    except ValueError as err:
        raise ProblemFileError(str(err)) from None
    return problem, overrides


def parse_problem_file(path) -> tuple[va.VariationalProblem, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ProblemFileError(f"cannot read problem file: {err}") from None
    return parse_problem_text(text)


def _config_for(overrides: dict, seed_flag: int | None) -> so.SolverConfig:
    env_seed = os.environ.get("TSVAR_SEED")
    try:
        cfg = so.SolverConfig(seed=int(env_seed) if env_seed else 0)
        if overrides:
            cfg = replace(cfg, **overrides)
    except ValueError as err:
        raise ProblemFileError(f"bad solver configuration: {err}") from None
    if seed_flag is not None:
        cfg = replace(cfg, seed=seed_flag)
    return cfg


def _load_trajectory(path, scale) -> ca.GridFunction:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ProblemFileError(f"cannot read trajectory file: {err}") from None
    try:
        return ca.read_csv(io.StringIO(text), scale)
    except tsc.TimeScaleError as err:
        raise err
    except ValueError as err:
        raise ProblemFileError(f"bad trajectory CSV: {err}") from None


# ---------------------------------------------------------------------------
# Commands


def _cmd_eval(args) -> int:
    problem, _ = parse_problem_file(args.problem)
    y = _load_trajectory(args.trajectory, problem.scale)
    jd = va.eval_J_delta(problem, y)
    jn = va.eval_J_nabla(problem, y)
    print(f"J_delta={_fmt(jd)} J_nabla={_fmt(jn)} J={_fmt(jd * jn)}")
    return EXIT_OK


def _residual_rows(problem, y, args):
    form = args.form
    if form in ("el1", "el2"):
        rep = va.el_residual_1(problem, y) if form == "el1" else va.el_residual_2(problem, y)
        return rep.residual, rep.defect, rep.mean
    if form in ("iso1", "iso2"):
        if problem.constraint is None:
            raise InapplicableFormError("isoperimetric form needs a [constraint] section")
        if args.lambda0 is None or args.lam is None:
            raise InapplicableFormError("isoperimetric form needs --lambda0 and --lambda")
        rep = va.iso_residual(problem, y, args.lambda0, args.lam, "el1" if form == "iso1" else "el2")
        return rep.residual, rep.defect, rep.mean
    # natural boundary conditions
    if problem.bc_a is not None and problem.bc_b is not None:
        raise InapplicableFormError("form nbc needs at least one free endpoint")
    ts = problem.scale
    idx, vals = [], []
    if problem.bc_a is None:
        idx.append(0)
        vals.append(va.natural_bc_residual_a(problem, y))
    if problem.bc_b is None:
        idx.append(len(ts) - 1)
        vals.append(va.natural_bc_residual_b(problem, y))
    rows = [(ts.points[i], v) for i, v in zip(idx, vals)]
    defect = max(abs(v) for v in vals)
    mean = float(np.mean(vals))
    return rows, defect, mean


def _cmd_residual(args) -> int:
    problem, _ = parse_problem_file(args.problem)
    y = _load_trajectory(args.trajectory, problem.scale)
    residual, defect, mean = _residual_rows(problem, y, args)
    lines = ["t,residual"]
    if isinstance(residual, ca.GridFunction):
        lines += [f"{t:.17g},{v:.17g}" for t, v in zip(residual.t, residual.values)]
    else:
        lines += [f"{t:.17g},{v:.17g}" for t, v in residual]
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "residual.csv").write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    print(f"form={args.form} defect={_fmt(defect)} mean={_fmt(mean)}")
    return EXIT_OK


def _report_lines(report: so.SolveReport) -> list[str]:
    lines = [
        f"converged={'true' if report.converged else 'false'}",
        f"message={report.message}",
        f"J_delta={_fmt(report.J_delta)}",
        f"J_nabla={_fmt(report.J_nabla)}",
        f"J={_fmt(report.J)}",
        f"el_defect_1={_fmt(report.el_defect_1)}",
        f"el_defect_2={_fmt(report.el_defect_2)}",
        f"grad_norm={_fmt(report.grad_norm)}",
        f"iterations={report.iterations}",
        f"multistart_index={report.multistart_index}",
    ]
    if report.lambda0 is not None:
        lines.append(f"lambda0={_fmt(report.lambda0)}")
    if report.lam is not None:
        lines.append(f"lambda={_fmt(report.lam)}")
    if report.constraint_error is not None:
        lines.append(f"constraint_error={_fmt(report.constraint_error)}")
    if report.bc_residual_a is not None:
        lines.append(f"bc_residual_a={_fmt(report.bc_residual_a)}")
    if report.bc_residual_b is not None:
        lines.append(f"bc_residual_b={_fmt(report.bc_residual_b)}")
    lines.append(f"extension={'true' if report.extension else 'false'}")
    return lines


def _consistency_report(problem, cfg) -> tuple[so.SolveReport | None, list]:
    roots = so.consistency_solve(problem, cfg)
    if not roots:
        return None, roots
    root = roots[0]
    y = root.trajectory
    _, grad = va.functional_gradient(problem.scale, problem.L_delta, problem.L_nabla, y.values)
    free = [i for i in range(1, len(problem.scale) - 1)]
    gn = float(np.max(np.abs(grad[free]), initial=0.0))
    jd, jn = va.eval_J_delta(problem, y), va.eval_J_nabla(problem, y)
    report = so.SolveReport(
        trajectory=y,
        J_delta=jd,
        J_nabla=jn,
        J=jd * jn,
        el_defect_1=va.el_residual_1(problem, y).defect,
        el_defect_2=va.el_residual_2(problem, y).defect,
        converged=True,
        iterations=0,
        multistart_index=0,
        grad_norm=gn,
        message=f"self-consistent extremal (A={_fmt(root.A)} B={_fmt(root.B)}"
        + (f"; {len(roots)} roots total)" if len(roots) > 1 else ")"),
    )
    return report, roots


def _solve_dispatch(problem, cfg) -> tuple[so.SolveReport | None, str]:
    """Shared solve pipeline: isoperimetric, self-consistency, or direct."""
    if problem.constraint is not None:
        return so.solve_isoperimetric(problem, cfg), "isoperimetric"
    if (
        problem.bc_a is not None
        and problem.bc_b is not None
        and so.is_affine_class(problem)
    ):
        report, _ = _consistency_report(problem, cfg)
        return report, "consistency"
    return so.solve(problem, cfg), "direct"


def _cmd_solve(args) -> int:
    problem, overrides = parse_problem_file(args.problem)
    cfg = _config_for(overrides, args.seed)
    try:
        report, method = _solve_dispatch(problem, cfg)
    except so.InfeasibleConstraintError as err:
        print(f"infeasible: {err}")
        return EXIT_INFEASIBLE
    if report is None:
        print("no self-consistent extremal found (empty consistency set)")
        return EXIT_NOT_CONVERGED
    outdir = Path(args.out) if args.out else Path(".")
    outdir.mkdir(parents=True, exist_ok=True)
    ca.write_csv(report.trajectory, outdir / "trajectory.csv")
    (outdir / "report.txt").write_text("\n".join(_report_lines(report)) + "\n", encoding="utf-8")
    print(
        f"{'converged' if report.converged else 'not converged'} ({method}): "
        f"J={_fmt(report.J)} files in {outdir}"
    )
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# Verification suite


def load_bundled_manifest() -> dict:
    root = resources.files("tsvar").joinpath("problems")
    return json.loads(root.joinpath("manifest.json").read_text(encoding="utf-8"))


def _bundled_path(name: str):
    return resources.files("tsvar").joinpath("problems").joinpath(name)


def _case_context(case: dict, cfg: so.SolverConfig) -> dict:
    problem, overrides = parse_problem_text(
        _bundled_path(case["problem"]).read_text(encoding="utf-8")
    )
    if overrides:
        cfg = replace(cfg, **overrides)
    ctx: dict = {}
    mode = case["mode"]
    if mode == "solve":
        report, method = _solve_dispatch(problem, cfg)
        if report is None:
            ctx["n_roots"] = 0.0
            return ctx
        ctx.update(
            trajectory=report.trajectory.values,
            J_delta=report.J_delta,
            J_nabla=report.J_nabla,
            J=report.J,
            el_defect_1=report.el_defect_1,
            el_defect_2=report.el_defect_2,
            converged=1.0 if report.converged else 0.0,
        )
        if report.lam is not None:
            ctx["lambda"] = report.lam
        if report.lambda0 is not None:
            ctx["lambda0"] = report.lambda0
        if report.constraint_error is not None:
            ctx["constraint_error"] = report.constraint_error
        if report.bc_residual_b is not None:
            ctx["bc_residual_b"] = abs(report.bc_residual_b)
        if report.bc_residual_a is not None:
            ctx["bc_residual_a"] = abs(report.bc_residual_a)
        if problem.constraint is not None:
            ctx["abnormal"] = (
                1.0
                if va.is_K_extremal(problem, report.trajectory, 1e-6)
                else 0.0
            )
    elif mode == "consistency":
        roots = so.consistency_solve(problem, cfg)
        ctx["n_roots"] = float(len(roots))
        if roots:
            ctx.update(A=roots[0].A, B=roots[0].B, trajectory=roots[0].trajectory.values)
    elif mode == "trajectory":
        y = ca.read_csv(
            io.StringIO(_bundled_path(case["trajectory"]).read_text(encoding="utf-8")),
            problem.scale,
        )
        jd, jn = va.eval_J_delta(problem, y), va.eval_J_nabla(problem, y)
        ctx.update(
            J_delta=jd,
            J_nabla=jn,
            J=jd * jn,
            el_defect_1=va.el_residual_1(problem, y).defect,
            el_defect_2=va.el_residual_2(problem, y).defect,
        )
    else:
        raise ValueError(f"unknown verify mode {mode!r}")
    return ctx


def run_verify_cases(manifest: dict, cfg: so.SolverConfig, case_filter: str | None = None):
    """Run manifest cases; returns (rows, all_passed)."""
    rows = []
    ok_all = True
    cases = [c for c in manifest["cases"] if case_filter in (None, c["id"])]
    if case_filter is not None and not cases:
        raise ValueError(f"no case with id {case_filter!r}")
    for case in cases:
        try:
            ctx = _case_context(case, cfg)
        except Exception as err:  # a crashed case fails all its checks
            for check in case["checks"]:
                rows.append((case["id"], check["quantity"], "-", f"error: {err}",
                             "-", check.get("provenance", ""), False))
            ok_all = False
            continue
        for check in case["checks"]:
            q = check["quantity"]
            got = ctx.get(q)
            if q == "trajectory":
                expected = np.asarray(check["expected"], dtype=float)
                tol = float(check["tol"])
                if got is None or len(got) != len(expected):
                    passed, gottxt = False, "missing"
                else:
                    dev = float(np.max(np.abs(np.asarray(got) - expected)))
                    passed, gottxt = dev <= tol, f"max dev {_fmt(dev)}"
                exptxt = "node values"
            elif "max" in check:
                tol = float(check["max"])
                passed = got is not None and got <= tol
                gottxt = "missing" if got is None else _fmt(got)
                exptxt = f"<= {_fmt(tol)}"
            else:
                expected = float(check["expected"])
                tol = float(check["tol"])
                passed = got is not None and abs(got - expected) <= tol
                gottxt = "missing" if got is None else _fmt(got)
                exptxt = _fmt(expected)
            rows.append(
                (case["id"], q, exptxt, gottxt, _fmt(tol), check.get("provenance", ""), passed)
            )
            ok_all = ok_all and passed
    return rows, ok_all


def _cmd_verify(args) -> int:
    cfg = _config_for({}, args.seed)
    manifest = load_bundled_manifest()
    try:
        rows, ok = run_verify_cases(manifest, cfg, args.case)
    except ValueError as err:
        print(str(err))
        return EXIT_PARSE
    widths = [12, 22, 16, 22, 10]
    header = ("case", "quantity", "expected", "got", "tol")
    print(" | ".join(h.ljust(w) for h, w in zip(header, widths)) + " | status | provenance")
    for case_id, q, exp, got, tol, prov, passed in rows:
        cells = [case_id, q, exp, got, tol]
        line = " | ".join(str(c).ljust(w) for c, w in zip(cells, widths))
        print(f"{line} | {'PASS' if passed else 'FAIL':6s} | {prov}")
    print(f"verify: {'all cases pass' if ok else 'FAILURES present'}")
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tsvar", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(sp, trajectory=False):
        sp.add_argument("--problem", required=True, help="problem file path")
        if trajectory:
            sp.add_argument("--trajectory", required=True, help="trajectory CSV (t,value)")
        sp.add_argument("--seed", type=int, default=None, help="random seed override")
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("eval", help="evaluate the functionals along a trajectory")
    add_common(sp, trajectory=True)

    sp = sub.add_parser("residual", help="stationarity residual along a trajectory")
    add_common(sp, trajectory=True)
    sp.add_argument("--form", required=True, choices=["el1", "el2", "iso1", "iso2", "nbc"])
    sp.add_argument("--lambda0", type=float, default=None)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)

    sp = sub.add_parser("solve", help="solve for an extremal trajectory")
    add_common(sp)

    sp = sub.add_parser("verify", help="run the bundled example suite")
    sp.add_argument("--case", default=None, help="run a single case id")
    sp.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "residual":
            return _cmd_residual(args)
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_verify(args)
    except (ProblemFileError, ex.ExprSyntaxError) as err:
        print(f"parse error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except tsc.TimeScaleError as err:
        print(f"scale mismatch: {err}", file=sys.stderr)
        return EXIT_SCALE_MISMATCH
    except InapplicableFormError as err:
        print(f"inapplicable form: {err}", file=sys.stderr)
        return EXIT_BAD_FORM


if __name__ == "__main__":
    sys.exit(main())
