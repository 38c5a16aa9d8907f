"""Direct numerical extremization of the discretized product functional.

The free node values (interior nodes plus any free endpoint) are optimized
directly: the objective value and its exact chain-rule gradient come from
``variational.functional_gradient`` and a quasi-Newton (BFGS) descent with a
backtracking line search drives the gradient below tolerance.  Because the
product of two integral functionals is nonconvex, every solve multistarts
from seeded random perturbations of the straight-line interpolant between
the boundary values.

Isoperimetric problems are handled by an augmented Lagrangian around the
same descent core, with multiplier updates lam <- lam - penalty*(K - k) and
a fallback to the abnormal multiplier pair (0, 1) when the candidate is an
extremal of the constraint functional itself.

For problems whose stationarity equation is affine in the derivative slot
(state-independent integrands), ``consistency_solve`` instead solves the
stationarity equation exactly for a given pair (A, B) of functional values
and then closes the loop A = J_nabla(y), B = J_delta(y) by damped Newton
over a seeded box of starting points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import variational as va
from .calculus import GridFunction

__all__ = [
    "SolverConfig",
    "SolveReport",
    "ConsistencyRoot",
    "InfeasibleConstraintError",
    "solve",
    "solve_isoperimetric",
    "consistency_solve",
    "probe_extremal_type",
    "is_affine_class",
]


class InfeasibleConstraintError(RuntimeError):
    """No trajectory met the constraint within tolerance across multistarts."""


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-9
    constraint_tol: float = 1e-8
    max_iter: int = 10000
    multistarts: int = 8
    seed: int = 0
    penalty_growth: float = 10.0
    ab_box: float = 10.0  # seed box half-width for the (A, B) root search
    consistency_starts: int = 64

    def __post_init__(self):
        for name in (
            "grad_tol",
            "constraint_tol",
            "max_iter",
            "multistarts",
            "penalty_growth",
            "ab_box",
            "consistency_starts",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"solver config field {name} must be positive")


@dataclass(frozen=True)
class SolveReport:
    trajectory: GridFunction
    J_delta: float
    J_nabla: float
    J: float
    el_defect_1: float
    el_defect_2: float
    converged: bool
    iterations: int
    multistart_index: int
    grad_norm: float
    lambda0: float | None = None
    lam: float | None = None
    constraint_error: float | None = None
    bc_residual_a: float | None = None
    bc_residual_b: float | None = None
    extension: bool = False
    message: str = ""


@dataclass(frozen=True)
class ConsistencyRoot:
    A: float
    B: float
    trajectory: GridFunction


# ---------------------------------------------------------------------------
# BFGS with backtracking


def _bfgs(fun, z0, accept_tol, max_iter):
    """Minimize fun (returning value and gradient) from z0.

    Returns (z, f, g, iterations, converged); drives the gradient well below
    ``accept_tol`` when possible and reports convergence against it.
    """
    z = np.asarray(z0, dtype=float)
    f, g = fun(z)
    it = 0
    if not np.isfinite(f):
        return z, f, g, it, False
    n = z.size
    target = accept_tol * 1e-3
    if n == 0:
        return z, f, g, it, True
    H = np.eye(n)
    while it < max_iter and np.max(np.abs(g)) > target:
        if f < -1e100:  # objective unbounded below along this start
            break
        d = -H @ g
        gd = float(g @ d)
        if gd >= 0.0:
            H = np.eye(n)
            d = -g
            gd = float(g @ d)
        alpha, accepted = 1.0, False
        while alpha >= 1e-20:
            zn = z + alpha * d
            fn, gn = fun(zn)
            if np.isfinite(fn) and fn <= f + 1e-4 * alpha * gd:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        s = zn - z
        yv = gn - g
        stalled = fn >= f - 1e-16 * (1.0 + abs(f)) and float(
            np.max(np.abs(s))
        ) <= 1e-14 * (1.0 + float(np.max(np.abs(z))))
        z, f, g = zn, fn, gn
        it += 1
        if stalled:
            break
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            Hy = H @ yv
            H = (
                H
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + rho * (1.0 + rho * float(yv @ Hy)) * np.outer(s, s)
            )
        else:
            H = np.eye(n)
    return z, f, g, it, bool(np.max(np.abs(g)) <= accept_tol)


# ---------------------------------------------------------------------------
# Shared plumbing


def _free_indices(p: va.VariationalProblem) -> np.ndarray:
    n = len(p.scale)
    idx = list(range(1, n - 1))
    if p.bc_a is None:
        idx.insert(0, 0)
    if p.bc_b is None:
        idx.append(n - 1)
    return np.asarray(idx, dtype=int)


def _base_trajectory(p: va.VariationalProblem) -> np.ndarray:
    pts = p.scale.points
    alpha = p.bc_a if p.bc_a is not None else (p.bc_b if p.bc_b is not None else 0.0)
    beta = p.bc_b if p.bc_b is not None else alpha
    y = alpha + (pts - pts[0]) * (beta - alpha) / (pts[-1] - pts[0])
    if p.bc_a is not None:
        y[0] = p.bc_a
    if p.bc_b is not None:
        y[-1] = p.bc_b
    return y


def _perturb_amplitude(p: va.VariationalProblem) -> float:
    alpha = p.bc_a if p.bc_a is not None else 0.0
    beta = p.bc_b if p.bc_b is not None else 0.0
    return 0.5 * (abs(alpha) + abs(beta) + 1.0)


def _starts(p: va.VariationalProblem, cfg: SolverConfig, free: np.ndarray):
    rng = np.random.default_rng(cfg.seed)
    base = _base_trajectory(p)
    amp = _perturb_amplitude(p)
    out = [base[free].copy()]
    for _ in range(cfg.multistarts - 1):
        out.append(base[free] + amp * rng.standard_normal(free.size))
    return base, out


def _objective(p: va.VariationalProblem, free: np.ndarray, base: np.ndarray):
    ts, Ld, Ln = p.scale, p.L_delta, p.L_nabla
    y = base.copy()

    def fun(z):
        y[free] = z
        try:
            val, grad = va.functional_gradient(ts, Ld, Ln, y)
        except ex.DomainViolation:
            return np.inf, np.zeros(free.size)
        return val, grad[free]

    return fun


def _functional(p: va.VariationalProblem, free: np.ndarray, base: np.ndarray, Ld, Ln):
    ts = p.scale
    y = base.copy()

    def fun(z):
        y[free] = z
        val, grad = va.functional_gradient(ts, Ld, Ln, y)
        return val, grad[free]

    return fun


def _finish_report(
    p: va.VariationalProblem,
    y: GridFunction,
    converged: bool,
    iterations: int,
    index: int,
    grad_norm: float,
    **extra,
) -> SolveReport:
    Jd = va.eval_J_delta(p, y)
    Jn = va.eval_J_nabla(p, y)
    report = SolveReport(
        trajectory=y,
        J_delta=Jd,
        J_nabla=Jn,
        J=Jd * Jn,
        el_defect_1=va.el_residual_1(p, y).defect,
        el_defect_2=va.el_residual_2(p, y).defect,
        converged=converged,
        iterations=iterations,
        multistart_index=index,
        grad_norm=grad_norm,
        bc_residual_a=None if p.bc_a is not None else va.natural_bc_residual_a(p, y),
        bc_residual_b=None if p.bc_b is not None else va.natural_bc_residual_b(p, y),
        **extra,
    )
    return report


def solve(p: va.VariationalProblem, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Find a stationary point of the unconstrained discretized functional.

    Returns the converged multistart with the smallest objective value; when
    no start converges, the best iterate is reported with converged=False.
    """
    if p.constraint is not None:
        raise ValueError("problem is constrained; use solve_isoperimetric")
    free = _free_indices(p)
    base, starts = _starts(p, cfg, free)
    fun = _objective(p, free, base)
    candidates = []
    for s, z0 in enumerate(starts):
        z, f, g, it, ok = _bfgs(fun, z0, cfg.grad_tol, cfg.max_iter)
        if np.isfinite(f):
            candidates.append((s, z, f, float(np.max(np.abs(g), initial=0.0)), it, ok))
    if not candidates:
        raise ex.DomainViolation("objective undefined at every multistart")

    def trajectory_of(z):
        y = base.copy()
        y[free] = z
        return GridFunction(p.scale, y)

    converged = [c for c in candidates if c[5]]
    if converged:
        s, z, f, gn, it, _ = min(converged, key=lambda c: (c[2], c[0]))
        ok = True
    else:
        s, z, f, gn, it, ok = min(candidates, key=lambda c: (c[3], c[0]))
    traj = trajectory_of(z)
    message = "stationary point found" if ok else "did not converge; best iterate"
    if len(converged) > 1:
        # multimodality diagnostic: how far apart the converged starts landed
        spread = max(
            va.weak_norm(traj, trajectory_of(c[1])) for c in converged if c[0] != s
        )
        message += (
            f"; weak-norm spread across {len(converged)} converged starts: {spread:.3g}"
        )
    return _finish_report(p, traj, ok, it, s, gn, message=message)


# ---------------------------------------------------------------------------
# Isoperimetric solving


def solve_isoperimetric(
    p: va.VariationalProblem, cfg: SolverConfig = SolverConfig()
) -> SolveReport:
    """Augmented-Lagrangian solve of extremize J subject to K(y) = k.

    The normal branch (lambda0 = 1) is attempted first; if the candidate
    turns out to be an extremal of K itself, the abnormal pair (0, 1) is
    reported instead.  For constrained reports el_defect_1/2 hold the
    defects of the multiplier residual at the reported (lambda0, lambda).
    """
    c = va._require_constraint(p)
    free = _free_indices(p)
    base, starts = _starts(p, cfg, free)
    jfun = _functional(p, free, base, p.L_delta, p.L_nabla)
    kfun = _functional(p, free, base, c.K_delta, c.K_nabla)
    feas_target = min(cfg.constraint_tol, 1e-10)

    def alm(z0):
        lam, pen = 0.0, 10.0
        z = np.asarray(z0, float)
        total_it = 0
        feas_prev = np.inf
        stagnant = 0
        for _ in range(60):
            def merit(zz):
                try:
                    jval, jgrad = jfun(zz)
                    kval, kgrad = kfun(zz)
                except ex.DomainViolation:
                    return np.inf, np.zeros(zz.size)
                r = kval - c.k
                return (
                    jval - lam * r + 0.5 * pen * r * r,
                    jgrad + (pen * r - lam) * kgrad,
                )

            z, _, _, it, _ = _bfgs(merit, z, cfg.grad_tol, cfg.max_iter)
            total_it += it
            try:
                jval, jgrad = jfun(z)
                kval, kgrad = kfun(z)
            except ex.DomainViolation:
                return None
            r = kval - c.k
            lam = lam - pen * r
            lag_gn = float(np.max(np.abs(jgrad - lam * kgrad), initial=0.0))
            if abs(r) <= feas_target and lag_gn <= cfg.grad_tol:
                return dict(z=z, lam=lam, J=jval, feas=abs(r), lag_gn=lag_gn,
                            it=total_it, converged=True)
            stagnant = stagnant + 1 if abs(r) >= 0.9 * feas_prev and it == 0 else 0
            if stagnant >= 3:
                break
            # penalty growth stops once feasible: beyond that it only
            # ill-conditions the tangential subproblem
            if pen < 1e8 and abs(r) > feas_target:
                pen *= cfg.penalty_growth
            feas_prev = abs(r)
        return dict(z=z, lam=lam, J=jval, feas=abs(r), lag_gn=lag_gn,
                    it=total_it, converged=False)

    results = []
    for s, z0 in enumerate(starts):
        res = alm(z0)
        if res is not None:
            res["index"] = s
            results.append(res)
    if not results:
        raise ex.DomainViolation("objective undefined at every multistart")
    converged = [r for r in results if r["converged"]]
    if converged:
        best = min(converged, key=lambda r: (r["J"], r["index"]))
    else:
        best = min(results, key=lambda r: (r["feas"], r["lag_gn"], r["index"]))
        if best["feas"] > max(1e-3 * (1.0 + abs(c.k)), 10 * cfg.constraint_tol):
            raise InfeasibleConstraintError(
                f"constraint K(y) = {c.k!r} unmet across multistarts "
                f"(best |K - k| = {best['feas']:.3e})"
            )

    y = base.copy()
    y[free] = best["z"]
    traj = GridFunction(p.scale, y)
    kprob = va._as_constraint_problem(p)
    kres1, kres2 = va.el_residual_1(kprob, traj), va.el_residual_2(kprob, traj)
    abnormal_tol = 1e-6 * (1.0 + abs(kres1.mean) + abs(kres2.mean))
    abnormal = max(kres1.defect, kres2.defect) <= abnormal_tol

    if abnormal:
        if best["feas"] > cfg.constraint_tol:
            # restore feasibility along the abnormal branch
            def feas_merit(zz):
                try:
                    kval, kgrad = kfun(zz)
                except ex.DomainViolation:
                    return np.inf, np.zeros(zz.size)
                r = kval - c.k
                return 0.5 * r * r, r * kgrad

            z, _, _, it, _ = _bfgs(feas_merit, best["z"], cfg.grad_tol, cfg.max_iter)
            best = dict(best, z=z, it=best["it"] + it, feas=abs(kfun(z)[0] - c.k))
            y = base.copy()
            y[free] = best["z"]
            traj = GridFunction(p.scale, y)
        lambda0, lam = 0.0, 1.0
        conv = best["feas"] <= cfg.constraint_tol
        message = "abnormal extremal (candidate is an extremal of K)"
    else:
        lambda0, lam = 1.0, best["lam"]
        conv = best["converged"]
        message = "normal extremal" if conv else "did not converge; best iterate"

    iso1 = va.iso_residual(p, traj, lambda0, lam, "el1")
    iso2 = va.iso_residual(p, traj, lambda0, lam, "el2")
    Jd, Jn = va.eval_J_delta(p, traj), va.eval_J_nabla(p, traj)
    return SolveReport(
        trajectory=traj,
        J_delta=Jd,
        J_nabla=Jn,
        J=Jd * Jn,
        el_defect_1=iso1.defect,
        el_defect_2=iso2.defect,
        converged=conv,
        iterations=best["it"],
        multistart_index=best["index"],
        grad_norm=best["lag_gn"],
        lambda0=lambda0,
        lam=lam,
        constraint_error=best["feas"],
        bc_residual_a=None if p.bc_a is not None else va.natural_bc_residual_a(p, traj),
        bc_residual_b=None if p.bc_b is not None else va.natural_bc_residual_b(p, traj),
        extension=(p.bc_a is None or p.bc_b is None),
        message=message,
    )


# ---------------------------------------------------------------------------
# Self-consistency solving for derivative-affine problems


def is_affine_class(p: va.VariationalProblem) -> bool:
    """True when both integrands are state-independent with derivative-affine
    slope, so the stationarity equation is linear in the difference quotient."""
    for L in (p.L_delta, p.L_nabla):
        if not ex.is_zero(ex.differentiate(L, "y")):
            return False
        d3 = ex.differentiate(L, "v")
        if ex.depends_on(d3, "y"):
            return False
        if ex.depends_on(ex.differentiate(d3, "v"), "v"):
            return False
    return True


def _consistency_trajectory(p, A, B, pieces):
    """Solve A*slopeterm + B*slopeterm(sigma) = C for y, with C pinned by the
    right boundary value; returns None when the linear solve degenerates."""
    pd, qd, pn_sig, qn_sig, mu = pieces
    denom = A * qd + B * qn_sig
    scale = abs(A) + abs(B) + 1.0
    if np.min(np.abs(denom)) < 1e-12 * scale:
        return None
    cvec = A * pd + B * pn_sig
    s1 = float(np.sum(mu / denom))
    s2 = float(np.sum(mu * cvec / denom))
    if abs(s1) < 1e-12:
        return None
    C = (p.bc_b - p.bc_a + s2) / s1
    d = (C - cvec) / denom
    y = np.concatenate([[p.bc_a], p.bc_a + np.cumsum(mu * d)])
    return y


def consistency_solve(
    p: va.VariationalProblem, cfg: SolverConfig = SolverConfig()
) -> list[ConsistencyRoot]:
    """All distinct real solutions (A, B) of the self-consistency system

        A = J_nabla(y_{A,B}),   B = J_delta(y_{A,B}),

    where y_{A,B} solves the derivative-affine stationarity equation with the
    problem's boundary values.  Damped Newton from ``consistency_starts``
    seeds in the (A, B) box; roots deduplicated at distance 1e-6 and sorted.
    An empty list means no self-consistent extremal exists.
    """
    if p.constraint is not None:
        raise ValueError("consistency_solve handles unconstrained problems only")
    if p.bc_a is None or p.bc_b is None:
        raise ValueError("consistency_solve needs both endpoint values fixed")
    if not is_affine_class(p):
        raise ValueError(
            "problem is not in the affine class "
            "(state-independent integrands, derivative-affine slopes)"
        )
    ts = p.scale
    mu = ts.mu_values[:-1]
    t_left = ts.points[:-1]
    t_sig = ts.points[1:]
    zeros = np.zeros_like(t_left)
    d3d = ex.differentiate(p.L_delta, "v")
    d3n = ex.differentiate(p.L_nabla, "v")
    pd = np.broadcast_to(ex.eval_arrays(d3d, t_left, zeros, zeros), t_left.shape).astype(float)
    qd = np.broadcast_to(
        ex.eval_arrays(ex.differentiate(d3d, "v"), t_left, zeros, zeros), t_left.shape
    ).astype(float)
    pn_sig = np.broadcast_to(ex.eval_arrays(d3n, t_sig, zeros, zeros), t_sig.shape).astype(float)
    qn_sig = np.broadcast_to(
        ex.eval_arrays(ex.differentiate(d3n, "v"), t_sig, zeros, zeros), t_sig.shape
    ).astype(float)
    pieces = (pd, qd, pn_sig, qn_sig, mu)

    def system(x):
        y = _consistency_trajectory(p, x[0], x[1], pieces)
        if y is None:
            return None
        try:
            dvals = np.diff(y) / mu
            jd = float(np.dot(mu, np.broadcast_to(
                ex.eval_arrays(p.L_delta, t_left, y[1:], dvals), t_left.shape)))
            jn = float(np.dot(ts.nu_values[1:], np.broadcast_to(
                ex.eval_arrays(p.L_nabla, t_sig, y[:-1], dvals), t_sig.shape)))
        except ex.DomainViolation:
            return None
        return np.array([jn - x[0], jd - x[1]]), y

    def newton(x0):
        x = np.asarray(x0, float)
        for _ in range(100):
            out = system(x)
            if out is None:
                return None
            Fx, _ = out
            nrm = float(np.max(np.abs(Fx)))
            if nrm <= 1e-10 * (1.0 + float(np.max(np.abs(x)))):
                return x
            jac = np.zeros((2, 2))
            for j in range(2):
                h = 1e-7 * (1.0 + abs(x[j]))
                xp = x.copy()
                xp[j] += h
                outp = system(xp)
                if outp is None:
                    return None
                jac[:, j] = (outp[0] - Fx) / h
            try:
                step = np.linalg.solve(jac, -Fx)
            except np.linalg.LinAlgError:
                return None
            norm0 = float(np.linalg.norm(Fx))
            lamb, moved = 1.0, False
            while lamb >= 1e-12:
                cand = x + lamb * step
                outc = system(cand)
                if outc is not None and float(np.linalg.norm(outc[0])) < norm0:
                    x, moved = cand, True
                    break
                lamb *= 0.5
            if not moved:
                return None
        return None

    rng = np.random.default_rng(cfg.seed)
    seeds = rng.uniform(-cfg.ab_box, cfg.ab_box, size=(cfg.consistency_starts, 2))
    roots: list[np.ndarray] = []
    for x0 in seeds:
        r = newton(x0)
        if r is None:
            continue
        if any(np.linalg.norm(r - q) <= 1e-6 for q in roots):
            continue
        roots.append(r)
    roots.sort(key=lambda r: (r[0], r[1]))
    out = []
    for r in roots:
        _, y = system(r)
        out.append(ConsistencyRoot(float(r[0]), float(r[1]), GridFunction(ts, y)))
    return out


# ---------------------------------------------------------------------------
# Second-order probing


def probe_extremal_type(
    p: va.VariationalProblem, y: GridFunction, cfg: SolverConfig = SolverConfig()
) -> str:
    """Random-direction second-difference probe at a stationary trajectory.

    Returns one of 'local-min-indication', 'local-max-indication',
    'saddle-indication', 'inconclusive'.  The probe is heuristic: a 0.9
    majority of positive (negative) curvatures indicates a minimum (maximum).
    """
    r1 = va.el_residual_1(p, y)
    r2 = va.el_residual_2(p, y)
    Jval = va.eval_J(p, y)
    stat_tol = 10.0 * cfg.grad_tol * (1.0 + abs(Jval))
    if max(r1.defect, r2.defect) > stat_tol:
        raise ValueError(
            f"trajectory is not stationary (defect {max(r1.defect, r2.defect):.3e})"
        )
    free = _free_indices(p)
    base = y.values.copy()
    fun = _objective(p, free, base)
    z0 = base[free]
    rng = np.random.default_rng(cfg.seed)
    h = 1e-4
    k = 50
    pos = neg = 0
    for _ in range(k):
        d = rng.standard_normal(free.size)
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            continue
        d /= nrm
        fp, _ = fun(z0 + h * d)
        fm, _ = fun(z0 - h * d)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            continue
        d2 = (fp - 2.0 * Jval + fm) / (h * h)
        floor = 50.0 * np.finfo(float).eps * (abs(Jval) + abs(fp) + abs(fm)) / (h * h)
        if d2 > floor:
            pos += 1
        elif d2 < -floor:
            neg += 1
    if pos >= 0.9 * k:
        return "local-min-indication"
    if neg >= 0.9 * k:
        return "local-max-indication"
    if pos >= 0.1 * k and neg >= 0.1 * k:
        return "saddle-indication"
    return "inconclusive"
