"""Constrained smooth optimization backend.

Every scalar subproblem in the package funnels through :func:`solve`:
minimize a differentiable objective subject to equality constraints
``h(x) = 0``, inequality constraints ``g(x) >= 0`` and box bounds.

The local solve itself is sequential quadratic programming (scipy's SLSQP,
which maintains a damped BFGS Hessian approximation internally).  The SQP
result is then refined by a Newton iteration on the active-set KKT system
using exact constraint/objective Hessians where supplied (finite-difference
Hessians of the gradients otherwise), which also produces the Lagrange
multipliers.  On convergence the stationarity residual of

    L(x) = f(x) - sum_i mu_i g_i(x) + sum_j lambda_j h_j(x),  mu_i >= 0

is below ``tol_kkt`` and the constraint violation below ``tol_feas``.
That sign convention is used everywhere in the package: inequality
multipliers are reported nonnegative for constraints written ``g(x) >= 0``,
and equality multipliers refer to the constraint exactly as written.

Singular KKT systems during the polish are ridge-regularized with 1e-10
(logged at debug level, never silently fatal).  Solves are pure functions
of their inputs, so identical problems produce bit-identical solutions.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import MultistartError, ParameterError
from .util import lexicographic_less

__all__ = [
    "ConstraintSpec",
    "NlpProblem",
    "SolverOptions",
    "SolveStatus",
    "ScalarSolution",
    "MultistartResult",
    "solve",
    "solve_multistart",
]

logger = logging.getLogger(__name__)

_RIDGE = 1e-10


@dataclass(frozen=True)
class ConstraintSpec:
    """A differentiable scalar constraint with gradient and optional Hessian."""

    fun: Callable[[np.ndarray], float]
    jac: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""


@dataclass(frozen=True)
class NlpProblem:
    """Smooth NLP description.  ``ineq_constraints`` use the g(x) >= 0 sense."""

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eq_constraints: tuple[ConstraintSpec, ...] = ()
    ineq_constraints: tuple[ConstraintSpec, ...] = ()
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        x0 = np.asarray(self.x0, dtype=float)
        if x0.ndim != 1:
            raise ParameterError("x0 must be a vector")
        if not np.all(np.isfinite(x0)):
            raise ParameterError("x0 must be finite")
        n = x0.size
        lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if lb.shape != (n,) or ub.shape != (n,):
            raise ParameterError("bounds must match x0 length")
        if np.any(lb > ub):
            raise ParameterError("inconsistent bounds: lb > ub")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        object.__setattr__(self, "eq_constraints", tuple(self.eq_constraints))
        object.__setattr__(self, "ineq_constraints", tuple(self.ineq_constraints))

    @property
    def n(self) -> int:
        return self.x0.size


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-8
    tol_feas: float = 1e-9
    max_iter: int = 300
    active_tol: float = 1e-7
    polish_steps: int = 10
    restore: bool = True
    # violation above which a point is declared infeasible after restoration
    infeasible_tol: float = 1e-7


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class ScalarSolution:
    """Result of one scalar solve, including recovered multipliers.

    ``eq_multipliers``/``ineq_multipliers`` align with the constraint lists
    of the problem (inactive inequalities carry multiplier 0).  Fields
    ``weights``/``aux_value``/``objective_values`` are filled by the
    scalarization layer when the variable vector has portfolio structure.
    """

    x: np.ndarray
    value: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    lb_multipliers: np.ndarray
    ub_multipliers: np.ndarray
    status: SolveStatus
    kkt_residual: float
    constraint_violation: float
    comp_slackness: float
    n_iter: int
    message: str = ""
    iterates: tuple = ()
    weights: Optional[np.ndarray] = None
    aux_value: Optional[float] = None
    objective_values: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass(frozen=True)
class MultistartResult:
    best: ScalarSolution
    solutions: tuple[ScalarSolution, ...]


def _fd_hessian(grad: Callable, x: np.ndarray) -> np.ndarray:
    n = x.size
    h_mat = np.empty((n, n))
    for i in range(n):
        step = 1e-7 * (1.0 + abs(x[i]))
        e = np.zeros(n)
        e[i] = step
        h_mat[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * step)
    return 0.5 * (h_mat + h_mat.T)


def _violation(problem: NlpProblem, x: np.ndarray) -> float:
    worst = 0.0
    for c in problem.eq_constraints:
        worst = max(worst, abs(float(c.fun(x))))
    for c in problem.ineq_constraints:
        worst = max(worst, max(0.0, -float(c.fun(x))))
    worst = max(worst, float(np.max(problem.lb - x, initial=0.0)))
    worst = max(worst, float(np.max(x - problem.ub, initial=0.0)))
    return worst


def _grad_lagrangian(
    problem: NlpProblem,
    x: np.ndarray,
    lam: np.ndarray,
    mu: np.ndarray,
    nu_lo: np.ndarray,
    nu_hi: np.ndarray,
) -> np.ndarray:
    g = problem.gradient(x).astype(float).copy()
    for j, c in enumerate(problem.eq_constraints):
        g += lam[j] * c.jac(x)
    for i, c in enumerate(problem.ineq_constraints):
        if mu[i] != 0.0:
            g -= mu[i] * c.jac(x)
    g -= nu_lo
    g += nu_hi
    return g


def _active_sets(problem: NlpProblem, x: np.ndarray, act_tol: float):
    act_ineq = [
        i for i, c in enumerate(problem.ineq_constraints) if float(c.fun(x)) <= act_tol
    ]
    act_lo = [
        k
        for k in range(problem.n)
        if np.isfinite(problem.lb[k]) and x[k] - problem.lb[k] <= act_tol
    ]
    act_hi = [
        k
        for k in range(problem.n)
        if np.isfinite(problem.ub[k]) and problem.ub[k] - x[k] <= act_tol
    ]
    return act_ineq, act_lo, act_hi


def _ls_multipliers(problem: NlpProblem, x: np.ndarray, act_ineq, act_lo, act_hi):
    """Least-squares stationarity fit; drops inequality rows with negative
    multipliers and refits until the sign condition holds."""
    n = problem.n
    act_ineq = list(act_ineq)
    act_lo = list(act_lo)
    act_hi = list(act_hi)
    g0 = problem.gradient(x).astype(float)
    for _ in range(len(act_ineq) + len(act_lo) + len(act_hi) + 1):
        cols = []
        for c in problem.eq_constraints:
            cols.append(c.jac(x))
        for i in act_ineq:
            cols.append(-problem.ineq_constraints[i].jac(x))
        for k in act_lo:
            e = np.zeros(n)
            e[k] = -1.0
            cols.append(e)
        for k in act_hi:
            e = np.zeros(n)
            e[k] = 1.0
            cols.append(e)
        if not cols:
            return np.zeros(0), {}, {}, {}
        a_mat = np.column_stack(cols)
        sol, *_ = np.linalg.lstsq(a_mat, -g0, rcond=None)
        p = len(problem.eq_constraints)
        lam = sol[:p]
        mu_vals = sol[p : p + len(act_ineq)]
        nu_lo_vals = sol[p + len(act_ineq) : p + len(act_ineq) + len(act_lo)]
        nu_hi_vals = sol[p + len(act_ineq) + len(act_lo) :]
        signed = (
            [("ineq", idx, v) for idx, v in zip(act_ineq, mu_vals)]
            + [("lo", idx, v) for idx, v in zip(act_lo, nu_lo_vals)]
            + [("hi", idx, v) for idx, v in zip(act_hi, nu_hi_vals)]
        )
        worst = min(signed, key=lambda t: t[2], default=None)
        if worst is None or worst[2] >= -1e-9:
            return (
                lam,
                dict(zip(act_ineq, mu_vals)),
                dict(zip(act_lo, nu_lo_vals)),
                dict(zip(act_hi, nu_hi_vals)),
            )
        kind, idx, _ = worst
        if kind == "ineq":
            act_ineq.remove(idx)
        elif kind == "lo":
            act_lo.remove(idx)
        else:
            act_hi.remove(idx)
    return lam, dict(zip(act_ineq, mu_vals)), dict(zip(act_lo, nu_lo_vals)), dict(
        zip(act_hi, nu_hi_vals)
    )


def _hess_or_fd(spec_hess, grad, x):
    if spec_hess is not None:
        return np.asarray(spec_hess(x), dtype=float)
    return _fd_hessian(grad, x)


def _polish(problem: NlpProblem, x, lam, mu_map, nu_lo_map, nu_hi_map, opts: SolverOptions):
    """Newton iteration on the active-set KKT equality system."""
    n = problem.n
    act_ineq = sorted(mu_map)
    act_lo = sorted(nu_lo_map)
    act_hi = sorted(nu_hi_map)
    p = len(problem.eq_constraints)
    q = len(act_ineq)
    r1, r2 = len(act_lo), len(act_hi)

    def unpack(z):
        xx = z[:n]
        ll = z[n : n + p]
        mm = z[n + p : n + p + q]
        alo = z[n + p + q : n + p + q + r1]
        ahi = z[n + p + q + r1 :]
        return xx, ll, mm, alo, ahi

    def residual(z):
        xx, ll, mm, alo, ahi = unpack(z)
        mu_full = np.zeros(len(problem.ineq_constraints))
        mu_full[act_ineq] = mm
        nu_lo = np.zeros(n)
        nu_lo[act_lo] = alo
        nu_hi = np.zeros(n)
        nu_hi[act_hi] = ahi
        parts = [_grad_lagrangian(problem, xx, ll, mu_full, nu_lo, nu_hi)]
        parts.append(np.array([c.fun(xx) for c in problem.eq_constraints]))
        parts.append(np.array([problem.ineq_constraints[i].fun(xx) for i in act_ineq]))
        parts.append(xx[act_lo] - problem.lb[act_lo])
        parts.append(problem.ub[act_hi] - xx[act_hi])
        return np.concatenate([np.atleast_1d(pp) for pp in parts if np.size(pp)])\
            if (p + q + r1 + r2) else parts[0]

    def kkt_jacobian(z):
        xx, ll, mm, _, _ = unpack(z)
        h_l = _hess_or_fd(problem.hessian, problem.gradient, xx)
        for j, c in enumerate(problem.eq_constraints):
            h_l = h_l + ll[j] * _hess_or_fd(c.hess, c.jac, xx)
        for pos, i in enumerate(act_ineq):
            c = problem.ineq_constraints[i]
            h_l = h_l - mm[pos] * _hess_or_fd(c.hess, c.jac, xx)
        je = np.array([c.jac(xx) for c in problem.eq_constraints]).reshape(p, n)
        jg = np.array([problem.ineq_constraints[i].jac(xx) for i in act_ineq]).reshape(q, n)
        e_lo = np.zeros((r1, n))
        for pos, k in enumerate(act_lo):
            e_lo[pos, k] = 1.0
        e_hi = np.zeros((r2, n))
        for pos, k in enumerate(act_hi):
            e_hi[pos, k] = 1.0
        top = np.hstack([h_l, je.T, -jg.T, -e_lo.T, e_hi.T])
        zeros = lambda rows: np.zeros((rows, p + q + r1 + r2))
        rows = [top]
        if p:
            rows.append(np.hstack([je, zeros(p)]))
        if q:
            rows.append(np.hstack([jg, zeros(q)]))
        if r1:
            rows.append(np.hstack([e_lo, zeros(r1)]))
        if r2:
            rows.append(np.hstack([-e_hi, zeros(r2)]))
        return np.vstack(rows)

    z = np.concatenate(
        [
            x,
            lam,
            np.array([mu_map[i] for i in act_ineq]),
            np.array([nu_lo_map[k] for k in act_lo]),
            np.array([nu_hi_map[k] for k in act_hi]),
        ]
    )
    res = residual(z)
    best_z, best_norm = z.copy(), float(np.max(np.abs(res)))
    for _ in range(opts.polish_steps):
        if best_norm <= 1e-14:
            break
        jac = kkt_jacobian(z)
        rhs = -residual(z)
        try:
            if jac.shape[0] == jac.shape[1]:
                step = np.linalg.solve(jac, rhs)
            else:
                step, *_ = np.linalg.lstsq(jac, rhs, rcond=None)
        except np.linalg.LinAlgError:
            logger.debug("singular KKT system during polish; applying 1e-10 ridge")
            jtj = jac.T @ jac + _RIDGE * np.eye(jac.shape[1])
            step = np.linalg.solve(jtj, jac.T @ rhs)
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.125):
            cand = z + damp * step
            norm = float(np.max(np.abs(residual(cand))))
            if norm < best_norm:
                z = cand
                best_z, best_norm = cand.copy(), norm
                improved = True
                break
        if not improved:
            break
    xx, ll, mm, alo, ahi = unpack(best_z)
    mu_full = np.zeros(len(problem.ineq_constraints))
    mu_full[act_ineq] = mm
    nu_lo = np.zeros(n)
    nu_lo[act_lo] = alo
    nu_hi = np.zeros(n)
    nu_hi[act_hi] = ahi
    return xx, ll, mu_full, nu_lo, nu_hi


def _restore_feasibility(problem: NlpProblem, x0: np.ndarray, opts: SolverOptions):
    """Minimize the squared constraint violation subject to bounds only."""

    def phi(x):
        total = 0.0
        for c in problem.eq_constraints:
            total += float(c.fun(x)) ** 2
        for c in problem.ineq_constraints:
            total += min(0.0, float(c.fun(x))) ** 2
        return total

    def phi_grad(x):
        g = np.zeros(problem.n)
        for c in problem.eq_constraints:
            g += 2.0 * float(c.fun(x)) * c.jac(x)
        for c in problem.ineq_constraints:
            v = float(c.fun(x))
            if v < 0.0:
                g += 2.0 * v * c.jac(x)
        return g

    res = minimize(
        phi,
        x0,
        jac=phi_grad,
        method="SLSQP",
        bounds=list(zip(problem.lb, problem.ub)),
        options={"maxiter": 200, "ftol": 1e-16},
    )
    return np.clip(res.x, problem.lb, problem.ub)


def _run_slsqp(problem: NlpProblem, x0: np.ndarray, opts: SolverOptions):
    cons = []
    for c in problem.eq_constraints:
        cons.append({"type": "eq", "fun": c.fun, "jac": c.jac})
    for c in problem.ineq_constraints:
        cons.append({"type": "ineq", "fun": c.fun, "jac": c.jac})
    iterates: list[np.ndarray] = []

    def record(xk):
        iterates.append(np.array(xk, dtype=float))

    with warnings.catch_warnings():
        # scipy warns when a trial step leaves the box and gets clipped;
        # expected backend behavior, and feasibility is measured afterwards
        warnings.filterwarnings(
            "ignore", message="Values in x were outside bounds", category=RuntimeWarning
        )
        res = minimize(
            problem.objective,
            x0,
            jac=problem.gradient,
            method="SLSQP",
            bounds=list(zip(problem.lb, problem.ub)),
            constraints=cons,
            callback=record,
            options={"maxiter": opts.max_iter, "ftol": 1e-12},
        )
    x = np.clip(np.asarray(res.x, dtype=float), problem.lb, problem.ub)
    return x, res, iterates


def solve(problem: NlpProblem, options: SolverOptions | None = None) -> ScalarSolution:
    """Local SQP solve with KKT polish and multiplier recovery.

    Returns a :class:`ScalarSolution` whose status is decided by the final
    measured residuals, not by the inner solver's exit flag: ``converged``
    requires stationarity <= tol_kkt and violation <= tol_feas;
    ``infeasible`` is declared only after a failed feasibility restoration.
    """
    opts = options or SolverOptions()
    x0 = problem.x0.copy()
    x, res, iterates = _run_slsqp(problem, problem.x0, opts)
    viol = _violation(problem, x)
    if viol > max(opts.infeasible_tol, 10.0 * opts.tol_feas) and opts.restore:
        restored = _restore_feasibility(problem, problem.x0, opts)
        if _violation(problem, restored) <= opts.infeasible_tol:
            x, res, iterates = _run_slsqp(problem, restored, opts)
            viol = _violation(problem, x)
        else:
            mu = np.zeros(len(problem.ineq_constraints))
            lam = np.zeros(len(problem.eq_constraints))
            zeros = np.zeros(problem.n)
            return ScalarSolution(
                x=x,
                value=float(problem.objective(x)),
                eq_multipliers=lam,
                ineq_multipliers=mu,
                lb_multipliers=zeros,
                ub_multipliers=zeros,
                status=SolveStatus.INFEASIBLE,
                kkt_residual=float("nan"),
                constraint_violation=_violation(problem, restored),
                comp_slackness=float("nan"),
                n_iter=int(res.nit),
                message="restoration could not reach feasibility",
                iterates=tuple(iterates),
            )

    slsqp_x = x.copy()
    act_ineq, act_lo, act_hi = _active_sets(problem, x, opts.active_tol)
    lam, mu_map, nu_lo_map, nu_hi_map = _ls_multipliers(
        problem, x, act_ineq, act_lo, act_hi
    )
    if np.size(lam) == 0:
        lam = np.zeros(len(problem.eq_constraints))
    px, plam, pmu, pnu_lo, pnu_hi = _polish(
        problem, x, np.asarray(lam, dtype=float), mu_map, nu_lo_map, nu_hi_map, opts
    )
    # accept the polished point only if it stays feasible and properly signed
    pviol = _violation(problem, px)
    ok = (
        pviol <= max(viol, opts.tol_feas)
        and float(np.min(pmu, initial=0.0)) >= -10.0 * opts.tol_kkt
        and float(np.min(pnu_lo, initial=0.0)) >= -10.0 * opts.tol_kkt
        and float(np.min(pnu_hi, initial=0.0)) >= -10.0 * opts.tol_kkt
        and float(np.max(np.abs(px - x))) <= 0.1 * (1.0 + float(np.max(np.abs(x))))
    )
    if ok:
        x, viol = px, pviol
        lam, mu_full, nu_lo, nu_hi = plam, pmu, pnu_lo, pnu_hi
    else:
        mu_full = np.zeros(len(problem.ineq_constraints))
        for i, v in mu_map.items():
            mu_full[i] = max(v, 0.0)
        nu_lo = np.zeros(problem.n)
        for k, v in nu_lo_map.items():
            nu_lo[k] = max(v, 0.0)
        nu_hi = np.zeros(problem.n)
        for k, v in nu_hi_map.items():
            nu_hi[k] = max(v, 0.0)
        lam = np.asarray(lam, dtype=float)

    mu_full = np.where(np.abs(mu_full) < 1e-15, 0.0, mu_full)
    kkt = float(
        np.max(np.abs(_grad_lagrangian(problem, x, lam, mu_full, nu_lo, nu_hi)), initial=0.0)
    )
    comp = 0.0
    for i, c in enumerate(problem.ineq_constraints):
        comp = max(comp, abs(mu_full[i] * float(c.fun(x))))
    for k in range(problem.n):
        if nu_lo[k]:
            comp = max(comp, abs(nu_lo[k] * (x[k] - problem.lb[k])))
        if nu_hi[k]:
            comp = max(comp, abs(nu_hi[k] * (problem.ub[k] - x[k])))

    if viol <= opts.tol_feas and kkt <= opts.tol_kkt:
        status = SolveStatus.CONVERGED
        message = "converged"
    elif viol > opts.infeasible_tol:
        status = SolveStatus.INFEASIBLE
        message = "final point violates constraints: %.3e" % viol
    else:
        status = SolveStatus.MAX_ITER
        message = "best iterate returned (kkt=%.3e, viol=%.3e): %s" % (
            kkt,
            viol,
            res.message,
        )
    return ScalarSolution(
        x=x,
        value=float(problem.objective(x)),
        eq_multipliers=np.asarray(lam, dtype=float),
        ineq_multipliers=mu_full,
        lb_multipliers=nu_lo,
        ub_multipliers=nu_hi,
        status=status,
        kkt_residual=kkt,
        constraint_violation=viol,
        comp_slackness=comp,
        n_iter=int(res.nit),
        message=message,
        iterates=tuple(iterates) + (x.copy(),),
        # accepted phase results: start -> SQP output -> polished point; the
        # merit guarantee of the solve covers these (the SQP code's internal
        # trial steps follow scipy's own penalty bookkeeping)
        info={"phase_points": (x0, slsqp_x, x.copy())},
    )


def merit_values(
    problem: NlpProblem, iterates: Sequence[np.ndarray], rho: float
) -> np.ndarray:
    """L1 exact-penalty merit of each iterate, for monotonicity diagnostics."""
    out = []
    for x in iterates:
        pen = 0.0
        for c in problem.eq_constraints:
            pen += abs(float(c.fun(x)))
        for c in problem.ineq_constraints:
            pen += max(0.0, -float(c.fun(x)))
        pen += float(np.sum(np.maximum(problem.lb - x, 0.0)))
        pen += float(np.sum(np.maximum(x - problem.ub, 0.0)))
        out.append(float(problem.objective(x)) + rho * pen)
    return np.array(out)


def solve_multistart(
    problem: NlpProblem,
    starts: Sequence[np.ndarray],
    options: SolverOptions | None = None,
) -> MultistartResult:
    """Independent local solves from each start; best converged value wins.

    Ties on the objective are broken lexicographically on x so the merge is
    deterministic regardless of evaluation order.
    """
    starts = list(starts)
    if not starts:
        raise ParameterError("need at least one start")
    solutions = tuple(
        solve(replace(problem, x0=np.asarray(s, dtype=float)), options) for s in starts
    )
    best = None
    for sol in solutions:
        if sol.status is not SolveStatus.CONVERGED:
            continue
        if best is None or sol.value < best.value - 1e-15:
            best = sol
        elif abs(sol.value - best.value) <= 1e-15 and lexicographic_less(sol.x, best.x):
            best = sol
    if best is None:
        raise MultistartError([s.status.value for s in solutions])
    return MultistartResult(best=best, solutions=solutions)
