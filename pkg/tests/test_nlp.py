"""Backend solver contract: KKT residuals, multipliers, determinism."""

import numpy as np
import pytest

from hmfront import (
    ConstraintSpec,
    MultistartError,
    NlpProblem,
    SolveStatus,
    solve,
    solve_multistart,
)
from hmfront.nlp import merit_values
from oracles import qp_simplex_bruteforce


def _simplex_eq(n):
    return ConstraintSpec(
        fun=lambda x: float(x.sum() - 1.0),
        jac=lambda x: np.ones(n),
        hess=lambda x: np.zeros((n, n)),
    )


def _quadratic_problem(Q, c, x0, lb=None):
    n = c.size
    return NlpProblem(
        objective=lambda x: float(x @ Q @ x + c @ x),
        gradient=lambda x: 2.0 * (Q @ x) + c,
        hessian=lambda x: 2.0 * Q,
        x0=x0,
        eq_constraints=(_simplex_eq(n),),
        lb=np.zeros(n) if lb is None else lb,
    )


def test_textbook_inequality_multiplier():
    prob = NlpProblem(
        objective=lambda x: float(x[0] ** 2),
        gradient=lambda x: np.array([2.0 * x[0]]),
        hessian=lambda x: np.array([[2.0]]),
        x0=np.array([3.0]),
        ineq_constraints=(
            ConstraintSpec(
                fun=lambda x: float(x[0] - 1.0),
                jac=lambda x: np.array([1.0]),
                hess=lambda x: np.zeros((1, 1)),
            ),
        ),
    )
    sol = solve(prob)
    assert sol.status is SolveStatus.CONVERGED
    assert sol.x[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.ineq_multipliers[0] == pytest.approx(2.0, abs=1e-8)


def test_minimum_variance_equal_weights_multiplier():
    # min w'w s.t. 1 - sum(w) = 0 gives w = 1/3 and multiplier 2/3 for the
    # constraint as written
    prob = NlpProblem(
        objective=lambda x: float(x @ x),
        gradient=lambda x: 2.0 * x,
        hessian=lambda x: 2.0 * np.eye(3),
        x0=np.array([0.7, 0.2, 0.1]),
        eq_constraints=(
            ConstraintSpec(
                fun=lambda x: float(1.0 - x.sum()),
                jac=lambda x: -np.ones(3),
                hess=lambda x: np.zeros((3, 3)),
            ),
        ),
    )
    sol = solve(prob)
    assert sol.status is SolveStatus.CONVERGED
    assert np.allclose(sol.x, 1.0 / 3.0, atol=1e-10)
    assert sol.eq_multipliers[0] == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_random_qp_matches_support_enumeration(rng):
    for trial in range(6):
        a = rng.normal(size=(4, 4))
        Q = a @ a.T + 0.5 * np.eye(4)
        c = rng.normal(size=4)
        prob = _quadratic_problem(Q, c, np.full(4, 0.25))
        sol = solve(prob)
        assert sol.status is SolveStatus.CONVERGED
        val, w = qp_simplex_bruteforce(Q, c)
        assert sol.value == pytest.approx(val, abs=1e-8)
        assert np.max(np.abs(sol.x - w)) < 1e-7


def test_stationarity_invariant_on_converged(rng):
    for trial in range(4):
        a = rng.normal(size=(3, 3))
        Q = a @ a.T + 0.3 * np.eye(3)
        c = rng.normal(size=3)
        sol = solve(_quadratic_problem(Q, c, np.full(3, 1 / 3)))
        assert sol.status is SolveStatus.CONVERGED
        assert sol.kkt_residual <= 1e-8
        assert sol.constraint_violation <= 1e-9
        assert np.all(sol.ineq_multipliers >= -1e-8)
        assert sol.comp_slackness <= 1e-8


def test_merit_monotone_over_accepted_phases(rng):
    # the solve's accepted steps are start -> SQP output -> polished point;
    # the exact-penalty merit must not increase across them
    for trial in range(4):
        a = rng.normal(size=(4, 4))
        Q = a @ a.T + np.eye(4)
        c = rng.normal(size=4)
        prob = _quadratic_problem(Q, c, np.array([0.7, 0.1, 0.1, 0.1]))
        sol = solve(prob)
        rho = 2.0 * max(
            1.0,
            float(np.max(np.abs(sol.eq_multipliers), initial=0.0)),
            float(np.max(np.abs(sol.ineq_multipliers), initial=0.0)),
        )
        merits = merit_values(prob, sol.info["phase_points"], rho)
        drops = np.diff(merits)
        assert np.all(drops <= 1e-9 * (1.0 + np.abs(merits[:-1])))


def test_infeasible_detection():
    # x >= 2 and x <= 1 cannot hold together
    prob = NlpProblem(
        objective=lambda x: float(x[0] ** 2),
        gradient=lambda x: np.array([2.0 * x[0]]),
        x0=np.array([0.0]),
        ineq_constraints=(
            ConstraintSpec(fun=lambda x: float(x[0] - 2.0), jac=lambda x: np.array([1.0])),
            ConstraintSpec(fun=lambda x: float(1.0 - x[0]), jac=lambda x: np.array([-1.0])),
        ),
    )
    sol = solve(prob)
    assert sol.status is SolveStatus.INFEASIBLE


def test_determinism_bit_identical():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 4))
    Q = a @ a.T + np.eye(4)
    c = rng.normal(size=4)
    s1 = solve(_quadratic_problem(Q, c, np.full(4, 0.25)))
    s2 = solve(_quadratic_problem(Q, c, np.full(4, 0.25)))
    assert np.array_equal(s1.x, s2.x)
    assert s1.value == s2.value
    assert np.array_equal(s1.eq_multipliers, s2.eq_multipliers)
    assert np.array_equal(s1.ineq_multipliers, s2.ineq_multipliers)


def test_multistart_convex_agreement(rng):
    a = rng.normal(size=(3, 3))
    Q = a @ a.T + np.eye(3)
    c = rng.normal(size=3)
    prob = _quadratic_problem(Q, c, np.full(3, 1 / 3))
    starts = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), np.full(3, 1 / 3)]
    result = solve_multistart(prob, starts)
    vals = [s.value for s in result.solutions if s.status is SolveStatus.CONVERGED]
    assert max(vals) - min(vals) < 1e-6


def test_multistart_bimodal_finds_both_basins():
    # two quadratic wells at x = -1 and x = +2 of different depths
    def f(x):
        return float(min((x[0] + 1.0) ** 2, (x[0] - 2.0) ** 2 + 0.5))

    def g(x):
        if (x[0] + 1.0) ** 2 <= (x[0] - 2.0) ** 2 + 0.5:
            return np.array([2.0 * (x[0] + 1.0)])
        return np.array([2.0 * (x[0] - 2.0)])

    prob = NlpProblem(objective=f, gradient=g, x0=np.array([0.0]))
    result = solve_multistart(prob, [np.array([-1.5]), np.array([2.5])])
    locals_x = sorted(round(float(s.x[0]), 3) for s in result.solutions)
    assert locals_x == [-1.0, 2.0]
    assert result.best.x[0] == pytest.approx(-1.0, abs=1e-6)


def test_multistart_single_start_equals_solve(rng):
    a = rng.normal(size=(3, 3))
    Q = a @ a.T + np.eye(3)
    c = rng.normal(size=3)
    prob = _quadratic_problem(Q, c, np.full(3, 1 / 3))
    single = solve(prob)
    multi = solve_multistart(prob, [np.full(3, 1 / 3)])
    assert np.array_equal(single.x, multi.best.x)
    assert single.value == multi.best.value


def test_multistart_all_fail_raises():
    prob = NlpProblem(
        objective=lambda x: float(x[0]),
        gradient=lambda x: np.array([1.0]),
        x0=np.array([0.0]),
        ineq_constraints=(
            ConstraintSpec(fun=lambda x: float(x[0] - 2.0), jac=lambda x: np.array([1.0])),
            ConstraintSpec(fun=lambda x: float(1.0 - x[0]), jac=lambda x: np.array([-1.0])),
        ),
    )
    with pytest.raises(MultistartError):
        solve_multistart(prob, [np.array([0.0]), np.array([5.0])])
