"""Multi-objective portfolio problem and the Taylor-utility scalarization.

Sense convention
----------------
The investor maximizes mean and skewness and minimizes variance and
kurtosis.  Internally every solver works on the fixed minimization form

    F(x) = (-mean, variance, -skewness, +kurtosis)

restricted to the chosen objective subset.  All scalarization parameters
expressed "in image space" refer to this minimization form unless a
function documents otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nlp
from .errors import ParameterError
from .moments import MomentSet, ObjectiveVector, portfolio_stats, stats_gradients
from .util import dirichlet_starts, equal_weights, lexicographic_less

__all__ = [
    "OBJECTIVE_NAMES",
    "OBJECTIVE_SENSES",
    "PortfolioMop",
    "UtilityParams",
    "utility_objective",
    "utility_gradient",
    "utility_hessian",
    "utility_optimize",
    "iterative_utility_optimize",
]

OBJECTIVE_NAMES = ("mean", "variance", "skewness", "kurtosis")

# multiplier taking the raw statistic into the minimization form
OBJECTIVE_SENSES = {"mean": -1.0, "variance": 1.0, "skewness": -1.0, "kurtosis": 1.0}


@dataclass(frozen=True)
class PortfolioMop:
    """Portfolio selection as a multi-objective problem over the simplex.

    ``objectives`` is an ordered subset of mean/variance/skewness/kurtosis;
    ``short_bound`` relaxes the nonnegativity of weights to w >= -short_bound.
    """

    moments: MomentSet
    objectives: tuple[str, ...] = ("mean", "variance", "skewness")
    short_bound: float = 0.0

    def __post_init__(self) -> None:
        objs = tuple(self.objectives)
        if not 2 <= len(objs) <= 4:
            raise ParameterError("need between 2 and 4 objectives, got %d" % len(objs))
        if len(set(objs)) != len(objs):
            raise ParameterError("duplicate objective names: %r" % (objs,))
        for name in objs:
            if name not in OBJECTIVE_NAMES:
                raise ParameterError("unknown objective %r" % name)
        if self.short_bound < 0:
            raise ParameterError("short_bound must be >= 0")
        object.__setattr__(self, "objectives", objs)

    @property
    def m(self) -> int:
        return len(self.objectives)

    @property
    def n(self) -> int:
        return self.moments.n

    def lower_bounds(self) -> np.ndarray:
        return np.full(self.n, -self.short_bound)

    def raw_stats(self, w) -> ObjectiveVector:
        return portfolio_stats(w, self.moments)

    def objective_values(self, w) -> np.ndarray:
        """F(w): the selected objectives in minimization form."""
        stats = portfolio_stats(w, self.moments)
        return np.array(
            [OBJECTIVE_SENSES[name] * getattr(stats, name) for name in self.objectives]
        )

    def objective_jacobian(self, w) -> np.ndarray:
        """m x n Jacobian of F."""
        deriv = stats_gradients(w, self.moments)
        return np.array(
            [OBJECTIVE_SENSES[name] * deriv.gradient(name) for name in self.objectives]
        )

    def objective_hessians(self, w) -> np.ndarray:
        """m x n x n stack of Hessians of F."""
        deriv = stats_gradients(w, self.moments)
        return np.array(
            [OBJECTIVE_SENSES[name] * deriv.hessian(name) for name in self.objectives]
        )

    def min_form(self, stats: ObjectiveVector) -> np.ndarray:
        """Map an ObjectiveVector into this problem's minimization image."""
        return np.array(
            [OBJECTIVE_SENSES[name] * getattr(stats, name) for name in self.objectives]
        )


@dataclass(frozen=True)
class UtilityParams:
    """Risk-preference scalar of the exponential-utility Taylor objective.

    The polynomial coefficients are always derived from ``lam``:
    lambda1 = lam^2/2!, lambda2 = lam^3/3!, lambda3 = lam^4/4!.
    """

    lam: float

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ParameterError("risk preference lambda must be positive and finite")

    @property
    def lambda1(self) -> float:
        return self.lam ** 2 / 2.0

    @property
    def lambda2(self) -> float:
        return self.lam ** 3 / 6.0

    @property
    def lambda3(self) -> float:
        return self.lam ** 4 / 24.0


def utility_objective(w, p: PortfolioMop, u: UtilityParams) -> float:
    """Fourth-order expected-utility objective (minimization sense):

        -w'mu + lambda1 var - lambda2 skew + lambda3 kurt
    """
    stats = portfolio_stats(w, p.moments)
    return (
        -stats.mean
        + u.lambda1 * stats.variance
        - u.lambda2 * stats.skewness
        + u.lambda3 * stats.kurtosis
    )


def utility_gradient(w, p: PortfolioMop, u: UtilityParams) -> np.ndarray:
    d = stats_gradients(w, p.moments)
    return (
        -d.grad_mean
        + u.lambda1 * d.grad_variance
        - u.lambda2 * d.grad_skewness
        + u.lambda3 * d.grad_kurtosis
    )


def utility_hessian(w, p: PortfolioMop, u: UtilityParams) -> np.ndarray:
    d = stats_gradients(w, p.moments)
    return (
        u.lambda1 * d.hess_variance
        - u.lambda2 * d.hess_skewness
        + u.lambda3 * d.hess_kurtosis
    )


def _simplex_constraint(n: int) -> nlp.ConstraintSpec:
    ones = np.ones(n)

    def fun(x):
        return float(x.sum() - 1.0)

    def jac(x):
        return ones.copy()

    def hess(x):
        return np.zeros((n, n))

    return nlp.ConstraintSpec(fun=fun, jac=jac, hess=hess, name="budget")


def utility_optimize(
    p: PortfolioMop,
    u: UtilityParams,
    *,
    n_starts: int = 16,
    seed: int = 0,
    options: nlp.SolverOptions | None = None,
) -> nlp.ScalarSolution:
    """Local multistart minimization of the full quartic utility objective."""
    n = p.n
    rng = np.random.default_rng(seed)
    starts = [equal_weights(n)] + dirichlet_starts(n, max(n_starts - 1, 0), rng)
    problem = nlp.NlpProblem(
        objective=lambda x: utility_objective(x, p, u),
        gradient=lambda x: utility_gradient(x, p, u),
        hessian=lambda x: utility_hessian(x, p, u),
        x0=equal_weights(n),
        eq_constraints=(_simplex_constraint(n),),
        lb=p.lower_bounds(),
    )
    result = nlp.solve_multistart(problem, starts, options)
    best = result.best
    return replace(
        best, weights=best.x.copy(), objective_values=p.objective_values(best.x)
    )


def _mean_variance_qp(
    p: PortfolioMop, lambda1: float, x0: np.ndarray, options: nlp.SolverOptions | None
) -> nlp.ScalarSolution:
    mu = p.moments.mu
    sigma = p.moments.sigma

    def fun(x):
        return float(-x @ mu + lambda1 * (x @ sigma @ x))

    def jac(x):
        return -mu + 2.0 * lambda1 * (sigma @ x)

    def hess(x):
        return 2.0 * lambda1 * sigma

    problem = nlp.NlpProblem(
        objective=fun,
        gradient=jac,
        hessian=hess,
        x0=x0,
        eq_constraints=(_simplex_constraint(p.n),),
        lb=p.lower_bounds(),
    )
    return nlp.solve(problem, options)


def iterative_utility_optimize(
    p: PortfolioMop,
    schedule,
    *,
    n_starts: int = 16,
    seed: int = 0,
    inner_repeats: int = 20,
    options: nlp.SolverOptions | None = None,
) -> list[tuple[float, np.ndarray]]:
    """Decreasing-lambda sweep with skewness/kurtosis frozen per step.

    At each lambda the skewness and kurtosis terms are evaluated at the
    previous solution and held fixed as constants, leaving a convex
    mean-variance QP over the simplex that is warm-started from the previous
    weights.  The first step freezes at the equal-weight portfolio.  Freezing
    the higher-order terms as constants means they shift the recorded
    objective value but never the minimizer, so the inner re-freeze loop is
    a fixed point after the first repeat; the repeat cap exists as a guard.

    The sweep is multi-started from flat-Dirichlet samples; the trajectory
    whose final portfolio has the best full quartic utility is returned,
    with lexicographically smallest weights breaking ties.
    """
    schedule = [float(s) for s in schedule]
    if not schedule:
        raise ParameterError("schedule must be nonempty")
    if any(s <= 0 for s in schedule):
        raise ParameterError("all lambda values must be positive")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ParameterError("schedule must be strictly decreasing")
    n = p.n
    rng = np.random.default_rng(seed)
    starts = [equal_weights(n)] + dirichlet_starts(n, max(n_starts - 1, 0), rng)

    best_path: list[tuple[float, np.ndarray]] | None = None
    best_key: tuple[float, np.ndarray] | None = None
    for start in starts:
        w_current = np.asarray(start, dtype=float)
        freeze_point = equal_weights(n)
        path: list[tuple[float, np.ndarray]] = []
        for lam in schedule:
            u = UtilityParams(lam=lam)
            for _ in range(inner_repeats):
                sol = _mean_variance_qp(p, u.lambda1, w_current, options)
                w_new = sol.x
                if float(np.max(np.abs(w_new - freeze_point))) < 1e-12:
                    freeze_point = w_new
                    w_current = w_new
                    break
                freeze_point = w_new
                w_current = w_new
            path.append((lam, w_current.copy()))
        final_u = UtilityParams(lam=schedule[-1])
        final_value = utility_objective(w_current, p, final_u)
        if (
            best_key is None
            or final_value < best_key[0] - 1e-15
            or (
                abs(final_value - best_key[0]) <= 1e-15
                and lexicographic_less(w_current, best_key[1])
            )
        ):
            best_key = (final_value, w_current.copy())
            best_path = path
    assert best_path is not None
    return best_path
