"""Adaptive epsilon-constraint driver with multiplier-scaled refinement.

The driver covers three-objective problems: two objectives are bounded by a
grid of epsilon values and the third is minimized (by default skewness is
the minimized objective, in minimization form -skewness, with mean and
variance constrained; this assignment is configurable).  Grid ranges come
from per-objective min/max solves, cells are laid out at

    eps_i = eps_min_i + L_i/2 + l_i * L_i,   L_i = (eps_max_i - eps_min_i)/N_i

and every cell solves

    min f_minimized(x)  s.t.  f_1(x) <= eps_1,  f_2(x) <= eps_2,  x in simplex.

Refinement around an archived entry places (2k+1)^2 - 1 new epsilon points
spaced ``alpha / (1 + mu_i^2)`` along axis i, where mu_i is the archived
Lagrange multiplier of the corresponding epsilon row: strongly binding
constraints shrink the local spacing so the image-space spacing stays near
``alpha``.  The interactive "pick a point" step is replaced by a batch
policy that repeatedly refines the entry with the widest nearest-neighbour
image gap.

Grid cells are weakly efficient only; dominated points can appear on
non-convex instances, so the archive exposes both raw and dominance-filtered
views.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import nlp
from .errors import ParameterError, SolverError
from .problem import PortfolioMop
from .scalarization import SpParams, _objective_row, _simplex_constraint, minimize_objective
from .util import dirichlet_starts, equal_weights, parallel_map, simplex_vertices

__all__ = [
    "EpsilonGrid",
    "ArchiveEntry",
    "FrontArchive",
    "RefinementRequest",
    "build_grid",
    "solve_grid",
    "refine",
    "run_adaptive_epsilon",
    "epsilon_as_sp",
]


@dataclass(frozen=True)
class EpsilonGrid:
    """Cell-center grid over the two constrained objectives."""

    N: tuple[int, int]
    eps_min: np.ndarray
    eps_max: np.ndarray
    L: np.ndarray
    centers: np.ndarray  # (N1*N2, 2), row-major in (l1, l2)
    constrained: tuple[int, int]
    minimized: int

    @property
    def size(self) -> int:
        return self.N[0] * self.N[1]


@dataclass(frozen=True)
class ArchiveEntry:
    """One converged cell: epsilon, solution weights, epsilon-row multipliers."""

    eps: np.ndarray
    x: np.ndarray
    multipliers: np.ndarray
    image: np.ndarray
    solution: nlp.ScalarSolution


@dataclass
class FrontArchive:
    """Converged grid entries plus bookkeeping; image is deduplicated."""

    problem: PortfolioMop
    grid: EpsilonGrid
    entries: list[ArchiveEntry] = field(default_factory=list)
    attempted: int = 0
    infeasible_count: int = 0
    failed_count: int = 0
    _keys: set = field(default_factory=set)

    def image(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.problem.m))
        return np.array([e.image for e in self.entries])

    def _key(self, image: np.ndarray) -> tuple:
        return tuple(np.floor(image / 1e-9 + 0.5).astype(np.int64))

    def add(self, entry: ArchiveEntry) -> bool:
        key = self._key(entry.image)
        if key in self._keys:
            return False
        self._keys.add(key)
        self.entries.append(entry)
        return True

    def sort(self) -> None:
        self.entries.sort(key=lambda e: (float(e.eps[0]), float(e.eps[1])))


@dataclass(frozen=True)
class RefinementRequest:
    """Neighbourhood refinement around an archived entry: image-space spacing
    alpha > 0 and integer radius k >= 1 (yields (2k+1)^2 - 1 new cells)."""

    center: ArchiveEntry
    alpha: float
    k: int = 1

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if self.k < 1:
            raise ParameterError("k must be >= 1")


def _range_solves(p: PortfolioMop, idx: int, seed: int, options) -> tuple[float, float]:
    """Exact objective range over the simplex via multistart min and max.

    Vertices are included among the starts so the concave max solves reach
    the vertex maxima of convex objectives.
    """
    n = p.n
    rng = np.random.default_rng(seed)
    starts = [equal_weights(n)] + simplex_vertices(n) + dirichlet_starts(n, 2, rng)
    out = []
    for sign in (1.0, -1.0):
        best = minimize_objective(p, idx, sign=sign, starts=starts, options=options)
        out.append(sign * best.value)
    lo, hi = out
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise SolverError("objective range solve returned non-finite bound")
    if hi - lo <= 1e-15:
        raise SolverError("objective %d is constant on the simplex; grid degenerate" % idx)
    return float(lo), float(hi)


def build_grid(
    p: PortfolioMop,
    N: tuple[int, int],
    *,
    minimized: str = "skewness",
    seed: int = 0,
    options: nlp.SolverOptions | None = None,
) -> EpsilonGrid:
    """Lay out the epsilon grid from per-objective range solves."""
    if p.m != 3:
        raise ParameterError("the epsilon grid driver needs exactly 3 objectives")
    n1, n2 = int(N[0]), int(N[1])
    if n1 < 1 or n2 < 1:
        raise ParameterError("grid counts must be >= 1")
    if minimized not in p.objectives:
        raise ParameterError("minimized objective %r not in problem" % minimized)
    min_idx = p.objectives.index(minimized)
    constrained = tuple(i for i in range(3) if i != min_idx)
    eps_min = np.zeros(2)
    eps_max = np.zeros(2)
    for pos, idx in enumerate(constrained):
        eps_min[pos], eps_max[pos] = _range_solves(p, idx, seed + pos, options)
    counts = (n1, n2)
    L = np.array([(eps_max[i] - eps_min[i]) / counts[i] for i in range(2)])
    centers = np.empty((n1 * n2, 2))
    row = 0
    for l1 in range(n1):
        c1 = eps_min[0] + L[0] / 2.0 + l1 * L[0]
        for l2 in range(n2):
            centers[row, 0] = c1
            centers[row, 1] = eps_min[1] + L[1] / 2.0 + l2 * L[1]
            row += 1
    return EpsilonGrid(
        N=(n1, n2),
        eps_min=eps_min,
        eps_max=eps_max,
        L=L,
        centers=centers,
        constrained=constrained,
        minimized=min_idx,
    )


def _solve_cell(
    p: PortfolioMop,
    eps: np.ndarray,
    constrained: tuple[int, int],
    minimized: int,
    x0: np.ndarray,
    options,
) -> nlp.ScalarSolution:
    """Solve one cell.  Rows and objective are normalized to unit gradient
    scale internally; the reported value and multipliers refer to the raw
    objectives."""
    n = p.n
    fun, jac, hess = _objective_row(p, minimized, n, n)
    obj_scale = max(float(np.max(np.abs(jac(x0)))), 1e-10)
    rows = []
    row_scales = []
    for pos, idx in enumerate(constrained):
        cfun, cjac, chess = _objective_row(p, idx, n, n)
        bound = float(eps[pos])
        scale = max(float(np.max(np.abs(cjac(x0)))), 1e-10)
        row_scales.append(scale)

        def gfun(z, cfun=cfun, bound=bound, s=scale):
            return (bound - cfun(z)) / s

        def gjac(z, cjac=cjac, s=scale):
            return -cjac(z) / s

        def ghess(z, chess=chess, s=scale):
            return -chess(z) / s

        rows.append(nlp.ConstraintSpec(fun=gfun, jac=gjac, hess=ghess, name="eps_%d" % pos))
    problem = nlp.NlpProblem(
        objective=lambda z: fun(z) / obj_scale,
        gradient=lambda z: jac(z) / obj_scale,
        hessian=lambda z: hess(z) / obj_scale,
        x0=x0,
        eq_constraints=(_simplex_constraint(n),),
        ineq_constraints=tuple(rows),
        lb=p.lower_bounds(),
    )
    sol = nlp.solve(problem, options)
    ineq = sol.ineq_multipliers.copy()
    for i, s in enumerate(row_scales):
        # multiplier of the raw row eps - f_i(x) >= 0 under the raw objective
        ineq[i] = ineq[i] * obj_scale / s
    return replace(sol, value=fun(sol.x), ineq_multipliers=ineq)


def solve_grid(
    p: PortfolioMop,
    grid: EpsilonGrid,
    *,
    options: nlp.SolverOptions | None = None,
    workers: int = 1,
) -> FrontArchive:
    """Solve every grid cell; archive converged entries with multipliers.

    Cells within a grid row are warm-started from their left neighbour's
    solution, so parallelism is across rows, which keeps results identical
    for any worker count.  Infeasible cells are skipped and counted.
    """
    n1, n2 = grid.N
    archive = FrontArchive(problem=p, grid=grid)

    def solve_row(l1: int):
        out = []
        x0 = equal_weights(p.n)
        for l2 in range(n2):
            eps = grid.centers[l1 * n2 + l2]
            sol = _solve_cell(p, eps, grid.constrained, grid.minimized, x0, options)
            out.append((eps, sol))
            if sol.converged:
                x0 = sol.x
        return out

    rows = parallel_map(solve_row, range(n1), workers)
    for row in rows:
        for eps, sol in row:
            archive.attempted += 1
            if sol.status is nlp.SolveStatus.INFEASIBLE:
                archive.infeasible_count += 1
            elif not sol.converged:
                archive.failed_count += 1
            else:
                archive.add(
                    ArchiveEntry(
                        eps=eps.copy(),
                        x=sol.x.copy(),
                        multipliers=sol.ineq_multipliers.copy(),
                        image=p.objective_values(sol.x),
                        solution=sol,
                    )
                )
    archive.sort()
    return archive


def refinement_lattice(entry: ArchiveEntry, alpha: float, k: int) -> list[np.ndarray]:
    """Epsilon points refined around an entry: a (2k+1)^2 - 1 lattice with
    per-axis spacing alpha / (1 + mu_i^2) from the archived multipliers, so
    strongly binding constraints shrink the parameter spacing."""
    mu1, mu2 = float(entry.multipliers[0]), float(entry.multipliers[1])
    step1 = alpha / (1.0 + mu1 ** 2)
    step2 = alpha / (1.0 + mu2 ** 2)
    return [
        np.array([entry.eps[0] + i * step1, entry.eps[1] + j * step2])
        for i in range(-k, k + 1)
        for j in range(-k, k + 1)
        if (i, j) != (0, 0)
    ]


def refine(
    archive: FrontArchive,
    req: RefinementRequest,
    *,
    options: nlp.SolverOptions | None = None,
    workers: int = 1,
) -> FrontArchive:
    """Augment the archive around one entry.

    New epsilon points come from :func:`refinement_lattice`; the centre cell
    itself is excluded.  All-infeasible (or all-duplicate) neighbourhoods
    leave the archive unchanged and emit a warning.
    """
    entry = req.center
    if not any(e is entry or np.array_equal(e.eps, entry.eps) for e in archive.entries):
        raise ParameterError("refinement center is not an archive entry")
    p = archive.problem
    grid = archive.grid

    def solve_offset(eps):
        sol = _solve_cell(p, eps, grid.constrained, grid.minimized, entry.x, options)
        return eps, sol

    results = parallel_map(solve_offset, refinement_lattice(entry, req.alpha, req.k), workers)
    added = 0
    for eps, sol in results:
        archive.attempted += 1
        if sol.status is nlp.SolveStatus.INFEASIBLE:
            archive.infeasible_count += 1
        elif not sol.converged:
            archive.failed_count += 1
        else:
            added += archive.add(
                ArchiveEntry(
                    eps=eps,
                    x=sol.x.copy(),
                    multipliers=sol.ineq_multipliers.copy(),
                    image=p.objective_values(sol.x),
                    solution=sol,
                )
            )
    if added == 0:
        warnings.warn("refinement produced no new feasible points", stacklevel=2)
    archive.sort()
    return archive


def _widest_gap_entry(archive: FrontArchive) -> Optional[ArchiveEntry]:
    pts = archive.image()
    if len(pts) < 2:
        return archive.entries[0] if archive.entries else None
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(d, np.inf)
    nearest = d.min(axis=1)
    return archive.entries[int(np.argmax(nearest))]


def run_adaptive_epsilon(
    p: PortfolioMop,
    N: tuple[int, int] = (50, 50),
    *,
    alpha: float | None = None,
    k: int = 1,
    rounds: int = 5,
    minimized: str = "skewness",
    seed: int = 0,
    options: nlp.SolverOptions | None = None,
    workers: int = 1,
) -> FrontArchive:
    """Grid sweep plus ``rounds`` batch refinements at the widest image gap.

    When ``alpha`` is not given it defaults to the median nearest-neighbour
    image gap of the initial archive.
    """
    grid = build_grid(p, N, minimized=minimized, seed=seed, options=options)
    archive = solve_grid(p, grid, options=options, workers=workers)
    if not archive.entries:
        return archive
    if alpha is None:
        pts = archive.image()
        if len(pts) >= 2:
            d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
            np.fill_diagonal(d, np.inf)
            alpha = float(np.median(d.min(axis=1)))
        else:
            alpha = float(np.linalg.norm(grid.L))
        alpha = max(alpha, 1e-12)
    for _ in range(rounds):
        entry = _widest_gap_entry(archive)
        if entry is None:
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            refine(archive, RefinementRequest(center=entry, alpha=alpha, k=k),
                   options=options, workers=workers)
    return archive


def epsilon_as_sp(eps, minimized_index: int = 2, m: int = 3) -> SpParams:
    """Express a grid cell as Pascoletti-Serafini parameters.

    The reference takes the epsilon bounds on the constrained coordinates
    and zero on the minimized one; the direction is the unit vector of the
    minimized coordinate, so the SP optimum value equals the cell optimum.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (m - 1,):
        raise ParameterError("eps must have length %d" % (m - 1))
    a = np.insert(eps, minimized_index, 0.0)
    r = np.zeros(m)
    r[minimized_index] = 1.0
    return SpParams(a=a, r=r)
