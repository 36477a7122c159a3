"""Dense two-phase simplex for the small dispatch LPs.

Problems arrive in the form

    minimize    c @ x
    subject to  A @ x <= b     (inequality rows)
                E @ x == d     (equality rows)
                x >= 0

and are solved deterministically: identical input bits produce identical
pivot sequences, iteration counts and solutions. Pricing is
largest-violation with ties broken towards the lowest column index; after
a long run of degenerate steps the solver permanently switches to Bland's
smallest-index rule, which cannot cycle.

Two structural choices keep the dispatch instances small and fast:
singleton inequality rows (one nonzero coefficient) are folded into
variable bounds during presolve, and the working simplex handles those
bounds natively, so per-step battery power limits never widen the tableau.
"""

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# reduced-cost optimality at 1e-9, primal feasibility at 1e-7 (kWh scale)
REDUCED_COST_TOL = 1e-9
PIVOT_TOL = 1e-9
RATIO_TOL = 1e-9
FEASIBILITY_TOL = 1e-7

_BASIC = 0
_AT_LOWER = 1
_AT_UPPER = 2


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Standard-form LP: minimize c@x with A@x <= b, E@x == d, x >= 0."""

    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.c).shape[0]
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "a_ub", np.asarray(self.a_ub, dtype=float).reshape(-1, n))
        object.__setattr__(self, "b_ub", np.asarray(self.b_ub, dtype=float).ravel())
        object.__setattr__(self, "a_eq", np.asarray(self.a_eq, dtype=float).reshape(-1, n))
        object.__setattr__(self, "b_eq", np.asarray(self.b_eq, dtype=float).ravel())
        if self.a_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("inequality system shape mismatch")
        if self.a_eq.shape[0] != self.b_eq.shape[0]:
            raise ValueError("equality system shape mismatch")
        for arr in (self.c, self.a_ub, self.b_ub, self.a_eq, self.b_eq):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str
    iterations: int


@dataclass
class FeasibilityReport:
    max_violation: float
    bound_violation: float
    inequality_violation: float
    equality_violation: float


def check_feasible(problem: LpProblem, x) -> FeasibilityReport:
    """Largest constraint violation of x against every row and bound."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n_vars,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.n_vars},)")
    bound = float(np.max(-x, initial=0.0))
    ineq = 0.0
    if problem.a_ub.shape[0]:
        ineq = float(np.max(problem.a_ub @ x - problem.b_ub, initial=0.0))
    eq = 0.0
    if problem.a_eq.shape[0]:
        eq = float(np.max(np.abs(problem.a_eq @ x - problem.b_eq), initial=0.0))
    return FeasibilityReport(
        max_violation=max(bound, ineq, eq, 0.0),
        bound_violation=bound,
        inequality_violation=max(ineq, 0.0),
        equality_violation=eq,
    )


class _Tableau:
    """Bounded-variable simplex working state over M @ x == q, lb <= x <= ub."""

    def __init__(self, matrix, lower, upper):
        self.tab = matrix  # becomes B^-1 @ M, kept current by pivots
        self.lower = lower
        self.upper = upper
        self.m, self.ncols = matrix.shape
        self.status = np.full(self.ncols, _AT_LOWER, dtype=np.int8)
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.xb = np.zeros(self.m)
        self.iterations = 0
        self._stall = 0
        self._bland = False

    def set_basic(self, row, col, value):
        self.basis[row] = col
        self.status[col] = _BASIC
        self.xb[row] = value

    def nonbasic_value(self, col):
        return self.upper[col] if self.status[col] == _AT_UPPER else self.lower[col]

    def run(self, costs, max_iter):
        """Pivot to optimality for the given costs. Returns OPTIMAL or UNBOUNDED."""
        while True:
            entering, direction = self._price(costs)
            if entering < 0:
                return OPTIMAL
            if not self._step(entering, direction):
                return UNBOUNDED
            self.iterations += 1
            if self.iterations > max_iter:
                raise RuntimeError(f"simplex exceeded {max_iter} pivots; anti-cycling failed")

    def _price(self, costs):
        if self.m:
            z = costs - costs[self.basis] @ self.tab
        else:
            z = costs.copy()
        span_open = self.upper - self.lower > 0.0
        lower_mask = (self.status == _AT_LOWER) & span_open & (z < -REDUCED_COST_TOL)
        upper_mask = (self.status == _AT_UPPER) & span_open & (z > REDUCED_COST_TOL)
        if self._bland:
            eligible = lower_mask | upper_mask
            if not eligible.any():
                return -1, 0
            entering = int(np.argmax(eligible))
        else:
            violation = np.zeros(self.ncols)
            violation[lower_mask] = -z[lower_mask]
            violation[upper_mask] = z[upper_mask]
            if violation.max(initial=0.0) <= 0.0:
                return -1, 0
            entering = int(np.argmax(violation))
        return entering, (+1 if self.status[entering] == _AT_LOWER else -1)

    def _step(self, entering, direction):
        col = self.tab[:, entering]
        move = -direction * col  # change in basic values per unit theta

        theta = self.upper[entering] - self.lower[entering]  # bound-flip limit
        leaving_row = -1
        if self.m:
            with np.errstate(divide="ignore", invalid="ignore"):
                lo_room = np.where(
                    move < -RATIO_TOL, (self.xb - self.lower[self.basis]) / -move, np.inf
                )
                hi_room = np.where(
                    move > RATIO_TOL, (self.upper[self.basis] - self.xb) / move, np.inf
                )
            room = np.minimum(lo_room, hi_room)
            row_theta = float(room.min(initial=np.inf))
            if row_theta < theta:
                theta = max(row_theta, 0.0)
                candidates = np.flatnonzero(room <= row_theta + RATIO_TOL)
                if self._bland:
                    leaving_row = int(candidates[np.argmin(self.basis[candidates])])
                else:
                    strength = np.abs(col[candidates])
                    tied = candidates[strength >= strength.max() - 1e-12]
                    leaving_row = int(tied[np.argmin(self.basis[tied])])

        if not np.isfinite(theta):
            return False
        theta = max(float(theta), 0.0)

        if theta <= RATIO_TOL:
            self._stall += 1
            if not self._bland and self._stall > 100 + 2 * self.m:
                self._bland = True
        else:
            self._stall = 0

        if self.m:
            self.xb += move * theta
        if leaving_row < 0:
            # entering variable runs to its opposite bound; basis unchanged
            self.status[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
            return True

        leaving = int(self.basis[leaving_row])
        went_down = move[leaving_row] < 0.0
        self.status[leaving] = _AT_LOWER if went_down else _AT_UPPER
        entering_value = self.nonbasic_value(entering) + direction * theta
        self.set_basic(leaving_row, entering, entering_value)
        self._pivot(leaving_row, entering)
        return True

    def _pivot(self, row, col):
        pivot = self.tab[row, col]
        self.tab[row, :] /= pivot
        scale = self.tab[:, col].copy()
        scale[row] = 0.0
        self.tab -= np.outer(scale, self.tab[row, :])
        self.tab[:, col] = 0.0
        self.tab[row, col] = 1.0


def solve(problem: LpProblem) -> LpSolution:
    """Optimal basic solution of the LP, or an infeasible/unbounded status.

    Infeasible and unbounded outcomes are returned, never raised: both
    signal an upstream modeling bug for the dispatch problems, which are
    feasible and bounded by construction.
    """
    n = problem.n_vars
    lower = np.zeros(n)
    upper = np.full(n, np.inf)

    # presolve: singleton inequality rows become variable bounds
    nonzero = problem.a_ub != 0.0
    nnz = nonzero.sum(axis=1)
    for r in np.flatnonzero(nnz == 0):
        if problem.b_ub[r] < -FEASIBILITY_TOL:
            return LpSolution(np.zeros(n), 0.0, INFEASIBLE, 0)
    for r in np.flatnonzero(nnz == 1):
        j = int(np.argmax(nonzero[r]))
        coef = problem.a_ub[r, j]
        limit = problem.b_ub[r] / coef
        if coef > 0:
            upper[j] = min(upper[j], limit)
        else:
            lower[j] = max(lower[j], limit)
    keep_rows = list(np.flatnonzero(nnz > 1))
    if np.any(lower > upper + FEASIBILITY_TOL):
        return LpSolution(np.zeros(n), 0.0, INFEASIBLE, 0)
    upper = np.maximum(upper, lower)  # collapse spans inverted by round-off

    a_rows = problem.a_ub[keep_rows] if keep_rows else np.zeros((0, n))
    b_rows = problem.b_ub[list(keep_rows)] if keep_rows else np.zeros(0)
    m_ub = a_rows.shape[0]
    m_eq = problem.a_eq.shape[0]
    m = m_ub + m_eq

    n_slack = m_ub
    first_art = n + n_slack
    ncols = first_art + m
    matrix = np.zeros((m, ncols))
    if m_ub:
        matrix[:m_ub, :n] = a_rows
        matrix[:m_ub, n:first_art] = np.eye(m_ub)
    if m_eq:
        matrix[m_ub:, :n] = problem.a_eq
    q = np.concatenate([b_rows, problem.b_eq])

    all_lower = np.concatenate([lower, np.zeros(n_slack + m)])
    all_upper = np.concatenate([upper, np.full(n_slack + m, np.inf)])

    # initial basis: slack where the bound-start point leaves slack room,
    # one artificial (row sign-normalized) everywhere else
    start = all_lower[:first_art].copy()
    start[n:] = 0.0
    residual = q - matrix[:, :first_art] @ start
    basis_plan = []
    any_artificial = False
    for r in range(m):
        if r < m_ub and residual[r] >= 0.0:
            basis_plan.append((r, n + r, residual[r]))
        else:
            if residual[r] < 0.0:
                matrix[r, :] *= -1.0
                q[r] *= -1.0
            matrix[r, first_art + r] = 1.0
            basis_plan.append((r, first_art + r, abs(residual[r])))
            any_artificial = True

    matrix0 = matrix.copy()  # pivoting mutates `matrix`; keep originals
    q0 = q.copy()

    tableau = _Tableau(matrix, all_lower, all_upper)
    for row, col, value in basis_plan:
        tableau.set_basic(row, col, value)

    if any_artificial:
        phase1 = np.zeros(ncols)
        phase1[first_art:] = 1.0
        status = tableau.run(phase1, max_iter=50_000 + 200 * m)
        art_value = sum(
            tableau.xb[r] for r in range(m) if tableau.basis[r] >= first_art
        )
        if status != OPTIMAL or art_value > FEASIBILITY_TOL:
            return LpSolution(np.zeros(n), 0.0, INFEASIBLE, tableau.iterations)
        _expel_artificials(tableau, first_art)
        tableau.upper[first_art:] = 0.0  # artificials may never move again
        tableau.lower[first_art:] = 0.0

    costs = np.concatenate([problem.c, np.zeros(n_slack + m)])
    status = tableau.run(costs, max_iter=100_000 + 200 * m)
    if status == UNBOUNDED:
        return LpSolution(np.zeros(n), 0.0, UNBOUNDED, tableau.iterations)

    x = _extract(problem, tableau, matrix0, q0, n)
    return LpSolution(x, float(problem.c @ x), OPTIMAL, tableau.iterations)


def _expel_artificials(tableau, first_art):
    """Pivot zero-valued basic artificials out; redundant rows keep theirs pinned."""
    for r in range(tableau.m):
        if tableau.basis[r] < first_art:
            continue
        row = tableau.tab[r, :first_art]
        for j in np.flatnonzero(np.abs(row) > PIVOT_TOL):
            if tableau.status[j] != _BASIC:
                old = int(tableau.basis[r])
                tableau.status[old] = _AT_LOWER
                tableau.set_basic(r, int(j), tableau.nonbasic_value(int(j)))
                tableau._pivot(r, int(j))
                break


def _extract(problem, tableau, matrix0, q0, n):
    """Final point, with basic values re-solved from the original columns to
    shed the round-off a long pivot sequence accumulates."""
    full = np.empty(tableau.ncols)
    for j in range(tableau.ncols):
        if tableau.status[j] != _BASIC:
            full[j] = tableau.nonbasic_value(j)
    for r in range(tableau.m):
        full[tableau.basis[r]] = tableau.xb[r]

    if tableau.m:
        basis = tableau.basis
        nonbasic = np.ones(tableau.ncols, dtype=bool)
        nonbasic[basis] = False
        rhs = q0 - matrix0[:, nonbasic] @ full[nonbasic]
        try:
            refined = np.linalg.solve(matrix0[:, basis], rhs)
        except np.linalg.LinAlgError:
            refined = None
        if refined is not None:
            candidate = full.copy()
            candidate[basis] = refined
            if _residual(problem, candidate[:n]) <= _residual(problem, full[:n]):
                full = candidate
    return full[:n]


def _residual(problem, x):
    return check_feasible(problem, x).max_violation
