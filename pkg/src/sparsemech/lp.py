"""Self-contained linear and binary-integer program solvers.

Problems are minimization over ``A x <= b`` with finite variable bounds.
The LP solver is a bounded-variable revised simplex: nonbasic variables sit
at either bound, an explicit basis inverse is kept up to date by pivot-form
updates and refactored periodically, and a two-phase start with artificial
variables handles infeasible initial bases.  Pricing uses Dantzig's rule
(most negative reduced cost, lowest index on ties) and switches to Bland's
rule after a stall, which guarantees termination.

The integer solver is depth-first branch and bound on the LP relaxation:
most-fractional branching, an incumbent seeded by rounding LP solutions,
and children explored better-bound-first.  Everything is deterministic for
a fixed problem: no randomness, no time-dependent choices, no shared state
between solves.

Fixed tolerances live in module constants and are used consistently by both
solvers and by the result replay checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FEASIBILITY_TOL",
    "INTEGRALITY_TOL",
    "OBJECTIVE_TOL",
    "SolverError",
    "LinearProgram",
    "IntegerProgram",
    "SolveResult",
    "solve_lp",
    "solve_ilp",
    "format_program",
]

FEASIBILITY_TOL = 1e-9
INTEGRALITY_TOL = 1e-6
OBJECTIVE_TOL = 1e-6

_REFACTOR_EVERY = 64
_STALL_LIMIT = 40


class SolverError(RuntimeError):
    """Hard numerical failure (iteration limit, singular basis)."""


@dataclass(frozen=True)
class LinearProgram:
    """min c.x subject to A x <= b and lower <= x <= upper (all finite)."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, c.size)
        b = np.atleast_1d(np.asarray(self.b, dtype=float)) if np.size(self.b) else np.zeros(0)
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        n = c.size
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"A must be (m, {n}), got {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(f"b must have {A.shape[0]} entries, got {b.shape}")
        if lower.shape != (n,) or upper.shape != (n,):
            raise ValueError("bounds must match the number of variables")
        for name, arr in (("c", c), ("A", A), ("b", b), ("lower", lower), ("upper", upper)):
            if np.any(~np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for arr in (c, A, b, lower, upper):
            arr.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_variables(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.A.shape[0]

    def with_bounds(self, lower, upper) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.b, lower, upper)


@dataclass(frozen=True)
class IntegerProgram:
    """LP plus an integrality mask; masked variables must be binary-bounded."""

    base: LinearProgram
    integral: np.ndarray

    def __post_init__(self):
        mask = np.atleast_1d(np.asarray(self.integral, dtype=bool))
        if mask.shape != (self.base.n_variables,):
            raise ValueError("integral mask must have one entry per variable")
        lo, up = self.base.lower[mask], self.base.upper[mask]
        if np.any(lo < -INTEGRALITY_TOL) or np.any(up > 1 + INTEGRALITY_TOL):
            raise ValueError("integral variables must have bounds within [0, 1]")
        mask.flags.writeable = False
        object.__setattr__(self, "integral", mask)


@dataclass(frozen=True)
class SolveResult:
    """Solver outcome.

    ``x`` and ``objective`` are populated for ``optimal`` results (and, for
    ``node-limit``, hold the best incumbent found, if any).
    """

    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    nodes: int = 0


def format_program(lp: LinearProgram) -> str:
    """Plain-text tableau dump for debugging."""
    lines = ["minimize  " + "  ".join(f"{v:+.6g}" for v in lp.c)]
    for i in range(lp.n_rows):
        row = "  ".join(f"{v:+.6g}" for v in lp.A[i])
        lines.append(f"row {i:3d}:  {row}  <=  {lp.b[i]:+.6g}")
    lines.append("lower:    " + "  ".join(f"{v:+.6g}" for v in lp.lower))
    lines.append("upper:    " + "  ".join(f"{v:+.6g}" for v in lp.upper))
    return "\n".join(lines)


def _invert(mat: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting (deterministic)."""
    m = mat.shape[0]
    aug = np.hstack([mat.astype(float), np.eye(m)])
    for col in range(m):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < 1e-12:
            raise SolverError("singular basis matrix")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        others = np.arange(m) != col
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, m:]


class _BoundedSimplex:
    """Bounded-variable revised simplex over equality rows E z = b, 0 <= z <= ub.

    Column layout: structural variables (shifted to lower bound zero), then
    slacks, then any phase-1 artificials.  ``at_upper`` tracks which nonbasic
    variables rest at a finite upper bound.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        n, m = lp.n_variables, lp.n_rows
        self.n, self.m = n, m
        self.span = lp.upper - lp.lower
        b0 = lp.b - lp.A @ lp.lower

        flip = b0 < 0
        A = lp.A.copy()
        A[flip] *= -1.0
        slack = np.eye(m)
        slack[flip, flip] = -1.0
        self.rhs = np.where(flip, -b0, b0)

        self.n_art = int(np.count_nonzero(flip))
        art_cols = np.zeros((m, self.n_art))
        art_rows = np.where(flip)[0]
        for idx, row in enumerate(art_rows):
            art_cols[row, idx] = 1.0

        self.E = np.hstack([A, slack, art_cols]) if m else np.zeros((0, n + self.n_art))
        self.ub = np.concatenate([self.span, np.full(m, np.inf), np.full(self.n_art, np.inf)])
        self.total = n + m + self.n_art

        self.basis = np.empty(m, dtype=int)
        self.basis[~flip] = n + np.where(~flip)[0]
        self.basis[flip] = n + m + np.arange(self.n_art)
        self.in_basis = np.zeros(self.total, dtype=bool)
        self.in_basis[self.basis] = True
        self.at_upper = np.zeros(self.total, dtype=bool)
        self.Binv = np.eye(m)
        self.pivots_since_refactor = 0
        self.iterations = 0

    def _refactor(self):
        if self.m:
            self.Binv = _invert(self.E[:, self.basis])
        self.pivots_since_refactor = 0

    def _nonbasic_upper_rhs(self):
        cols = np.where(self.at_upper & ~self.in_basis)[0]
        if cols.size == 0:
            return self.rhs
        return self.rhs - self.E[:, cols] @ self.ub[cols]

    def _basic_values(self):
        if self.m == 0:
            return np.zeros(0)
        return self.Binv @ self._nonbasic_upper_rhs()

    def _solution(self):
        z = np.where(self.at_upper, np.where(np.isfinite(self.ub), self.ub, 0.0), 0.0)
        z[self.in_basis] = 0.0
        z[self.basis] = self._basic_values()
        return z

    def _iterate(self, cost: np.ndarray, max_iterations: int) -> str:
        tol = FEASIBILITY_TOL
        movable = self.ub > tol  # fixed variables never enter
        bland = False
        stall = 0
        best_seen = np.inf
        for _ in range(max_iterations):
            self.iterations += 1
            if self.pivots_since_refactor >= _REFACTOR_EVERY:
                self._refactor()
            x_b = self._basic_values()

            pi = cost[self.basis] @ self.Binv if self.m else np.zeros(0)
            reduced = cost - pi @ self.E if self.m else cost.copy()
            nonbasic = ~self.in_basis
            viol = np.where(
                nonbasic
                & movable
                & (
                    (~self.at_upper & (reduced < -tol))
                    | (self.at_upper & (reduced > tol))
                )
            )[0]
            if viol.size == 0:
                return "optimal"
            if bland:
                j = int(viol[0])
            else:
                j = int(viol[np.argmax(np.abs(reduced[viol]))])

            sigma = -1.0 if self.at_upper[j] else 1.0
            u = self.Binv @ self.E[:, j] if self.m else np.zeros(0)
            u_eff = sigma * u

            # ratio test: how far can the entering variable move?
            t_best = self.ub[j]  # bound flip distance (may be inf for slacks)
            blocker = -1
            leave_to_upper = False
            pos_mask = u_eff > tol
            neg_mask = u_eff < -tol
            if np.any(pos_mask):
                idx = np.where(pos_mask)[0]
                ratios = np.maximum(x_b[idx], 0.0) / u_eff[idx]
                t_min = float(np.min(ratios))
                if t_min < t_best - 1e-15:
                    t_best = t_min
                    blocker, leave_to_upper = self._pick_blocker(idx, ratios, t_min, u_eff, bland), False
            if np.any(neg_mask):
                idx = np.where(neg_mask)[0]
                caps = self.ub[self.basis[idx]] - x_b[idx]
                finite = np.isfinite(caps)
                idx, caps = idx[finite], caps[finite]
                if idx.size:
                    ratios = np.maximum(caps, 0.0) / (-u_eff[idx])
                    t_min = float(np.min(ratios))
                    if t_min < t_best - 1e-15:
                        t_best = t_min
                        blocker, leave_to_upper = self._pick_blocker(idx, ratios, t_min, u_eff, bland), True

            if not np.isfinite(t_best):
                return "unbounded"

            obj = float(cost @ self._solution())
            if obj < best_seen - 1e-12:
                best_seen = obj
                stall = 0
            else:
                stall += 1
                if stall >= _STALL_LIMIT:
                    bland = True

            if blocker < 0:
                # entering variable runs to its opposite bound
                self.at_upper[j] = not self.at_upper[j]
                continue

            leaving = int(self.basis[blocker])
            self.basis[blocker] = j
            self.in_basis[leaving] = False
            self.in_basis[j] = True
            self.at_upper[leaving] = leave_to_upper
            self.at_upper[j] = False
            if self.m:
                pivot = u[blocker]
                if abs(pivot) < 1e-12:
                    self._refactor()
                else:
                    row = self.Binv[blocker] / pivot
                    self.Binv -= np.outer(u, row)
                    self.Binv[blocker] = row
                    self.pivots_since_refactor += 1
        raise SolverError(
            f"simplex iteration limit exceeded ({max_iterations} iterations, "
            f"{self.n} variables, {self.m} rows)"
        )

    def _pick_blocker(self, idx, ratios, t_min, u_eff, bland):
        ties = idx[ratios <= t_min + 1e-12]
        if bland:
            # Bland's rule: smallest variable index among blockers
            return int(ties[np.argmin(self.basis[ties])])
        # otherwise prefer the numerically largest pivot, lowest row on ties
        return int(ties[np.argmax(np.abs(u_eff[ties]))])

    def solve(self, max_iterations: int) -> str:
        if self.n_art:
            cost1 = np.zeros(self.total)
            cost1[self.n + self.m :] = 1.0
            status = self._iterate(cost1, max_iterations)
            if status != "optimal":  # pragma: no cover - phase 1 is always bounded
                raise SolverError("phase 1 terminated " + status)
            resid = float(cost1 @ self._solution())
            scale = 1.0 + float(np.max(np.abs(self.rhs))) if self.m else 1.0
            if resid > FEASIBILITY_TOL * scale:
                return "infeasible"
            # pin artificials to zero for phase 2
            self.ub[self.n + self.m :] = 0.0
        cost2 = np.zeros(self.total)
        cost2[: self.n] = self.lp.c
        return self._iterate(cost2, max_iterations)

    def extract(self) -> np.ndarray:
        z = self._solution()
        x = self.lp.lower + z[: self.n]
        return np.minimum(np.maximum(x, self.lp.lower), self.lp.upper)


def solve_lp(lp: LinearProgram, max_iterations: int | None = None, debug: bool = False) -> SolveResult:
    """Solve a linear program to a basic optimal solution.

    Infeasible and unbounded outcomes are reported through ``status``;
    exceeding the iteration limit raises :class:`SolverError`.
    """
    if debug:
        print(format_program(lp))
    if max_iterations is None:
        max_iterations = 2000 + 200 * (lp.n_variables + lp.n_rows)
    simplex = _BoundedSimplex(lp)
    status = simplex.solve(max_iterations)
    if status != "optimal":
        return SolveResult(status=status, iterations=simplex.iterations)
    simplex._refactor()
    x = simplex.extract()
    resid = lp.A @ x - lp.b if lp.n_rows else np.zeros(0)
    allowed = FEASIBILITY_TOL * (1.0 + np.abs(lp.b)) if lp.n_rows else np.zeros(0)
    if lp.n_rows and np.any(resid > allowed):
        raise SolverError(
            f"optimal basis violates constraints by {float(np.max(resid - allowed)):.3e}"
        )
    return SolveResult(
        status="optimal",
        x=x,
        objective=float(lp.c @ x),
        iterations=simplex.iterations,
    )


def _rounded_incumbent(ip: IntegerProgram, x: np.ndarray):
    """Round integral variables of an LP solution; return (x, obj) if feasible."""
    lp = ip.base
    cand = x.copy()
    cand[ip.integral] = np.rint(cand[ip.integral])
    cand = np.minimum(np.maximum(cand, lp.lower), lp.upper)
    # bounds of integral vars are integral in this artifact, so clip keeps integrality
    if lp.n_rows:
        resid = lp.A @ cand - lp.b
        if np.any(resid > FEASIBILITY_TOL * (1.0 + np.abs(lp.b))):
            return None
    return cand, float(lp.c @ cand)


def solve_ilp(ip: IntegerProgram, node_limit: int = 200000, debug: bool = False) -> SolveResult:
    """Branch-and-bound solve of a (mixed) binary integer program.

    Depth-first search on the LP relaxation with most-fractional branching;
    children are explored better-bound-first.  Returns ``node-limit`` status
    (with the best incumbent found, if any) once more than ``node_limit``
    nodes have been solved.
    """
    lp = ip.base
    if debug:
        print(format_program(lp))
        print("integral:", np.where(ip.integral)[0].tolist())

    root = solve_lp(lp)
    nodes = 1
    iterations = root.iterations
    if root.status != "optimal":
        return SolveResult(status=root.status, iterations=iterations, nodes=nodes)

    best_x = None
    best_obj = np.inf
    seeded = _rounded_incumbent(ip, root.x)
    if seeded is not None:
        best_x, best_obj = seeded

    stack = [(root, lp.lower, lp.upper)]
    while stack:
        res, lower, upper = stack.pop()
        if res.status != "optimal":
            continue
        if res.objective >= best_obj - OBJECTIVE_TOL * 1e-3 * (1.0 + abs(best_obj)):
            continue  # cannot improve on the incumbent
        frac = np.abs(res.x[ip.integral] - np.rint(res.x[ip.integral]))
        if frac.size == 0 or np.max(frac) <= INTEGRALITY_TOL:
            if res.objective < best_obj:
                best_x, best_obj = res.x, res.objective
            continue
        # most-fractional branching (distance to the nearest integer)
        idx_int = np.where(ip.integral)[0]
        branch = int(idx_int[np.argmax(frac)])
        value = res.x[branch]

        children = []
        for child_lower, child_upper in (
            (lower, _with(upper, branch, np.floor(value))),
            (_with(lower, branch, np.ceil(value)), upper),
        ):
            if child_lower[branch] > child_upper[branch]:
                continue
            nodes += 1
            if nodes > node_limit:
                return SolveResult(
                    status="node-limit",
                    x=best_x,
                    objective=(best_obj if best_x is not None else None),
                    iterations=iterations,
                    nodes=nodes,
                )
            child = solve_lp(lp.with_bounds(child_lower, child_upper))
            iterations += child.iterations
            if child.status != "optimal":
                continue
            seeded = _rounded_incumbent(ip, child.x)
            if seeded is not None and seeded[1] < best_obj:
                best_x, best_obj = seeded
            children.append((child, child_lower, child_upper))
        # explore the better bound first: push it last
        children.sort(key=lambda item: -item[0].objective)
        stack.extend(children)

    if best_x is None:
        return SolveResult(status="infeasible", iterations=iterations, nodes=nodes)
    return SolveResult(
        status="optimal", x=best_x, objective=best_obj, iterations=iterations, nodes=nodes
    )


def _with(arr: np.ndarray, idx: int, value: float) -> np.ndarray:
    out = arr.copy()
    out[idx] = value
    return out
