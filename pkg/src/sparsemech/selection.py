"""Sparse selection of influential reactions over time horizons.

Given a sampled trajectory, each step k gets a weight vector w_k over the
reactions.  A weight vector is acceptable when, for every species j, the
step's concentration residual

    E_jk(w) = | X[k+1,j] - X[k,j] - M_j (w ⊙ r_k) dt_k |

stays below a fraction ``epsilon`` of the step's normalization

    N_k(j) = |M_j| r_k dt_k   (row-wise absolute values),

and when the accumulated drift over a whole chunk of consecutive steps
stays below ``beta * epsilon`` times the summed normalizations.  Minimizing
the total weight subject to these constraints is a binary integer program
per chunk (``mode="exact"``); relaxing the binaries to [0, 1] yields a
linear program (``mode="relaxed"``) whose real-valued weights are
thresholded afterwards.

The step range is partitioned into consecutive chunks of ``horizon`` steps
(the final chunk takes whatever remains), each chunk is solved
independently, and the per-step columns are assembled into a weight matrix
with one row per reaction.  Chunks share no state, so they may be solved in
any order or in parallel; assembly is keyed by chunk index and the result
is identical for any worker count.

Problem shape per chunk of W steps: ``n_reactions * W`` selection
variables in [0, 1] and ``2 * n_species * W + 2 * n_species`` inequality
rows (two per species per step, plus two per species for the chunk drift).
With ``drift_prefix=True`` every proper prefix of the chunk adds two more
rows per species.  Rows where the normalization falls below
``zero_norm_floor`` keep that floor as their right-hand side instead, which
keeps inert species from forcing spurious infeasibility.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kinetics import Condition, Trajectory
from .lp import (
    INTEGRALITY_TOL,
    IntegerProgram,
    LinearProgram,
    SolverError,
    solve_ilp,
    solve_lp,
)
from .mechanism import Mechanism, stoich_matrix

__all__ = [
    "MODE_EXACT",
    "MODE_RELAXED",
    "REPLAY_TOL",
    "InfeasibleChunkError",
    "SelectionConfig",
    "WeightMatrix",
    "SelectionMask",
    "ChunkProblem",
    "concentration_error",
    "normalization",
    "chunk_ranges",
    "build_chunk_problem",
    "solve_chunk",
    "run_selection",
    "threshold",
    "aggregate_relevance",
    "feasibility_violation",
    "minimal_feasible_epsilon",
    "write_weights_csv",
    "write_mask_csv",
    "write_relevance_csv",
    "read_mask_csv",
]

MODE_EXACT = "exact"
MODE_RELAXED = "relaxed"

# Returned weights must re-satisfy every constraint within this margin when
# replayed by plain matrix arithmetic.
REPLAY_TOL = 1e-8


class InfeasibleChunkError(RuntimeError):
    """No weight vector satisfies the tolerances on some chunk.

    Signals that ``epsilon``/``beta`` are too tight for the data.  Carries
    the chunk's step range and, when raised via :func:`run_selection`, the
    chunk index.
    """

    def __init__(self, message, steps=None, chunk_index=None):
        super().__init__(message)
        self.steps = steps
        self.chunk_index = chunk_index


@dataclass(frozen=True)
class SelectionConfig:
    """Tuning parameters for the selection problems.

    Attributes:
        epsilon: per-step error tolerance fraction, > 0.
        beta: drift multiplier, >= 1.
        horizon: steps per chunk, >= 1.
        alpha: threshold for projecting weights to a binary mask, in [0, 1).
        mode: "exact" (binary weights) or "relaxed" (LP weights in [0, 1]).
        zero_norm_floor: right-hand side used where a normalization is
            smaller than this value.
        drift_prefix: also enforce the drift bound on every proper prefix
            of each chunk (sensitivity studies; off by default).
    """

    epsilon: float
    beta: float = 3.0
    horizon: int = 5
    alpha: float = 0.0
    mode: str = MODE_RELAXED
    zero_norm_floor: float = 1e-12
    drift_prefix: bool = False

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not (self.beta >= 1 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not (isinstance(self.horizon, int) and self.horizon >= 1):
            raise ValueError(f"horizon must be an integer >= 1, got {self.horizon}")
        if not (0 <= self.alpha < 1):
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.mode not in (MODE_EXACT, MODE_RELAXED):
            raise ValueError(f"mode must be 'exact' or 'relaxed', got {self.mode!r}")
        if not (self.zero_norm_floor > 0):
            raise ValueError("zero_norm_floor must be > 0")


@dataclass
class WeightMatrix:
    """Per-reaction, per-step selection weights for one condition.

    ``values`` has shape (n_reactions, n_steps) with entries in [0, 1];
    in exact mode every entry is binary.
    """

    values: np.ndarray
    condition: Condition
    config: SelectionConfig

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("weight matrix must be 2-D (reactions x steps)")
        if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
            raise ValueError("weights must lie in [0, 1]")
        if self.config.mode == MODE_EXACT:
            if np.any(np.abs(values - np.rint(values)) > INTEGRALITY_TOL):
                raise ValueError("exact-mode weights must be binary")
        values.flags.writeable = False
        self.values = values

    @property
    def n_reactions(self):
        return self.values.shape[0]

    @property
    def n_steps(self):
        return self.values.shape[1]


@dataclass
class SelectionMask:
    """Binary projection of a weight matrix (reactions x steps)."""

    values: np.ndarray
    condition_label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=bool)
        if values.ndim != 2:
            raise ValueError("selection mask must be 2-D (reactions x steps)")
        values.flags.writeable = False
        self.values = values

    @property
    def n_reactions(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class ChunkProblem:
    """Built optimization problem for one chunk of steps."""

    program: IntegerProgram
    steps: range
    n_reactions: int

    @property
    def n_steps(self):
        return len(self.steps)


def concentration_error(traj: Trajectory, stoich: np.ndarray, species: int, step: int, weights) -> float:
    """Residual |dX - M (w ⊙ r) dt| for one species at one step."""
    _check_step(traj, step)
    if not 0 <= species < traj.X.shape[1]:
        raise IndexError(f"species index {species} out of range")
    w = np.asarray(weights, dtype=float)
    if w.shape != (traj.r.shape[1],):
        raise ValueError(f"weight vector must have {traj.r.shape[1]} entries")
    dx = traj.X[step + 1, species] - traj.X[step, species]
    flow = stoich[species] @ (w * traj.r[step]) * traj.deltas[step]
    return float(abs(dx - flow))


def normalization(traj: Trajectory, stoich: np.ndarray, species: int, step: int) -> float:
    """Sum of absolute per-reaction contributions |M_j| r_k dt_k."""
    _check_step(traj, step)
    if not 0 <= species < traj.X.shape[1]:
        raise IndexError(f"species index {species} out of range")
    return float(np.abs(stoich[species]) @ traj.r[step] * traj.deltas[step])


def _check_step(traj, step):
    if not 0 <= step < traj.n_steps:
        raise IndexError(f"step index {step} out of range [0, {traj.n_steps})")


def chunk_ranges(n_steps: int, horizon: int) -> list:
    """Consecutive chunks of ``horizon`` steps; the last takes the remainder."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    chunks = []
    start = 0
    while start < n_steps:
        width = min(horizon, n_steps - start)
        chunks.append(range(start, start + width))
        start += width
    return chunks


def _step_coefficients(traj, stoich, step):
    """Per-step constraint data: (coeffs (n_species, n_reactions), dx, norms)."""
    contrib = stoich * traj.r[step][None, :] * traj.deltas[step]
    dx = traj.X[step + 1] - traj.X[step]
    norms = np.abs(stoich) @ traj.r[step] * traj.deltas[step]
    return contrib, dx, norms


def _floored(rhs, norms, floor):
    return np.where(norms < floor, floor, rhs)


def build_chunk_problem(
    traj: Trajectory,
    stoich: np.ndarray,
    config: SelectionConfig,
    steps: range,
) -> ChunkProblem:
    """Assemble the selection program for one chunk of steps.

    Variables are ordered step-major: variable ``s * n_reactions + i`` is the
    weight of reaction i at the chunk's s-th step.  Row order: for each step,
    two rows per species (first bounding the residual from below, then from
    above); then two drift rows per species; then, when ``drift_prefix`` is
    set, two rows per species for each proper prefix length.
    """
    if len(steps) == 0:
        raise ValueError("empty step range")
    if steps.step != 1 or steps[0] < 0 or steps[-1] >= traj.n_steps:
        raise ValueError(f"steps {steps} not a contiguous range within [0, {traj.n_steps})")
    stoich = np.asarray(stoich, dtype=float)
    n_species = stoich.shape[0]
    n_reactions = stoich.shape[1]
    if traj.r.shape[1] != n_reactions or traj.X.shape[1] != n_species:
        raise ValueError("stoichiometric matrix does not match the trajectory")

    width = len(steps)
    n_vars = n_reactions * width
    floor = config.zero_norm_floor

    rows_a = []
    rows_b = []

    def add_pair(coeff_block, dx, rhs):
        # |dx - coeff.w| <= rhs  as two inequalities per species
        rows_a.append(-coeff_block)
        rows_b.append(rhs - dx)
        rows_a.append(coeff_block)
        rows_b.append(rhs + dx)

    per_step = []
    for local, step in enumerate(steps):
        contrib, dx, norms = _step_coefficients(traj, stoich, step)
        per_step.append((contrib, norms))
        block = np.zeros((n_species, n_vars))
        block[:, local * n_reactions : (local + 1) * n_reactions] = contrib
        add_pair(block, dx, _floored(config.epsilon * norms, norms, floor))

    def drift_pair(prefix_width):
        block = np.zeros((n_species, n_vars))
        total_norm = np.zeros(n_species)
        for local in range(prefix_width):
            contrib, norms = per_step[local]
            block[:, local * n_reactions : (local + 1) * n_reactions] = contrib
            total_norm += norms
        dx = traj.X[steps[prefix_width - 1] + 1] - traj.X[steps[0]]
        rhs = _floored(config.beta * config.epsilon * total_norm, total_norm, floor)
        add_pair(block, dx, rhs)

    drift_pair(width)
    if config.drift_prefix:
        for prefix in range(1, width):
            drift_pair(prefix)

    A = np.vstack(rows_a)
    b = np.concatenate(rows_b)
    base = LinearProgram(
        c=np.ones(n_vars),
        A=A,
        b=b,
        lower=np.zeros(n_vars),
        upper=np.ones(n_vars),
    )
    program = IntegerProgram(base=base, integral=np.full(n_vars, config.mode == MODE_EXACT))
    return ChunkProblem(program=program, steps=steps, n_reactions=n_reactions)


def solve_chunk(problem: ChunkProblem, config: SelectionConfig, node_limit: int = 200000) -> np.ndarray:
    """Solve one chunk; returns weights with shape (n_reactions, chunk steps).

    Exact mode minimizes the number of selected reactions over binary
    weights; relaxed mode solves the LP relaxation.  Raises
    :class:`InfeasibleChunkError` when the tolerances cannot be met.
    """
    if config.mode == MODE_EXACT:
        result = solve_ilp(problem.program, node_limit=node_limit)
    else:
        result = solve_lp(problem.program.base)
    if result.status == "infeasible":
        raise InfeasibleChunkError(
            f"selection infeasible on steps [{problem.steps[0]}, {problem.steps[-1]}]: "
            "epsilon/beta too tight for the data",
            steps=problem.steps,
        )
    if result.status != "optimal":
        raise SolverError(f"chunk solve terminated with status {result.status!r}")

    x = result.x
    if config.mode == MODE_EXACT:
        x = np.rint(x)
    else:
        x = np.clip(x, 0.0, 1.0)
    values = x.reshape(len(problem.steps), problem.n_reactions).T

    slack = _chunk_violation(problem, config, x)
    if slack > REPLAY_TOL:  # pragma: no cover - guards against solver defects
        raise SolverError(f"returned weights violate constraints by {slack:.3e}")
    return values


def _chunk_violation(problem, config, x):
    base = problem.program.base
    if base.n_rows == 0:
        return 0.0
    return float(np.max(base.A @ x - base.b, initial=0.0))


def run_selection(
    traj: Trajectory,
    mech: Mechanism,
    config: SelectionConfig,
    jobs: int = 1,
) -> WeightMatrix:
    """Solve every chunk of the trajectory and assemble the weight matrix.

    Chunks are independent; with ``jobs > 1`` they are solved in a process
    pool and re-assembled by chunk index, so the result does not depend on
    the degree of parallelism.
    """
    stoich = stoich_matrix(mech).astype(float)
    if traj.r.shape[1] != mech.n_reactions:
        raise ValueError(
            f"trajectory has {traj.r.shape[1]} rate columns, mechanism has {mech.n_reactions}"
        )
    chunks = chunk_ranges(traj.n_steps, config.horizon)
    values = np.empty((mech.n_reactions, traj.n_steps))

    if jobs <= 1:
        for index, steps in enumerate(chunks):
            values[:, steps.start : steps.stop] = _solve_one(traj, stoich, config, steps, index)
    else:
        payloads = [
            (traj.times, traj.X, traj.r, stoich, config, (steps.start, steps.stop), index)
            for index, steps in enumerate(chunks)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, outcome, extra in pool.map(_chunk_task, payloads):
                if isinstance(outcome, str):
                    raise InfeasibleChunkError(
                        extra["message"], steps=range(*extra["steps"]), chunk_index=index
                    )
                start, stop = extra
                values[:, start:stop] = outcome
    return WeightMatrix(values=values, condition=traj.condition, config=config)


def _solve_one(traj, stoich, config, steps, index):
    try:
        return solve_chunk(build_chunk_problem(traj, stoich, config, steps), config)
    except InfeasibleChunkError as exc:
        raise InfeasibleChunkError(str(exc), steps=exc.steps, chunk_index=index) from None


def _chunk_task(payload):
    times, X, r, stoich, config, (start, stop), index = payload
    traj = Trajectory(times=times, X=X, r=r)
    steps = range(start, stop)
    try:
        values = solve_chunk(build_chunk_problem(traj, stoich, config, steps), config)
    except InfeasibleChunkError as exc:
        return index, "infeasible", {"message": str(exc), "steps": (start, stop)}
    return index, values, (start, stop)


def threshold(weights: WeightMatrix, alpha: float | None = None) -> SelectionMask:
    """Project weights onto a binary mask: selected iff weight > alpha (strict)."""
    if alpha is None:
        alpha = weights.config.alpha
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    return SelectionMask(
        values=weights.values > alpha,
        condition_label=weights.condition.label,
    )


def aggregate_relevance(weights: WeightMatrix) -> np.ndarray:
    """Per-reaction relevance: the maximum weight the reaction ever attains."""
    return weights.values.max(axis=1)


def feasibility_violation(
    traj: Trajectory,
    stoich: np.ndarray,
    config: SelectionConfig,
    values: np.ndarray,
) -> float:
    """Worst constraint violation of a weight matrix, by direct arithmetic.

    Recomputes the per-step residual bounds and per-chunk drift bounds from
    the trajectory (not from any stored program) and returns the largest
    amount by which the weights exceed them; <= 0 means fully feasible.
    """
    stoich = np.asarray(stoich, dtype=float)
    values = np.asarray(values, dtype=float)
    floor = config.zero_norm_floor
    worst = -np.inf
    for steps in chunk_ranges(traj.n_steps, config.horizon):
        drift_flow = np.zeros(stoich.shape[0])
        drift_norm = np.zeros(stoich.shape[0])
        for step in steps:
            contrib, dx, norms = _step_coefficients(traj, stoich, step)
            flow = contrib @ values[:, step]
            err = np.abs(dx - flow)
            worst = max(worst, float(np.max(err - _floored(config.epsilon * norms, norms, floor))))
            drift_flow += flow
            drift_norm += norms
        dx = traj.X[steps[-1] + 1] - traj.X[steps[0]]
        rhs = _floored(config.beta * config.epsilon * drift_norm, drift_norm, floor)
        worst = max(worst, float(np.max(np.abs(dx - drift_flow) - rhs)))
    return worst


def minimal_feasible_epsilon(
    traj: Trajectory,
    stoich: np.ndarray,
    config: SelectionConfig,
    steps: range,
    max_epsilon: float = 1e6,
    rel_tol: float = 1e-3,
) -> float | None:
    """Smallest epsilon (by bisection) at which a chunk becomes feasible.

    Returns None when even ``max_epsilon`` leaves the chunk infeasible
    (e.g. a species changes while every rate is zero).
    """

    def feasible(eps):
        cfg = dataclasses.replace(config, epsilon=eps, mode=MODE_RELAXED)
        problem = build_chunk_problem(traj, stoich, cfg, steps)
        return solve_lp(problem.program.base).status == "optimal"

    hi = max(config.epsilon, 1e-6)
    while not feasible(hi):
        hi *= 2.0
        if hi > max_epsilon:
            return None
    lo = 0.0
    while hi - lo > max(rel_tol * hi, 1e-15):
        mid = 0.5 * (lo + hi)
        if mid <= 0:
            break
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _fmt(value: float) -> str:
    return repr(float(value))


def write_weights_csv(path, weights: WeightMatrix, times: np.ndarray, labels) -> None:
    """Weights CSV: ``step_index,t_start,<reaction labels>``, one row per step."""
    _write_step_csv(path, weights.values, times, labels, _fmt)


def write_mask_csv(path, mask: SelectionMask, times: np.ndarray, labels) -> None:
    """Mask CSV: same layout as the weights file with 0/1 entries."""
    _write_step_csv(path, mask.values, times, labels, lambda v: str(int(v)))


def _write_step_csv(path, values, times, labels, fmt):
    n_reactions, n_steps = values.shape
    if len(labels) != n_reactions:
        raise ValueError("label count does not match the number of reactions")
    if len(times) < n_steps + 1:
        raise ValueError("times must cover every step start")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step_index", "t_start", *labels])
        for k in range(n_steps):
            writer.writerow([str(k), _fmt(times[k]), *(fmt(v) for v in values[:, k])])


def write_relevance_csv(path, relevance: np.ndarray, labels) -> None:
    """Relevance CSV: ``reaction_index,label,relevance`` (0-based indices)."""
    if len(labels) != len(relevance):
        raise ValueError("label count does not match the relevance vector")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["reaction_index", "label", "relevance"])
        for i, (label, value) in enumerate(zip(labels, relevance)):
            writer.writerow([str(i), label, _fmt(value)])


def read_mask_csv(path):
    """Read a mask CSV; returns (labels, values bool (n_reactions, n_steps))."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty mask file {path}") from None
        if len(header) < 3 or header[:2] != ["step_index", "t_start"]:
            raise ValueError(f"mask file {path}: bad header {header[:2]}")
        labels = header[2:]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"mask file {path}: line {lineno}: wrong field count")
            rows.append([v not in ("0", "0.0", "") for v in row[2:]])
    if not rows:
        raise ValueError(f"mask file {path}: no step rows")
    return labels, np.array(rows, dtype=bool).T
