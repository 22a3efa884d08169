"""Influential-reaction selection and mechanism reduction from trajectory data.

The package splits into five layers: mechanism parsing and derived matrices
(:mod:`sparsemech.mechanism`), mass-action simulation and trajectory I/O
(:mod:`sparsemech.kinetics`), in-repo LP/ILP solvers (:mod:`sparsemech.lp`),
per-horizon sparse reaction selection (:mod:`sparsemech.selection`), and
reduced-mechanism assembly with full-vs-reduced comparison
(:mod:`sparsemech.reduction`).  :mod:`sparsemech.cli` ties them into
reproducible command-line runs.
"""

from .kinetics import (
    GAS_CONSTANT,
    Condition,
    IntegrationError,
    RunSpec,
    Trajectory,
    TrajectoryError,
    euler_step,
    load_conditions,
    load_trajectory,
    parse_schedule,
    rate_constants,
    reaction_rates,
    save_trajectory,
    simulate,
)
from .lp import (
    IntegerProgram,
    LinearProgram,
    SolveResult,
    SolverError,
    format_program,
    solve_ilp,
    solve_lp,
)
from .mechanism import (
    ArrheniusRate,
    ConstantRate,
    Mechanism,
    MechanismError,
    Reaction,
    check_element_balance,
    expand_reversible,
    load_mechanism,
    order_matrix,
    parse_mechanism,
    save_mechanism,
    serialize_mechanism,
    stoich_matrix,
)
from .reduction import (
    ComparisonError,
    ComparisonReport,
    ReducedMechanism,
    ReductionError,
    characteristic_time,
    compare,
    default_progress_species,
    emit_reduced,
    union_influential,
)
from .selection import (
    InfeasibleChunkError,
    SelectionConfig,
    SelectionMask,
    WeightMatrix,
    aggregate_relevance,
    build_chunk_problem,
    chunk_ranges,
    concentration_error,
    feasibility_violation,
    minimal_feasible_epsilon,
    normalization,
    run_selection,
    solve_chunk,
    threshold,
)
from .testnet import random_network, random_x0

__version__ = "0.1.0"
