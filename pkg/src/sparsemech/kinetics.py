"""Mass-action kinetics: rate evaluation, time stepping, and trajectories.

Reaction rates follow the mass-action law: the rate of reaction i is its
rate constant times the product of reactant concentrations raised to their
integer reactant orders.  Trajectories carry sampled concentrations, the
matching reaction rates, and the sample spacings; they come either from the
built-in integrator (:func:`simulate`) or from CSV files written by an
external code (:func:`load_trajectory`).

Two generation modes exist.  The default integrates the continuous dynamics
dX/dt = M r(X) with classical fixed-step RK4 between samples, doubling the
sub-step count until refinement stalls below a tolerance.  The exact-Euler
mode instead records one explicit Euler step per sample interval, so the
identity X[k+1] - X[k] = M r[k] dt[k] holds to the last bit (absent
clamping); that regime is where the selection layer's feasibility behavior
is known in closed form, and tests lean on it heavily.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .mechanism import ArrheniusRate, ConstantRate, Mechanism, order_matrix, stoich_matrix

__all__ = [
    "GAS_CONSTANT",
    "TrajectoryError",
    "IntegrationError",
    "Condition",
    "Trajectory",
    "RunSpec",
    "rate_constants",
    "reaction_rates",
    "euler_step",
    "simulate",
    "save_trajectory",
    "load_trajectory",
    "parse_schedule",
    "load_conditions",
]

# SI molar gas constant, J/(mol K).  Override wherever Ea uses other units.
GAS_CONSTANT = 8.314462618


class TrajectoryError(ValueError):
    """Raised for invalid trajectory data (shapes, ordering, signs)."""


class IntegrationError(RuntimeError):
    """Raised when the integrator exhausts its sub-step budget."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


@dataclass(frozen=True)
class Condition:
    """Initial-condition metadata for one run.

    ``temperature`` feeds Arrhenius rate evaluation; ``pressure`` and
    ``phi`` (equivalence ratio) are carried along as labels only.
    """

    temperature: float | None = None
    pressure: float | None = None
    phi: float | None = None
    label: str = "default"


@dataclass
class Trajectory:
    """Sampled concentrations and reaction rates for one condition.

    Attributes:
        times: strictly increasing sample times, length n >= 2.
        X: (n, n_species) nonnegative concentrations.
        r: (n, n_reactions) nonnegative reaction rates.
        deltas: per-step spacings, deltas[k] = times[k+1] - times[k].
        condition: the run's :class:`Condition`.
        clamp_events: (step index, species index) pairs where the integrator
            clamped a negative concentration to zero.
    """

    times: np.ndarray
    X: np.ndarray
    r: np.ndarray
    condition: Condition = field(default_factory=Condition)
    clamp_events: tuple = ()
    deltas: np.ndarray = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        X = np.asarray(self.X, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise TrajectoryError("need at least two sample times")
        if np.any(~np.isfinite(times)) or np.any(np.diff(times) <= 0):
            raise TrajectoryError("sample times must be finite and strictly increasing")
        if X.ndim != 2 or X.shape[0] != times.size:
            raise TrajectoryError(f"X must be (n_samples, n_species), got {X.shape}")
        if r.ndim != 2 or r.shape[0] != times.size:
            raise TrajectoryError(f"r must be (n_samples, n_reactions), got {r.shape}")
        if np.any(X < 0) or np.any(~np.isfinite(X)):
            raise TrajectoryError("concentrations must be finite and >= 0")
        if np.any(r < 0) or np.any(~np.isfinite(r)):
            raise TrajectoryError("reaction rates must be finite and >= 0")
        for arr in (times, X, r):
            arr.flags.writeable = False
        deltas = np.diff(times)
        deltas.flags.writeable = False
        self.times, self.X, self.r = times, X, r
        self.deltas = deltas

    @property
    def n_samples(self):
        return self.times.size

    @property
    def n_steps(self):
        return self.times.size - 1

    def verify_rates(self, mech: Mechanism, rel_tol: float = 1e-12) -> None:
        """Check that every rate row matches its concentration row.

        Only meaningful for internally generated trajectories; externally
        loaded rate files are allowed to disagree.
        """
        T = self.condition.temperature
        for k in range(self.n_samples):
            expected = reaction_rates(mech, self.X[k], temperature=T)
            err = np.abs(self.r[k] - expected)
            if np.any(err > rel_tol * (1.0 + np.abs(expected))):
                raise TrajectoryError(f"rate row {k} inconsistent with concentrations")


def rate_constants(
    mech: Mechanism,
    temperature: float | None = None,
    gas_constant: float = GAS_CONSTANT,
) -> np.ndarray:
    """Rate-constant vector k, evaluating Arrhenius entries at ``temperature``."""
    k = np.empty(mech.n_reactions)
    for i, rxn in enumerate(mech.reactions):
        if isinstance(rxn.rate, ConstantRate):
            k[i] = rxn.rate.k
        elif isinstance(rxn.rate, ArrheniusRate):
            if temperature is None:
                raise TrajectoryError(
                    f"reaction {rxn.label!r} uses an Arrhenius rate but no temperature was given"
                )
            if temperature <= 0:
                raise TrajectoryError(f"temperature must be > 0, got {temperature}")
            a = rxn.rate
            k[i] = a.A * temperature**a.b * np.exp(-a.Ea / (gas_constant * temperature))
        else:  # pragma: no cover - Reaction validates the rate type
            raise TypeError(f"unknown rate type {type(rxn.rate)!r}")
    return k


def _mass_action(k: np.ndarray, orders: np.ndarray, x: np.ndarray) -> np.ndarray:
    # x**0 == 1, so inert species drop out of the product automatically
    return k * np.prod(np.asarray(x, dtype=float)[None, :] ** orders, axis=1)


def reaction_rates(
    mech: Mechanism,
    x,
    temperature: float | None = None,
    gas_constant: float = GAS_CONSTANT,
) -> np.ndarray:
    """Mass-action rates r_i = k_i * prod_j x_j**order_ij for one state.

    Args:
        x: concentration vector in mechanism species order, >= 0.
        temperature: required when any reaction uses the Arrhenius form.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (mech.n_species,):
        raise TrajectoryError(f"expected {mech.n_species} concentrations, got shape {x.shape}")
    if np.any(x < 0):
        raise TrajectoryError("concentrations must be >= 0")
    k = rate_constants(mech, temperature, gas_constant)
    return _mass_action(k, order_matrix(mech), x)


def euler_step(x, stoich: np.ndarray, rates, delta: float):
    """One explicit Euler step X' = X + M r dt, clamped at zero.

    Returns:
        (x_next, clamped) where ``clamped`` is a tuple of species indices
        whose negative values were clamped to zero.
    """
    if delta <= 0:
        raise TrajectoryError(f"step size must be > 0, got {delta}")
    x_next = np.asarray(x, dtype=float) + stoich @ np.asarray(rates, dtype=float) * delta
    negative = np.where(x_next < 0)[0]
    if negative.size:
        x_next[negative] = 0.0
    return x_next, tuple(int(j) for j in negative)


def _rk4_interval(x, stoich, k, orders, dt, n_sub):
    """Integrate dX/dt = M r(X) over one sample interval with n_sub RK4 steps."""
    h = dt / n_sub
    clamped = set()
    for _ in range(n_sub):
        f1 = stoich @ _mass_action(k, orders, x)
        f2 = stoich @ _mass_action(k, orders, x + 0.5 * h * f1)
        f3 = stoich @ _mass_action(k, orders, x + 0.5 * h * f2)
        f4 = stoich @ _mass_action(k, orders, x + h * f3)
        x = x + (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        negative = np.where(x < 0)[0]
        if negative.size:
            clamped.update(int(j) for j in negative)
            x[negative] = 0.0
    return x, clamped


def simulate(
    mech: Mechanism,
    x0,
    condition: Condition,
    sample_times,
    exact_euler: bool = False,
    tol: float = 1e-6,
    max_substeps: int = 2**20,
    gas_constant: float = GAS_CONSTANT,
) -> Trajectory:
    """Generate a trajectory for one initial condition.

    Default mode integrates between samples with fixed-step RK4, doubling
    the sub-step count until the sampled state changes by less than ``tol``
    (relative) between refinements; exceeding ``max_substeps`` raises
    :class:`IntegrationError` naming the failing interval.  With
    ``exact_euler=True`` the state is advanced by a single explicit Euler
    step per sample interval instead, making the discrete-step identity
    exact.

    Negative concentrations are clamped to zero and recorded as clamp
    events in either mode.
    """
    mech_species = mech.n_species
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (mech_species,):
        raise TrajectoryError(f"x0 must have {mech_species} entries, got shape {x0.shape}")
    if np.any(x0 < 0):
        raise TrajectoryError("x0 must be >= 0")
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise TrajectoryError("sample_times must be strictly increasing with >= 2 entries")

    stoich = stoich_matrix(mech).astype(float)
    orders = order_matrix(mech)
    k = rate_constants(mech, condition.temperature, gas_constant)

    n = times.size
    X = np.empty((n, mech_species))
    X[0] = x0
    clamp_events = []

    if exact_euler:
        for step in range(n - 1):
            rates_here = _mass_action(k, orders, X[step])
            X[step + 1], clamped = euler_step(X[step], stoich, rates_here, times[step + 1] - times[step])
            clamp_events.extend((step, j) for j in clamped)
    else:
        for step in range(n - 1):
            dt = times[step + 1] - times[step]
            n_sub = 1
            x_prev, clamped_prev = _rk4_interval(X[step].copy(), stoich, k, orders, dt, n_sub)
            while True:
                n_sub *= 2
                x_next, clamped_next = _rk4_interval(X[step].copy(), stoich, k, orders, dt, n_sub)
                scale = max(1.0, float(np.max(np.abs(x_next))))
                if np.max(np.abs(x_next - x_prev)) <= tol * scale:
                    break
                if n_sub >= max_substeps:
                    raise IntegrationError(
                        f"no convergence within {max_substeps} sub-steps on "
                        f"[{times[step]}, {times[step + 1]}]",
                        interval=(float(times[step]), float(times[step + 1])),
                    )
                x_prev, clamped_prev = x_next, clamped_next
            X[step + 1] = x_next
            clamp_events.extend((step, j) for j in sorted(clamped_next))

    r = np.vstack([_mass_action(k, orders, X[i]) for i in range(n)])
    return Trajectory(times=times, X=X, r=r, condition=condition, clamp_events=tuple(clamp_events))


def _fmt(value: float) -> str:
    # shortest round-trip decimal form; keeps output byte-stable
    return repr(float(value))


def save_trajectory(traj: Trajectory, mech: Mechanism, conc_path, rates_path=None) -> None:
    """Write trajectory CSVs: ``t,<species...>`` and optionally ``t,<labels...>``."""
    with open(conc_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *mech.species])
        for i in range(traj.n_samples):
            writer.writerow([_fmt(traj.times[i]), *(_fmt(v) for v in traj.X[i])])
    if rates_path is not None:
        with open(rates_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", *mech.labels()])
            for i in range(traj.n_samples):
                writer.writerow([_fmt(traj.times[i]), *(_fmt(v) for v in traj.r[i])])


def _read_csv_matrix(path, expected_header, what):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TrajectoryError(f"{what}: empty file {path}") from None
        if header != expected_header:
            raise TrajectoryError(
                f"{what}: column mismatch, expected {expected_header}, got {header}"
            )
        times, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise TrajectoryError(f"{what}: line {lineno}: expected {len(expected_header)} fields")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise TrajectoryError(f"{what}: line {lineno}: {exc}") from None
            times.append(values[0])
            rows.append(values[1:])
    if len(times) < 2:
        raise TrajectoryError(f"{what}: need at least two samples")
    return np.asarray(times), np.asarray(rows)


def load_trajectory(
    conc_path,
    mech: Mechanism,
    rates_path=None,
    condition: Condition | None = None,
) -> Trajectory:
    """Load a trajectory from CSV files.

    The concentration file header must be ``t,<species in mechanism order>``.
    When ``rates_path`` is omitted, rates are recomputed row by row from the
    concentrations via the mass-action law.
    """
    times, X = _read_csv_matrix(conc_path, ["t", *mech.species], "trajectory")
    if np.any(np.diff(times) <= 0):
        raise TrajectoryError("trajectory: sample times must be strictly increasing")
    if np.any(X < 0):
        raise TrajectoryError("trajectory: negative concentration value")
    condition = condition or Condition()
    if rates_path is not None:
        rtimes, r = _read_csv_matrix(rates_path, ["t", *mech.labels()], "rates")
        if rtimes.shape != times.shape or np.any(rtimes != times):
            raise TrajectoryError("rates: time grid differs from the trajectory file")
        if np.any(r < 0):
            raise TrajectoryError("rates: negative rate value")
    else:
        T = condition.temperature
        r = np.vstack([reaction_rates(mech, X[i], temperature=T) for i in range(times.size)])
    return Trajectory(times=times, X=X, r=r, condition=condition)


def parse_schedule(spec) -> np.ndarray:
    """Build a sample-time grid from a schedule spec.

    Accepts an explicit list of times, ``"uniform:t0:t1:n"``, or
    ``"geom:t0:t1:n"`` (log-spaced, t0 > 0).
    """
    if isinstance(spec, (list, tuple, np.ndarray)):
        times = np.asarray(spec, dtype=float)
    elif isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 4 or parts[0] not in ("uniform", "geom"):
            raise TrajectoryError(
                f"bad schedule {spec!r}; expected 'uniform:t0:t1:n' or 'geom:t0:t1:n'"
            )
        try:
            t0, t1, n = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise TrajectoryError(f"bad schedule {spec!r}: {exc}") from None
        if n < 2:
            raise TrajectoryError(f"bad schedule {spec!r}: need at least 2 samples")
        if parts[0] == "uniform":
            times = np.linspace(t0, t1, n)
        else:
            if t0 <= 0:
                raise TrajectoryError(f"bad schedule {spec!r}: geometric schedule needs t0 > 0")
            times = np.geomspace(t0, t1, n)
    else:
        raise TrajectoryError(f"bad schedule {spec!r}")
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise TrajectoryError("schedule times must be strictly increasing with >= 2 entries")
    return times


@dataclass(frozen=True)
class RunSpec:
    """One entry of a conditions file: where to start and when to sample."""

    condition: Condition
    x0: dict
    times: np.ndarray

    def x0_vector(self, mech: Mechanism) -> np.ndarray:
        unknown = set(self.x0) - set(mech.species)
        if unknown:
            raise TrajectoryError(
                f"condition {self.condition.label!r}: X0 names unknown species {sorted(unknown)}"
            )
        return np.array([float(self.x0.get(name, 0.0)) for name in mech.species])


def load_conditions(path) -> list:
    """Parse a conditions file: JSON array of run records.

    Each record is ``{"label": str, "T": num|null, "P": num|null,
    "phi": num|null, "X0": {species: value}, "schedule": spec}`` where
    ``schedule`` is anything :func:`parse_schedule` accepts.
    """
    import json

    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TrajectoryError(f"conditions file: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, list) or not doc:
        raise TrajectoryError("conditions file must be a non-empty JSON array")
    specs = []
    for i, rec in enumerate(doc):
        ctx = f"conditions[{i}]"
        if not isinstance(rec, dict):
            raise TrajectoryError(f"{ctx}: must be an object")
        extra = set(rec) - {"label", "T", "P", "phi", "X0", "schedule"}
        if extra:
            raise TrajectoryError(f"{ctx}: unknown fields {sorted(extra)}")
        if "X0" not in rec or not isinstance(rec["X0"], dict):
            raise TrajectoryError(f"{ctx}: missing or invalid X0 mapping")
        if "schedule" not in rec:
            raise TrajectoryError(f"{ctx}: missing schedule")
        for key, value in rec["X0"].items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise TrajectoryError(f"{ctx}.X0.{key}: must be a number >= 0")
        label = rec.get("label", f"condition-{i}")
        cond = Condition(
            temperature=rec.get("T"),
            pressure=rec.get("P"),
            phi=rec.get("phi"),
            label=str(label),
        )
        specs.append(RunSpec(condition=cond, x0=dict(rec["X0"]), times=parse_schedule(rec["schedule"])))
    return specs
