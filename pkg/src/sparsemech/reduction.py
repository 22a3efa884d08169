"""Reduced-mechanism assembly and full-vs-reduced comparison.

Selections from several conditions are combined by union: a reaction is
kept when any condition selected it at any step.  The reduced mechanism
keeps the surviving reactions in parent order and drops species that no
surviving reaction references.  Agreement between parent and reduced
mechanisms is quantified per condition by a characteristic-time deviation
(time to traverse half of a progress species' net change, a desk-scale
stand-in for an ignition delay) and by the largest normalized concentration
deviation over all samples and shared species.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kinetics import RunSpec, Trajectory, simulate
from .mechanism import Mechanism, serialize_mechanism
from .selection import SelectionMask

__all__ = [
    "ReductionError",
    "ComparisonError",
    "ReducedMechanism",
    "ConditionComparison",
    "ComparisonReport",
    "union_influential",
    "emit_reduced",
    "characteristic_time",
    "compare",
    "default_progress_species",
]


class ReductionError(ValueError):
    """Raised for invalid reduction inputs (shape mismatch, empty keep set)."""


class ComparisonError(RuntimeError):
    """Raised when a comparison simulation fails; carries the condition label."""

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


@dataclass(frozen=True)
class ReducedMechanism:
    """A subset mechanism plus which conditions selected each kept reaction.

    ``kept_reaction_indices`` index into the parent mechanism; ``provenance``
    maps each kept index to the labels of the conditions that selected it.
    """

    mechanism: Mechanism
    kept_reaction_indices: tuple
    provenance: dict

    def provenance_block(self) -> dict:
        """JSON-ready provenance: parent index -> {label, conditions}."""
        return {
            str(i): {
                "label": self.mechanism.reactions[pos].label,
                "conditions": sorted(self.provenance.get(i, ())),
            }
            for pos, i in enumerate(self.kept_reaction_indices)
        }

    def serialize(self) -> str:
        return serialize_mechanism(self.mechanism, provenance=self.provenance_block())


def union_influential(masks: list) -> tuple:
    """Union of selections across conditions.

    Args:
        masks: :class:`SelectionMask` objects sharing the reaction count.

    Returns:
        (kept, provenance): sorted list of reaction indices selected by at
        least one condition at at least one step, and a map from each kept
        index to the set of condition labels that selected it.
    """
    if not masks:
        raise ReductionError("no selection masks given")
    n_reactions = masks[0].n_reactions
    provenance: dict = {}
    for pos, mask in enumerate(masks):
        if not isinstance(mask, SelectionMask):
            raise ReductionError(f"masks[{pos}] is not a SelectionMask")
        if mask.n_reactions != n_reactions:
            raise ReductionError(
                f"masks[{pos}] has {mask.n_reactions} reactions, expected {n_reactions}"
            )
        label = mask.condition_label or f"condition-{pos}"
        for i in np.where(mask.values.any(axis=1))[0]:
            provenance.setdefault(int(i), set()).add(label)
    kept = sorted(provenance)
    return kept, provenance


def emit_reduced(parent: Mechanism, kept, provenance: dict | None = None) -> ReducedMechanism:
    """Build the reduced mechanism from kept reaction indices.

    Reactions keep their parent order; species not referenced by any kept
    reaction are dropped (parent species order otherwise preserved).
    """
    kept = sorted(set(int(i) for i in kept))
    if not kept:
        raise ReductionError("empty kept set: nothing to emit")
    for i in kept:
        if not 0 <= i < parent.n_reactions:
            raise ReductionError(f"kept index {i} out of range for {parent.n_reactions} reactions")
    reactions = tuple(parent.reactions[i] for i in kept)
    used = set()
    for rxn in reactions:
        used |= rxn.species()
    species = tuple(s for s in parent.species if s in used)
    provenance = {int(i): set(v) for i, v in (provenance or {}).items() if int(i) in set(kept)}
    return ReducedMechanism(
        mechanism=Mechanism(species=species, reactions=reactions),
        kept_reaction_indices=tuple(kept),
        provenance=provenance,
    )


def characteristic_time(traj: Trajectory, species: int) -> float:
    """Earliest time at which a species has traversed half its net change.

    Linear interpolation between samples.  Raises :class:`ReductionError`
    when the species' net change over the trajectory is zero.
    """
    x = traj.X[:, species]
    total = x[-1] - x[0]
    if total == 0:
        raise ReductionError(f"species index {species} has zero net change")
    progress = (x - x[0]) / total  # signed fraction of the net change
    hit = np.where(progress >= 0.5)[0]
    if hit.size == 0:  # pragma: no cover - progress reaches 1 at the last sample
        raise ReductionError("species never traverses half its net change")
    k = int(hit[0])
    if k == 0:
        return float(traj.times[0])
    frac = (0.5 - progress[k - 1]) / (progress[k] - progress[k - 1])
    return float(traj.times[k - 1] + frac * (traj.times[k] - traj.times[k - 1]))


def default_progress_species(mech: Mechanism) -> str:
    """First reactant of the first reaction (typically the fuel)."""
    if mech.n_reactions == 0:
        raise ReductionError("mechanism has no reactions")
    return next(iter(mech.reactions[0].reactants))


@dataclass(frozen=True)
class ConditionComparison:
    label: str
    time_parent: float
    time_reduced: float
    time_deviation: float
    max_concentration_deviation: float


@dataclass(frozen=True)
class ComparisonReport:
    """Full-vs-reduced agreement over a set of conditions."""

    conditions: tuple
    reaction_reduction_pct: float
    species_reduction_pct: float
    progress_species: str

    def max_time_deviation(self) -> float:
        return max(c.time_deviation for c in self.conditions)

    def to_json(self) -> str:
        doc = {
            "progress_species": self.progress_species,
            "reaction_reduction_pct": self.reaction_reduction_pct,
            "species_reduction_pct": self.species_reduction_pct,
            "conditions": [
                {
                    "label": c.label,
                    "characteristic_time_parent": c.time_parent,
                    "characteristic_time_reduced": c.time_reduced,
                    "characteristic_time_deviation": c.time_deviation,
                    "max_concentration_deviation": c.max_concentration_deviation,
                }
                for c in self.conditions
            ],
        }
        return json.dumps(doc, indent=2)

    def to_text(self) -> str:
        lines = [
            f"progress species: {self.progress_species}",
            f"reactions removed: {self.reaction_reduction_pct:.1f}%   "
            f"species removed: {self.species_reduction_pct:.1f}%",
            "",
            f"{'condition':<20} {'tau(full)':>12} {'tau(reduced)':>12} "
            f"{'tau dev':>10} {'max conc dev':>13}",
        ]
        for c in self.conditions:
            lines.append(
                f"{c.label:<20} {c.time_parent:>12.6g} {c.time_reduced:>12.6g} "
                f"{c.time_deviation:>9.2%} {c.max_concentration_deviation:>12.2%}"
            )
        return "\n".join(lines)


def _simulate_pair(args):
    parent, reduced, spec, progress, floor, exact_euler = args
    label = spec.condition.label
    try:
        full = simulate(parent, spec.x0_vector(parent), spec.condition, spec.times, exact_euler=exact_euler)
        small = simulate(reduced, spec.x0_vector(reduced), spec.condition, spec.times, exact_euler=exact_euler)
    except Exception as exc:
        return label, None, f"simulation failed: {exc}"

    try:
        tau_full = characteristic_time(full, parent.species_index()[progress])
        tau_red = characteristic_time(small, reduced.species_index()[progress])
    except ReductionError as exc:
        return label, None, str(exc)

    # concentration deviation over the reduced mechanism's species
    parent_cols = [parent.species_index()[s] for s in reduced.species]
    x_full = full.X[:, parent_cols]
    scale = np.max(x_full, axis=0) + floor
    conc_dev = float(np.max(np.abs(small.X - x_full) / scale[None, :]))
    time_dev = abs(tau_red - tau_full) / abs(tau_full)
    return label, ConditionComparison(label, tau_full, tau_red, time_dev, conc_dev), None


def compare(
    parent: Mechanism,
    reduced: ReducedMechanism | Mechanism,
    runs: list,
    progress_species: str | None = None,
    zero_norm_floor: float = 1e-12,
    exact_euler: bool = False,
    jobs: int = 1,
) -> ComparisonReport:
    """Simulate parent and reduced mechanisms per condition and compare.

    Args:
        runs: :class:`RunSpec` records (condition + initial state + schedule).
        progress_species: species for the characteristic time; defaults to
            the first reactant of the parent's first reaction.

    Raises:
        ComparisonError: when any simulation or characteristic time fails,
            labeled with the offending condition.
    """
    small = reduced.mechanism if isinstance(reduced, ReducedMechanism) else reduced
    missing = set(small.species) - set(parent.species)
    if missing:
        raise ReductionError(f"reduced mechanism has species unknown to the parent: {sorted(missing)}")
    progress = progress_species or default_progress_species(parent)
    if progress not in parent.species_index():
        raise ReductionError(f"progress species {progress!r} not in the parent mechanism")
    if progress not in small.species_index():
        raise ComparisonError(
            f"progress species {progress!r} was dropped from the reduced mechanism"
        )
    if not runs:
        raise ReductionError("no conditions to compare")
    for pos, spec in enumerate(runs):
        if not isinstance(spec, RunSpec):
            raise ReductionError(f"runs[{pos}] is not a RunSpec")

    tasks = [(parent, small, spec, progress, zero_norm_floor, exact_euler) for spec in runs]
    if jobs <= 1:
        outcomes = [_simulate_pair(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_simulate_pair, tasks))

    results = []
    for label, comparison, error in outcomes:
        if error is not None:
            raise ComparisonError(f"condition {label!r}: {error}", label=label)
        results.append(comparison)

    return ComparisonReport(
        conditions=tuple(results),
        reaction_reduction_pct=100.0 * (1.0 - small.n_reactions / parent.n_reactions),
        species_reduction_pct=100.0 * (1.0 - small.n_species / parent.n_species),
        progress_species=progress,
    )
