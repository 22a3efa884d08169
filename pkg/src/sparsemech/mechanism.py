"""Reaction mechanism model: parsing, validation, and derived matrices.

A mechanism is an ordered list of species names plus an ordered list of
irreversible reactions.  Reactions may be flagged reversible in the input
file; :func:`expand_reversible` rewrites each such entry as a consecutive
forward/reverse pair so that downstream code only ever sees irreversible
reactions.  Two integer matrices are derived from a mechanism:

* the net stoichiometric matrix (species x reactions), whose column i is
  products-minus-reactants of reaction i, and
* the reactant-order matrix (reactions x species), whose row i holds the
  reactant coefficients of reaction i.

The on-disk format is a small JSON schema, documented in
:func:`parse_mechanism`.  Unknown fields are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MechanismError",
    "ConstantRate",
    "ArrheniusRate",
    "Reaction",
    "Mechanism",
    "parse_mechanism",
    "load_mechanism",
    "serialize_mechanism",
    "save_mechanism",
    "expand_reversible",
    "stoich_matrix",
    "order_matrix",
    "check_element_balance",
]


class MechanismError(ValueError):
    """Raised for malformed or inconsistent mechanism input.

    The message carries file/field context (e.g. ``reactions[3].reactants.C``)
    where available.
    """


@dataclass(frozen=True)
class ConstantRate:
    """Temperature-independent rate constant."""

    k: float

    def __post_init__(self):
        if not np.isfinite(self.k) or self.k < 0:
            raise MechanismError(f"constant rate must be finite and >= 0, got {self.k}")


@dataclass(frozen=True)
class ArrheniusRate:
    """Modified Arrhenius form A * T**b * exp(-Ea / (R*T)).

    The gas constant R is supplied at evaluation time and must use the same
    energy units as ``Ea``.
    """

    A: float
    b: float
    Ea: float

    def __post_init__(self):
        if not np.isfinite(self.A) or self.A < 0:
            raise MechanismError(f"Arrhenius pre-factor must be finite and >= 0, got {self.A}")
        if not np.isfinite(self.b) or not np.isfinite(self.Ea):
            raise MechanismError("Arrhenius b and Ea must be finite")


def _equation_string(reactants, products):
    def side(terms):
        return " + ".join(
            name if coeff == 1 else f"{coeff} {name}" for name, coeff in terms.items()
        )

    return f"{side(reactants)} -> {side(products)}"


def _check_coeff_map(terms, what, ctx):
    if not isinstance(terms, dict) or not terms:
        raise MechanismError(f"{ctx}: {what} must be a non-empty mapping")
    for name, coeff in terms.items():
        if not isinstance(name, str) or not name:
            raise MechanismError(f"{ctx}.{what}: species names must be non-empty strings")
        # bool is an int subclass; reject it explicitly
        if isinstance(coeff, bool) or not isinstance(coeff, int) or coeff < 1:
            raise MechanismError(
                f"{ctx}.{what}.{name}: coefficient must be a positive integer, got {coeff!r}"
            )


@dataclass(frozen=True)
class Reaction:
    """One (possibly reversible) reaction with integer stoichiometry.

    Args:
        reactants: species name -> positive integer coefficient.
        products: species name -> positive integer coefficient.
        rate: forward rate, constant or Arrhenius.
        reversible: if True, ``k_rev`` gives the reverse rate constant and
            the reaction must be expanded (see :func:`expand_reversible`)
            before simulation or selection.
        k_rev: reverse rate constant, required iff ``reversible``.
        label: display string; defaults to the equation text.
    """

    reactants: dict
    products: dict
    rate: object
    reversible: bool = False
    k_rev: float | None = None
    label: str = ""

    def __post_init__(self):
        ctx = self.label or _equation_string(self.reactants, self.products)
        _check_coeff_map(self.reactants, "reactants", ctx)
        _check_coeff_map(self.products, "products", ctx)
        if not isinstance(self.rate, (ConstantRate, ArrheniusRate)):
            raise MechanismError(f"{ctx}: rate must be ConstantRate or ArrheniusRate")
        if self.reversible:
            if self.k_rev is None:
                raise MechanismError(f"{ctx}: reversible reaction missing reverse rate k_rev")
            if not np.isfinite(self.k_rev) or self.k_rev < 0:
                raise MechanismError(f"{ctx}: k_rev must be finite and >= 0, got {self.k_rev}")
        elif self.k_rev is not None:
            raise MechanismError(f"{ctx}: k_rev given but reaction is not reversible")
        if not self.label:
            object.__setattr__(self, "label", _equation_string(self.reactants, self.products))
        if not self._changes_something():
            raise MechanismError(f"{ctx}: reaction does not change any species")

    def _changes_something(self):
        names = set(self.reactants) | set(self.products)
        return any(self.products.get(s, 0) != self.reactants.get(s, 0) for s in names)

    def species(self):
        """All species names referenced by this reaction."""
        return set(self.reactants) | set(self.products)


@dataclass(frozen=True)
class Mechanism:
    """Validated reaction mechanism.

    ``species`` order defines the row order of the stoichiometric matrix and
    the column order of concentration vectors; ``reactions`` order is the
    canonical reaction index used everywhere downstream.
    """

    species: tuple
    reactions: tuple

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if not self.species:
            raise MechanismError("species list is empty")
        seen = set()
        for name in self.species:
            if not isinstance(name, str) or not name:
                raise MechanismError("species names must be non-empty strings")
            if name in seen:
                raise MechanismError(f"duplicate species name {name!r}")
            seen.add(name)
        for idx, rxn in enumerate(self.reactions):
            unknown = rxn.species() - seen
            if unknown:
                raise MechanismError(
                    f"reactions[{idx}]: unknown species {sorted(unknown)} "
                    "not in the species list"
                )

    @property
    def n_species(self):
        return len(self.species)

    @property
    def n_reactions(self):
        return len(self.reactions)

    def species_index(self):
        """Map species name -> row index."""
        return {name: j for j, name in enumerate(self.species)}

    def labels(self):
        return [r.label for r in self.reactions]

    def has_reversible(self):
        return any(r.reversible for r in self.reactions)


_REACTION_KEYS = {"reactants", "products", "rate", "reversible", "k_rev", "label"}
_TOP_KEYS = {"species", "reactions", "provenance"}


def _parse_rate(obj, ctx):
    if not isinstance(obj, dict):
        raise MechanismError(f"{ctx}.rate: must be an object")
    keys = set(obj)
    if keys == {"k"}:
        if not isinstance(obj["k"], (int, float)) or isinstance(obj["k"], bool):
            raise MechanismError(f"{ctx}.rate.k: must be a number")
        if obj["k"] < 0:
            raise MechanismError(f"{ctx}.rate.k: negative rate constant {obj['k']}")
        return ConstantRate(float(obj["k"]))
    if keys == {"A", "b", "Ea"}:
        for key in ("A", "b", "Ea"):
            if not isinstance(obj[key], (int, float)) or isinstance(obj[key], bool):
                raise MechanismError(f"{ctx}.rate.{key}: must be a number")
        if obj["A"] < 0:
            raise MechanismError(f"{ctx}.rate.A: negative pre-factor {obj['A']}")
        return ArrheniusRate(float(obj["A"]), float(obj["b"]), float(obj["Ea"]))
    raise MechanismError(
        f'{ctx}.rate: expected either {{"k": ...}} or {{"A": ..., "b": ..., "Ea": ...}}, '
        f"got keys {sorted(keys)}"
    )


def parse_mechanism(text: str) -> Mechanism:
    """Parse mechanism JSON into a validated :class:`Mechanism`.

    Schema (UTF-8, fields beyond the schema rejected)::

        {
          "species": ["A", "B", ...],
          "reactions": [
            {
              "reactants": {"A": 1, ...},     # positive integer coefficients
              "products":  {"B": 1, ...},
              "rate": {"k": 1.0} | {"A": ..., "b": ..., "Ea": ...},
              "reversible": false,            # optional, default false
              "k_rev": 2.0,                   # required iff reversible
              "label": "A -> B"               # optional display string
            }, ...
          ],
          "provenance": {...}                 # optional, ignored on load
        }

    Reaction order in the file is preserved as the canonical index order.
    Raises :class:`MechanismError` with line/field context on any violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MechanismError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise MechanismError("top level must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise MechanismError(f"unknown top-level fields {sorted(extra)}")
    for key in ("species", "reactions"):
        if key not in doc:
            raise MechanismError(f"missing top-level field {key!r}")
    if not isinstance(doc["species"], list):
        raise MechanismError("species: must be an array of strings")
    if not isinstance(doc["reactions"], list):
        raise MechanismError("reactions: must be an array of objects")

    species = []
    for j, name in enumerate(doc["species"]):
        if not isinstance(name, str) or not name:
            raise MechanismError(f"species[{j}]: must be a non-empty string")
        species.append(name)

    known = set(species)
    if len(known) != len(species):
        dupes = sorted({s for s in species if species.count(s) > 1})
        raise MechanismError(f"duplicate species name(s) {dupes}")

    reactions = []
    for i, obj in enumerate(doc["reactions"]):
        ctx = f"reactions[{i}]"
        if not isinstance(obj, dict):
            raise MechanismError(f"{ctx}: must be an object")
        extra = set(obj) - _REACTION_KEYS
        if extra:
            raise MechanismError(f"{ctx}: unknown fields {sorted(extra)}")
        for key in ("reactants", "products", "rate"):
            if key not in obj:
                raise MechanismError(f"{ctx}: missing field {key!r}")
        _check_coeff_map(obj["reactants"], "reactants", ctx)
        _check_coeff_map(obj["products"], "products", ctx)
        for which in ("reactants", "products"):
            unknown = set(obj[which]) - known
            if unknown:
                raise MechanismError(
                    f"{ctx}.{which}: unknown species {sorted(unknown)} not in the species list"
                )
        reversible = obj.get("reversible", False)
        if not isinstance(reversible, bool):
            raise MechanismError(f"{ctx}.reversible: must be a boolean")
        k_rev = obj.get("k_rev")
        if reversible and k_rev is None:
            raise MechanismError(f"{ctx}: reversible reaction missing reverse rate k_rev")
        if not reversible and k_rev is not None:
            raise MechanismError(f"{ctx}: k_rev given but reaction is not reversible")
        if k_rev is not None:
            if not isinstance(k_rev, (int, float)) or isinstance(k_rev, bool):
                raise MechanismError(f"{ctx}.k_rev: must be a number")
            if k_rev < 0:
                raise MechanismError(f"{ctx}.k_rev: negative rate constant {k_rev}")
            k_rev = float(k_rev)
        label = obj.get("label", "")
        if not isinstance(label, str):
            raise MechanismError(f"{ctx}.label: must be a string")
        try:
            rxn = Reaction(
                reactants=dict(obj["reactants"]),
                products=dict(obj["products"]),
                rate=_parse_rate(obj["rate"], ctx),
                reversible=reversible,
                k_rev=k_rev,
                label=label,
            )
        except MechanismError as exc:
            raise MechanismError(f"{ctx}: {exc}") from None
        reactions.append(rxn)

    return Mechanism(species=tuple(species), reactions=tuple(reactions))


def load_mechanism(path) -> Mechanism:
    """Read and parse a mechanism JSON file."""
    with open(path, encoding="utf-8") as fh:
        return parse_mechanism(fh.read())


def _rate_to_obj(rate):
    if isinstance(rate, ConstantRate):
        return {"k": rate.k}
    return {"A": rate.A, "b": rate.b, "Ea": rate.Ea}


def serialize_mechanism(mech: Mechanism, provenance: dict | None = None) -> str:
    """Serialize a mechanism back to schema JSON.

    Round-trips: ``parse_mechanism(serialize_mechanism(m)) == m``.  An
    optional ``provenance`` object is written verbatim under the top-level
    ``provenance`` key (used by reduced mechanisms).
    """
    reactions = []
    for rxn in mech.reactions:
        obj = {
            "reactants": dict(rxn.reactants),
            "products": dict(rxn.products),
            "rate": _rate_to_obj(rxn.rate),
        }
        if rxn.reversible:
            obj["reversible"] = True
            obj["k_rev"] = rxn.k_rev
        obj["label"] = rxn.label
        reactions.append(obj)
    doc = {"species": list(mech.species), "reactions": reactions}
    if provenance is not None:
        doc["provenance"] = provenance
    return json.dumps(doc, indent=2)


def save_mechanism(mech: Mechanism, path, provenance: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_mechanism(mech, provenance))
        fh.write("\n")


def expand_reversible(mech: Mechanism) -> Mechanism:
    """Replace each reversible reaction by a forward/reverse pair.

    The pair is consecutive (forward first) and file order is otherwise
    preserved, so with 1-based display numbering the first reversible entry
    becomes reactions 1 and 2.  Mechanisms without reversible entries are
    returned unchanged.
    """
    if not mech.has_reversible():
        return mech
    out = []
    for rxn in mech.reactions:
        if not rxn.reversible:
            out.append(rxn)
            continue
        out.append(
            Reaction(
                reactants=dict(rxn.reactants),
                products=dict(rxn.products),
                rate=rxn.rate,
                label=rxn.label,
            )
        )
        out.append(
            Reaction(
                reactants=dict(rxn.products),
                products=dict(rxn.reactants),
                rate=ConstantRate(rxn.k_rev),
                label=f"{rxn.label} (reverse)",
            )
        )
    return Mechanism(species=mech.species, reactions=tuple(out))


def _require_irreversible(mech: Mechanism):
    if mech.has_reversible():
        raise MechanismError(
            "mechanism still contains reversible reactions; call expand_reversible first"
        )


def stoich_matrix(mech: Mechanism) -> np.ndarray:
    """Net stoichiometric matrix, shape (n_species, n_reactions), int64.

    Entry (j, i) is the products coefficient minus the reactants coefficient
    of species j in reaction i.  The returned array is read-only.
    """
    _require_irreversible(mech)
    index = mech.species_index()
    mat = np.zeros((mech.n_species, mech.n_reactions), dtype=np.int64)
    for i, rxn in enumerate(mech.reactions):
        for name, coeff in rxn.reactants.items():
            mat[index[name], i] -= coeff
        for name, coeff in rxn.products.items():
            mat[index[name], i] += coeff
    # Reaction.__post_init__ forbids no-op reactions, so no all-zero column
    assert not np.any(np.all(mat == 0, axis=0))
    mat.flags.writeable = False
    return mat


def order_matrix(mech: Mechanism) -> np.ndarray:
    """Reactant-order matrix, shape (n_reactions, n_species), int64.

    Entry (i, j) is the reactant coefficient of species j in reaction i,
    zero elsewhere.  The returned array is read-only.
    """
    _require_irreversible(mech)
    index = mech.species_index()
    mat = np.zeros((mech.n_reactions, mech.n_species), dtype=np.int64)
    for i, rxn in enumerate(mech.reactions):
        for name, coeff in rxn.reactants.items():
            mat[i, index[name]] = coeff
    mat.flags.writeable = False
    return mat


def check_element_balance(mech: Mechanism, composition: dict) -> list:
    """Optional element-balance check (off by default in the CLI).

    Args:
        composition: species name -> {element: count}.  Every species in the
            mechanism must appear.

    Returns:
        A list of human-readable warnings, one per unbalanced reaction and
        element.  An empty list means all reactions balance.
    """
    missing = [s for s in mech.species if s not in composition]
    if missing:
        raise MechanismError(f"composition table missing species {missing}")
    warnings = []
    for i, rxn in enumerate(mech.reactions):
        totals = {}
        for name, coeff in rxn.reactants.items():
            for elem, n in composition[name].items():
                totals[elem] = totals.get(elem, 0) - coeff * n
        for name, coeff in rxn.products.items():
            for elem, n in composition[name].items():
                totals[elem] = totals.get(elem, 0) + coeff * n
        for elem in sorted(totals):
            if totals[elem] != 0:
                warnings.append(
                    f"reactions[{i}] ({rxn.label}): element {elem} unbalanced "
                    f"by {totals[elem]:+d}"
                )
    return warnings
