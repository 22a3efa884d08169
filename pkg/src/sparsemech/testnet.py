"""Seeded random mass-action networks for property testing and demos."""

from __future__ import annotations

import numpy as np

from .mechanism import ConstantRate, Mechanism, Reaction

__all__ = ["random_network", "random_x0"]


def random_network(seed: int, n_species: int = 4, n_reactions: int = 6) -> Mechanism:
    """Generate a valid random irreversible mechanism.

    Every reaction has one or two reactant slots and one or two product
    slots (coefficients 1 or 2 via repeated species) and is guaranteed to
    change at least one species.  Rate constants are log-uniform in
    [0.1, 10).  Deterministic for a fixed seed.
    """
    if n_species < 2 or n_reactions < 1:
        raise ValueError("need at least 2 species and 1 reaction")
    rng = np.random.default_rng(seed)
    species = tuple(f"S{j + 1}" for j in range(n_species))
    reactions = []
    while len(reactions) < n_reactions:
        n_reac = int(rng.integers(1, 3))
        n_prod = int(rng.integers(1, 3))
        reac_names = rng.choice(n_species, size=n_reac, replace=True)
        prod_names = rng.choice(n_species, size=n_prod, replace=True)
        reactants: dict = {}
        for j in reac_names:
            reactants[species[j]] = reactants.get(species[j], 0) + 1
        products: dict = {}
        for j in prod_names:
            products[species[j]] = products.get(species[j], 0) + 1
        changed = set(reactants) | set(products)
        if all(reactants.get(s, 0) == products.get(s, 0) for s in changed):
            continue  # no net change; redraw
        k = float(10.0 ** rng.uniform(-1, 1))
        reactions.append(Reaction(reactants=reactants, products=products, rate=ConstantRate(k)))
    return Mechanism(species=species, reactions=tuple(reactions))


def random_x0(seed: int, n_species: int) -> np.ndarray:
    """Strictly positive random initial concentrations in [0.5, 1.5)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.5, 1.5, n_species)
