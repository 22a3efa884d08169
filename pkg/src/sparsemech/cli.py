"""Command-line front end.

Subcommands: ``simulate``, ``select``, ``reduce``, ``compare``,
``gen-testnet``.  Files are the machine interface (CSV/JSON as documented
in the library modules); stdout carries human-readable summaries.

Exit codes: 0 success, 2 validation failure, 3 integration failure,
4 infeasible selection chunk (a suggested minimal epsilon is printed),
5 comparison simulation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .kinetics import (
    Condition,
    IntegrationError,
    TrajectoryError,
    load_conditions,
    load_trajectory,
    parse_schedule,
    save_trajectory,
    simulate,
)
from .mechanism import (
    MechanismError,
    check_element_balance,
    expand_reversible,
    load_mechanism,
    save_mechanism,
    stoich_matrix,
)
from .reduction import (
    ComparisonError,
    ReductionError,
    compare,
    emit_reduced,
    union_influential,
)
from .selection import (
    InfeasibleChunkError,
    SelectionConfig,
    SelectionMask,
    aggregate_relevance,
    chunk_ranges,
    minimal_feasible_epsilon,
    read_mask_csv,
    run_selection,
    threshold,
    write_mask_csv,
    write_relevance_csv,
    write_weights_csv,
)
from .testnet import random_network, random_x0

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INTEGRATION = 3
EXIT_INFEASIBLE = 4
EXIT_COMPARISON = 5


def _load_expanded(path):
    return expand_reversible(load_mechanism(path))


def _parse_x0(text, mech):
    x0 = np.zeros(mech.n_species)
    index = mech.species_index()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise TrajectoryError(f"bad --x0 entry {item!r}; expected NAME=VALUE")
        name, _, value = item.partition("=")
        name = name.strip()
        if name not in index:
            raise TrajectoryError(f"--x0 names unknown species {name!r}")
        try:
            x0[index[name]] = float(value)
        except ValueError:
            raise TrajectoryError(f"bad --x0 value for {name!r}: {value!r}") from None
    if np.any(x0 < 0):
        raise TrajectoryError("--x0 values must be >= 0")
    return x0


def _maybe_check_balance(args, mech):
    if getattr(args, "check_balance", None):
        with open(args.check_balance, encoding="utf-8") as fh:
            composition = json.load(fh)
        for line in check_element_balance(mech, composition):
            print(f"warning: {line}")


def _out_dir(args):
    out = Path(getattr(args, "out_dir", ".") or ".")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(args):
    mech = _load_expanded(args.mechanism)
    _maybe_check_balance(args, mech)
    out = _out_dir(args)

    if args.conditions:
        specs = load_conditions(args.conditions)
        runs = [(spec.condition, spec.x0_vector(mech), spec.times) for spec in specs]
    else:
        if args.x0 is None:
            raise TrajectoryError("either --x0 or --conditions is required")
        condition = Condition(
            temperature=args.temperature, pressure=args.pressure, phi=args.phi, label=args.label
        )
        runs = [(condition, _parse_x0(args.x0, mech), parse_schedule(args.schedule))]

    for condition, x0, times in runs:
        traj = simulate(mech, x0, condition, times, exact_euler=args.exact_euler)
        conc_path = out / f"{condition.label}_trajectory.csv"
        rates_path = out / f"{condition.label}_rates.csv"
        save_trajectory(traj, mech, conc_path, rates_path)
        print(
            f"{condition.label}: {mech.n_species} species, {mech.n_reactions} reactions, "
            f"{traj.n_samples} samples, {len(traj.clamp_events)} clamps -> {conc_path}"
        )
    return EXIT_OK


def cmd_select(args):
    mech = _load_expanded(args.mechanism)
    _maybe_check_balance(args, mech)
    out = _out_dir(args)
    condition = Condition(temperature=args.temperature, label=args.label or Path(args.trajectory).stem)
    traj = load_trajectory(args.trajectory, mech, rates_path=args.rates, condition=condition)
    config = SelectionConfig(
        epsilon=args.epsilon,
        beta=args.beta,
        horizon=args.horizon,
        alpha=args.alpha,
        mode=args.mode,
    )

    try:
        weights = run_selection(traj, mech, config, jobs=args.jobs)
    except InfeasibleChunkError as exc:
        suggestion = minimal_feasible_epsilon(
            traj, stoich_matrix(mech).astype(float), config, exc.steps
        )
        print(f"error: {exc}", file=sys.stderr)
        if suggestion is not None:
            print(
                f"hint: the chunk becomes feasible at epsilon >= {suggestion:.6g} "
                f"(current epsilon {config.epsilon:g})",
                file=sys.stderr,
            )
        else:
            print("hint: no epsilon makes this chunk feasible; check the data", file=sys.stderr)
        return EXIT_INFEASIBLE

    mask = threshold(weights)
    relevance = aggregate_relevance(weights)
    labels = mech.labels()
    write_weights_csv(out / "weights.csv", weights, traj.times, labels)
    write_mask_csv(out / "mask.csv", mask, traj.times, labels)
    write_relevance_csv(out / "relevance.csv", relevance, labels)

    for index, steps in enumerate(chunk_ranges(traj.n_steps, config.horizon)):
        objective = float(weights.values[:, steps.start : steps.stop].sum())
        print(f"chunk {index} steps [{steps[0]}, {steps[-1]}] objective {objective:.6g}")
    selected = int(np.count_nonzero(mask.values.any(axis=1)))
    print(
        f"selected {selected} of {mech.n_reactions} reactions at some step "
        f"(mode={config.mode}, epsilon={config.epsilon:g}, beta={config.beta:g}, "
        f"horizon={config.horizon}, alpha={config.alpha:g})"
    )
    return EXIT_OK


def cmd_reduce(args):
    mech = _load_expanded(args.mechanism)
    if args.labels and len(args.labels) != len(args.masks):
        raise ReductionError("--labels must match the number of mask files")
    masks = []
    for pos, path in enumerate(args.masks):
        labels, values = read_mask_csv(path)
        if len(labels) != mech.n_reactions:
            raise ReductionError(
                f"{path}: {len(labels)} reaction columns, mechanism has {mech.n_reactions}"
            )
        label = args.labels[pos] if args.labels else Path(path).stem
        masks.append(SelectionMask(values=values, condition_label=label))
    kept, provenance = union_influential(masks)
    reduced = emit_reduced(mech, kept, provenance)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(reduced.serialize())
        fh.write("\n")
    print(
        f"kept {len(kept)} of {mech.n_reactions} reactions, "
        f"{reduced.mechanism.n_species} of {mech.n_species} species -> {args.out}"
    )
    return EXIT_OK


def cmd_compare(args):
    parent = _load_expanded(args.mechanism)
    reduced = _load_expanded(args.reduced)
    runs = load_conditions(args.conditions)
    report = compare(
        parent,
        reduced,
        runs,
        progress_species=args.progress_species,
        exact_euler=args.exact_euler,
        jobs=args.jobs,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")
    print(report.to_text())
    return EXIT_OK


def cmd_gen_testnet(args):
    out = _out_dir(args)
    mech = random_network(args.seed, n_species=args.species, n_reactions=args.reactions)
    x0 = random_x0(args.seed, mech.n_species)
    mech_path = out / "testnet_mechanism.json"
    save_mechanism(mech, mech_path)
    conditions = [
        {
            "label": f"testnet-{args.seed}",
            "T": None,
            "P": None,
            "phi": None,
            "X0": {name: float(v) for name, v in zip(mech.species, x0)},
            "schedule": f"uniform:0:{args.t_end}:{args.samples}",
        }
    ]
    cond_path = out / "testnet_conditions.json"
    with open(cond_path, "w", encoding="utf-8") as fh:
        json.dump(conditions, fh, indent=2)
        fh.write("\n")
    print(
        f"seed {args.seed}: {mech.n_species} species, {mech.n_reactions} reactions "
        f"-> {mech_path}, {cond_path}"
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsemech",
        description="Influential-reaction selection and mechanism reduction from trajectory data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a mechanism and write trajectory CSVs")
    sim.add_argument("--mechanism", required=True)
    sim.add_argument("--x0", help='initial concentrations, e.g. "A=1,B=0"')
    sim.add_argument("--conditions", help="conditions JSON file (overrides --x0/--schedule)")
    sim.add_argument("--schedule", default="uniform:0:1:101", help="uniform:t0:t1:n or geom:t0:t1:n")
    sim.add_argument("--temperature", type=float)
    sim.add_argument("--pressure", type=float)
    sim.add_argument("--phi", type=float)
    sim.add_argument("--label", default="run")
    sim.add_argument("--exact-euler", action="store_true", help="one Euler step per sample interval")
    sim.add_argument("--check-balance", help="element composition JSON; warn on imbalance")
    sim.add_argument("--out-dir", default=".")
    sim.set_defaults(func=cmd_simulate)

    sel = sub.add_parser("select", help="solve the per-chunk selection problems")
    sel.add_argument("--mechanism", required=True)
    sel.add_argument("--trajectory", required=True)
    sel.add_argument("--rates", help="rates CSV; recomputed from concentrations when omitted")
    sel.add_argument("--epsilon", type=float, default=0.21)
    sel.add_argument("--beta", type=float, default=3.0)
    sel.add_argument("--horizon", type=int, default=5)
    sel.add_argument("--alpha", type=float, default=0.0)
    sel.add_argument("--mode", choices=["exact", "relaxed"], default="relaxed")
    sel.add_argument("--temperature", type=float, help="for Arrhenius rates when recomputing")
    sel.add_argument("--label", help="condition label (default: trajectory file stem)")
    sel.add_argument("--jobs", type=int, default=1)
    sel.add_argument("--check-balance")
    sel.add_argument("--out-dir", default=".")
    sel.set_defaults(func=cmd_select)

    red = sub.add_parser("reduce", help="union selection masks into a reduced mechanism")
    red.add_argument("--mechanism", required=True)
    red.add_argument("--masks", nargs="+", required=True)
    red.add_argument("--labels", nargs="*", help="condition labels (default: mask file stems)")
    red.add_argument("--out", required=True)
    red.set_defaults(func=cmd_reduce)

    cmp_ = sub.add_parser("compare", help="simulate parent vs reduced and report deviations")
    cmp_.add_argument("--mechanism", required=True)
    cmp_.add_argument("--reduced", required=True)
    cmp_.add_argument("--conditions", required=True)
    cmp_.add_argument("--progress-species")
    cmp_.add_argument("--exact-euler", action="store_true")
    cmp_.add_argument("--jobs", type=int, default=1)
    cmp_.add_argument("--out", help="write the report JSON here")
    cmp_.set_defaults(func=cmd_compare)

    gen = sub.add_parser("gen-testnet", help="write a seeded random mass-action network")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--species", type=int, default=4)
    gen.add_argument("--reactions", type=int, default=6)
    gen.add_argument("--t-end", type=float, default=0.5)
    gen.add_argument("--samples", type=int, default=21)
    gen.add_argument("--out-dir", default=".")
    gen.set_defaults(func=cmd_gen_testnet)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except InfeasibleChunkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ComparisonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPARISON
    except (MechanismError, TrajectoryError, ReductionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
