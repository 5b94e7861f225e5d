"""Command-line interface: reproducible simulation and analysis runs.

Every command writes flat CSV/JSON artifacts into --out together with a
config.txt carrying the fully resolved parameters, so any run can be
re-executed bit-identically from its own output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .continuation import phase_diagram
from .cycles import basin_sample, classify_attractor, detect_cycle
from .dynamics import (SEED_KINDS, Trajectory, initial_state, integrate_adaptive,
                       integrate_rk4, read_trajectory_csv)
from .lattice import (ModelParams, build_unit_cell, dump_config, load_config,
                      preset, resolve_v_diag)
from .steady import census


class CliError(RuntimeError):
    pass


def add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--config", type=Path, help="key=value parameter file")
    g.add_argument("--preset", choices=["paper-default"],
                   help="named parameter set (overridable by the flags below)")
    g.add_argument("--omega", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--v-intra", type=float)
    g.add_argument("--v-inter", type=float)
    g.add_argument("--v-diag", help="number or 'geometric'")
    g.add_argument("--v-nnn", help="number or 'auto' for V/64")
    g.add_argument("--r-high-order", type=float)
    g.add_argument("--diag-multiplicity", type=int, choices=(1, 2))
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)


def add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--rng", type=int, default=0, help="random seed")
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for compatibility; runs are deterministic")


def resolve_model(args) -> tuple:
    """Merge config file, preset and flag overrides into (params, rows, cols)."""
    rows, cols = 2, 2
    fields = {}
    if args.config:
        params, rows, cols = load_config(args.config)
        fields = params.as_dict()
    elif args.preset:
        fields = preset(args.preset).as_dict()
    else:
        fields = ModelParams().as_dict()
    for key in ("omega", "delta", "gamma", "v_intra", "v_inter",
                "r_high_order", "diag_multiplicity"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if args.rows is not None:
        rows = args.rows
    if args.cols is not None:
        cols = args.cols
    if args.v_nnn is not None:
        fields["v_nnn"] = (fields["v_intra"] / 64.0 if args.v_nnn == "auto"
                           else float(args.v_nnn))
    if args.v_diag is not None:
        fields["v_diag"] = resolve_v_diag(args.v_diag, fields["v_intra"],
                                          fields.get("v_inter", 0.0))
    try:
        return ModelParams(**fields), rows, cols
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def prepare_out(args, params, rows, cols) -> Path:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    echo = dump_config(params, rows, cols)
    (out / "config.txt").write_text(echo, encoding="utf-8")
    return out


def write_json(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("rydchain_version", __version__)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def cmd_simulate(args) -> int:
    params, rows, cols = resolve_model(args)
    cell = build_unit_cell(rows, cols, params)
    out = prepare_out(args, params, rows, cols)
    state0 = initial_state(args.seed_kind, cell, rng=args.rng)
    if args.adaptive:
        traj = integrate_adaptive(state0, cell, params, args.t_max, tol=args.tol)
    else:
        traj = integrate_rk4(state0, cell, params, args.t_max, dt=args.dt,
                             record_stride=args.record_stride)
    echo = dump_config(params, rows, cols) + f"seed_kind = {args.seed_kind}\nrng = {args.rng}\n"
    traj.to_csv(out / "trajectory.csv", config_echo=echo)
    print(f"wrote {out / 'trajectory.csv'} ({len(traj.times)} samples)")
    return 0


def cmd_fixed_points(args) -> int:
    params, rows, cols = resolve_model(args)
    cell = build_unit_cell(rows, cols, params)
    out = prepare_out(args, params, rows, cols)
    cen = census(cell, params, n_seeds=args.n_seeds, rng_seed=args.rng)
    payload = cen.to_dict(cell, params)
    payload["rng_seed"] = args.rng
    payload["n_seeds"] = args.n_seeds
    write_json(out / "census.json", payload)
    counts = cen.counts()
    summary = ", ".join(f"{k}:{v['total']}({v['stable']} stable)"
                        for k, v in counts.items() if v["total"])
    print(f"wrote {out / 'census.json'}: {summary}")
    return 0


def cmd_phase_diagram(args) -> int:
    params, rows, cols = resolve_model(args)
    out = prepare_out(args, params, rows, cols)
    grid = np.arange(args.v_min, args.v_max + 1e-12, args.v_step)
    points, events = phase_diagram(grid, params, rows, cols,
                                   census_seeds=args.n_seeds, rng_seed=args.rng,
                                   with_events=not args.no_events)
    rows_out = [p.to_row() for p in points]
    header = list(rows_out[0].keys())
    with open(out / "phase_diagram.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows_out:
            fh.write(",".join(str(row[h]) for h in header) + "\n")
    write_json(out / "events.json", {
        "params": params.as_dict(),
        "events": [e.to_dict() for e in events],
    })
    n_flagged = sum(p.flagged for p in points)
    print(f"wrote {out / 'phase_diagram.csv'} ({len(points)} points, "
          f"{n_flagged} flagged) and {out / 'events.json'} ({len(events)} events)")
    return 1 if n_flagged else 0


def cmd_basins(args) -> int:
    params, rows, cols = resolve_model(args)
    cell = build_unit_cell(rows, cols, params)
    out = prepare_out(args, params, rows, cols)
    sample = basin_sample(cell, params, args.n_samples, rng_seed=args.rng,
                          t_max=args.t_max)
    write_json(out / "basins.json", sample.to_dict(cell, params))
    print(f"wrote {out / 'basins.json'}: " + ", ".join(
        f"{k}={v:.2f}" for k, v in sample.fractions.items()))
    unclassified = sum(c.startswith("unclassified") for c in sample.classes)
    return 1 if unclassified else 0


def cmd_cycle_classify(args) -> int:
    params, rows, cols = resolve_model(args)
    cell = build_unit_cell(rows, cols, params)
    out = prepare_out(args, params, rows, cols)
    if args.traj:
        times, columns, _ = read_trajectory_csv(args.traj)
        m = cell.n_sites
        states = np.empty((times.size, 3 * m))
        for i, lab in enumerate(cell.labels):
            for block, comp in enumerate(("n", "x", "y")):
                key = f"{lab}:{comp}"
                if key not in columns:
                    raise CliError(f"trajectory {args.traj} lacks column {key}")
                states[:, block * m + i] = columns[key]
        traj = Trajectory(times, states, cell, params, {"source": str(args.traj)})
        desc = detect_cycle(traj, args.t_transient)
        label = desc.label
    else:
        state0 = initial_state(args.seed_kind, cell, rng=args.rng)
        label, desc = classify_attractor(state0, cell, params,
                                         t_transient=args.t_transient)
    payload = desc.to_dict(cell)
    payload["attractor"] = label
    payload["params"] = params.as_dict()
    payload["seed_kind"] = None if args.traj else args.seed_kind
    payload["rng_seed"] = args.rng
    write_json(out / "cycle.json", payload)
    print(f"wrote {out / 'cycle.json'}: class={label}")
    return 1 if desc.label == "unclassified" else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rydchain",
        description="Mean-field dynamics of coupled driven-dissipative Rydberg chains")
    ap.add_argument("--version", action="version", version=f"rydchain {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one trajectory to CSV")
    add_model_args(p)
    add_common_args(p)
    p.add_argument("--seed-kind", choices=SEED_KINDS, default="af2")
    p.add_argument("--t-max", type=float, default=200.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--record-stride", type=int, default=None)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--tol", type=float, default=1e-8, help="adaptive local error")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fixed-points", help="multistart Newton census to JSON")
    add_model_args(p)
    add_common_args(p)
    p.add_argument("--n-seeds", type=int, default=200)
    p.set_defaults(func=cmd_fixed_points)

    p = sub.add_parser("phase-diagram", help="sweep v_inter, label phases, locate events")
    add_model_args(p)
    add_common_args(p)
    p.add_argument("--v-min", type=float, default=0.05)
    p.add_argument("--v-max", type=float, default=5.0)
    p.add_argument("--v-step", type=float, default=0.05)
    p.add_argument("--n-seeds", type=int, default=120)
    p.add_argument("--no-events", action="store_true")
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("basins", help="attractor fractions from random seeds")
    add_model_args(p)
    add_common_args(p)
    p.add_argument("--n-samples", type=int, default=50)
    p.add_argument("--t-max", type=float, default=450.0)
    p.set_defaults(func=cmd_basins)

    p = sub.add_parser("cycle-classify", help="classify a trajectory or a fresh run")
    add_model_args(p)
    add_common_args(p)
    p.add_argument("--traj", type=Path, help="trajectory CSV to analyze")
    p.add_argument("--seed-kind", choices=SEED_KINDS, default="af2")
    p.add_argument("--t-transient", type=float, default=300.0)
    p.set_defaults(func=cmd_cycle_classify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
