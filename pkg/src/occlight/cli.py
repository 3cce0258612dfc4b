"""Command-line front end: run, compare, sweep-grid, dump-kernel, dump-attenuation."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import ConfigError, RunConfig, default_office_path, load
from .lighting import write_attenuation_csv

log = logging.getLogger("occlight")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="scenario JSON (default: shipped office)")
    common.add_argument("--seed", type=int, default=0, help="base seed (64-bit unsigned)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--th-c", type=float, default=None, help="override the candidate threshold")

    p = argparse.ArgumentParser(prog="occlight", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="simulate one controller")
    run.add_argument("--controller", type=_names, default=None, help="controller (default: from config)")
    run.add_argument("--dump-posterior", action="store_true", help="write the per-step likelihood field")

    cmp_ = sub.add_parser("compare", parents=[common], help="all controllers on identical seeds")
    cmp_.add_argument("--controller", type=_names, default=harness.COMPARE_CONTROLLERS)
    cmp_.add_argument("--runs", type=int, default=1, help="seeds seed .. seed+runs-1")

    sw = sub.add_parser("sweep-grid", parents=[common], help="localization error vs. cell size")
    sw.add_argument("--cell-sizes", type=_floats, default=(0.3, 0.6, 0.9))
    sw.add_argument("--runs", type=int, default=10)
    sw.add_argument("--jobs", type=int, default=1, help="worker processes")

    sub.add_parser("dump-kernel", parents=[common], help="write the transition kernel and state table")
    sub.add_parser("dump-attenuation", parents=[common], help="write one attenuation CSV per luminaire")
    return p


def _run_config(args) -> RunConfig:
    return RunConfig(
        config=args.config or default_office_path(),
        seed=args.seed,
        out=args.out,
        controllers=tuple(getattr(args, "controller", None) or ()),
        cell_sizes=getattr(args, "cell_sizes", RunConfig.cell_sizes),
        runs=getattr(args, "runs", RunConfig.runs),
        th_c=args.th_c,
        dump_posterior=getattr(args, "dump_posterior", False),
    )


def _scenario(rc: RunConfig):
    sc = load(rc.config)
    if rc.th_c is not None:
        if not 0 <= rc.th_c < 1:
            raise ConfigError(f"--th-c: must lie in [0, 1), got {rc.th_c}")
        sc = replace(sc, th_c=rc.th_c)
    return sc


def cmd_run(rc: RunConfig) -> int:
    sc = _scenario(rc)
    if len(rc.controllers) > 1:
        raise ConfigError("run takes a single --controller; use compare for several")
    ctrl = rc.controllers[0] if rc.controllers else sc.controller
    rc.out.mkdir(parents=True, exist_ok=True)
    sink, post_fh = None, None
    if rc.dump_posterior:
        if not ctrl.startswith("proposed"):
            raise ConfigError(f"--dump-posterior needs a proposed controller, not {ctrl!r}")
        post_fh = open(rc.out / f"posterior_{ctrl}.csv", "w", newline="")
        post_fh.write(f"# seed: {rc.seed}\n")
        w = csv.writer(post_fh, lineterminator="\n")
        w.writerow(["t", "state", "value"])

        def sink(t, values):
            for i in values.nonzero()[0]:
                w.writerow([t, int(i), repr(float(values[i]))])

    try:
        records = harness.run_scenario(sc, rc.seed, controller=ctrl, posterior_sink=sink)
    finally:
        if post_fh is not None:
            post_fh.close()
    with open(rc.out / f"trace_{ctrl}.csv", "w", newline="") as fh:
        harness.write_trace_csv(fh, records, rc.seed, ctrl)
    with open(rc.out / f"commands_{ctrl}.csv", "w", newline="") as fh:
        harness.write_commands_csv(fh, records, rc.seed)
    summary = harness.compute_metrics({ctrl: records})
    with open(rc.out / f"metrics_{ctrl}.csv", "w", newline="") as fh:
        harness.write_metrics_csv(fh, summary, rc.seed)
    print(summary.to_text())
    return 0


def cmd_compare(rc: RunConfig, runs: int) -> int:
    sc = _scenario(rc)
    ctrls = rc.controllers or harness.COMPARE_CONTROLLERS
    rc.out.mkdir(parents=True, exist_ok=True)
    world = harness.build_world(sc, with_kernel=any(c.startswith("proposed") for c in ctrls))
    pooled: dict[str, list] = {c: [] for c in ctrls}
    for k in range(runs):
        seed = rc.seed + k
        traces = harness.run_controllers(sc, seed, ctrls, world)
        for c, recs in traces.items():
            pooled[c].append(recs)
            with open(rc.out / f"trace_{c}_seed{seed}.csv", "w", newline="") as fh:
                harness.write_trace_csv(fh, recs, seed, c)
        if {"perfect", "proposed", "batch"} <= set(traces):
            bad = harness.dominance_violations(traces)
            for name, steps in bad.items():
                if steps:
                    log.warning("seed %d: %s at %d steps", seed, name, len(steps))
    summary = harness.compute_metrics(pooled)
    with open(rc.out / "metrics.csv", "w", newline="") as fh:
        harness.write_metrics_csv(fh, summary, rc.seed)
    print(f"seeds {rc.seed}..{rc.seed + runs - 1}")
    print(summary.to_text())
    return 0


def cmd_sweep(rc: RunConfig, jobs: int) -> int:
    sc = _scenario(rc)
    rc.out.mkdir(parents=True, exist_ok=True)
    table = harness.grid_sweep(sc, rc.cell_sizes, rc.runs, rc.seed, jobs)
    with open(rc.out / "sweep.csv", "w", newline="") as fh:
        harness.write_sweep_csv(fh, table, rc.seed, rc.runs)
    print(f"{'cell[m]':>8}{'mean err[m]':>13}")
    for c, mean, _ in table:
        print(f"{c:>8.2f}{mean:>13.3f}")
    return 0


def cmd_dump_kernel(rc: RunConfig) -> int:
    sc = _scenario(rc)
    rc.out.mkdir(parents=True, exist_ok=True)
    world = harness.build_world(sc)
    with open(rc.out / "states.csv", "w", newline="") as fh:
        fh.write(f"# cell_size: {sc.grid.cell_size!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "x", "y", "vx", "vy", "static_prob"])
        for i, (row, ps) in enumerate(zip(world.space.states, world.space.static_probs())):
            w.writerow([i, *(repr(float(v)) for v in row), repr(float(ps))])
    with open(rc.out / "kernel.csv", "w", newline="") as fh:
        fh.write(f"# cell_size: {sc.grid.cell_size!r}\n")
        world.kernel.write_csv(fh)
    print(f"{len(world.space)} states, {world.kernel.matrix.nnz} transitions -> {rc.out}")
    return 0


def cmd_dump_attenuation(rc: RunConfig) -> int:
    sc = _scenario(rc)
    rc.out.mkdir(parents=True, exist_ok=True)
    world = harness.build_world(sc, with_kernel=False)
    for lum, field in zip(sc.luminaires, world.fields):
        with open(rc.out / f"attenuation_{lum.id}.csv", "w", newline="") as fh:
            write_attenuation_csv(fh, field, world.space, lum.f_full)
    print(f"{len(sc.luminaires)} attenuation fields -> {rc.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        rc = _run_config(args)
        if args.command == "run":
            return cmd_run(rc)
        if args.command == "compare":
            return cmd_compare(rc, rc.runs)
        if args.command == "sweep-grid":
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            return cmd_sweep(rc, args.jobs)
        if args.command == "dump-kernel":
            return cmd_dump_kernel(rc)
        return cmd_dump_attenuation(rc)
    except (ConfigError, ValueError, OSError) as e:
        print(f"occlight: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
