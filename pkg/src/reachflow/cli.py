"""Command-line front end.

Subcommands:
  reach     compute a flowpipe and write a result document
  check     bounded safety verdict; exit 0 when safe, 2 when not proven
  plot      render a result document to an SVG file
  simulate  sample trajectories and emit them as CSV

Exit codes: 0 success (check: safety proven), 1 usage or input error,
2 (check only) safety not provable -- the over-approximation touched the
bad set, or the exploration was truncated.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from typing import Optional

import numpy as np

from .exprs import ExprError
from .hybridize import STALLED, dynamic_hybridize_reach
from .hybridreach import INCOMPLETE, hybrid_reach, hybrid_simulate
from .linreach import BAD_REACHED, BAD_SET, reach, simulate
from .modelio import (
    KIND_HYBRID,
    KIND_LINEAR_DISCRETE,
    KIND_NONLINEAR,
    ModelError,
    ParsedModel,
    decode_set,
    load_model,
    load_result,
    result_doc,
    result_segments,
    save_result,
)
from .setgeom import sample_points
from .svgplot import plot_segments

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNPROVEN = 2


def _require_config(model: ParsedModel):
    if model.config is None:
        raise ModelError("model has no config block")
    return model.config


def _compute(model: ParsedModel):
    config = _require_config(model)
    if model.kind == KIND_HYBRID:
        return hybrid_reach(model.automaton, model.init_mode, model.x0, config)
    if model.kind == KIND_NONLINEAR:
        return dynamic_hybridize_reach(model.nonlinear, model.x0, config)
    return reach(model.system, config)


def cmd_reach(args) -> int:
    model = load_model(args.model)
    pipe = _compute(model)
    doc = result_doc(model, pipe)
    save_result(doc, args.output)
    nseg = sum(len(group) for _, group in result_segments(doc))
    print(f"{pipe.status}: {nseg} segments -> {args.output}")
    return EXIT_OK


def cmd_check(args) -> int:
    model = load_model(args.model)
    config = _require_config(model)
    if config.mode != BAD_SET:
        raise ModelError("check needs a config with mode 'bad_set' and a bad set")
    pipe = _compute(model)
    if args.output:
        save_result(result_doc(model, pipe), args.output)

    if pipe.status == BAD_REACHED:
        where = getattr(pipe, "status_step", None)
        at = f" at step {where}" if where is not None else ""
        print(f"UNSAFE (unproven): the flowpipe touches the bad set{at}")
        return EXIT_UNPROVEN
    if pipe.status == INCOMPLETE:
        print("UNKNOWN: exploration stopped at the jump or flow limit")
        return EXIT_UNPROVEN
    if pipe.status == STALLED:
        print("UNKNOWN: hybridization stalled before the horizon")
        return EXIT_UNPROVEN
    if not getattr(pipe, "rigorous", True):
        print("UNKNOWN: linearization residuals were estimated, not bounded")
        return EXIT_UNPROVEN
    print(f"SAFE: bad set unreachable within the horizon ({pipe.status})")
    return EXIT_OK


def cmd_plot(args) -> int:
    doc = load_result(args.flowpipe)
    try:
        dims = tuple(int(v) for v in args.dims.split(","))
    except ValueError:
        raise ValueError(f"--dims expects two comma-separated integers, got {args.dims!r}")
    groups = []
    for label, segs in result_segments(doc):
        sets = [decode_set(seg["set"], f"segments[{i}].set") for i, seg in enumerate(segs)]
        groups.append((label, sets))
    if not groups:
        raise ValueError("the result document has no segments to plot")
    plot_segments(groups, dims, path=args.output, title=doc.get("name"))
    print(f"wrote {args.output}")
    return EXIT_OK


def _sample_inputs(system, nsteps: int, rng) -> Optional[np.ndarray]:
    if not system.has_input:
        return None
    return sample_points(system.input_set, nsteps, rng)


def _rk4_path(field, x0: np.ndarray, nsteps: int, r: float, substeps: int = 8):
    """Classic fixed-step integration, ``substeps`` stages per lattice step."""
    out = np.empty((nsteps + 1, x0.shape[0]))
    out[0] = x0
    x = x0
    h = r / substeps
    for k in range(nsteps):
        for _ in range(substeps):
            k1 = field(x)
            k2 = field(x + 0.5 * h * k1)
            k3 = field(x + 0.5 * h * k2)
            k4 = field(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    config = _require_config(model)
    rng = np.random.default_rng(args.seed)
    continuous = model.kind != KIND_LINEAR_DISCRETE
    if continuous:
        if config.step is None:
            raise ModelError("config: continuous simulation needs a step")
        r = float(config.step)
        nsteps = int(math.ceil(config.horizon / r - 1e-12))
    else:
        r = None
        nsteps = int(config.horizon)

    if args.runs < 1:
        raise ValueError("--runs must be at least 1")
    rows = []  # (run, step, time, mode, state...)
    for run in range(args.runs):
        if model.kind == KIND_HYBRID:
            x0 = sample_points(model.x0, 1, rng)[0]
            trace = hybrid_simulate(
                model.automaton, model.init_mode, x0, config.horizon,
                step=r, rng=rng,
            )
            for k, (t, x, mode) in enumerate(
                zip(trace.times, trace.states, trace.modes)
            ):
                rows.append((run, k, t, mode, x))
        elif model.kind == KIND_NONLINEAR:
            x0 = sample_points(model.x0, 1, rng)[0]
            path = _rk4_path(model.nonlinear.field, x0, nsteps, r)
            for k, x in enumerate(path):
                rows.append((run, k, k * r, "-", x))
        else:
            x0 = sample_points(model.system.x0, 1, rng)[0]
            inputs = _sample_inputs(model.system, nsteps, rng)
            trace = simulate(
                model.system, x0, inputs=inputs, steps=nsteps, step=r
            )
            for k, x in enumerate(trace.states):
                t = k * r if continuous else float(k)
                rows.append((run, k, t, "-", x))

    out = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        writer = csv.writer(out)
        dim = len(rows[0][4])
        writer.writerow(["run", "step", "time", "mode"] + [f"x{i}" for i in range(dim)])
        for run, k, t, mode, x in rows:
            writer.writerow([run, k, f"{t:.12g}", mode] + [f"{v:.12g}" for v in x])
    finally:
        if args.output:
            out.close()
    if args.output:
        print(f"wrote {args.runs} runs -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="reachflow",
        description="Set-based reachability for linear, hybrid and nonlinear systems.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reach", help="compute a flowpipe and write a result document")
    r.add_argument("model", help="model JSON file")
    r.add_argument("-o", "--output", required=True, help="result JSON file to write")
    r.set_defaults(func=cmd_reach)

    c = sub.add_parser(
        "check",
        help="bounded safety check; exit 0 when proven safe, 2 otherwise",
    )
    c.add_argument("model", help="model JSON file (config mode must be 'bad_set')")
    c.add_argument("-o", "--output", help="optionally write the flowpipe result too")
    c.set_defaults(func=cmd_check)

    pl = sub.add_parser("plot", help="render a result document to SVG")
    pl.add_argument("flowpipe", help="result JSON file")
    pl.add_argument("--dims", default="0,1", help="two state dimensions, e.g. 0,2")
    pl.add_argument("-o", "--output", required=True, help="SVG file to write")
    pl.set_defaults(func=cmd_plot)

    s = sub.add_parser("simulate", help="sample random trajectories as CSV")
    s.add_argument("model", help="model JSON file")
    s.add_argument("--runs", type=int, default=10, help="number of trajectories")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("-o", "--output", help="CSV file (default: stdout)")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and 2 for usage errors; fold the
        # latter into the generic error code so 2 stays a verdict
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (ModelError, ExprError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
