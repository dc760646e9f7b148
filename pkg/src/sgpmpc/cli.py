"""Command-line entry point: uncertainty propagation, closed loop, benchmark.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import (
    convex_hulls,
    coverage_fraction,
    linearized_propagation,
    monte_carlo_envelope,
    points_in_hull,
    polygon_area,
)
from .config import build_setup, load_config
from .errors import ConfigError, SgpmpcError
from .runtime import MpcConfig, format_timing_table, run_closed_loop, timing_report
from .sqp import run_sqp
from .svgplot import SvgCanvas, bounds_of
from .traces import BenchTable, ClosedLoopTable, GeometryTable


def cmd_propagate(setup, out_dir):
    """Open-loop uncertainty comparison on one optimized input sequence.

    Runs the sampling-based SQP to obtain the shared inputs, then evaluates
    the Monte-Carlo envelope, the linearized ellipsoids and the per-stage
    sample hulls under those same inputs.  Emits a stage-wise geometry CSV
    and an overlay SVG; returns the written paths plus summary stats.
    """
    cfg = setup.config
    dims = cfg["propagate.projection"]
    x0 = setup.x0
    iterate, _ = run_sqp(
        setup.ocp, x0, iters=cfg["sqp.iters"], master_seed=setup.seed
    )
    u_seq = iterate.u

    mc = monte_carlo_envelope(
        setup.ocp, x0, u_seq, cfg["propagate.mc_samples"], master_seed=setup.seed
    )
    ellipses = linearized_propagation(setup.ocp, x0, u_seq)
    sample_stages = [iterate.x[:, i, :] for i in range(setup.ocp.horizon + 1)]
    hulls = convex_hulls(sample_stages, dims=dims)

    true_traj = np.empty((setup.ocp.horizon + 1, setup.system.n_x))
    true_traj[0] = x0
    for i, u in enumerate(u_seq):
        true_traj[i + 1] = setup.system.oracle.step(true_traj[i], u)

    records = []
    for i in range(setup.ocp.horizon + 1):
        records.append(("mc", i, mc[:, i, :][:, dims]))
        records.append(("linearized", i, ellipses[i].projected(dims).boundary()))
        records.append(("hulls", i, np.atleast_2d(hulls[i])))
        records.append(("true", i, true_traj[None, i, dims]))
    table = GeometryTable(records)

    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "propagate_geometry.csv"
    table.write(csv_path)
    svg_path = out_dir / "propagate_overlay.svg"
    _propagate_svg(setup, table, dims, svg_path)

    mc_hulls = convex_hulls([mc[:, i, :] for i in range(mc.shape[1])], dims=dims)
    containment = [
        bool(points_in_hull(true_traj[None, i, dims], mc_hulls[i], tol=1e-9)[0])
        for i in range(len(mc_hulls))
    ]
    coverage = [
        coverage_fraction(hulls[i], mc[:, i, :][:, dims], tol=1e-9)
        for i in range(len(hulls))
    ]
    stats = {
        "true_in_mc_hull": containment,
        "sample_hull_coverage": coverage,
        "final_ellipse_area": ellipses[-1].projected(dims).area(),
        "final_mc_hull_area": polygon_area(mc_hulls[-1]),
    }
    with open(out_dir / "propagate_stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2)
    return [csv_path, svg_path, out_dir / "propagate_stats.json"], stats


def _propagate_svg(setup, table, dims, path):
    mc_pts = [table.vertices("mc", s) for s in table.stages("mc")]
    xlim, ylim = bounds_of(mc_pts + [np.vstack([table.vertices("true", s) for s in table.stages("true")])])
    canvas = SvgCanvas(xlim, ylim)
    for s in table.stages("mc"):
        for p in table.vertices("mc", s):
            canvas.circle(p, radius_px=1.0, fill="#9db8e8", opacity=0.35)
    for s in table.stages("linearized"):
        canvas.polygon(table.vertices("linearized", s), stroke="#e08214", width=1.0)
    for s in table.stages("hulls"):
        verts = table.vertices("hulls", s)
        if len(verts) >= 3:
            canvas.polygon(verts, fill="#66bd63", stroke="#1a9850", width=1.0, opacity=0.25)
        else:
            canvas.polyline(verts, stroke="#1a9850", width=1.0)
    true_line = np.vstack([table.vertices("true", s) for s in table.stages("true")])
    canvas.polyline(true_line, stroke="black", width=2.0)
    # Constraint bounds of the projected coordinates.
    sys = setup.system
    for d, lim in ((dims[0], "x"), (dims[1], "y")):
        for bound in (sys.x_lb[d], sys.x_ub[d]) if d < sys.n_x else ():
            if np.isfinite(bound):
                if lim == "x":
                    canvas.polyline([(bound, ylim[0]), (bound, ylim[1])],
                                    stroke="#d73027", width=1.0, dash="6,4")
                else:
                    canvas.polyline([(xlim[0], bound), (xlim[1], bound)],
                                    stroke="#d73027", width=1.0, dash="6,4")
    canvas.write(path)


def cmd_closed_loop(setup, out_dir):
    """Receding-horizon run; emits trace CSV, SVG and violations report."""
    trace = run_closed_loop(setup.ocp, setup.mpc, setup.x0, master_seed=setup.seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "closed_loop_trace.csv"
    ClosedLoopTable.from_trace(trace).write(csv_path)

    tol = 1e-6
    report = {
        "tol": tol,
        "max_violation": trace.max_violation(),
        "steps_above_tol": [int(k) for k in np.nonzero(trace.violations > tol)[0]],
        "final_state": [float(v) for v in trace.states[-1]],
        "mean_step_ms": float(trace.total_ms[1:].mean()) if trace.n_steps > 1 else float(trace.total_ms.mean()),
    }
    rep_path = out_dir / "violations_report.json"
    with open(rep_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)

    svg_path = out_dir / "closed_loop_trajectory.svg"
    _closed_loop_svg(setup, trace, svg_path)
    return [csv_path, rep_path, svg_path], trace


def _closed_loop_svg(setup, trace, path):
    sys = setup.system
    pos = trace.states[:, :2]
    extras = [pos]
    for c in sys.extra_constraints:
        if hasattr(c, "center"):
            extras.append(np.array([c.center]))
    xlim, ylim = bounds_of(extras, pad=0.1)
    if np.isfinite(sys.x_ub[1]) and np.isfinite(sys.x_lb[1]):
        ylim = (min(ylim[0], sys.x_lb[1] - 0.3), max(ylim[1], sys.x_ub[1] + 0.3))
    canvas = SvgCanvas(xlim, ylim)
    # Track bounds on the y coordinate.
    for bound in (sys.x_lb[1], sys.x_ub[1]):
        if np.isfinite(bound):
            canvas.polyline([(xlim[0], bound), (xlim[1], bound)], stroke="#555555",
                            width=1.5)
    # Obstacle ellipses.
    for c in sys.extra_constraints:
        if hasattr(c, "center"):
            ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
            rx = np.sqrt(c.level * c.x_scale)
            ry = np.sqrt(c.level)
            boundary = np.stack(
                [c.center[0] + rx * np.cos(ang), c.center[1] + ry * np.sin(ang)], axis=1
            )
            canvas.polygon(boundary, fill="#bbbbbb", stroke="#333333", opacity=0.6)
    # Per-step sampled prediction fans.
    for k in range(0, trace.n_steps, 2):
        for n in range(trace.predictions.shape[1]):
            canvas.polyline(trace.predictions[k, n, :, :2], stroke="#74add1",
                            width=0.6, opacity=0.35)
    canvas.polyline(pos, stroke="#2166ac", width=2.5)
    canvas.circle(pos[0], radius_px=4, fill="#1b7837")
    canvas.circle(pos[-1], radius_px=4, fill="#b2182b")
    canvas.write(path)


def cmd_bench(setup, out_dir, samples, iters, repeats):
    """Cartesian (samples, iterations) timing sweep on the closed loop."""
    cfg = setup.config
    steps = cfg["bench.steps"]
    traces = []
    for n in samples:
        for l in iters:
            ocp = replace(setup.ocp, n_samples=n)
            for rep in range(repeats):
                mpc = MpcConfig(iters=l, keep=min(setup.mpc.keep, l), steps=steps)
                traces.append(run_closed_loop(ocp, mpc, setup.x0,
                                              master_seed=setup.seed + rep))
    cells = timing_report(traces)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "bench_timings.csv"
    BenchTable(cells).write(csv_path)
    txt_path = out_dir / "bench_table.txt"
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(format_timing_table(cells) + "\n")
    return [csv_path, txt_path], cells


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sgpmpc",
        description="Sampling-based GP-MPC experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")

    add_common(sub.add_parser("propagate", help="uncertainty propagation comparison"))
    add_common(sub.add_parser("closed-loop", help="receding-horizon experiment"))
    bench = sub.add_parser("bench", help="timing sweep over samples and iterations")
    add_common(bench)
    bench.add_argument("--samples", default=None, help="comma list, e.g. 5,10,20")
    bench.add_argument("--iters", default=None, help="comma list or a..b range")
    bench.add_argument("--repeats", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        setup = build_setup(cfg, seed_override=args.seed)
        out_dir = Path(args.out if args.out is not None else cfg["out"])
        if args.command == "propagate":
            paths, _ = cmd_propagate(setup, out_dir)
        elif args.command == "closed-loop":
            paths, trace = cmd_closed_loop(setup, out_dir)
            print(f"final state: {np.array2string(trace.states[-1], precision=3)}")
            print(f"max violation: {trace.max_violation():.3e}")
        else:
            samples = (
                [int(v) for v in args.samples.split(",")]
                if args.samples else cfg["bench.samples"]
            )
            iters = _parse_iters(args.iters) if args.iters else cfg["bench.iters"]
            repeats = args.repeats if args.repeats is not None else cfg["bench.repeats"]
            paths, cells = cmd_bench(setup, out_dir, samples, iters, repeats)
            print(format_timing_table(cells))
        for p in paths:
            print(f"wrote {p}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SgpmpcError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _parse_iters(spec):
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in spec.split(",")]


if __name__ == "__main__":
    sys.exit(main())
