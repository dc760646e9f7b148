"""Receding-horizon runtime with the real-time-iteration split.

Each control step pins the measured state, runs a fixed number of SQP
rounds against the retained sample memories, applies the first input right
after the first feedback phase, truncates each sample's memory to the most
recent draw groups and shifts the iterate as the next warm start.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .sqp import OcpDefinition, SqpIterate, feedback, make_initial_guess, prepare


@dataclass(frozen=True)
class MpcConfig:
    """Closed-loop settings: SQP rounds per step, retained draw groups,
    number of plant steps."""

    iters: int = 2  # SQP iterations per control step
    keep: int = 1  # draw groups carried over between steps
    steps: int = 50  # closed-loop horizon
    warm_start_shift: bool = True
    capture_timing: bool = True

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 0 <= self.keep <= self.iters:
            raise ValueError("keep must lie in [0, iters]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class ClosedLoopTrace:
    """Closed-loop record: true states, applied inputs, violations, timings.

    ``states`` holds x(0..T); inputs/violations/timings have one row per
    executed step.  ``predictions`` stores the per-step sampled state
    trajectories (step, sample, stage, state).
    """

    states: np.ndarray
    inputs: np.ndarray
    violations: np.ndarray
    prepare_ms: np.ndarray
    feedback_ms: np.ndarray
    total_ms: np.ndarray
    predictions: np.ndarray
    memory_rows: np.ndarray
    n_samples: int
    sqp_iters: int

    @property
    def n_steps(self):
        return self.inputs.shape[0]

    def max_violation(self):
        return float(np.max(self.violations, initial=-np.inf))


def shift_warm_start(iterate: SqpIterate):
    """One-stage shift: repeat the last input and terminal states."""
    u = np.vstack([iterate.u[1:], iterate.u[-1:]])
    x = np.concatenate([iterate.x[:, 1:], iterate.x[:, -1:]], axis=1)
    return SqpIterate(u=u, x=x, samples=iterate.samples, iteration=0)


def _true_step_violation(ocp: OcpDefinition, x, u):
    vals, _, _ = ocp.stage_rows(np.asarray(x, dtype=float), np.asarray(u, dtype=float))
    return float(np.max(vals, initial=-np.inf))


def run_closed_loop(ocp: OcpDefinition, mpc: MpcConfig, x0, master_seed=0):
    """Drive the true plant with the sampling-based controller.

    The plant is stepped through the system's ground-truth oracle; the
    controller path sees only the GP models.  Raises on unrecoverable
    QP/sampling failures, attaching the partial trace to the exception.
    """
    sys = ocp.system
    x0 = np.asarray(x0, dtype=float)
    hor = ocp.horizon
    n_x, n_u = sys.n_x, sys.n_u
    steps = mpc.steps

    states = np.empty((steps + 1, n_x))
    inputs = np.empty((steps, n_u))
    violations = np.empty(steps)
    prep_ms = np.zeros(steps)
    fb_ms = np.zeros(steps)
    tot_ms = np.zeros(steps)
    predictions = np.empty((steps, ocp.n_samples, hor + 1, n_x))
    memory_rows = np.zeros(steps, dtype=np.int64)

    states[0] = x0
    guess = make_initial_guess(ocp, x0, master_seed, expected_draw_calls=mpc.iters + mpc.keep)
    base_rows = ocp.models[0].n_rows
    row_bound = (mpc.keep + mpc.iters) * hor * (sys.n_z + 1)

    for k in range(steps):
        iterate = guess
        iterate.x[:, 0] = states[k]
        t_start = time.perf_counter()
        u_applied = None
        for j in range(1, mpc.iters + 1):
            t0 = time.perf_counter()
            materialize = j > mpc.iters - mpc.keep
            lin = _prepare_materializing(iterate, ocp, materialize)
            t1 = time.perf_counter()
            iterate, _, _ = feedback(iterate, lin, ocp)
            t2 = time.perf_counter()
            prep_ms[k] += (t1 - t0) * 1e3
            fb_ms[k] += (t2 - t1) * 1e3
            if j == 1:
                u_applied = iterate.u[0].copy()
        tot_ms[k] = (time.perf_counter() - t_start) * 1e3

        inputs[k] = u_applied
        violations[k] = _true_step_violation(ocp, states[k], u_applied)
        states[k + 1] = sys.oracle.step(states[k], u_applied)
        predictions[k] = iterate.x

        rows = max(s.n_rows for s in iterate.samples)
        memory_rows[k] = rows
        assert rows <= row_bound, (
            f"sample memory {rows} rows exceeds bound {row_bound}"
        )

        new_samples = [s.truncated(min(mpc.keep, len(s.groups))) for s in iterate.samples]
        iterate = SqpIterate(u=iterate.u, x=iterate.x, samples=new_samples)
        guess = shift_warm_start(iterate) if mpc.warm_start_shift else iterate

    return ClosedLoopTrace(
        states=states,
        inputs=inputs,
        violations=violations,
        prepare_ms=prep_ms,
        feedback_ms=fb_ms,
        total_ms=tot_ms,
        predictions=predictions,
        memory_rows=memory_rows,
        n_samples=ocp.n_samples,
        sqp_iters=mpc.iters,
    )


def _prepare_materializing(iterate, ocp, materialize):
    """Preparation phase, materializing the draw group when it will be
    carried over to the next control step."""
    if not materialize:
        return prepare(iterate, ocp)
    # Temporarily force materialized draws through the sample objects.
    for s in iterate.samples:
        s._materialize_next = True
    try:
        return prepare(iterate, ocp)
    finally:
        for s in iterate.samples:
            s._materialize_next = False


@dataclass
class TimingCell:
    n_samples: int
    sqp_iters: int
    mean_ms: float
    std_ms: float
    n_steps: int


def timing_report(traces):
    """Aggregate per-step solve times into a (samples, iterations) table.

    ``traces`` is an iterable of ClosedLoopTrace; the first (cold) step of
    each trace is excluded.  Returns a list of :class:`TimingCell`.
    """
    cells = {}
    for trace in traces:
        times = trace.total_ms[1:] if trace.n_steps > 1 else trace.total_ms
        key = (trace.n_samples, trace.sqp_iters)
        cells.setdefault(key, []).extend(times.tolist())
    out = []
    for (n, l), times in sorted(cells.items()):
        arr = np.asarray(times)
        out.append(
            TimingCell(
                n_samples=n, sqp_iters=l,
                mean_ms=float(arr.mean()), std_ms=float(arr.std()),
                n_steps=arr.size,
            )
        )
    return out


def format_timing_table(cells):
    """Text table of run times, samples down, SQP iterations across."""
    iters = sorted({c.sqp_iters for c in cells})
    samples = sorted({c.n_samples for c in cells})
    lookup = {(c.n_samples, c.sqp_iters): c for c in cells}
    header = "N \\ L |" + "|".join(f"   L={l}   " for l in iters)
    lines = [header, "-" * len(header)]
    for n in samples:
        row = [f"{n:5d} "]
        for l in iters:
            c = lookup.get((n, l))
            row.append(f" {c.mean_ms:7.2f} +/- {c.std_ms:6.2f} " if c else "    -    ")
        lines.append("|".join(row))
    return "\n".join(lines)
