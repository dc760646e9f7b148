"""CSV serialization of experiment outputs.

Numbers are written with 17 significant digits, which round-trips IEEE
doubles exactly; readers reconstruct the in-memory tables losslessly.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np


def _fmt(x):
    return format(float(x), ".17g")


@dataclass
class ClosedLoopTable:
    """Tabular form of a closed-loop trace, mirroring its CSV exactly.

    Rows 0..T-1 carry (state, applied input, violation, timings); the final
    row carries the terminal state with empty remaining fields.
    """

    states: np.ndarray  # (T+1, n_x)
    inputs: np.ndarray  # (T, n_u)
    violations: np.ndarray  # (T,)
    prepare_ms: np.ndarray
    feedback_ms: np.ndarray
    total_ms: np.ndarray

    @classmethod
    def from_trace(cls, trace):
        return cls(
            states=trace.states.copy(),
            inputs=trace.inputs.copy(),
            violations=trace.violations.copy(),
            prepare_ms=trace.prepare_ms.copy(),
            feedback_ms=trace.feedback_ms.copy(),
            total_ms=trace.total_ms.copy(),
        )

    def header(self):
        n_x = self.states.shape[1]
        n_u = self.inputs.shape[1]
        return (
            ["k"]
            + [f"x{i}" for i in range(n_x)]
            + [f"u{j}" for j in range(n_u)]
            + ["max_violation", "prepare_ms", "feedback_ms", "total_ms"]
        )

    def write(self, path):
        steps = self.inputs.shape[0]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for k in range(steps):
                writer.writerow(
                    [str(k)]
                    + [_fmt(v) for v in self.states[k]]
                    + [_fmt(v) for v in self.inputs[k]]
                    + [
                        _fmt(self.violations[k]),
                        _fmt(self.prepare_ms[k]),
                        _fmt(self.feedback_ms[k]),
                        _fmt(self.total_ms[k]),
                    ]
                )
            writer.writerow(
                [str(steps)] + [_fmt(v) for v in self.states[steps]]
                + [""] * (self.inputs.shape[1] + 4)
            )

    @classmethod
    def read(cls, path):
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        n_x = sum(1 for h in header if h.startswith("x"))
        n_u = sum(1 for h in header if h.startswith("u"))
        body = rows[1:]
        steps = len(body) - 1
        states = np.empty((steps + 1, n_x))
        inputs = np.empty((steps, n_u))
        violations = np.empty(steps)
        prep = np.empty(steps)
        fb = np.empty(steps)
        tot = np.empty(steps)
        for row in body:
            k = int(row[0])
            states[k] = [float(v) for v in row[1 : 1 + n_x]]
            if k < steps:
                inputs[k] = [float(v) for v in row[1 + n_x : 1 + n_x + n_u]]
                violations[k], prep[k], fb[k], tot[k] = (
                    float(v) for v in row[1 + n_x + n_u :]
                )
        return cls(states, inputs, violations, prep, fb, tot)


@dataclass
class GeometryTable:
    """Stage-wise 2-D geometry records: one row per (method, stage, vertex)."""

    records: list  # (method, stage, vertex_array (V, 2))

    def write(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "stage", "vertex", "c0", "c1"])
            for method, stage, verts in self.records:
                for v, point in enumerate(np.atleast_2d(verts)):
                    writer.writerow(
                        [method, str(stage), str(v), _fmt(point[0]), _fmt(point[1])]
                    )

    @classmethod
    def read(cls, path):
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        grouped = {}
        order = []
        for method, stage, vertex, c0, c1 in rows[1:]:
            key = (method, int(stage))
            if key not in grouped:
                grouped[key] = []
                order.append(key)
            assert int(vertex) == len(grouped[key])
            grouped[key].append((float(c0), float(c1)))
        return cls([(m, s, np.asarray(grouped[(m, s)])) for m, s in order])

    def stages(self, method):
        return sorted(s for m, s, _ in self.records if m == method)

    def vertices(self, method, stage):
        for m, s, verts in self.records:
            if m == method and s == stage:
                return verts
        raise KeyError((method, stage))


@dataclass
class BenchTable:
    """Benchmark sweep cells (samples, iterations, mean/std ms)."""

    cells: list  # TimingCell-like objects

    def write(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_samples", "sqp_iters", "mean_ms", "std_ms", "n_steps"])
            for c in self.cells:
                writer.writerow(
                    [str(c.n_samples), str(c.sqp_iters), _fmt(c.mean_ms),
                     _fmt(c.std_ms), str(c.n_steps)]
                )

    @classmethod
    def read(cls, path):
        from .runtime import TimingCell

        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        cells = [
            TimingCell(int(n), int(l), float(m), float(s), int(k))
            for n, l, m, s, k in rows[1:]
        ]
        return cls(cells)


def csv_equal(path_a, path_b, exclude_columns=()):
    """Byte-level CSV comparison, optionally excluding named columns."""
    def filtered(path):
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            return ""
        header = rows[0]
        keep = [i for i, name in enumerate(header) if name not in exclude_columns]
        out = io.StringIO()
        writer = csv.writer(out)
        for row in rows:
            writer.writerow([row[i] for i in keep if i < len(row)])
        return out.getvalue()

    return filtered(path_a) == filtered(path_b)
