"""Reference uncertainty-propagation methods and 2-D set geometry.

Three reachable-set approximations share one open-loop input sequence: a
Monte-Carlo envelope of independently sampled residual functions (treated
as ground truth), a linearization-based ellipsoid recursion with stage-wise
independence, and per-stage convex hulls of the optimizer's sampled
trajectories.
"""

from dataclasses import dataclass

import numpy as np

from . import rngs
from .sampler import SampledDynamics, SamplerOptions
from .sqp import OcpDefinition, _parallel_map, simulate_sample_rollout


@dataclass
class Ellipsoid:
    """Confidence ellipsoid ``(x-c)' (m^2 S)^-1 (x-c) <= 1``."""

    center: np.ndarray
    shape: np.ndarray  # covariance-like PSD matrix
    multiplier: float = 1.0

    def projected(self, dims):
        d = list(dims)
        return Ellipsoid(self.center[d], self.shape[np.ix_(d, d)], self.multiplier)

    def area(self):
        """Area of the 2-D ellipse (projected shape must be 2x2)."""
        if self.shape.shape != (2, 2):
            raise ValueError("area is defined for 2-D ellipsoids")
        det = max(float(np.linalg.det(self.shape)), 0.0)
        return np.pi * self.multiplier**2 * np.sqrt(det)

    def boundary(self, n=64):
        """Polyline approximation of the ellipse boundary (2-D only)."""
        if self.shape.shape != (2, 2):
            raise ValueError("boundary is defined for 2-D ellipsoids")
        w, v = np.linalg.eigh(self.shape)
        w = np.clip(w, 0.0, None)
        ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        circ = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return self.center + self.multiplier * circ * np.sqrt(w) @ v.T


def monte_carlo_envelope(ocp: OcpDefinition, x0, u_seq, n_rollouts, master_seed=0):
    """Forward-simulate independent truncated-GP residual samples.

    Returns the stage states of all rollouts, shape
    ``(n_rollouts, horizon+1, n_x)``.  Sampling is honest: the variance
    freeze used inside the SQP loop is disabled here.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    opts = SamplerOptions(
        truncation_enabled=ocp.sampler_options.truncation_enabled,
        max_rejections=ocp.sampler_options.max_rejections,
        snap_tol=ocp.sampler_options.snap_tol,
        freeze_var_factor=0.0,
        clamp_on_exhaustion=ocp.sampler_options.clamp_on_exhaustion,
    )
    seed = int(rngs.stream(master_seed, rngs.MONTE_CARLO).integers(2**63 - 1))

    def rollout(m):
        sample = SampledDynamics(
            ocp.models, m, seed, ocp.conf.sqrt_beta,
            options=opts, capacity_hint=u_seq.shape[0] + 1,
        )
        return simulate_sample_rollout(ocp.system, sample, x0, u_seq)

    return np.stack(_parallel_map(rollout, range(n_rollouts)))


def linearized_propagation(ocp: OcpDefinition, x0, u_seq, multiplier=None):
    """Mean/covariance recursion with stage-wise independence.

    The mean propagates through the posterior-mean residual; the state
    covariance through the mean Jacobian plus the per-stage residual
    covariance (no feedback of state uncertainty into the GP inputs).
    Returns one :class:`Ellipsoid` per stage, scaled by ``multiplier``
    (defaults to the confidence multiplier of the truncation band).
    """
    sys = ocp.system
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    mult = ocp.conf.sqrt_beta if multiplier is None else float(multiplier)
    x = np.asarray(x0, dtype=float)
    cov = np.zeros((sys.n_x, sys.n_x))
    out = [Ellipsoid(center=x.copy(), shape=cov.copy(), multiplier=mult)]
    for u in u_seq:
        z = sys.features(x, u)
        mu = np.empty(len(ocp.models))
        dmu = np.empty((len(ocp.models), sys.n_z))
        var = np.empty(len(ocp.models))
        for k, model in enumerate(ocp.models):
            mean, cv = model.query(z[None, :], with_derivatives=True)
            mu[k] = mean[0]
            dmu[k] = mean[1:]
            var[k] = max(float(cv[0, 0]), 0.0)
        fx, fu = sys.f_jac(x, u)
        a_mat = fx + sys.B_d @ dmu @ sys.S_x
        cov = a_mat @ cov @ a_mat.T + sys.B_d @ np.diag(var) @ sys.B_d.T
        cov = 0.5 * (cov + cov.T)
        x = sys.f(x, u) + sys.B_d @ mu
        out.append(Ellipsoid(center=x.copy(), shape=cov.copy(), multiplier=mult))
    return out


def convex_hulls(stage_points, dims=(0, 1)):
    """Exact 2-D convex hull per stage via the monotone chain.

    ``stage_points`` is an iterable of (n_i, n_x) arrays; the selected
    coordinate pair is hulled.  Degenerate stages yield a single point or a
    two-point segment.  Vertices are returned counter-clockwise.
    """
    return [convex_hull_2d(np.asarray(p)[:, list(dims)]) for p in stage_points]


def convex_hull_2d(points):
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if pts.shape[0] == 0:
        return pts
    if pts.shape[0] == 1:
        return pts
    # unique() sorts lexicographically already
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:  # collinear input: keep the extreme segment
        return np.array([pts[0], pts[-1]])
    return hull


def polygon_area(vertices):
    """Shoelace area; zero for degenerate polygons."""
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_hull(points, vertices, tol=1e-9):
    """Boolean mask of points inside (or on) a convex CCW polygon.

    Degenerate hulls (point / segment) match within ``tol``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] == 0:
        return np.zeros(pts.shape[0], dtype=bool)
    if v.shape[0] == 1:
        return np.max(np.abs(pts - v[0]), axis=1) <= tol
    if v.shape[0] == 2:
        a, b = v
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip((pts - a) @ ab / max(denom, 1e-300), 0.0, 1.0)
        proj = a + t[:, None] * ab
        return np.linalg.norm(pts - proj, axis=1) <= tol
    inside = np.ones(pts.shape[0], dtype=bool)
    for i in range(v.shape[0]):
        a, b = v[i], v[(i + 1) % v.shape[0]]
        edge = b - a
        rel = pts - a
        crossv = edge[0] * rel[:, 1] - edge[1] * rel[:, 0]
        inside &= crossv >= -tol * max(np.linalg.norm(edge), 1.0)
    return inside


def coverage_fraction(vertices, points, tol=1e-9):
    """Fraction of points contained in the hull."""
    mask = points_in_hull(points, vertices, tol=tol)
    return float(mask.mean()) if mask.size else 0.0
