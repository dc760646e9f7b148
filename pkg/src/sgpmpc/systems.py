"""Benchmark systems: known/unknown dynamics split, constraints, training data.

Each system decomposes the discrete-time step as ``x+ = f(x, u) + B_d g(z)``
where ``f`` is the known part, ``g`` the learned residual, and ``z`` a fixed
coordinate selection out of ``(x, u)``.  The ground-truth residual lives
behind :class:`PlantOracle` and is only read by the plant simulator and the
training-data generator, never by the controller path.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rngs
from .gpdata import GpDataset


class PlantOracle:
    """Ground-truth residual access for simulation and data generation only."""

    def __init__(self, system, g_true, g_jac):
        self._system = system
        self._g_true = g_true
        self._g_jac = g_jac

    def g_true(self, z):
        """True residual value at a feature point."""
        return np.asarray(self._g_true(np.asarray(z, dtype=float)), dtype=float)

    def g_jac(self, z):
        """Analytic Jacobian of the true residual, shape (n_g, n_z)."""
        return np.asarray(self._g_jac(np.asarray(z, dtype=float)), dtype=float)

    def step(self, x, u):
        """Noise-free true plant step ``f(x, u) + B_d g_true(z)``."""
        s = self._system
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return s.f(x, u) + s.B_d @ self.g_true(s.features(x, u))


@dataclass
class BoxConstraint:
    """Single linear row ``a.x + b.u <= c`` from a box bound."""

    a: np.ndarray
    b: np.ndarray
    c: float
    name: str
    soft: bool = True
    state_only: bool = True

    def value(self, x, u=None):
        out = float(self.a @ x) - self.c
        if u is not None:
            out += float(self.b @ u)
        return out

    def jac(self, x, u=None):
        return self.a, self.b


@dataclass
class EllipseKeepOut:
    """Keep-out ellipse around an obstacle: feasible outside the boundary.

    Encoded as ``level - (x_p - cx)^2 / x_scale - (y_p - cy)^2 <= 0``.
    """

    center: tuple
    level: float = 5.67
    x_scale: float = 9.0
    name: str = ""
    soft: bool = True
    state_only: bool = True

    def value(self, x, u=None):
        dx = x[0] - self.center[0]
        dy = x[1] - self.center[1]
        return self.level - dx * dx / self.x_scale - dy * dy

    def jac(self, x, u=None):
        gx = np.zeros(len(x))
        gx[0] = -2.0 * (x[0] - self.center[0]) / self.x_scale
        gx[1] = -2.0 * (x[1] - self.center[1])
        return gx, np.zeros(0 if u is None else len(u))


@dataclass
class SystemSpec:
    """Immutable description of one benchmark system."""

    name: str
    n_x: int
    n_u: int
    n_g: int
    dt: float
    f: callable
    f_jac: callable
    B_d: np.ndarray
    feature_idx: tuple
    x_lb: np.ndarray
    x_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    extra_constraints: list = field(default_factory=list)
    _oracle: PlantOracle = None

    def __post_init__(self):
        self.B_d = np.asarray(self.B_d, dtype=float)
        if np.linalg.matrix_rank(self.B_d) != self.B_d.shape[1]:
            raise ValueError("B_d must have full column rank")
        self.B_d_pinv = np.linalg.pinv(self.B_d)
        n_z = len(self.feature_idx)
        self.S_x = np.zeros((n_z, self.n_x))
        self.S_u = np.zeros((n_z, self.n_u))
        for row, idx in enumerate(self.feature_idx):
            if idx < self.n_x:
                self.S_x[row, idx] = 1.0
            else:
                self.S_u[row, idx - self.n_x] = 1.0

    @property
    def n_z(self):
        return len(self.feature_idx)

    @property
    def oracle(self):
        """Ground-truth access; for plant stepping and data generation only."""
        return self._oracle

    def features(self, x, u):
        """GP input vector: selected coordinates of (x, u)."""
        return self.S_x @ np.asarray(x, dtype=float) + self.S_u @ np.asarray(u, dtype=float)

    def feature_box(self):
        """Per-feature (low, high) ranges induced by the constraint box."""
        full_lb = np.concatenate([self.x_lb, self.u_lb])
        full_ub = np.concatenate([self.x_ub, self.u_ub])
        idx = list(self.feature_idx)
        return full_lb[idx], full_ub[idx]

    def box_constraints(self):
        """Linear rows for the (x, u) box; input rows are kept hard."""
        rows = []
        for i in range(self.n_x):
            a = np.zeros(self.n_x)
            for sign, bound, tag in ((1.0, self.x_ub[i], "ub"), (-1.0, -self.x_lb[i], "lb")):
                if np.isfinite(bound):
                    a_row = sign * a.copy()
                    a_row[i] = sign
                    rows.append(
                        BoxConstraint(a_row, np.zeros(self.n_u), float(bound),
                                      name=f"x{i}_{tag}", soft=True, state_only=True)
                    )
        for j in range(self.n_u):
            for sign, bound, tag in ((1.0, self.u_ub[j], "ub"), (-1.0, -self.u_lb[j], "lb")):
                if np.isfinite(bound):
                    b_row = np.zeros(self.n_u)
                    b_row[j] = sign
                    rows.append(
                        BoxConstraint(np.zeros(self.n_x), b_row, float(bound),
                                      name=f"u{j}_{tag}", soft=False, state_only=False)
                    )
        return rows

    def stage_constraints(self):
        return self.box_constraints() + list(self.extra_constraints)

    def terminal_constraints(self):
        """State-only rows applied to the terminal state."""
        return [c for c in self.stage_constraints() if c.state_only]


def pendulum_spec(theta_box="narrow", dt=0.015, gravity=10.0, length=1.0):
    """Torque-driven pendulum with fully unknown dynamics.

    State is (angle, angular velocity), input the angular acceleration; the
    known part is zero, so the residual carries the entire discrete step.
    ``theta_box`` selects the angle range: "narrow" = [-2.14, 2.14],
    "wide" = [-3, 3].
    """
    if theta_box not in ("narrow", "wide"):
        raise ValueError("theta_box must be 'narrow' or 'wide'")
    th = 2.14 if theta_box == "narrow" else 3.0

    def f(x, u):
        return np.zeros(2)

    def f_jac(x, u):
        return np.zeros((2, 2)), np.zeros((2, 1))

    def g_true(z):
        theta, omega, alpha = z
        return np.array(
            [
                theta + omega * dt,
                omega - gravity * np.sin(theta) * dt / length + alpha * dt,
            ]
        )

    def g_jac(z):
        theta = z[0]
        return np.array(
            [
                [1.0, dt, 0.0],
                [-gravity * np.cos(theta) * dt / length, 1.0, dt],
            ]
        )

    spec = SystemSpec(
        name="pendulum",
        n_x=2,
        n_u=1,
        n_g=2,
        dt=dt,
        f=f,
        f_jac=f_jac,
        B_d=np.eye(2),
        feature_idx=(0, 1, 2),
        x_lb=np.array([-th, -2.5]),
        x_ub=np.array([th, 2.5]),
        u_lb=np.array([-8.0]),
        u_ub=np.array([8.0]),
    )
    spec._oracle = PlantOracle(spec, g_true, g_jac)
    return spec


def bicycle_spec(dt=0.06, lf=1.105, lr=1.738):
    """Kinematic bicycle car model with learned position/heading increments.

    State is (x position, y position, heading, speed); input (steering,
    acceleration).  The known part integrates the speed; the residual holds
    the slip-angle kinematics of the three pose increments.
    """

    def f(x, u):
        return np.array([x[0], x[1], x[2], x[3] + u[1] * dt])

    def f_jac(x, u):
        fx = np.eye(4)
        fu = np.zeros((4, 2))
        fu[3, 1] = dt
        return fx, fu

    ratio = lr / (lf + lr)

    def g_true(z):
        theta, v, delta = z
        zeta = np.arctan(ratio * np.tan(delta))
        return np.array(
            [
                v * np.cos(theta + zeta) * dt,
                v * np.sin(theta + zeta) * dt,
                v * np.sin(zeta) * dt / lr,
            ]
        )

    def g_jac(z):
        theta, v, delta = z
        t = np.tan(delta)
        zeta = np.arctan(ratio * t)
        dz_dd = ratio * (1 + t * t) / (1 + (ratio * t) ** 2)
        c, s = np.cos(theta + zeta), np.sin(theta + zeta)
        return np.array(
            [
                [-v * s * dt, c * dt, -v * s * dt * dz_dd],
                [v * c * dt, s * dt, v * c * dt * dz_dd],
                [0.0, np.sin(zeta) * dt / lr, v * np.cos(zeta) * dt / lr * dz_dd],
            ]
        )

    spec = SystemSpec(
        name="bicycle",
        n_x=4,
        n_u=2,
        n_g=3,
        dt=dt,
        f=f,
        f_jac=f_jac,
        B_d=np.vstack([np.eye(3), np.zeros((1, 3))]),
        feature_idx=(2, 3, 4),
        x_lb=np.array([-2.14, 0.0, -1.14, -1.0]),
        x_ub=np.array([70.0, 6.0, 1.14, 15.0]),
        u_lb=np.array([-0.6, -2.0]),
        u_ub=np.array([0.6, 2.0]),
    )
    spec._oracle = PlantOracle(spec, g_true, g_jac)
    return spec


@dataclass(frozen=True)
class TrainingGridSpec:
    """Equally spaced mesh over the GP feature box."""

    counts: tuple
    lows: np.ndarray
    highs: np.ndarray
    noise_std: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "lows", np.asarray(self.lows, dtype=float))
        object.__setattr__(self, "highs", np.asarray(self.highs, dtype=float))
        if any(c < 1 for c in self.counts):
            raise ValueError("grid counts must be >= 1")
        if not (len(self.counts) == self.lows.size == self.highs.size):
            raise ValueError("counts, lows and highs must have matching lengths")

    def points(self):
        axes = [
            np.linspace(lo, hi, c) if c > 1 else np.array([(lo + hi) / 2.0])
            for c, lo, hi in zip(self.counts, self.lows, self.highs)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def default_grid(system, counts=(3, 3, 5), noise_std=1e-3):
    lows, highs = system.feature_box()
    return TrainingGridSpec(counts=counts, lows=lows, highs=highs, noise_std=noise_std)


def generate_training_data(system, grid, seed, include_gradients=False):
    """Noisy one-step prediction-error measurements on the training mesh.

    For each mesh point the residual target is recovered as
    ``pinv(B_d) (step(x, u) - f(x, u))`` plus i.i.d. Gaussian noise.
    Coordinates of (x, u) outside the feature selection do not influence the
    residual and are set to zero.  With ``include_gradients`` the analytic
    residual Jacobians are stored as additional (equally noisy) rows.
    """
    z_points = grid.points()
    d = z_points.shape[1]
    if d != system.n_z:
        raise ValueError("grid dimension does not match the system's feature count")
    rng = rngs.stream(seed, rngs.NOISE)
    values = np.empty((len(z_points), system.n_g))
    grads = np.empty((len(z_points), d, system.n_g)) if include_gradients else None
    for i, z in enumerate(z_points):
        x = system.S_x.T @ z
        u = system.S_u.T @ z
        step = system.oracle.step(x, u)
        values[i] = system.B_d_pinv @ (step - system.f(x, u))
        if include_gradients:
            grads[i] = system.oracle.g_jac(z).T
    values += rng.normal(0.0, grid.noise_std, size=values.shape)
    if include_gradients:
        grads += rng.normal(0.0, grid.noise_std, size=grads.shape)
    return GpDataset(
        z_points,
        values,
        gradients=grads,
        noise_var=grid.noise_std**2,
    )


def obstacle_constraints(centers, level=5.67, x_scale=9.0):
    """Keep-out ellipse rows for a list of obstacle centers."""
    return [
        EllipseKeepOut(center=(float(cx), float(cy)), level=level, x_scale=x_scale,
                       name=f"obstacle{i}")
        for i, (cx, cy) in enumerate(centers)
    ]
