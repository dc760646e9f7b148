"""Multi-sample SQP over sampled residual dynamics.

Each iteration draws values and Jacobians of every realized residual sample
at the current iterate (preparation phase), assembles the shared-input QP,
solves it and applies the full step (feedback phase).  The drawn rows stay
in each sample's conditioning memory, so one consistent function per sample
persists across iterations.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import QpInfeasibleError
from .gpdata import ConfidenceParams
from .qp import QpLayout, QpProblem
from .qp import solve as qp_solve
from .sampler import SampledDynamics, SamplerOptions


def worker_count():
    """Worker threads for sampling parallelism (env SGPMPC_WORKERS)."""
    env = os.environ.get("SGPMPC_WORKERS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _parallel_map(fn, items):
    items = list(items)
    n_workers = min(worker_count(), len(items))
    if n_workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))


class QuadraticStageCost:
    """Reference-tracking quadratic cost ``(x-xr)'Q(x-xr) + (u-ur)'R(u-ur)``."""

    def __init__(self, q_diag, r_diag, x_ref=None, u_ref=None):
        self.Q = np.diag(np.asarray(q_diag, dtype=float)) if np.ndim(q_diag) == 1 else np.asarray(q_diag, dtype=float)
        self.R = np.diag(np.asarray(r_diag, dtype=float)) if np.ndim(r_diag) == 1 else np.asarray(r_diag, dtype=float)
        self.x_ref = np.zeros(self.Q.shape[0]) if x_ref is None else np.asarray(x_ref, dtype=float)
        self.u_ref = np.zeros(self.R.shape[0]) if u_ref is None else np.asarray(u_ref, dtype=float)

    def value(self, x, u):
        ex = x - self.x_ref
        eu = u - self.u_ref
        return float(ex @ self.Q @ ex + eu @ self.R @ eu)

    def gradient(self, x, u):
        return 2.0 * self.Q @ (x - self.x_ref), 2.0 * self.R @ (u - self.u_ref)

    def hessian_block(self):
        n_x, n_u = self.Q.shape[0], self.R.shape[0]
        h = np.zeros((n_x + n_u, n_x + n_u))
        h[:n_x, :n_x] = 2.0 * self.Q
        h[n_x:, n_x:] = 2.0 * self.R
        return h


@dataclass
class OcpDefinition:
    """Everything the controller needs: system geometry, GP models, cost,
    horizon, sample count and solver knobs.  The ground-truth residual is
    not reachable from here."""

    system: object
    models: list
    horizon: int
    n_samples: int
    cost: QuadraticStageCost
    conf: ConfidenceParams = field(default_factory=ConfidenceParams)
    sampler_options: SamplerOptions = field(default_factory=SamplerOptions)
    terminal_cost: object = None
    soft_constraints: bool = True
    slack_weight: float = 1e4
    qp_tol: float = 1e-8
    qp_max_iter: int = 100
    u_init: np.ndarray = None

    def __post_init__(self):
        if self.horizon < 1 or self.n_samples < 1:
            raise ValueError("horizon and n_samples must be >= 1")
        if self.u_init is None:
            self.u_init = np.zeros(self.system.n_u)
        self.u_init = np.asarray(self.u_init, dtype=float)
        sys = self.system
        stage = sys.stage_constraints()
        self._stage_linear = [c for c in stage if hasattr(c, "a")]
        self._stage_nonlinear = [c for c in stage if not hasattr(c, "a")]
        self._lin_gx = np.array([c.a for c in self._stage_linear]).reshape(-1, sys.n_x)
        self._lin_gu = np.array([c.b for c in self._stage_linear]).reshape(-1, sys.n_u)
        self._lin_c = np.array([c.c for c in self._stage_linear])
        term = sys.terminal_constraints()
        self._term_linear = [c for c in term if hasattr(c, "a")]
        self._term_nonlinear = [c for c in term if not hasattr(c, "a")]
        self._term_gx = np.array([c.a for c in self._term_linear]).reshape(-1, sys.n_x)
        self._term_c = np.array([c.c for c in self._term_linear])
        self.stage_names = [c.name for c in self._stage_linear] + [
            c.name for c in self._stage_nonlinear
        ]
        self.term_names = [c.name for c in self._term_linear] + [
            c.name for c in self._term_nonlinear
        ]
        self.soft_stage = np.array(
            [c.soft for c in self._stage_linear] + [c.soft for c in self._stage_nonlinear],
            dtype=bool,
        )
        self.soft_term = np.array(
            [c.soft for c in self._term_linear] + [c.soft for c in self._term_nonlinear],
            dtype=bool,
        )

    @property
    def n_stage_rows(self):
        return len(self.stage_names)

    @property
    def n_term_rows(self):
        return len(self.term_names)

    def stage_rows(self, x, u):
        """Values and Jacobians of all stage constraint rows at one point."""
        mc = self.n_stage_rows
        vals = np.empty(mc)
        gx = np.empty((mc, self.system.n_x))
        gu = np.empty((mc, self.system.n_u))
        ml = len(self._stage_linear)
        if ml:
            vals[:ml] = self._lin_gx @ x + self._lin_gu @ u - self._lin_c
            gx[:ml] = self._lin_gx
            gu[:ml] = self._lin_gu
        for j, c in enumerate(self._stage_nonlinear):
            vals[ml + j] = c.value(x, u)
            gx[ml + j], gu[ml + j] = c.jac(x, u)
        return vals, gx, gu

    def terminal_rows(self, x):
        mt = self.n_term_rows
        vals = np.empty(mt)
        gx = np.empty((mt, self.system.n_x))
        ml = len(self._term_linear)
        if ml:
            vals[:ml] = self._term_gx @ x - self._term_c
            gx[:ml] = self._term_gx
        for j, c in enumerate(self._term_nonlinear):
            vals[ml + j] = c.value(x)
            gx[ml + j], _ = c.jac(x)
        return vals, gx


@dataclass
class SqpIterate:
    """Shared input sequence plus per-sample state sequences and samplers."""

    u: np.ndarray  # (H, n_u)
    x: np.ndarray  # (N, H+1, n_x)
    samples: list  # SampledDynamics per sample
    iteration: int = 0

    def replaced(self, u, x):
        return SqpIterate(u=u, x=x, samples=self.samples, iteration=self.iteration + 1)


@dataclass
class LinearizationData:
    """Per-stage/sample linearization of dynamics, cost and constraints."""

    resid: np.ndarray  # (N, H, n_x)
    a_mats: np.ndarray  # (N, H, n_x, n_x)
    b_mats: np.ndarray  # (N, H, n_x, n_u)
    hess: np.ndarray  # (N, H, nxu, nxu)
    grad: np.ndarray  # (N, H, nxu)
    stage_vals: np.ndarray  # (N, H, mc)
    stage_gx: np.ndarray
    stage_gu: np.ndarray
    term_vals: np.ndarray  # (N, mt)
    term_gx: np.ndarray
    nlp_cost: float
    diagnostics: dict = field(default_factory=dict)


def make_initial_guess(ocp: OcpDefinition, x0, master_seed, expected_draw_calls=8):
    """Initial iterate: inputs at the default value, states rolled out under
    the posterior-mean residual, fresh sampler states."""
    sys = ocp.system
    x0 = np.asarray(x0, dtype=float)
    hor = ocp.horizon
    u = np.tile(ocp.u_init, (hor, 1))
    x_mean = np.empty((hor + 1, sys.n_x))
    x_mean[0] = x0
    for i in range(hor):
        z = sys.features(x_mean[i], u[i])
        mu = np.array([m.value_stats(z[None, :])[0][0] for m in ocp.models])
        x_mean[i + 1] = sys.f(x_mean[i], u[i]) + sys.B_d @ mu
    x = np.tile(x_mean, (ocp.n_samples, 1, 1))
    hint = (expected_draw_calls + 2) * hor
    samples = [
        SampledDynamics(
            ocp.models, n, master_seed, ocp.conf.sqrt_beta,
            options=ocp.sampler_options, capacity_hint=hint,
        )
        for n in range(ocp.n_samples)
    ]
    return SqpIterate(u=u, x=x, samples=samples)


def prepare(iterate: SqpIterate, ocp: OcpDefinition):
    """Preparation phase: draw residual values/Jacobians for every sample at
    the current iterate and assemble the QP data."""
    sys = ocp.system
    hor, n_samp = ocp.horizon, ocp.n_samples
    n_x, n_u = sys.n_x, sys.n_u
    nxu = n_x + n_u
    mc, mt = ocp.n_stage_rows, ocp.n_term_rows

    def draw_for(n):
        z = np.array(
            [sys.features(iterate.x[n, i], iterate.u[i]) for i in range(hor)]
        )
        return iterate.samples[n].draw_joint(z, with_gradients=True)

    joints = _parallel_map(draw_for, range(n_samp))

    lin = LinearizationData(
        resid=np.empty((n_samp, hor, n_x)),
        a_mats=np.empty((n_samp, hor, n_x, n_x)),
        b_mats=np.empty((n_samp, hor, n_x, n_u)),
        hess=np.empty((n_samp, hor, nxu, nxu)),
        grad=np.empty((n_samp, hor, nxu)),
        stage_vals=np.empty((n_samp, hor, mc)),
        stage_gx=np.empty((n_samp, hor, mc, n_x)),
        stage_gu=np.empty((n_samp, hor, mc, n_u)),
        term_vals=np.empty((n_samp, mt)),
        term_gx=np.empty((n_samp, mt, n_x)),
        nlp_cost=0.0,
    )
    hess_block = ocp.cost.hessian_block()
    total_cost = 0.0
    for n in range(n_samp):
        js = joints[n]
        for i in range(hor):
            xi, ui = iterate.x[n, i], iterate.u[i]
            fx, fu = sys.f_jac(xi, ui)
            g_jac = js.gradients[i].T  # (n_g, n_z)
            lin.a_mats[n, i] = fx + sys.B_d @ g_jac @ sys.S_x
            lin.b_mats[n, i] = fu + sys.B_d @ g_jac @ sys.S_u
            lin.resid[n, i] = (
                sys.f(xi, ui) + sys.B_d @ js.values[i] - iterate.x[n, i + 1]
            )
            gx_cost, gu_cost = ocp.cost.gradient(xi, ui)
            lin.hess[n, i] = hess_block
            lin.grad[n, i, :n_x] = gx_cost
            lin.grad[n, i, n_x:] = gu_cost
            total_cost += ocp.cost.value(xi, ui)
            lin.stage_vals[n, i], lin.stage_gx[n, i], lin.stage_gu[n, i] = ocp.stage_rows(
                xi, ui
            )
        lin.term_vals[n], lin.term_gx[n] = ocp.terminal_rows(iterate.x[n, hor])
    lin.nlp_cost = total_cost / n_samp
    lin.diagnostics = {
        "attempts": np.array([js.attempts for js in joints]),
        "clamped": np.array([js.clamped for js in joints]),
        "snapped": np.array([js.n_snapped for js in joints]),
        "frozen": np.array([js.n_frozen for js in joints]),
    }
    return lin


def build_qp(lin: LinearizationData, ocp: OcpDefinition):
    layout = QpLayout(
        n_samples=ocp.n_samples, horizon=ocp.horizon,
        n_x=ocp.system.n_x, n_u=ocp.system.n_u,
    )
    return QpProblem(
        layout=layout,
        hess=lin.hess,
        grad=lin.grad,
        a_mats=lin.a_mats,
        b_mats=lin.b_mats,
        resid=lin.resid,
        gx=lin.stage_gx,
        gu=lin.stage_gu,
        rhs=-lin.stage_vals,
        gx_term=lin.term_gx,
        rhs_term=-lin.term_vals,
        soft_stage=ocp.soft_stage,
        soft_term=ocp.soft_term,
        slack_weight=ocp.slack_weight,
        const_cost=lin.nlp_cost,
    )


def feedback(iterate: SqpIterate, lin: LinearizationData, ocp: OcpDefinition,
             method="condensed"):
    """Feedback phase: solve the QP and take the full step."""
    problem = build_qp(lin, ocp)
    sol = qp_solve(
        problem, tol=ocp.qp_tol, max_iter=ocp.qp_max_iter, method=method,
        enforce_hard=not ocp.soft_constraints,
    )
    if sol.status == "infeasible":
        viol = lin.stage_vals
        n, i, row = np.unravel_index(np.argmax(viol), viol.shape)
        raise QpInfeasibleError(
            f"QP infeasible (worst linearized row {ocp.stage_names[row]} at "
            f"sample {n}, stage {i})",
            stage=int(i), sample=int(n), row=ocp.stage_names[row],
        )
    new_u = iterate.u + sol.du
    new_x = iterate.x + sol.dx
    norms = (
        float(np.max(np.abs(sol.du), initial=0.0)),
        float(np.max(np.abs(sol.dx), initial=0.0)),
    )
    return iterate.replaced(new_u, new_x), norms, sol


def run_sqp(ocp: OcpDefinition, x0, guess=None, iters=10, master_seed=0,
            method="condensed"):
    """Run a fixed number of (preparation, feedback) rounds.

    All ``iters`` rounds execute even if the step norm reaches zero early;
    returns the final iterate and per-iteration diagnostics.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if guess is None:
        guess = make_initial_guess(ocp, x0, master_seed, expected_draw_calls=iters)
    iterate = guess
    iterate.x[:, 0] = np.asarray(x0, dtype=float)
    diags = []
    for _ in range(iters):
        t0 = time.perf_counter()
        lin = prepare(iterate, ocp)
        t1 = time.perf_counter()
        iterate, norms, sol = feedback(iterate, lin, ocp, method=method)
        t2 = time.perf_counter()
        diags.append(
            {
                "du_norm": norms[0],
                "dx_norm": norms[1],
                "qp_status": sol.status,
                "qp_iterations": sol.iterations,
                "nlp_cost": lin.nlp_cost,
                "max_slack": sol.max_slack,
                "attempts_max": int(lin.diagnostics["attempts"].max(initial=0)),
                "n_clamped": int(lin.diagnostics["clamped"].sum()),
                "prepare_s": t1 - t0,
                "feedback_s": t2 - t1,
            }
        )
    return iterate, diags


def simulate_sample_rollout(system, sample: SampledDynamics, x0, u_seq):
    """Forward-simulate one realized residual sample under a fixed input
    sequence, conditioning sequentially along the horizon."""
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    x = np.empty((u_seq.shape[0] + 1, system.n_x))
    x[0] = np.asarray(x0, dtype=float)
    for i, u in enumerate(u_seq):
        z = system.features(x[i], u)
        js = sample.draw_joint(z[None, :], with_gradients=False)
        x[i + 1] = system.f(x[i], u) + system.B_d @ js.values[0]
    return x


def verify_rollout_consistency(iterate: SqpIterate, ocp: OcpDefinition):
    """Deviation between the SQP state sequences and plain forward
    simulations of the same realized samples under the shared inputs.

    At an SQP fixed point the two coincide; far from convergence the
    deviation is reported, not an error.
    """
    devs = np.empty(ocp.n_samples)
    for n, sample in enumerate(iterate.samples):
        sim = simulate_sample_rollout(
            ocp.system, sample.clone(), iterate.x[n, 0], iterate.u
        )
        devs[n] = np.max(np.abs(sim - iterate.x[n]))
    return float(devs.max()), devs


@dataclass
class FeasibilityReport:
    """Per-constraint violation summary over all samples and stages."""

    max_violation: float
    per_constraint: dict
    tol: float

    def violated(self):
        return {k: v for k, v in self.per_constraint.items() if v[0] > self.tol}

    def ok(self):
        return self.max_violation <= self.tol


def check_open_loop_feasibility(iterate: SqpIterate, ocp: OcpDefinition, tol=1e-6):
    """Evaluate every constraint along all sampled trajectories.

    Positive values are violations; the report carries the worst (sample,
    stage) locator per constraint row.
    """
    per = {}
    worst = -np.inf
    for n in range(ocp.n_samples):
        for i in range(ocp.horizon):
            vals, _, _ = ocp.stage_rows(iterate.x[n, i], iterate.u[i])
            for name, v in zip(ocp.stage_names, vals):
                cur = per.get(name)
                if cur is None or v > cur[0]:
                    per[name] = (float(v), (n, i))
                worst = max(worst, v)
        vals, _ = ocp.terminal_rows(iterate.x[n, ocp.horizon])
        for name, v in zip(ocp.term_names, vals):
            key = name + "_terminal"
            cur = per.get(key)
            if cur is None or v > cur[0]:
                per[key] = (float(v), (n, ocp.horizon))
            worst = max(worst, v)
    return FeasibilityReport(max_violation=float(worst), per_constraint=per, tol=tol)
