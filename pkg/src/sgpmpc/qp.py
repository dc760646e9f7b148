"""Block-sparse QP backend for the multi-sample optimal-control subproblem.

The structured problem couples per-sample state steps through one shared
input sequence.  Two solve paths are provided: a condensed path that
eliminates the state steps through the linearized dynamics and solves a
dense QP in the inputs only (used at runtime), and a sparse path that keeps
all variables (used as a cross-check on small instances).  Both sit on one
dense primal-dual interior-point core.

Soft rows carry an L1 slack penalty that is eliminated analytically inside
the Newton systems, so the reduced linear algebra never grows with the
number of softened constraints.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .errors import QpInfeasibleError


@dataclass(frozen=True)
class QpLayout:
    """Variable layout: shared input steps, per-sample state steps."""

    n_samples: int
    horizon: int
    n_x: int
    n_u: int

    @property
    def n_inputs(self):
        return self.horizon * self.n_u

    @property
    def n_states_per_sample(self):
        return (self.horizon + 1) * self.n_x


@dataclass
class QpProblem:
    """Data of one multi-sample QP.

    Stage cost blocks are given in (dx, du) coordinates; the objective is
    ``(1/N) sum_n sum_i 0.5 v' H v + q' v`` with ``v = (dx_i^n, du_i)``.
    Inequality rows are ``gx dx + gu du <= rhs``; dynamics equalities are
    ``dx_{i+1} = a dx_i + b du_i + r`` with ``dx_0 = 0``.
    """

    layout: QpLayout
    hess: np.ndarray  # (N, H, nxu, nxu)
    grad: np.ndarray  # (N, H, nxu)
    a_mats: np.ndarray  # (N, H, n_x, n_x)
    b_mats: np.ndarray  # (N, H, n_x, n_u)
    resid: np.ndarray  # (N, H, n_x)
    gx: np.ndarray  # (N, H, mc, n_x)
    gu: np.ndarray  # (N, H, mc, n_u)
    rhs: np.ndarray  # (N, H, mc)
    gx_term: np.ndarray  # (N, mt, n_x)
    rhs_term: np.ndarray  # (N, mt)
    soft_stage: np.ndarray  # (mc,) bool
    soft_term: np.ndarray  # (mt,) bool
    slack_weight: float = 1e4
    const_cost: float = 0.0

    def regularized_hessians(self, floor=1e-8):
        """Stage blocks with eigenvalue floor enforced by diagonal shift."""
        h = 0.5 * (self.hess + np.swapaxes(self.hess, -1, -2))
        eig = np.linalg.eigvalsh(h)
        shift = np.clip(floor - eig[..., 0], 0.0, None)
        out = h.copy()
        idx = np.arange(h.shape[-1])
        out[..., idx, idx] += shift[..., None]
        return out


@dataclass
class QpSolution:
    du: np.ndarray  # (H, n_u)
    dx: np.ndarray  # (N, H+1, n_x)
    status: str  # optimal | max-iter | infeasible
    duals_ineq_stage: np.ndarray  # (N, H, mc)
    duals_ineq_term: np.ndarray  # (N, mt)
    duals_eq: np.ndarray  # (N, H, n_x) for the dynamics rows
    duals_init: np.ndarray  # (N, n_x) for the pinned initial steps
    kkt: dict = field(default_factory=dict)
    iterations: int = 0
    max_slack: float = 0.0


# ---------------------------------------------------------------------------
# Dense interior-point core
# ---------------------------------------------------------------------------


@dataclass
class DenseQpResult:
    x: np.ndarray
    duals_ineq: np.ndarray
    duals_eq: np.ndarray
    slacks_soft: np.ndarray
    status: str
    iterations: int
    kkt: dict


def solve_dense_qp(
    hess,
    grad,
    g_ineq=None,
    h_ineq=None,
    a_eq=None,
    b_eq=None,
    soft=None,
    slack_weight=1e4,
    tol=1e-8,
    max_iter=100,
):
    """Mehrotra predictor-corrector interior point for a dense convex QP.

    Minimizes ``0.5 x' H x + q' x (+ rho * sum soft violations)`` subject to
    ``G x <= h`` and ``A x = b``.  Soft rows may violate their bound at an L1
    price of ``slack_weight``; their slacks are eliminated analytically so
    each Newton step reduces to an ``n x n`` (plus equalities) solve.
    """
    hess = np.asarray(hess, dtype=float)
    grad = np.asarray(grad, dtype=float)
    n = grad.size
    if g_ineq is None or len(g_ineq) == 0:
        g_ineq = np.zeros((0, n))
        h_ineq = np.zeros(0)
    g_ineq = np.asarray(g_ineq, dtype=float)
    h_ineq = np.asarray(h_ineq, dtype=float)
    m = g_ineq.shape[0]
    if a_eq is None or len(a_eq) == 0:
        a_eq = np.zeros((0, n))
        b_eq = np.zeros(0)
    a_eq = np.asarray(a_eq, dtype=float)
    b_eq = np.asarray(b_eq, dtype=float)
    p = a_eq.shape[0]
    if soft is None:
        soft = np.zeros(m, dtype=bool)
    soft = np.asarray(soft, dtype=bool)
    rho = float(slack_weight)

    if m == 0 and p == 0:
        x = np.linalg.solve(hess, -grad)
        return DenseQpResult(
            x, np.zeros(0), np.zeros(0), np.zeros(0), "optimal", 0,
            {"stationarity": 0.0, "primal": 0.0, "equality": 0.0, "complementarity": 0.0},
        )

    # Starting point: unconstrained minimizer, strictly positive slack pairs.
    x = np.linalg.solve(hess + 1e-8 * np.eye(n), -grad)
    y = np.zeros(p)
    gap0 = g_ineq @ x - h_ineq if m else np.zeros(0)
    t = np.maximum(1.0, -gap0 + 1.0)
    z = np.ones(m)
    s = np.where(soft, np.maximum(gap0 + t, 1.0), 0.0)
    w = np.where(soft, np.maximum(rho - z, 0.5 * rho), 1.0)
    z = np.where(soft, np.minimum(z, 0.5 * rho), z)
    n_pairs = m + int(soft.sum())

    # Residual scales for the relative termination test.
    scale_d = 1.0 + float(np.max(np.abs(grad), initial=0.0))
    scale_p = 1.0 + float(np.max(np.abs(h_ineq), initial=0.0))
    scale_e = 1.0 + float(np.max(np.abs(b_eq), initial=0.0))

    status = "max-iter"
    iters = 0
    stall = 0
    best = None
    any_soft = bool(soft.any())
    for iters in range(1, max_iter + 1):
        gx_vec = g_ineq @ x if m else np.zeros(0)
        gtz = g_ineq.T @ z if m else np.zeros(n)
        hx = hess @ x
        r_d = hx + grad + gtz + (a_eq.T @ y if p else 0.0)
        r_e = a_eq @ x - b_eq
        r_p = gx_vec - s + t - h_ineq
        r_w = np.where(soft, z + w - rho, 0.0)
        mu = (t @ z + (s[soft] @ w[soft] if any_soft else 0.0)) / max(n_pairs, 1)
        feas = float(np.max(np.maximum(gx_vec - s - h_ineq, 0.0), initial=0.0))
        sc_d = scale_d + float(np.max(np.abs(hx), initial=0.0)) + float(
            np.max(np.abs(gtz), initial=0.0) if m else 0.0
        )
        kkt = {
            "stationarity": float(np.max(np.abs(r_d), initial=0.0)) / sc_d,
            "primal": feas / scale_p,
            "equality": float(np.max(np.abs(r_e), initial=0.0)) / scale_e,
            "complementarity": float(mu) / scale_d,
        }
        merit = kkt["stationarity"] + kkt["primal"] + kkt["equality"] + kkt["complementarity"]
        if best is None or merit < best[0]:
            best = (merit, x.copy(), y.copy(), z.copy(), s.copy(), kkt)
        if max(kkt.values()) < tol:
            status = "optimal"
            break

        d = t / np.maximum(z, 1e-300) + np.where(soft, s / np.maximum(w, 1e-300), 0.0)
        d_inv = np.minimum(1.0 / np.maximum(d, 1e-300), 1e16)
        m_red = hess + (g_ineq * d_inv[:, None]).T @ g_ineq if m else hess.copy()

        if p:
            kkt_mat = np.zeros((n + p, n + p))
            kkt_mat[:n, :n] = m_red
            kkt_mat[:n, n:] = a_eq.T
            kkt_mat[n:, :n] = a_eq
            fac = lu_factor(kkt_mat)

            def lin_solve(rhs):
                sol = lu_solve(fac, rhs)
                sol += lu_solve(fac, rhs - kkt_mat @ sol)  # one refinement pass
                return sol

        else:
            try:
                fac = cho_factor(m_red)
            except np.linalg.LinAlgError:
                fac = cho_factor(m_red + 1e-12 * np.trace(m_red) / n * np.eye(n))

            def lin_solve(rhs):
                sol = cho_solve(fac, rhs)
                sol += cho_solve(fac, rhs - m_red @ sol)
                return sol

        def newton(r_c1, r_c2):
            rhs_z = r_p - r_c1 / np.maximum(z, 1e-300) - np.where(
                soft, (-r_c2 + s * r_w) / np.maximum(w, 1e-300), 0.0
            )
            rhs_x = -r_d - g_ineq.T @ (d_inv * rhs_z)
            if p:
                sol = lin_solve(np.concatenate([rhs_x, -r_e]))
                dx, dy = sol[:n], sol[n:]
            else:
                dx = lin_solve(rhs_x)
                dy = np.zeros(0)
            dz = d_inv * (g_ineq @ dx + rhs_z)
            dt = -(r_c1 + t * dz) / np.maximum(z, 1e-300)
            dw = np.where(soft, -r_w - dz, 0.0)
            ds = np.where(soft, -(r_c2 + s * dw) / np.maximum(w, 1e-300), 0.0)
            return dx, dy, dz, dt, ds, dw

        def step_lengths(dz, dt, ds, dw):
            def ratio(v, dv, mask=None):
                neg = dv < 0
                if mask is not None:
                    neg &= mask
                if not np.any(neg):
                    return 1.0
                return float(min(1.0, np.min(-v[neg] / dv[neg])))

            a_p = min(ratio(t, dt), ratio(s, ds, soft))
            a_d = min(ratio(z, dz), ratio(w, dw, soft))
            return a_p, a_d

        # Predictor (affine) step.
        r_c1 = t * z
        r_c2 = np.where(soft, s * w, 0.0)
        dxa, dya, dza, dta, dsa, dwa = newton(r_c1, r_c2)
        a_p, a_d = step_lengths(dza, dta, dsa, dwa)
        mu_aff = (
            (t + a_p * dta) @ (z + a_d * dza)
            + ((s + a_p * dsa)[soft] @ (w + a_d * dwa)[soft] if soft.any() else 0.0)
        ) / max(n_pairs, 1)
        sigma = (max(mu_aff, 0.0) / max(mu, 1e-300)) ** 3

        # Corrector step.
        r_c1 = t * z + dta * dza - sigma * mu
        r_c2 = np.where(soft, s * w + dsa * dwa - sigma * mu, 0.0)
        dx, dy, dz, dt, ds, dw = newton(r_c1, r_c2)
        a_p, a_d = step_lengths(dz, dt, ds, dw)
        a_p = min(1.0, 0.99995 * a_p)
        a_d = min(1.0, 0.99995 * a_d)

        if max(a_p, a_d) < 1e-10:
            stall += 1
            if stall >= 3:
                status = "infeasible" if kkt["primal"] > 1e3 * tol else "max-iter"
                break
        else:
            stall = 0

        x = x + a_p * dx
        t = np.maximum(t + a_p * dt, 1e-250)
        s = np.where(soft, np.maximum(s + a_p * ds, 1e-250), 0.0)
        y = y + a_d * dy
        z = np.maximum(z + a_d * dz, 1e-250)
        w = np.where(soft, np.maximum(w + a_d * dw, 1e-250), 1.0)

    if status == "max-iter":
        _, x, y, z, s, kkt = best
        if kkt["primal"] > max(1e3 * tol, 1e-6) and not soft.any():
            status = "infeasible"
    result_kkt = kkt if status == "optimal" else best[5]
    return DenseQpResult(
        x=x,
        duals_ineq=z,
        duals_eq=y,
        slacks_soft=s,
        status=status,
        iterations=iters,
        kkt=result_kkt,
    )


# ---------------------------------------------------------------------------
# Condensing and the structured solve
# ---------------------------------------------------------------------------


@dataclass
class CondensedQp:
    """Dense reduction of a structured QP to the shared inputs."""

    hess: np.ndarray  # (nU, nU)
    grad: np.ndarray  # (nU,)
    g_ineq: np.ndarray  # (m, nU)
    h_ineq: np.ndarray  # (m,)
    soft: np.ndarray  # (m,) bool
    offsets: np.ndarray  # (N, H+1, n_x) state offsets at dU = 0
    gains: np.ndarray  # (N, H+1, n_x, nU) state sensitivity to dU
    const_cost: float = 0.0
    row_map: list = None  # (sample | -1 shared, stage | -1 terminal, row)

    def expand(self, du_flat):
        """Recover the per-sample state steps for a given input step."""
        return self.offsets + self.gains @ du_flat


def condense(qp: QpProblem):
    """Eliminate per-sample state steps through the dynamics equalities."""
    lay = qp.layout
    n_samp, hor, n_x, n_u = lay.n_samples, lay.horizon, lay.n_x, lay.n_u
    n_big = lay.n_inputs
    hess = qp.regularized_hessians()

    offsets = np.zeros((n_samp, hor + 1, n_x))
    gains = np.zeros((n_samp, hor + 1, n_x, n_big))
    for n in range(n_samp):
        for i in range(hor):
            a, b = qp.a_mats[n, i], qp.b_mats[n, i]
            offsets[n, i + 1] = qp.resid[n, i] + a @ offsets[n, i]
            gains[n, i + 1] = a @ gains[n, i]
            gains[n, i + 1, :, i * n_u : (i + 1) * n_u] += b

    h_red = np.zeros((n_big, n_big))
    q_red = np.zeros(n_big)
    const = qp.const_cost
    scale = 1.0 / n_samp
    for n in range(n_samp):
        for i in range(hor):
            jac = np.zeros((n_x + n_u, n_big))
            jac[:n_x] = gains[n, i]
            jac[n_x:, i * n_u : (i + 1) * n_u] = np.eye(n_u)
            v0 = np.zeros(n_x + n_u)
            v0[:n_x] = offsets[n, i]
            hb = hess[n, i]
            qb = qp.grad[n, i]
            h_red += scale * jac.T @ hb @ jac
            q_red += scale * jac.T @ (hb @ v0 + qb)
            const += scale * (0.5 * v0 @ hb @ v0 + qb @ v0)
    h_red = 0.5 * (h_red + h_red.T)

    # Rows acting on the inputs only are identical for every sample (shared
    # input sequence); emit them once and remember the replication map.
    mc = qp.gx.shape[2]
    input_only = np.zeros(mc, dtype=bool)
    if mc:
        zero_gx = np.all(qp.gx == 0.0, axis=(0, 3))  # (H, mc)
        same = np.all(qp.rhs == qp.rhs[:1], axis=0) & np.all(
            qp.gu == qp.gu[:1], axis=0
        ).all(axis=2)
        # Soft rows keep their per-sample copies so the L1 weight is unchanged.
        input_only = np.all(zero_gx & same, axis=0) & ~qp.soft_stage

    rows = []
    rhs = []
    soft = []
    row_map = []  # (sample or -1 for shared, stage or -1 for terminal, row index)
    for i in range(hor):
        for r in np.nonzero(input_only)[0]:
            block = np.zeros((1, n_big))
            block[0, i * n_u : (i + 1) * n_u] = qp.gu[0, i, r]
            rows.append(block)
            rhs.append(qp.rhs[0, i, r : r + 1])
            soft.append(qp.soft_stage[r : r + 1])
            row_map.append((-1, i, int(r)))
    per_sample = np.nonzero(~input_only)[0]
    for n in range(n_samp):
        for i in range(hor):
            if per_sample.size:
                block = qp.gx[n, i, per_sample] @ gains[n, i]
                cols = slice(i * n_u, (i + 1) * n_u)
                block[:, cols] += qp.gu[n, i, per_sample]
                rows.append(block)
                rhs.append(
                    qp.rhs[n, i, per_sample] - qp.gx[n, i, per_sample] @ offsets[n, i]
                )
                soft.append(qp.soft_stage[per_sample])
                row_map.extend((n, i, int(r)) for r in per_sample)
        if qp.gx_term.shape[1]:
            rows.append(qp.gx_term[n] @ gains[n, hor])
            rhs.append(qp.rhs_term[n] - qp.gx_term[n] @ offsets[n, hor])
            soft.append(qp.soft_term)
            row_map.extend((n, -1, int(r)) for r in range(qp.gx_term.shape[1]))
    if rows:
        g_ineq = np.vstack(rows)
        h_ineq = np.concatenate(rhs)
        soft = np.concatenate(soft)
    else:
        g_ineq = np.zeros((0, n_big))
        h_ineq = np.zeros(0)
        soft = np.zeros(0, dtype=bool)
    return CondensedQp(
        hess=h_red, grad=q_red, g_ineq=g_ineq, h_ineq=h_ineq, soft=soft,
        offsets=offsets, gains=gains, const_cost=const, row_map=row_map,
    )


def _recover_eq_duals(qp, hess, du, dx, z_stage, z_term):
    """Costates of the dynamics rows by backward recursion (per sample)."""
    lay = qp.layout
    n_samp, hor, n_x, n_u = lay.n_samples, lay.horizon, lay.n_x, lay.n_u
    scale = 1.0 / n_samp
    nu = np.zeros((n_samp, hor, n_x))
    pi = np.zeros((n_samp, n_x))
    for n in range(n_samp):
        running = qp.gx_term[n].T @ z_term[n] if qp.gx_term.shape[1] else np.zeros(n_x)
        nu[n, hor - 1] = -running
        for i in range(hor - 1, -1, -1):
            v = np.concatenate([dx[n, i], du[i]])
            grad_x = scale * (hess[n, i] @ v + qp.grad[n, i])[:n_x]
            if qp.gx.shape[2]:
                grad_x = grad_x + qp.gx[n, i].T @ z_stage[n, i]
            total = grad_x - qp.a_mats[n, i].T @ nu[n, i]
            if i > 0:
                nu[n, i - 1] = -total
            else:
                pi[n] = -total
    return nu, pi


def solve(qp: QpProblem, tol=1e-8, max_iter=100, method="condensed", enforce_hard=False):
    """Solve the structured QP; returns a :class:`QpSolution`.

    ``method`` selects the condensed input-space path or the sparse
    all-variables path (cross-check on small instances).
    """
    lay = qp.layout
    soft_stage = np.zeros_like(qp.soft_stage) if enforce_hard else qp.soft_stage
    soft_term = np.zeros_like(qp.soft_term) if enforce_hard else qp.soft_term
    qp_eff = QpProblem(
        layout=lay, hess=qp.hess, grad=qp.grad, a_mats=qp.a_mats, b_mats=qp.b_mats,
        resid=qp.resid, gx=qp.gx, gu=qp.gu, rhs=qp.rhs, gx_term=qp.gx_term,
        rhs_term=qp.rhs_term, soft_stage=soft_stage, soft_term=soft_term,
        slack_weight=qp.slack_weight, const_cost=qp.const_cost,
    )
    if method == "condensed":
        return _solve_condensed(qp_eff, tol, max_iter)
    if method == "sparse":
        return _solve_sparse(qp_eff, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def _split_duals(qp, z):
    lay = qp.layout
    n_samp, hor = lay.n_samples, lay.horizon
    mc = qp.gx.shape[2]
    mt = qp.gx_term.shape[1]
    z_stage = np.zeros((n_samp, hor, mc))
    z_term = np.zeros((n_samp, mt))
    pos = 0
    for n in range(n_samp):
        for i in range(hor):
            z_stage[n, i] = z[pos : pos + mc]
            pos += mc
        z_term[n] = z[pos : pos + mt]
        pos += mt
    return z_stage, z_term


def _solve_condensed(qp, tol, max_iter):
    lay = qp.layout
    cond = condense(qp)
    res = solve_dense_qp(
        cond.hess, cond.grad, cond.g_ineq, cond.h_ineq,
        soft=cond.soft, slack_weight=qp.slack_weight, tol=tol, max_iter=max_iter,
    )
    du = res.x.reshape(lay.horizon, lay.n_u)
    dx = cond.expand(res.x)
    mc = qp.gx.shape[2]
    mt = qp.gx_term.shape[1]
    z_stage = np.zeros((lay.n_samples, lay.horizon, mc))
    z_term = np.zeros((lay.n_samples, mt))
    for z_val, (n, i, r) in zip(res.duals_ineq, cond.row_map):
        if n < 0:  # shared input row; attribute the dual to sample 0
            z_stage[0, i, r] = z_val
        elif i < 0:
            z_term[n, r] = z_val
        else:
            z_stage[n, i, r] = z_val
    nu, pi = _recover_eq_duals(qp, qp.regularized_hessians(), du, dx, z_stage, z_term)
    return QpSolution(
        du=du, dx=dx, status=res.status,
        duals_ineq_stage=z_stage, duals_ineq_term=z_term,
        duals_eq=nu, duals_init=pi, kkt=res.kkt, iterations=res.iterations,
        max_slack=float(np.max(res.slacks_soft, initial=0.0)),
    )


def _solve_sparse(qp, tol, max_iter):
    lay = qp.layout
    n_samp, hor, n_x, n_u = lay.n_samples, lay.horizon, lay.n_x, lay.n_u
    n_inp = lay.n_inputs
    n_st = lay.n_states_per_sample
    n_var = n_inp + n_samp * n_st
    hess_blocks = qp.regularized_hessians()

    def x_off(n, i):
        return n_inp + n * n_st + i * n_x

    big_h = np.zeros((n_var, n_var))
    big_q = np.zeros(n_var)
    scale = 1.0 / n_samp
    for n in range(n_samp):
        # Terminal steps only enter through equalities; keep them weakly
        # regularized so the KKT system stays nonsingular.
        xo = x_off(n, hor)
        big_h[xo : xo + n_x, xo : xo + n_x] += 1e-10 * np.eye(n_x)
        for i in range(hor):
            xo = x_off(n, i)
            uo = i * n_u
            hb = scale * hess_blocks[n, i]
            qb = scale * qp.grad[n, i]
            big_h[xo : xo + n_x, xo : xo + n_x] += hb[:n_x, :n_x]
            big_h[xo : xo + n_x, uo : uo + n_u] += hb[:n_x, n_x:]
            big_h[uo : uo + n_u, xo : xo + n_x] += hb[n_x:, :n_x]
            big_h[uo : uo + n_u, uo : uo + n_u] += hb[n_x:, n_x:]
            big_q[xo : xo + n_x] += qb[:n_x]
            big_q[uo : uo + n_u] += qb[n_x:]

    n_eq = n_samp * (n_x + hor * n_x)
    a_eq = np.zeros((n_eq, n_var))
    b_eq = np.zeros(n_eq)
    row = 0
    for n in range(n_samp):
        a_eq[row : row + n_x, x_off(n, 0) : x_off(n, 0) + n_x] = np.eye(n_x)
        row += n_x
        for i in range(hor):
            a_eq[row : row + n_x, x_off(n, i + 1) : x_off(n, i + 1) + n_x] = np.eye(n_x)
            a_eq[row : row + n_x, x_off(n, i) : x_off(n, i) + n_x] = -qp.a_mats[n, i]
            a_eq[row : row + n_x, i * n_u : (i + 1) * n_u] = -qp.b_mats[n, i]
            b_eq[row : row + n_x] = qp.resid[n, i]
            row += n_x

    mc = qp.gx.shape[2]
    mt = qp.gx_term.shape[1]
    n_ineq = n_samp * (hor * mc + mt)
    g_ineq = np.zeros((n_ineq, n_var))
    h_ineq = np.zeros(n_ineq)
    soft = np.zeros(n_ineq, dtype=bool)
    row = 0
    for n in range(n_samp):
        for i in range(hor):
            if mc:
                g_ineq[row : row + mc, x_off(n, i) : x_off(n, i) + n_x] = qp.gx[n, i]
                g_ineq[row : row + mc, i * n_u : (i + 1) * n_u] = qp.gu[n, i]
                h_ineq[row : row + mc] = qp.rhs[n, i]
                soft[row : row + mc] = qp.soft_stage
                row += mc
        if mt:
            g_ineq[row : row + mt, x_off(n, hor) : x_off(n, hor) + n_x] = qp.gx_term[n]
            h_ineq[row : row + mt] = qp.rhs_term[n]
            soft[row : row + mt] = qp.soft_term
            row += mt

    res = solve_dense_qp(
        big_h, big_q, g_ineq, h_ineq, a_eq, b_eq,
        soft=soft, slack_weight=qp.slack_weight, tol=tol, max_iter=max_iter,
    )
    du = res.x[:n_inp].reshape(hor, n_u)
    dx = np.zeros((n_samp, hor + 1, n_x))
    for n in range(n_samp):
        for i in range(hor + 1):
            dx[n, i] = res.x[x_off(n, i) : x_off(n, i) + n_x]
    z_stage, z_term = _split_duals(qp, res.duals_ineq)
    nu = np.zeros((n_samp, hor, n_x))
    pi = np.zeros((n_samp, n_x))
    row = 0
    for n in range(n_samp):
        pi[n] = res.duals_eq[row : row + n_x]
        row += n_x
        for i in range(hor):
            nu[n, i] = res.duals_eq[row : row + n_x]
            row += n_x
    return QpSolution(
        du=du, dx=dx, status=res.status,
        duals_ineq_stage=z_stage, duals_ineq_term=z_term,
        duals_eq=nu, duals_init=pi, kkt=res.kkt, iterations=res.iterations,
        max_slack=float(np.max(res.slacks_soft, initial=0.0)),
    )
