"""Consistent function/Jacobian draws from the truncated GP posterior.

A :class:`SampledDynamics` realizes one residual function per sample: every
draw conditions on all values drawn earlier, so repeated queries see a single
consistent function.  Value components are truncated to the scaled-confidence
band computed under the *base* dataset; gradient components are not truncated.

Re-query handling
-----------------
Conditioning rows carry a small jitter for numerical stability.  Taken
literally, that jitter would re-randomize queries at (or arbitrarily near)
already-conditioned points at the jitter scale, which keeps a converging SQP
from ever settling on one realized function.  Two guards make re-queries
deterministic without touching the honest sampling path at genuinely new
points:

* queries matching a conditioned point to within ``snap_tol`` return the
  stored values/gradients exactly;
* components whose posterior variance has fallen to the jitter floor
  (``freeze_var_factor`` times the conditioning jitter) are returned at
  their conditional mean, with no noise added: at that level the variance
  is a factorization artifact, not residual model uncertainty.

Set ``freeze_var_factor=0`` to disable the second guard (done by the
distribution-equivalence checks).

Frozen and snapped components are implied by the existing conditioning rows,
so draws do not re-append them unless ``materialize=True``; the
receding-horizon runtime materializes the draw groups it carries over
between steps so truncated memories stay self-contained.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import SamplingError
from .gpinfer import ScalarGpModel, cholesky_with_jitter
from .kernels import se_cross_tagged
from . import rngs


@dataclass(frozen=True)
class SamplerOptions:
    """Behavioural knobs for the sequential sampler."""

    truncation_enabled: bool = True
    max_rejections: int = 100
    snap_tol: float = 1e-9
    freeze_var_factor: float = 4.0
    clamp_on_exhaustion: bool = True


@dataclass
class JointSample:
    """One joint draw: values and (optionally) gradients per query point."""

    values: np.ndarray  # (m, n_out)
    gradients: np.ndarray | None  # (m, d, n_out)
    attempts: np.ndarray  # (n_out,) rejection attempts used per output dim
    clamped: np.ndarray  # (n_out,) whether clamping was needed
    n_snapped: int = 0
    n_frozen: int = 0


class SampledDynamics:
    """Per-sample conditioning state realizing one function draw.

    Parameters
    ----------
    models : list of ScalarGpModel
        One base posterior per output dimension (shared, immutable).
    sample_id : int
        Index of this sample inside its batch; keys the RNG stream.
    master_seed : int
        Master seed; per-(sample, dim) streams are derived from it.
    sqrt_beta : float
        Confidence multiplier for the truncation band.
    options : SamplerOptions
    capacity_hint : int
        Expected number of conditioning points (storage grows on demand).
    """

    def __init__(self, models, sample_id, master_seed, sqrt_beta,
                 options=SamplerOptions(), capacity_hint=64):
        if not models:
            raise ValueError("at least one output-dimension model is required")
        self.models = list(models)
        self.sample_id = int(sample_id)
        self.master_seed = int(master_seed)
        self.sqrt_beta = float(sqrt_beta)
        self.options = options
        self.n_out = len(self.models)
        self.dim = self.models[0].params.input_dim
        self._rngs = [
            rngs.stream(self.master_seed, rngs.SAMPLING, self.sample_id, k)
            for k in range(self.n_out)
        ]

        cap_pts = max(int(capacity_hint), 4)
        cap_rows = cap_pts * (self.dim + 1)
        self._cap_pts = cap_pts
        self._cap_rows = cap_rows
        self.n_points = 0
        self.n_rows = 0
        self._points = np.zeros((cap_pts, self.dim))
        self._start = np.zeros(cap_pts + 1, dtype=np.int64)
        self._comp = np.zeros(cap_rows, dtype=np.int64)
        self._with_grad = np.zeros(cap_pts, dtype=bool)
        mb = self.models[0].n_rows
        self._fac_rows = [np.zeros((cap_rows, mb + cap_rows)) for _ in range(self.n_out)]
        self._fac_w = [np.zeros(cap_rows) for _ in range(self.n_out)]
        self._fac_y = [np.zeros(cap_rows) for _ in range(self.n_out)]
        self.groups = []  # list of dicts: point/row ranges per draw call
        self.flagged = False
        # When set, the next draws append every queried point (used by the
        # runtime for groups that survive memory truncation).
        self._materialize_next = False

    # -- storage management -------------------------------------------------

    def _ensure_capacity(self, extra_points):
        need_pts = self.n_points + extra_points
        if need_pts <= self._cap_pts:
            return
        new_cap = max(2 * self._cap_pts, need_pts)
        new_rows = new_cap * (self.dim + 1)
        mb = self.models[0].n_rows
        pts = np.zeros((new_cap, self.dim))
        pts[: self.n_points] = self._points[: self.n_points]
        start = np.zeros(new_cap + 1, dtype=np.int64)
        start[: self.n_points + 1] = self._start[: self.n_points + 1]
        comp = np.zeros(new_rows, dtype=np.int64)
        comp[: self.n_rows] = self._comp[: self.n_rows]
        wg = np.zeros(new_cap, dtype=bool)
        wg[: self.n_points] = self._with_grad[: self.n_points]
        for k in range(self.n_out):
            rows = np.zeros((new_rows, mb + new_rows))
            rows[: self.n_rows, : mb + self.n_rows] = self._fac_rows[k][
                : self.n_rows, : mb + self.n_rows
            ]
            w = np.zeros(new_rows)
            w[: self.n_rows] = self._fac_w[k][: self.n_rows]
            y = np.zeros(new_rows)
            y[: self.n_rows] = self._fac_y[k][: self.n_rows]
            self._fac_rows[k], self._fac_w[k], self._fac_y[k] = rows, w, y
        self._points, self._start, self._comp, self._with_grad = pts, start, comp, wg
        self._cap_pts, self._cap_rows = new_cap, new_rows

    def clone(self):
        """Independent copy sharing the immutable base models."""
        other = SampledDynamics(
            self.models, self.sample_id, self.master_seed, self.sqrt_beta,
            self.options, capacity_hint=self._cap_pts,
        )
        other.n_points = self.n_points
        other.n_rows = self.n_rows
        other._points = self._points.copy()
        other._start = self._start.copy()
        other._comp = self._comp.copy()
        other._with_grad = self._with_grad.copy()
        other._fac_rows = [a.copy() for a in self._fac_rows]
        other._fac_w = [a.copy() for a in self._fac_w]
        other._fac_y = [a.copy() for a in self._fac_y]
        other.groups = [dict(g) for g in self.groups]
        other.flagged = self.flagged
        other._rngs = [
            rngs.stream(self.master_seed, rngs.SAMPLING, self.sample_id, k)
            for k in range(self.n_out)
        ]
        # Keep the clone's streams aligned with the originals' current state.
        for rng, src in zip(other._rngs, self._rngs):
            rng.bit_generator.state = src.bit_generator.state
        return other

    @property
    def n_conditioning_rows(self):
        return self.models[0].n_rows + self.n_rows

    # -- posterior under base + accumulated rows ----------------------------

    def _posterior_block(self, k, zq, qstart, qcomp):
        """Mean/cov of output dim k at a tagged query block, plus the factor
        columns needed to append the block afterwards."""
        model = self.models[k]
        params = model.params
        mb = model.n_rows
        me = self.n_rows
        mq = len(qcomp)
        prior = se_cross_tagged(zq, qstart, qcomp, zq, qstart, qcomp, params)
        if mb:
            kbq = se_cross_tagged(model.points, model.start, model.comp, zq, qstart, qcomp, params)
            cb = solve_triangular(model.chol, kbq, lower=True)
        else:
            cb = np.zeros((0, mq))
        if me:
            keq = se_cross_tagged(
                self._points[: self.n_points],
                self._start[: self.n_points + 1],
                self._comp[:me],
                zq, qstart, qcomp, params,
            )
            ext = self._fac_rows[k]
            eb = ext[:me, :mb]
            el = ext[:me, mb : mb + me]
            ce = solve_triangular(el, keq - eb @ cb, lower=True)
        else:
            ce = np.zeros((0, mq))
        mean = cb.T @ model.weights + ce.T @ self._fac_w[k][:me]
        cov = prior - cb.T @ cb - ce.T @ ce
        cov = 0.5 * (cov + cov.T)
        return mean, cov, cb, ce

    def _append_block(self, k, cb, ce, cov, y_new):
        """Extend dim k's factor with the rows of a freshly drawn block."""
        model = self.models[k]
        mb = model.n_rows
        me = self.n_rows
        mq = len(y_new)
        noise = model.params.noise_var
        s = cov + noise * np.eye(mq)
        ls, _ = cholesky_with_jitter(s)
        rows = self._fac_rows[k]
        rows[me : me + mq, :mb] = cb.T
        rows[me : me + mq, mb : mb + me] = ce.T
        rows[me : me + mq, mb + me : mb + me + mq] = ls
        mean = cb.T @ model.weights + ce.T @ self._fac_w[k][:me]
        self._fac_w[k][me : me + mq] = solve_triangular(ls, y_new - mean, lower=True)
        self._fac_y[k][me : me + mq] = y_new

    # -- stored-value retrieval for snapped queries --------------------------

    def _stored_point(self, i, k):
        lo, hi = self._start[i], self._start[i + 1]
        comps = self._comp[lo:hi]
        y = self._fac_y[k][lo:hi]
        value = float(y[comps == 0][0])
        grad = None
        if self._with_grad[i]:
            grad = np.zeros(self.dim)
            for c in range(1, self.dim + 1):
                grad[c - 1] = y[comps == c][0]
        return value, grad

    def _classify(self, z, with_gradients):
        """Per query point: index of the conditioned point to snap to, or -1."""
        m = z.shape[0]
        snap_to = np.full(m, -1, dtype=np.int64)
        if self.n_points == 0 or self.options.snap_tol <= 0:
            return snap_to
        pts = self._points[: self.n_points]
        dist = np.max(np.abs(z[:, None, :] - pts[None, :, :]), axis=2)
        for i in range(m):
            cand = np.nonzero(dist[i] <= self.options.snap_tol)[0]
            if with_gradients:
                cand = cand[self._with_grad[cand]]
            if cand.size:
                snap_to[i] = cand[-1]
        return snap_to

    # -- the draw ------------------------------------------------------------

    def draw_joint(self, z, with_gradients=True, materialize=False):
        """Draw values (and gradients) at ``z`` and extend this sample.

        The block is drawn jointly from the posterior conditioned on the base
        dataset plus all previously appended rows; value components of
        stochastic points are redrawn until they respect the base-dataset
        confidence band (then clamped and flagged if the budget runs out).
        With ``materialize`` every queried point is appended as conditioning
        rows even if its components were snapped or frozen.
        """
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.dim:
            raise ValueError("query dimension mismatch")
        if not np.all(np.isfinite(z)):
            raise ValueError("query points must be finite")
        m = z.shape[0]
        d = self.dim
        opts = self.options
        materialize = materialize or self._materialize_next

        snap_to = self._classify(z, with_gradients)
        fresh_pts = snap_to < 0

        comp_per_pt = d + 1 if with_gradients else 1
        qstart = np.arange(m + 1, dtype=np.int64) * comp_per_pt
        qcomp = (
            np.tile(np.arange(comp_per_pt, dtype=np.int64), m)
            if with_gradients
            else np.zeros(m, dtype=np.int64)
        )
        value_rows = qstart[:-1]
        row_point = np.repeat(np.arange(m), comp_per_pt)
        fresh_rows = fresh_pts[row_point]

        values = np.empty((m, self.n_out))
        gradients = np.empty((m, d, self.n_out)) if with_gradients else None
        attempts = np.zeros(self.n_out, dtype=np.int64)
        clamped = np.zeros(self.n_out, dtype=bool)
        n_frozen = 0

        self._ensure_capacity(m)
        sig_floor = max(max(mo.params.signal_var for mo in self.models), 1.0)
        draws, covs, cbs, ces = [], [], [], []
        point_needs_append = np.zeros(m, dtype=bool)

        for k in range(self.n_out):
            model = self.models[k]
            mean, cov, cb, ce = self._posterior_block(k, z, qstart, qcomp)
            draw = mean.copy()
            var = np.clip(np.diag(cov), 0.0, None)

            sto_mask = fresh_rows.copy()
            if opts.freeze_var_factor > 0:
                floor = opts.freeze_var_factor * model.params.noise_var
                sto_mask &= var > floor
            n_frozen += int(np.sum(fresh_rows & ~sto_mask))
            sto_rows = np.nonzero(sto_mask)[0]

            if sto_rows.size:
                sto_val_rows = sto_rows[qcomp[sto_rows] == 0]
                if opts.truncation_enabled and sto_val_rows.size:
                    pts = row_point[sto_val_rows]
                    lo, hi = model.bounds(z[pts], self.sqrt_beta)
                else:
                    lo = hi = None
                sub = cov[np.ix_(sto_rows, sto_rows)]
                if np.max(np.diag(sub), initial=0.0) <= 1e-14 * sig_floor or np.trace(sub) <= 0:
                    attempts[k] = 1
                else:
                    ls, _ = cholesky_with_jitter(sub)
                    rng = self._rngs[k]
                    accepted = False
                    val_pos = np.searchsorted(sto_rows, sto_val_rows)
                    for attempt in range(opts.max_rejections):
                        eta = rng.standard_normal(sto_rows.size)
                        cand = mean[sto_rows] + ls @ eta
                        attempts[k] = attempt + 1
                        if lo is None or (
                            np.all(cand[val_pos] >= lo) and np.all(cand[val_pos] <= hi)
                        ):
                            draw[sto_rows] = cand
                            accepted = True
                            break
                    if not accepted:
                        if not opts.clamp_on_exhaustion:
                            raise SamplingError(
                                "rejection budget exhausted while truncating draw",
                                acceptance_rate=0.0,
                            )
                        draw[sto_rows] = cand
                        draw[sto_val_rows] = np.clip(cand[val_pos], lo, hi)
                        clamped[k] = True
                        self.flagged = True
                point_needs_append[row_point[sto_rows]] = True

            # Snapped points: copy the stored draw bit-exactly.
            for i in np.nonzero(snap_to >= 0)[0]:
                val, grad = self._stored_point(snap_to[i], k)
                draw[qstart[i]] = val
                if with_gradients:
                    draw[qstart[i] + 1 : qstart[i + 1]] = grad

            values[:, k] = draw[value_rows]
            if with_gradients:
                gradients[:, :, k] = draw.reshape(m, comp_per_pt)[:, 1:]
            draws.append(draw)
            covs.append(cov)
            cbs.append(cb)
            ces.append(ce)

        # Append the drawn rows.  Snapped/frozen components are implied by
        # the existing rows, so their points are stored only on request.
        if materialize:
            point_needs_append[:] = True
        app_pts = np.nonzero(point_needs_append)[0]
        app_rows = np.nonzero(point_needs_append[row_point])[0]
        p0, r0 = self.n_points, self.n_rows
        if app_pts.size:
            for k in range(self.n_out):
                self._append_block(
                    k,
                    cbs[k][:, app_rows],
                    ces[k][:, app_rows],
                    covs[k][np.ix_(app_rows, app_rows)],
                    draws[k][app_rows],
                )
            n_app = app_pts.size
            self._points[p0 : p0 + n_app] = z[app_pts]
            self._with_grad[p0 : p0 + n_app] = with_gradients
            counts = np.full(n_app, comp_per_pt, dtype=np.int64)
            self._start[p0 + 1 : p0 + n_app + 1] = self._start[p0] + np.cumsum(counts)
            self._comp[r0 : r0 + n_app * comp_per_pt] = qcomp[app_rows]
            self.n_points += n_app
            self.n_rows += n_app * comp_per_pt
        self.groups.append(
            {"pt_lo": p0, "pt_hi": self.n_points, "row_lo": r0, "row_hi": self.n_rows}
        )

        return JointSample(
            values=values,
            gradients=gradients,
            attempts=attempts,
            clamped=clamped,
            n_snapped=int(np.sum(snap_to >= 0)),
            n_frozen=n_frozen,
        )

    # -- memory truncation ----------------------------------------------------

    def truncated(self, keep):
        """Copy of this state retaining the base dataset plus the last
        ``keep`` draw groups (the realized function may change next draw)."""
        if keep < 0 or keep > len(self.groups):
            raise ValueError(f"keep must lie in [0, {len(self.groups)}]")
        kept = self.groups[len(self.groups) - keep :]
        other = SampledDynamics(
            self.models, self.sample_id, self.master_seed, self.sqrt_beta,
            self.options, capacity_hint=max(self._cap_pts, 4),
        )
        for rng, src in zip(other._rngs, self._rngs):
            rng.bit_generator.state = src.bit_generator.state
        for g in kept:
            pts = self._points[g["pt_lo"] : g["pt_hi"]].copy()
            n = pts.shape[0]
            wg = bool(self._with_grad[g["pt_lo"]])
            comp_per_pt = self.dim + 1 if wg else 1
            qstart = np.arange(n + 1, dtype=np.int64) * comp_per_pt
            qcomp = self._comp[g["row_lo"] : g["row_hi"]].copy()
            other._ensure_capacity(n)
            for k in range(self.n_out):
                y = self._fac_y[k][g["row_lo"] : g["row_hi"]].copy()
                _, cov, cb, ce = other._posterior_block(k, pts, qstart, qcomp)
                other._append_block(k, cb, ce, cov, y)
            p0, r0 = other.n_points, other.n_rows
            other._points[p0 : p0 + n] = pts
            other._with_grad[p0 : p0 + n] = wg
            other._start[p0 + 1 : p0 + n + 1] = other._start[p0] + np.cumsum(
                np.full(n, comp_per_pt, dtype=np.int64)
            )
            other._comp[r0 : r0 + len(qcomp)] = qcomp
            other.n_points += n
            other.n_rows += len(qcomp)
            other.groups.append(
                {"pt_lo": p0, "pt_hi": other.n_points, "row_lo": r0, "row_hi": other.n_rows}
            )
        other.flagged = self.flagged
        return other


def draw_joint(sample: SampledDynamics, z, with_gradients=True):
    """Module-level alias for :meth:`SampledDynamics.draw_joint`."""
    return sample.draw_joint(z, with_gradients=with_gradients)


def truncate_memory(sample: SampledDynamics, keep):
    """Retain the base dataset plus the most recent ``keep`` draw groups."""
    return sample.truncated(keep)


@dataclass
class EquivalenceReport:
    """Moment comparison between sequential and joint sampling."""

    max_abs_zscore: float
    cov_frobenius_rel_error: float
    n_draws: int
    n_components: int
    partition_sizes: list = field(default_factory=list)


def sequential_equivalence_check(
    model: ScalarGpModel,
    z_full,
    partition,
    n_draws,
    master_seed=0,
    with_derivatives=True,
):
    """Empirically verify that block-sequential conditioning reproduces the
    joint posterior over all blocks.

    Draws ``n_draws`` full vectors block-by-block (each draw re-conditions on
    its earlier blocks) and compares the empirical mean and covariance with
    the analytic joint posterior.  Truncation and the re-query guards are
    disabled so the comparison is exact up to Monte-Carlo error and the
    appended-row jitter.
    """
    z_full = np.atleast_2d(np.asarray(z_full, dtype=float))
    blocks = [np.asarray(b, dtype=np.int64) for b in partition]
    got = np.sort(np.concatenate(blocks))
    if not np.array_equal(got, np.arange(z_full.shape[0])):
        raise ValueError("partition must split the query indexes exactly")

    comp_per_pt = model.params.input_dim + 1 if with_derivatives else 1
    mean_ref, cov_ref = model.query(z_full, with_derivatives=with_derivatives)
    n_comp = mean_ref.size

    opts = SamplerOptions(truncation_enabled=False, freeze_var_factor=0.0)
    acc = np.zeros(n_comp)
    acc2 = np.zeros((n_comp, n_comp))
    for it in range(n_draws):
        sample = SampledDynamics(
            [model], sample_id=it, master_seed=master_seed, sqrt_beta=1.0,
            options=opts, capacity_hint=z_full.shape[0],
        )
        full = np.empty(n_comp)
        for block in blocks:
            js = sample.draw_joint(z_full[block], with_gradients=with_derivatives)
            for pos, point in enumerate(block):
                sl = slice(point * comp_per_pt, (point + 1) * comp_per_pt)
                if with_derivatives:
                    full[sl] = np.concatenate(
                        [[js.values[pos, 0]], js.gradients[pos, :, 0]]
                    )
                else:
                    full[sl] = js.values[pos, 0]
        acc += full
        acc2 += np.outer(full, full)

    emp_mean = acc / n_draws
    emp_cov = acc2 / n_draws - np.outer(emp_mean, emp_mean)
    std = np.sqrt(np.clip(np.diag(cov_ref), 1e-300, None))
    z_scores = (emp_mean - mean_ref) / (std / math.sqrt(n_draws))
    denom = np.linalg.norm(cov_ref, "fro")
    rel = np.linalg.norm(emp_cov - cov_ref, "fro") / max(denom, 1e-300)
    return EquivalenceReport(
        max_abs_zscore=float(np.max(np.abs(z_scores))),
        cov_frobenius_rel_error=float(rel),
        n_draws=n_draws,
        n_components=n_comp,
        partition_sizes=[len(b) for b in blocks],
    )
