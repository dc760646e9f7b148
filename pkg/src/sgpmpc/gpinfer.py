"""GP posterior inference under partial value/gradient observations.

The joint model over function values and gradients is conditioned on
whatever components each dataset row observes.  Value-only queries and
derivative-mode queries share one code path, so the value components of a
derivative-mode posterior coincide with the value-only posterior exactly.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FactorizationError
from .gpdata import GpDataset, Posterior, PosteriorQuery
from .kernels import KernelParams, full_layout, se_cross_tagged, value_layout

# Adaptive jitter ladder, scaled by trace/n of the matrix being factorized.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


def cholesky_with_jitter(mat):
    """Lower Cholesky factor with adaptive diagonal jitter.

    Tries the plain factorization first, then escalates the jitter from
    1e-10 to 1e-4 times the mean diagonal in decade steps.  Returns
    ``(L, jitter_used)`` or raises :class:`FactorizationError` carrying
    conditioning diagnostics.
    """
    n = mat.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = float(np.trace(mat)) / n
    jitters = [0.0]
    j = _JITTER_START
    while j <= _JITTER_MAX * (1 + 1e-12):
        jitters.append(j * scale)
        j *= 10.0
    eye = np.eye(n)
    for jit in jitters:
        try:
            return np.linalg.cholesky(mat + jit * eye), jit
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        "Gram matrix is not positive definite after jitter escalation",
        info={
            "size": n,
            "trace": float(np.trace(mat)),
            "min_diag": float(np.min(np.diag(mat))),
            "max_jitter": jitters[-1],
            "min_eig_estimate": float(np.linalg.eigvalsh(mat)[0]),
        },
    )


class ScalarGpModel:
    """Posterior machinery for one independent scalar output dimension.

    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, dataset: GpDataset, params: KernelParams, output_dim: int = 0):
        if dataset.input_dim != params.input_dim:
            raise ValueError("dataset and kernel disagree on the input dimension")
        if not 0 <= output_dim < max(dataset.n_outputs, 1):
            raise ValueError(f"output_dim {output_dim} out of range")
        self.dataset = dataset
        self.params = params
        self.output_dim = output_dim
        self.points = dataset.inputs
        self.start, self.comp = dataset.row_layout()
        self.n_rows = int(self.start[-1])
        if self.n_rows:
            gram = se_cross_tagged(
                self.points, self.start, self.comp, self.points, self.start, self.comp, params
            )
            gram[np.diag_indices_from(gram)] += dataset.row_noise()
            self.chol, self.jitter = cholesky_with_jitter(gram)
            y = dataset.row_targets(output_dim)
            self.weights = solve_triangular(self.chol, y, lower=True)
        else:
            self.chol = np.zeros((0, 0))
            self.jitter = 0.0
            self.weights = np.zeros(0)

    def _query_layout(self, zq, with_derivatives):
        zq = np.atleast_2d(np.asarray(zq, dtype=float))
        if zq.shape[1] != self.params.input_dim:
            raise ValueError("query dimension mismatch")
        if with_derivatives:
            qstart, qcomp = full_layout(zq.shape[0], zq.shape[1])
        else:
            qstart, qcomp = value_layout(zq.shape[0])
        return zq, qstart, qcomp

    def query(self, zq, with_derivatives=False):
        """Posterior mean and covariance at the query points.

        Returns ``(mean, cov)`` over the stacked components, ordered per
        point as ``(value, d/dz_1, ..., d/dz_d)`` in derivative mode.
        """
        zq, qstart, qcomp = self._query_layout(zq, with_derivatives)
        prior = se_cross_tagged(zq, qstart, qcomp, zq, qstart, qcomp, self.params)
        if not self.n_rows:
            return np.zeros(prior.shape[0]), prior
        cross = se_cross_tagged(
            self.points, self.start, self.comp, zq, qstart, qcomp, self.params
        )
        half = solve_triangular(self.chol, cross, lower=True)
        mean = half.T @ self.weights
        cov = prior - half.T @ half
        cov = 0.5 * (cov + cov.T)
        return mean, cov

    def value_stats(self, zq):
        """Posterior mean and standard deviation of the value components."""
        mean, cov = self.query(zq, with_derivatives=False)
        std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        return mean, std

    def bounds(self, zq, sqrt_beta):
        """Scaled-confidence lower/upper bounds on the function values."""
        mean, std = self.value_stats(zq)
        return mean - sqrt_beta * std, mean + sqrt_beta * std


def posterior(data: GpDataset, query: PosteriorQuery, params: KernelParams, output_dim=0):
    """GP posterior at the query points, conditioned on the dataset."""
    model = ScalarGpModel(data, params, output_dim)
    mean, cov = model.query(query.test_inputs, query.with_derivatives)
    return Posterior(
        mean=mean,
        covariance=cov,
        points=query.test_inputs,
        with_derivatives=query.with_derivatives,
    )


def confidence_bounds(z, data: GpDataset, params: KernelParams, conf, output_dim=0):
    """High-probability bounds ``mean -/+ sqrt_beta * std`` at one point."""
    model = ScalarGpModel(data, params, output_dim)
    lo, hi = model.bounds(np.atleast_2d(np.asarray(z, dtype=float)), conf.sqrt_beta)
    return float(lo[0]), float(hi[0])


def log_marginal_likelihood(data: GpDataset, params: KernelParams, output_dim=0):
    """Log marginal likelihood of the value observations.

    Gradient rows are ignored here; hyperparameters are fit on the raw
    one-step-error measurements.
    """
    values_only = GpDataset(
        data.inputs, data.values, noise_var=np.maximum(data.noise_var, params.noise_var)
    )
    model = ScalarGpModel(values_only, params, output_dim)
    n = model.n_rows
    if n == 0:
        return 0.0
    return float(
        -0.5 * model.weights @ model.weights
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * np.log(2 * np.pi)
    )


def fit_hyperparameters(
    data: GpDataset,
    output_dim=0,
    noise_var=1e-6,
    n_sweeps=8,
    rel_tol=1e-5,
):
    """Coordinate-wise marginal-likelihood ascent with multi-start.

    Optimizes lengthscales and output scale in log space, one coordinate at
    a time with a bounded scalar search, keeping the noise variance fixed.
    The search window is anchored to the data span and target scale, which
    keeps near-linear residuals from driving the lengthscales towards
    infinity (where the Gram matrix degenerates).  Deterministic: starts
    come from a fixed grid of span fractions.
    """
    from scipy.optimize import minimize_scalar

    if data.n_points < 2:
        raise ValueError("hyperparameter fitting needs at least two points")
    d = data.input_dim
    span = np.maximum(data.inputs.max(axis=0) - data.inputs.min(axis=0), 1e-3)
    y = data.values[:, output_dim]
    y_scale = max(float(np.std(y)), 1e-6)
    lo = np.concatenate([np.log(span) - 3.0, [np.log(y_scale) - 2.0]])
    hi = np.concatenate([np.log(span) + 2.5, [np.log(y_scale) + 3.0]])

    def objective(log_theta):
        params = KernelParams(
            lengthscales=np.exp(log_theta[:d]),
            output_scale=float(np.exp(log_theta[d])),
            noise_var=noise_var,
        )
        return -log_marginal_likelihood(data, params, output_dim)

    best_theta, best_val = None, np.inf
    for frac in (0.3, 1.0, 3.0):
        theta = np.log(np.concatenate([span * frac, [y_scale]]))
        theta = np.clip(theta, lo, hi)
        val = objective(theta)
        for _ in range(n_sweeps):
            improved = False
            for c in range(d + 1):
                def line(t, c=c, theta=theta):
                    trial = theta.copy()
                    trial[c] = t
                    return objective(trial)

                res = minimize_scalar(
                    line,
                    bounds=(max(theta[c] - 2.5, lo[c]), min(theta[c] + 2.5, hi[c])),
                    method="bounded",
                    options={"xatol": 1e-3},
                )
                if res.fun < val - rel_tol * (1 + abs(val)):
                    theta[c] = res.x
                    val = res.fun
                    improved = True
            if not improved:
                break
        if val < best_val:
            best_theta, best_val = theta.copy(), val
    return KernelParams(
        lengthscales=np.exp(best_theta[:d]),
        output_scale=float(np.exp(best_theta[d])),
        noise_var=noise_var,
    )
