"""Observation containers for GP regression under partial measurements.

A dataset stores, per input point, either a value-only observation or a
value-plus-gradient observation, for every output dimension of the modelled
residual.  The selection structure that picks observed components out of the
full value/gradient block is never materialized as a matrix; rows are tagged
instead and covariance blocks are assembled per tag.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfidenceParams:
    """Scaled-confidence configuration for the high-probability bounds.

    ``sqrt_beta`` multiplies the posterior standard deviation; it is a
    configuration input, not derived from information-gain quantities.
    ``failure_prob`` is carried along for reporting only.
    """

    sqrt_beta: float = 2.5
    failure_prob: float = 0.05

    def __post_init__(self):
        if not self.sqrt_beta > 0:
            raise ValueError("sqrt_beta must be positive")
        if not 0 < self.failure_prob < 1:
            raise ValueError("failure_prob must lie in (0, 1)")


class GpDataset:
    """Heterogeneous observation store with value-only and value+gradient rows.

    Parameters
    ----------
    inputs : (D, d) array
        Observation input points.
    values : (D,) or (D, n_out) array
        Observed values, one column per independent output dimension.
    gradients : (D, d) or (D, d, n_out) array, optional
        Observed gradients for the points flagged in ``has_gradient``.
        Entries of unflagged points are ignored.
    has_gradient : (D,) bool array, optional
        Which points carry gradient observations.  Defaults to all-True when
        ``gradients`` is given, all-False otherwise.
    noise_var : float or (D,) array
        Per-point observation-noise variance (applied to every observed
        component of the point's row block).
    """

    def __init__(self, inputs, values, gradients=None, has_gradient=None, noise_var=1e-6):
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.size == 0:
            inputs = inputs.reshape(0, inputs.shape[1] if inputs.ndim == 2 and inputs.shape[1] else 1)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != inputs.shape[0]:
            raise ValueError("values and inputs disagree on the number of points")

        d = inputs.shape[1]
        n_out = values.shape[1]
        if gradients is not None:
            gradients = np.asarray(gradients, dtype=float)
            if gradients.ndim == 2:
                gradients = gradients[:, :, None]
            if gradients.shape != (inputs.shape[0], d, n_out):
                raise ValueError(
                    f"gradients must have shape (D, {d}, {n_out}), got {gradients.shape}"
                )
            if has_gradient is None:
                has_gradient = np.ones(inputs.shape[0], dtype=bool)
        else:
            gradients = np.zeros((inputs.shape[0], d, n_out))
            if has_gradient is None:
                has_gradient = np.zeros(inputs.shape[0], dtype=bool)
        has_gradient = np.asarray(has_gradient, dtype=bool)
        if has_gradient.shape != (inputs.shape[0],):
            raise ValueError("has_gradient must be a (D,) boolean array")

        noise = np.broadcast_to(np.asarray(noise_var, dtype=float), (inputs.shape[0],)).copy()
        if np.any(noise < 0):
            raise ValueError("noise variances must be non-negative")

        self.inputs = inputs
        self.values = values
        self.gradients = gradients
        self.has_gradient = has_gradient
        self.noise_var = noise

    @property
    def n_points(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    @property
    def n_outputs(self):
        return self.values.shape[1]

    def row_layout(self):
        """Tagged row layout: (start offsets per point, component per row)."""
        d = self.input_dim
        counts = np.where(self.has_gradient, d + 1, 1)
        start = np.zeros(self.n_points + 1, dtype=np.int64)
        np.cumsum(counts, out=start[1:])
        comp = np.zeros(int(start[-1]), dtype=np.int64)
        for i in range(self.n_points):
            if self.has_gradient[i]:
                comp[start[i] : start[i + 1]] = np.arange(d + 1)
        return start, comp

    def row_targets(self, output_dim):
        """Flattened observation vector for one output dimension."""
        rows = []
        for i in range(self.n_points):
            rows.append(self.values[i, output_dim])
            if self.has_gradient[i]:
                rows.extend(self.gradients[i, :, output_dim])
        return np.asarray(rows, dtype=float)

    def row_noise(self):
        """Per-row noise variance (point noise repeated over its components)."""
        counts = np.where(self.has_gradient, self.input_dim + 1, 1)
        return np.repeat(self.noise_var, counts)


@dataclass(frozen=True)
class PosteriorQuery:
    """Batch of test inputs, optionally requesting gradient components."""

    test_inputs: np.ndarray
    with_derivatives: bool = False

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.test_inputs, dtype=float))
        if z.shape[0] < 1:
            raise ValueError("a posterior query needs at least one test input")
        object.__setattr__(self, "test_inputs", z)


@dataclass
class Posterior:
    """Posterior mean and covariance over the queried components.

    In derivative mode the component order per point is ``(value, d/dz_1,
    ..., d/dz_d)``; ``value_indices`` selects the value components.
    """

    mean: np.ndarray
    covariance: np.ndarray
    points: np.ndarray
    with_derivatives: bool
    value_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.points.shape[1]
        n = self.points.shape[0]
        step = d + 1 if self.with_derivatives else 1
        self.value_indices = np.arange(n) * step

    @property
    def value_mean(self):
        return self.mean[self.value_indices]

    @property
    def value_covariance(self):
        return self.covariance[np.ix_(self.value_indices, self.value_indices)]

    def gradient_mean(self):
        """Posterior mean gradients, shape (n_points, d); derivative mode only."""
        if not self.with_derivatives:
            raise ValueError("gradient_mean requires a derivative-mode posterior")
        d = self.points.shape[1]
        return self.mean.reshape(self.points.shape[0], d + 1)[:, 1:]

    @property
    def value_std(self):
        var = np.clip(np.diag(self.value_covariance), 0.0, None)
        return np.sqrt(var)
