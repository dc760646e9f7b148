"""Squared-exponential kernel with analytic derivative blocks.

The joint model over a function value and its gradient uses the block
covariance

    [[ k(a, b),            d k / d b ],
     [ d k / d a,   d^2 k / d a d b ]]

with the gradient rows stacked per point as ``(value, d/dz_1, ...,
d/dz_d)``.  Off-diagonal blocks are oriented so that the matrix is the
covariance of the stacked outputs ``(g(z), grad g(z))``; this is what makes
the posterior-mean gradient of the value-only model coincide with the
gradient components of the joint model.

A compiled assembly core is used when available; set ``SGPMPC_PURE_PYTHON=1``
to force the NumPy fallback.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_ref

if os.environ.get("SGPMPC_PURE_PYTHON"):
    _backend = _kernel_ref
else:
    try:
        from . import _kernel_core as _backend
    except ImportError:
        _backend = _kernel_ref

BACKEND = _backend.__name__.rsplit("._", 1)[-1].lstrip("_")


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters for one scalar output dimension.

    Attributes
    ----------
    lengthscales : ndarray
        One positive lengthscale per input coordinate.
    output_scale : float
        Signal standard deviation (prior std of the function).
    noise_var : float
        Observation noise variance, also used as the jitter attached to
        rows appended by the sequential sampler.
    """

    lengthscales: np.ndarray
    output_scale: float = 1.0
    noise_var: float = 1e-6
    _inv_ls2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a non-empty 1-D array")
        if not np.all(ls > 0):
            raise ValueError("lengthscales must be positive")
        if not self.output_scale > 0:
            raise ValueError("output_scale must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "_inv_ls2", 1.0 / ls**2)

    @property
    def input_dim(self):
        return self.lengthscales.size

    @property
    def signal_var(self):
        return self.output_scale**2


def _check_points(z, params, name):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != params.input_dim:
        raise ValueError(
            f"{name} has dimension {z.shape[1]}, expected {params.input_dim} "
            "(one coordinate per lengthscale)"
        )
    return np.ascontiguousarray(z)


def se_kernel(z_a, z_b, params):
    """Evaluate the squared-exponential kernel at a pair of points."""
    za = _check_points(z_a, params, "z_a")
    zb = _check_points(z_b, params, "z_b")
    if za.shape[0] != 1 or zb.shape[0] != 1:
        raise ValueError("se_kernel takes single points; use se_gram for batches")
    return float(_backend.se_gram(za, zb, params._inv_ls2, params.signal_var)[0, 0])


def se_gram(za, zb, params):
    """Value-value kernel matrix between two batches of points."""
    za = _check_points(za, params, "za")
    zb = _check_points(zb, params, "zb")
    return _backend.se_gram(za, zb, params._inv_ls2, params.signal_var)


def full_layout(n_points, dim):
    """Row layout where every point carries value plus gradient rows."""
    start = np.arange(n_points + 1, dtype=np.int64) * (dim + 1)
    comp = np.tile(np.arange(dim + 1, dtype=np.int64), n_points)
    return start, comp


def value_layout(n_points):
    """Row layout where every point carries a value row only."""
    start = np.arange(n_points + 1, dtype=np.int64)
    comp = np.zeros(n_points, dtype=np.int64)
    return start, comp


def se_cross_tagged(za, astart, acomp, zb, bstart, bcomp, params):
    """Cross-covariance between two tagged row sets (see _kernel_ref)."""
    return _backend.se_cross_tagged(
        np.ascontiguousarray(za, dtype=float),
        np.ascontiguousarray(astart, dtype=np.int64),
        np.ascontiguousarray(acomp, dtype=np.int64),
        np.ascontiguousarray(zb, dtype=float),
        np.ascontiguousarray(bstart, dtype=np.int64),
        np.ascontiguousarray(bcomp, dtype=np.int64),
        params._inv_ls2,
        params.signal_var,
    )


def se_kernel_derivative_block(z_a, z_b, params):
    """Joint value/gradient covariance block between two points.

    Returns the ``(d+1, d+1)`` matrix whose (0, 0) entry is the kernel, the
    first row holds the kernel derivative with respect to ``z_b``, the first
    column the derivative with respect to ``z_a``, and the lower-right block
    the mixed second derivative.
    """
    za = _check_points(z_a, params, "z_a")
    zb = _check_points(z_b, params, "z_b")
    if za.shape[0] != 1 or zb.shape[0] != 1:
        raise ValueError("se_kernel_derivative_block takes single points")
    start, comp = full_layout(1, params.input_dim)
    return se_cross_tagged(za, start, comp, zb, start, comp, params)
