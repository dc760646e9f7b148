"""Pure-NumPy implementation of the squared-exponential kernel assembly.

This is the fallback backend used when the compiled extension
(:mod:`sgpmpc._kernel_core`) is unavailable.  Both backends implement the
same two entry points and must agree to machine precision.

Tagged rows
-----------
Covariance matrices over mixed value/gradient observations are described by
a point array plus a row layout: ``start`` holds row offsets per point
(length ``n_points + 1``) and ``comp`` holds one component id per row, where
component 0 is the function value and component ``c >= 1`` is the partial
derivative with respect to input coordinate ``c - 1``.
"""

import numpy as np


def se_gram(za, zb, inv_ls2, sf2):
    """Value-value kernel matrix of shape ``(len(za), len(zb))``."""
    diff = za[:, None, :] - zb[None, :, :]
    q = np.einsum("ijd,d->ij", diff * diff, inv_ls2)
    return sf2 * np.exp(-0.5 * q)


def se_cross_tagged(za, astart, acomp, zb, bstart, bcomp, inv_ls2, sf2):
    """Cross-covariance between tagged value/gradient rows.

    Row ``r`` corresponds to output component ``acomp[r]`` of the point
    whose row range contains ``r``; analogously for columns.  The entry for
    a value row against a gradient column is the kernel derivative with
    respect to the column point, and the gradient-gradient block is the
    mixed second derivative.
    """
    pa = np.repeat(np.arange(len(astart) - 1), np.diff(astart))
    pb = np.repeat(np.arange(len(bstart) - 1), np.diff(bstart))
    k = se_gram(za, zb, inv_ls2, sf2)[np.ix_(pa, pb)]

    arow = np.maximum(acomp - 1, 0)
    bcol = np.maximum(bcomp - 1, 0)
    # Difference of the row-component coordinate, and of the column-component
    # coordinate, for every row/column pair.
    dp = za[pa, arow][:, None] - zb[pb][:, arow].T
    dq = za[pa][:, bcol] - zb[pb, bcol][None, :]
    ilp = inv_ls2[arow][:, None]
    ilq = inv_ls2[bcol][None, :]

    val_r = (acomp == 0)[:, None]
    val_c = (bcomp == 0)[None, :]
    delta = (acomp[:, None] == bcomp[None, :]) & ~val_r

    factor = np.where(
        val_r & val_c,
        1.0,
        np.where(
            ~val_r & val_c,
            -dp * ilp,
            np.where(val_r & ~val_c, dq * ilq, np.where(delta, ilp, 0.0) - dp * ilp * dq * ilq),
        ),
    )
    return k * factor
