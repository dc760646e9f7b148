"""Sampling-based Gaussian-process MPC.

Robust optimal control with a learned residual model: consistent dynamics
functions (values and Jacobians) are drawn from a truncated GP posterior and
optimized over inside a multi-sample SQP loop, with a real-time-iteration
receding-horizon runtime and reference uncertainty-propagation baselines.
"""

import os as _os

# The workload is many small dense factorizations and products, parallelized
# at the sample level; multithreaded BLAS only adds contention there.
# Override with SGPMPC_BLAS_THREADS.
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _threadpool_limits(
        limits=int(_os.environ.get("SGPMPC_BLAS_THREADS", "1")), user_api="blas"
    )
except Exception:  # pragma: no cover - threadpoolctl is optional
    pass

from .errors import (
    ConfigError,
    FactorizationError,
    QpInfeasibleError,
    SamplingError,
    SgpmpcError,
)
from .gpdata import ConfidenceParams, GpDataset, Posterior, PosteriorQuery
from .gpinfer import (
    ScalarGpModel,
    confidence_bounds,
    fit_hyperparameters,
    log_marginal_likelihood,
    posterior,
)
from .kernels import (
    BACKEND,
    KernelParams,
    se_kernel,
    se_kernel_derivative_block,
)
from .sampler import (
    JointSample,
    SampledDynamics,
    SamplerOptions,
    draw_joint,
    sequential_equivalence_check,
    truncate_memory,
)

__version__ = "0.1.0"
