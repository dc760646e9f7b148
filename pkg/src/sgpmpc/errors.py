"""Exception types shared across the package."""


class SgpmpcError(Exception):
    """Base class for package-specific failures."""


class ConfigError(SgpmpcError):
    """Invalid or inconsistent experiment configuration."""


class FactorizationError(SgpmpcError):
    """Cholesky factorization failed even after jitter escalation.

    Carries conditioning diagnostics in ``info``.
    """

    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = dict(info or {})


class SamplingError(SgpmpcError):
    """Truncated draw could not be produced within the rejection budget."""

    def __init__(self, message, acceptance_rate=None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class QpInfeasibleError(SgpmpcError):
    """Hard-constrained QP reported infeasible during the feedback phase."""

    def __init__(self, message, stage=None, sample=None, row=None):
        super().__init__(message)
        self.stage = stage
        self.sample = sample
        self.row = row
