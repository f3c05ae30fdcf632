"""Exception hierarchy. Each class carries a machine-readable ``category``
used by the CLI when reporting failures."""


class AccelRBError(Exception):
    category = "error"
    exit_code = 1


class DomainError(AccelRBError, ValueError):
    category = "domain"
    exit_code = 3


class DivergenceError(DomainError):
    category = "divergence"


class SingularLikelihoodError(DomainError):
    category = "singular_likelihood"


class UnderdeterminedFitError(DomainError):
    category = "underdetermined"


class RatioUndefinedError(DomainError):
    category = "ratio_undefined"


class ConstructionError(DomainError):
    category = "construction"


class SamplingError(AccelRBError, RuntimeError):
    category = "sampling"
    exit_code = 4


class SupportCollisionError(SamplingError):
    category = "support_collision"


class DegeneratePosteriorError(AccelRBError, RuntimeError):
    category = "degenerate_posterior"
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigError(AccelRBError, ValueError):
    category = "config"
    exit_code = 5
