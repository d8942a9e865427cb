"""Exception types raised across the package."""


class ContractError(ValueError):
    """Inputs violate a dimensional or domain precondition."""


class SingularInertiaError(ArithmeticError):
    """Mass matrix too ill-conditioned to invert (usually an unphysical parameter vector)."""


class DerivativeError(ArithmeticError):
    """Finite-difference evaluation produced non-finite values."""


class AdaptationDivergenceError(ArithmeticError):
    """Parameter update is non-finite; learning must stop."""


class UnstableFilterError(ValueError):
    """Discrete first-order filter would be unstable for the given pole and step."""


class DivergenceError(RuntimeError):
    """Simulated plant state blew up."""


class DegenerateNormalizerError(ValueError):
    """nMSE normalizer range is zero."""
