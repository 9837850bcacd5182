"""Exception hierarchy shared by every nsklab module."""


class NSKError(Exception):
    """Base class for all nsklab failures."""


class ParameterError(NSKError, ValueError):
    """Physical parameters violate an admissibility condition."""

    rule = "admissibility"

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ViolatesViscosity(ParameterError):
    rule = "mu_star > 0 and mu_star + nu_star > 0"


class ViolatesCapillarity(ParameterError):
    rule = "kappa_star > 0"


class ViolatesPressure(ParameterError):
    rule = "P'(rho_star) > 0"


class DegenerateDiscriminant(ParameterError):
    rule = "((mu_star + nu_star) / rho_star)**2 / 4 != rho_star * kappa_star"


class ExponentError(NSKError, ValueError):
    """An exponent quadruple fails one of the global-existence conditions.

    ``condition`` is a short machine-readable tag naming the failed inequality.
    """

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class DimensionTooSmall(ExponentError):
    def __init__(self, dim):
        super().__init__(
            f"dimension N={dim} < 3: q1 < 2 forces q1/2 < 1, the data norm breaks down",
            "N>=3",
        )


class RangeViolation(NSKError):
    """Density left the band rho*/4 <= rho* + theta <= 4 rho*."""

    def __init__(self, rho_min, rho_max, lower, upper):
        super().__init__(
            f"density range [{rho_min:.6g}, {rho_max:.6g}] outside [{lower:.6g}, {upper:.6g}]"
        )
        self.rho_min = rho_min
        self.rho_max = rho_max
        self.lower = lower
        self.upper = upper


class ShapeMismatch(NSKError, ValueError):
    pass


class NotHermitian(NSKError):
    pass


class WrongRegime(NSKError, ValueError):
    pass


class SingularSystem(NSKError):
    def __init__(self, message, lam=None, cond=None):
        super().__init__(message)
        self.lam = lam
        self.cond = cond


class NonFinite(NSKError):
    pass


class NoContraction(NSKError):
    pass


class ConfigError(NSKError, ValueError):
    """Configuration problem; ``key`` is the dotted key path when known."""

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
        self.detail = message


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


class InadmissiblePQ(NSKError, ValueError):
    pass


class WindowTooShort(NSKError, ValueError):
    pass


class MissingConstituent(NSKError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing constituent"


class ResolutionWarning(UserWarning):
    """Top dyadic block carries a non-negligible share of a Besov norm."""
