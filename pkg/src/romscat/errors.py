"""Exception types shared across the package."""


class RomscatError(Exception):
    """Base class for all package errors."""


class NotSymmetric(RomscatError):
    pass


class NotSPD(RomscatError):
    pass


class Singular(RomscatError):
    pass


class RankTooLarge(RomscatError):
    pass


class NonPositiveSpectrum(RomscatError):
    pass


class Breakdown(RomscatError):
    """Block Lanczos residual became rank deficient."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"rank-deficient Lanczos residual at step {step}")


class InvalidDimension(RomscatError):
    pass


class RegionOutsideDomain(RomscatError):
    pass


class NonSPDContrast(RomscatError):
    pass


class SubdomainTooSmall(RomscatError):
    pass


class CFLViolation(RomscatError):
    pass


class NonFiniteField(RomscatError):
    pass


class TooLarge(RomscatError):
    pass


class LengthMismatch(RomscatError):
    pass


class UndersampledInput(RomscatError):
    pass


class InsufficientData(RomscatError):
    pass


class DimensionMismatch(RomscatError):
    pass


class PointOutsideBasis(RomscatError):
    pass


class MissingGreens(RomscatError):
    pass


class EmptyRegion(RomscatError):
    pass


class DegenerateGamma(RomscatError):
    pass


class ForwardFailure(RomscatError):
    pass


class FactorizationFailure(RomscatError):
    pass


class SingularSystem(RomscatError):
    pass


class NonConvergence(RomscatError):
    """Raised only when asked to be strict; invert() normally returns a flagged result."""


class ParseError(RomscatError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ValidationError(RomscatError):
    pass


class MissingArtifact(RomscatError):
    pass
