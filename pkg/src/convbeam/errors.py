"""Exception hierarchy shared by all convbeam modules."""


class ConvbeamError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(ConvbeamError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class SingularMatrix(ConvbeamError, ArithmeticError):
    pass


class ZeroTrace(ConvbeamError, ArithmeticError):
    """Trace normalization of a beamformer hit a (numerically) zero value.

    Usually means the target statistics are empty, e.g. a silent source mask.
    """


class DegenerateSteering(ConvbeamError, ArithmeticError):
    pass


class TooShort(ConvbeamError, ValueError):
    pass


class TooFewFrames(ConvbeamError, ValueError):
    pass


class InvalidParam(ConvbeamError, ValueError):
    pass


class MissingGroundTruth(ConvbeamError, ValueError):
    pass


class ZeroReference(ConvbeamError, ValueError):
    pass


class TooManySources(ConvbeamError, ValueError):
    pass


class UnsupportedFormat(ConvbeamError, ValueError):
    pass


class SampleRateMismatch(ConvbeamError, ValueError):
    pass
