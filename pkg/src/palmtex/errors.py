"""Exception hierarchy shared by every palmtex module."""


class PalmtexError(Exception):
    """Base class for all errors raised by palmtex."""


class ValidationError(PalmtexError, ValueError):
    """Inputs or configuration violate a documented precondition."""


# imagecore
class UnreadableFile(PalmtexError, OSError):
    pass


class UnsupportedFormat(PalmtexError, ValueError):
    pass


class NotGrayConvertible(PalmtexError, ValueError):
    pass


class OutOfBounds(ValidationError):
    pass


class KernelTooLarge(ValidationError):
    pass


# descriptors
class ImageTooSmall(ValidationError):
    pass


class MixedKernelSizes(ValidationError):
    pass


# features / fusion / matching
class EmptyCodeImage(ValidationError):
    pass


class TagMismatch(ValidationError):
    pass


class TooFewVectors(ValidationError):
    pass


class DegenerateZeroVector(PalmtexError, ArithmeticError):
    pass


class EmptyTemplateSet(ValidationError):
    pass


class EmptyGallery(ValidationError):
    pass


# evaluation
class InsufficientSamples(ValidationError):
    pass


class MissingSession(ValidationError):
    pass


class EmptyScores(ValidationError):
    pass


class DegenerateRoc(PalmtexError, ArithmeticError):
    pass


# bsif learning
class EmptyCorpus(ValidationError):
    pass


class RankDeficient(PalmtexError, ArithmeticError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ConvergenceWarning(UserWarning):
    """FastICA hit ``max_iter`` before meeting its tolerance."""


# synthgen
class IoFailure(PalmtexError, OSError):
    pass
