"""Exception types raised across the package."""


class CaritransError(Exception):
    """Base class for all package errors."""


class MissingDomainDir(CaritransError):
    """A corpus domain directory is absent or holds no decodable image."""


class BadSize(CaritransError, ValueError):
    pass


class ShapeMismatch(CaritransError, ValueError):
    pass


class ChannelMismatch(ShapeMismatch):
    pass


class ExtractorUnavailable(CaritransError):
    """Perceptual extractor weights could not be found or loaded."""


class DegenerateConfiguration(CaritransError):
    """Control points make the spline system singular."""


class NonFiniteLoss(CaritransError):
    """A training loss became NaN or infinite.

    ``terms`` holds the per-term values of the offending step.
    """

    def __init__(self, step, terms):
        self.step = step
        self.terms = dict(terms)
        dump = ", ".join(f"{k}={v:.6g}" for k, v in self.terms.items())
        super().__init__(f"non-finite loss at step {step}: {dump}")


class StageMismatch(CaritransError):
    pass
