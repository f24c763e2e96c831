"""Exception hierarchy shared across the package."""


class FeatSlamError(Exception):
    pass


class NonPositiveDepth(FeatSlamError, ValueError):
    pass


class PartiallyBehindCamera(NonPositiveDepth):
    pass


class InvalidDepth(FeatSlamError, ValueError):
    pass


class DegenerateBaseline(FeatSlamError, ValueError):
    pass


class NullLine(FeatSlamError, ValueError):
    pass


class DegenerateSegment(FeatSlamError, ValueError):
    pass


class EmptyImage(FeatSlamError, ValueError):
    pass


class EmptyCalibrationSet(FeatSlamError, ValueError):
    pass


class InsufficientObservations(FeatSlamError):
    pass


class InvalidConfig(FeatSlamError, ValueError):
    """Bad configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NoAssociations(FeatSlamError):
    pass


class DegenerateConfiguration(FeatSlamError, ValueError):
    pass


class InsufficientPoses(FeatSlamError, ValueError):
    pass


class ParseError(FeatSlamError, ValueError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class TrackingLost(FeatSlamError):
    pass
