"""Exception hierarchy shared by all toolkit modules."""


class UavGeoError(Exception):
    """Base class for every error raised by the toolkit."""


class HorizonError(UavGeoError):
    """A view ray does not hit the ground plane, so the footprint is unbounded."""


class DegenerateError(UavGeoError):
    """Zero or negative altitude, area, or denominator."""


class OutOfRangeError(UavGeoError):
    """Tile index or pyramid level outside the valid range."""


class EmptySplitError(UavGeoError):
    """An area split left the train or the test side without queries."""


class InsufficientEdgesError(UavGeoError):
    """The pair graph cannot fill a single complete batch."""


class ShapeError(UavGeoError):
    """Array shapes passed to a loss or model do not agree."""


class DomainError(UavGeoError):
    """A scalar argument lies outside its mathematical domain."""


class NonFiniteError(UavGeoError):
    """A loss or gradient became NaN or infinite during training."""


class EmptyIndexError(UavGeoError):
    """Retrieval was attempted against an index with no references."""


class MissingTruthError(UavGeoError):
    """A query has no ground-truth positive reference."""


class FormatError(UavGeoError):
    """A file could not be parsed or carries an unsupported version."""
