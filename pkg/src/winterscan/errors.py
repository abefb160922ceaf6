"""Exception hierarchy shared by every winterscan module."""


class WinterscanError(Exception):
    """Base class for all data errors raised by the toolkit."""


# roadspec
class MalformedNotation(WinterscanError, ValueError):
    pass


class MalformedRegistry(WinterscanError, ValueError):
    def __init__(self, message, line=None, segment=None):
        where = []
        if segment:
            where.append(f"segment {segment!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.segment = segment


# ingest
class UnencodablePayload(WinterscanError, ValueError):
    pass


class MalformedEnvelope(WinterscanError, ValueError):
    pass


class StoreUnavailable(WinterscanError, OSError):
    pass


class MalformedCloudFile(WinterscanError, ValueError):
    pass


class UnknownFormat(WinterscanError, ValueError):
    pass


# dem
class EmptyCloud(WinterscanError, ValueError):
    pass


class NonPositiveCell(WinterscanError, ValueError):
    pass


class NonPositiveSpacing(WinterscanError, ValueError):
    pass


class GridMismatch(WinterscanError, ValueError):
    pass


class MalformedDemFile(WinterscanError, ValueError):
    pass


# analysis
class SeedOutsideCloud(WinterscanError, ValueError):
    pass


class EmptyResult(WinterscanError, ValueError):
    pass


class ProfileMismatch(WinterscanError, ValueError):
    pass


class TransectTooShort(WinterscanError, ValueError):
    pass


class EdgesNotFound(WinterscanError, ValueError):
    pass


class EmptyCorridor(WinterscanError, ValueError):
    pass


# lidarimg
class ShiftOutOfRange(WinterscanError, ValueError):
    pass


class IoFailure(WinterscanError, OSError):
    pass


class DegenerateRange(UserWarning):
    """Warned (not raised) when a frame has no intensity spread to stretch."""
