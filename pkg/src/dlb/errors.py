"""Exception hierarchy shared by all modules."""


class DLBError(Exception):
    """Base class for every error raised by this package."""


class NoServers(DLBError):
    pass


class DuplicateServer(DLBError):
    pass


class UnknownServer(DLBError):
    pass


class CannotRemoveLast(DLBError):
    pass


class CapacityExhausted(DLBError):
    pass


class UnknownHash(DLBError):
    pass


class ShapeError(DLBError):
    pass


class NumericalError(DLBError):
    pass


class UnsupportedKey(DLBError):
    pass


class UnsupportedVersion(DLBError):
    pass


class ParseError(DLBError):
    pass


class ValidationError(DLBError):
    pass


class DuplicateKey(DLBError):
    pass


class TooFewKeys(DLBError):
    pass


class BadSpec(DLBError):
    pass


class FormatError(DLBError):
    pass
