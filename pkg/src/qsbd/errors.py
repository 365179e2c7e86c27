"""Exception hierarchy shared by every subsystem.

Each class carries an ``exit_code`` so the command line front end can map
failures onto its documented namespace (1 parse, 2 config, 3 runtime,
4 numeric divergence) without a lookup table.
"""


class QsbdError(Exception):
    exit_code = 3


# --- parse / file integrity (exit 1) ---------------------------------------

class ParseError(QsbdError):
    exit_code = 1

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DimensionMismatch(ParseError):
    pass


class UnsupportedGeometry(ParseError):
    pass


class ManifestMismatch(QsbdError):
    exit_code = 1


class ChecksumMismatch(QsbdError):
    exit_code = 1


# --- configuration / contract (exit 2) -------------------------------------

class ConfigError(QsbdError):
    exit_code = 2


class ConfigMismatch(ConfigError):
    pass


class ShapeMismatch(ConfigError):
    pass


class MissingModality(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


# --- runtime (exit 3) ------------------------------------------------------

class DegeneratePolygon(QsbdError):
    pass


class InvalidPolygon(QsbdError):
    pass


class EmptyTable(QsbdError):
    pass


class PlacementOverflow(QsbdError):
    pass


class SingleClassTrainSet(QsbdError):
    pass


class SingleClassEvalSet(QsbdError):
    pass


class EmptyConfusion(QsbdError):
    pass


class TooFewPerClass(QsbdError):
    pass


class SingleCity(QsbdError):
    pass


# --- numeric (exit 4) ------------------------------------------------------

class DivergedLoss(QsbdError):
    exit_code = 4
