"""
<Program Name>
  exceptions.py

<Purpose>
  Define exceptions.  The names chosen for exception classes should end in
  'Error' (except where there is a good reason not to).  The command line
  interface maps each family onto a process exit code, see
  'dbnids.cli.EXIT_CODES'.
"""


class Error(Exception):
    """Indicate a generic error."""


class ShapeError(Error):
    """Indicate that array dimensions do not agree."""


class DomainError(Error):
    """Indicate a value outside the domain an operation accepts, e.g. a
    probability outside [0, 1] or an empty batch."""


class CapacityError(Error):
    """Indicate that an exact computation was requested for a model too large
    to enumerate."""


class ConfigError(Error):
    """Indicate an invalid experiment or hyper-parameter configuration."""


class DataError(Error):
    """Indicate malformed or unusable input data, e.g. an unknown label or a
    class with too few samples."""


class StateError(Error):
    """Indicate that an object or the output directory is not in the state an
    operation requires, e.g. an untrained head or missing splits."""


class FormatError(Error):
    """Indicate an error while validating or decoding a persisted object."""


class StorageError(Error):
    """Indicate an error occured during interaction with an abstracted storage
    backend."""
