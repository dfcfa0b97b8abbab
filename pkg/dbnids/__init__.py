import logging

__version__ = "0.1.0"

# Configure a basic 'dbnids' top-level logger with a StreamHandler (print to
# console) and the WARNING log level. All 'dbnids.*' loggers propagate to it
# and thus may be configured (formatted, silenced, made verbose by the CLI)
# through logging.getLogger('dbnids').
logger = logging.getLogger(__name__)
logger.setLevel(logging.WARNING)
logger.addHandler(logging.StreamHandler())
