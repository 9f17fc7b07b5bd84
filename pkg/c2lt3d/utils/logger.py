"""
Logging for the c2lt3d package.

Every module logs through a child of the ``c2lt3d`` logger. Console records go
through ``tqdm.write`` so they never tear the per-object progress bars of the
command runners.
"""

import logging
import os
from typing import Any, Optional, Union

from tqdm import tqdm

PACKAGE_LOGGER = "c2lt3d"
DEFAULT_FORMAT = "[%(asctime)s] %(levelname)-8s - %(message)s"


class TqdmHandler(logging.StreamHandler):
    """Console handler that prints above any active progress bar."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            tqdm.write(self.format(record), file=self.stream)
            self.flush()
        except Exception:
            self.handleError(record)


def _file_handler(log_file: str, log_format: str) -> logging.FileHandler:
    log_dir = os.path.dirname(log_file)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    handler = logging.FileHandler(log_file)
    handler.setFormatter(logging.Formatter(log_format))
    return handler


def setup_logger(
    name: str = PACKAGE_LOGGER,
    level: Union[int, str] = logging.INFO,
    log_file: Optional[str] = None,
    log_to_console: bool = True,
    log_format: Optional[str] = None,
) -> logging.Logger:
    """
    Configure ``name`` with a console handler and an optional file handler.

    Calling it again replaces the handlers instead of stacking them.

    Parameters
    ----------
    name : str
        Logger name; the package logger by default.
    level : int or str
        Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
    log_file : str, optional
        Also write records here; the directory is created on demand.
    log_to_console : bool
        Write records to stdout.
    log_format : str, optional
        Record format; ``DEFAULT_FORMAT`` when omitted.

    Returns
    -------
    logging.Logger
    """
    log = logging.getLogger(name)
    log.setLevel(level)
    log.propagate = False
    for handler in log.handlers[:]:
        log.removeHandler(handler)
        handler.close()

    fmt = log_format or DEFAULT_FORMAT
    if log_to_console:
        console = TqdmHandler()
        console.setFormatter(logging.Formatter(fmt))
        log.addHandler(console)
    if log_file:
        log.addHandler(_file_handler(log_file, fmt))
    return log


logger = setup_logger()


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Package logger, or a child of it for ``name``.

    Names outside the package namespace are nested under it, so
    ``get_logger(__name__)`` always inherits the package handlers.
    """
    if name is None or name == PACKAGE_LOGGER:
        return logger
    if not name.startswith(PACKAGE_LOGGER + "."):
        name = f"{PACKAGE_LOGGER}.{name}"
    return logging.getLogger(name)


def set_log_level(level: Union[int, str]) -> None:
    logger.setLevel(level)


def resolve_level(args: Any) -> int:
    """``--verbose`` wins over ``--quiet``, which wins over ``--log-level``."""
    if getattr(args, "verbose", False):
        return logging.DEBUG
    if getattr(args, "quiet", False):
        return logging.WARNING
    return getattr(logging, getattr(args, "log_level", None) or "INFO")


def config_from_args(args: Any) -> None:
    """
    Apply the logging flags of a parsed command line to the package logger.

    A ``--log-file`` replaces any file handler left by an earlier command in the
    same process.
    """
    set_log_level(resolve_level(args))
    log_file = getattr(args, "log_file", None)
    if not log_file:
        return
    for handler in logger.handlers[:]:
        if isinstance(handler, logging.FileHandler):
            logger.removeHandler(handler)
            handler.close()
    logger.addHandler(_file_handler(log_file, DEFAULT_FORMAT))
