from __future__ import annotations

import logging
import os
import sys
from typing import Iterable, Optional

from fuzzywuzzy import fuzz


def exit_tfnn(code: int = 1) -> None:
    sys.exit(code)


class _StdOutFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        """
        Filters the logging levels that should be written to STDOUT.
        Anything smaller than error goes to STDOUT, anything else goes to STDERR.
        """
        return record.levelno < logging.ERROR


def setup_logging(
        *,
        level: int = logging.INFO,
        log_file: Optional[str] = None,
) -> None:
    """
    Sets up logging for the command line tool.
    Calling it again replaces the previously installed handlers.

    Parameters:
        level: The logging level to use. Defaults to INFO.
        log_file: Optional path of a rotating log file that merges both streams.

    Returns:
        None
    """
    from logging.handlers import RotatingFileHandler

    OUT = logging.StreamHandler(stream=sys.stdout)
    ERR = logging.StreamHandler(stream=sys.stderr)

    dt_fmt = '%Y-%m-%d %H:%M:%S'
    default_formatter = logging.Formatter('[{asctime}] [{levelname:<8}] {name}: {message}', dt_fmt, style='{')

    OUT.setFormatter(default_formatter)
    ERR.setFormatter(default_formatter)

    OUT.setLevel(level)
    ERR.setLevel(logging.ERROR)

    OUT.addFilter(_StdOutFilter())  # anything error or above goes to stderr

    root = logging.getLogger()
    root.setLevel(level)

    # clear out any existing handlers
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    root.addHandler(OUT)
    root.addHandler(ERR)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        # 10mb size, both streams merged in one file
        MERGED = RotatingFileHandler(filename=log_file, mode="a", maxBytes=1024 * 1024 * 10, encoding="utf-8")
        MERGED.setFormatter(default_formatter)
        MERGED.setLevel(logging.DEBUG)
        root.addHandler(MERGED)


def silence_debug_loggers(main_logger: logging.Logger, logger_names: list) -> None:
    for logger_name in logger_names:
        logging.getLogger(logger_name).setLevel(logging.CRITICAL)
        main_logger.debug(f"Silenced debug logger: {logger_name}")


def closest_match(name: str, choices: Iterable[str], *, cutoff: int = 60) -> Optional[str]:
    """
    Summary:
        Finds the most similar known identifier for a misspelled one.

    Args:
        name: The identifier that failed to resolve.
        choices: The known identifiers.
        cutoff: Minimum fuzz ratio (0-100) for a suggestion.

    Returns:
        The best match, or None if nothing is similar enough.
    """
    best, best_score = None, -1
    for choice in choices:
        score = fuzz.ratio(name.lower(), choice.lower())
        if score > best_score:
            best, best_score = choice, score
    return best if best_score >= cutoff else None


def fmt_float(value: float) -> str:
    """Shortest repr that round-trips, used for activation ids and file headers."""
    return repr(float(value))
