#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Terminal output of the cli: colored records, errors on stderr, and log lines that
do not tear KronFit / generation progress bars apart.
"""

import logging
import math
import sys

from tqdm import tqdm

from . import CONFIG

ANSI_COLORS = {
    "GREY": "\x1b[38;2m",
    "GREEN": "\x1b[32;10m",
    "YELLOW": "\x1b[33;10m",
    "RED": "\x1b[31;10m",
    "RED_BOLD": "\x1b[31;1m",
    "RESET": "\x1b[0m",
}

LEVEL_COLORS = {
    logging.DEBUG: "GREY",
    logging.WARNING: "YELLOW",
    logging.ERROR: "RED",
    logging.CRITICAL: "RED_BOLD",
}


def colorize(msg, color):
    if not isinstance(msg, str):
        raise RuntimeError("Only string could be colored!")
    if color not in ANSI_COLORS:
        raise RuntimeError(f'Unsupported color {color}. Try one of {", ".join(ANSI_COLORS.keys())}')
    return ANSI_COLORS[color] + msg + ANSI_COLORS["RESET"]


def format_value(value):
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.4g}"
    return str(value)


def summary_line(source, names):
    """
    "A=0.12, D=3.4, ..." from attributes (or mapping keys) of <source>.
    """
    get = source.get if isinstance(source, dict) else lambda name: getattr(source, name)
    return ", ".join(f"{name}={format_value(get(name))}" for name in names)


class LevelRangeFilter(logging.Filter):  # pylint: disable=too-few-public-methods
    """
    Passes records with low <= level < high; drops exception tracebacks unless <keep_tb>.
    """

    def __init__(self, low, high, keep_tb=False):
        super().__init__()
        self.low, self.high = low, high
        self.keep_tb = keep_tb

    def filter(self, record):
        if not self.low <= record.levelno < self.high:
            return False
        if self.keep_tb:
            if hasattr(record, "_exc_info_hidden"):  # another handler has already hidden it
                record.exc_info = record._exc_info_hidden  # pylint: disable=protected-access
                del record._exc_info_hidden
        elif record.exc_info:
            record._exc_info_hidden, record.exc_info = record.exc_info, None
            record.exc_text = None
        return True


class TqdmStreamHandler(logging.StreamHandler):
    """
    Writes through tqdm, so a record printed during a running progress bar lands above it.
    """

    def emit(self, record):
        try:
            tqdm.write(self.format(record), file=self.stream)
            self.flush()
        except Exception:  # pylint: disable=broad-exception-caught
            self.handleError(record)


class ColoredFormatter(logging.Formatter):
    def __init__(self, fmt=None, datefmt=None):
        super().__init__(fmt or CONFIG["USERLOG_MESSAGE_FMT"], datefmt or CONFIG["LOG_DATETIME_FMT"])
        self._colored = {
            level: logging.Formatter(colorize(self._fmt, color), self.datefmt)
            for level, color in LEVEL_COLORS.items()
        }

    def format(self, record):
        colored = self._colored.get(record.levelno)
        return colored.format(record) if colored else super().format(record)


def setup_user_logger(name, least_visible_level):
    """
    Records below error go to stdout, errors to stderr; critical ones (unhandled exceptions)
    are always shown, traceback included. Other tracebacks are shown only while debugging.

    :param least_visible_level: least loglevel, will be displayed to user
    :type least_visible_level: int
    """
    formatter = ColoredFormatter()
    target_logger = logging.getLogger(name)
    keep_tb = least_visible_level <= logging.DEBUG

    routes = [
        (sys.stderr, logging.CRITICAL, logging.CRITICAL + 1, True),
        (sys.stdout, least_visible_level, logging.ERROR, keep_tb),
        (sys.stderr, max(least_visible_level, logging.ERROR), logging.CRITICAL, keep_tb),
    ]
    for stream, low, high, route_keeps_tb in routes:
        handler = TqdmStreamHandler(stream=stream)
        handler.setFormatter(formatter)
        handler.addFilter(LevelRangeFilter(low, high, route_keeps_tb))
        target_logger.addHandler(handler)
