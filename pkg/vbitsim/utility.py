"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Provides handlers for logging, key=value settings and small
parsing helpers shared by the command line and the library
"""
import collections
import logging.handlers
import os
import re
import sys

from .errors import *


VERBOSE = 5
SUCCESS = 41


class LoggingColors(object):
    """ Padded level names, colored with ANSI escapes on a terminal """

    RESET = "\033[0m"

    # level, name, escape
    LEVELS = (
        (VERBOSE, "VERBOSE ", ""),
        (logging.DEBUG, "DEBUG   ", ""),
        (logging.INFO, "INFO    ", "\033[49m\033[94m"),
        (logging.WARNING, "WARNING ", "\033[43m\033[97m"),
        (logging.ERROR, "ERROR   ", "\033[49m\033[31m"),
        (SUCCESS, "SUCCESS ", "\033[49m\033[32m"),
        (logging.CRITICAL, "CRITICAL", "\033[41m\033[97m"),
    )

    @classmethod
    def level_names(cls, colors=False):
        names = {}
        for level, name, escape in cls.LEVELS:
            names[level] = escape + name + cls.RESET if colors and escape else name
        return names


def set_logging_levels(colors=False):
    for level, name in LoggingColors.level_names(colors).items():
        logging.addLevelName(level, name)


class MyLogger(logging.Logger):
    """
        Reports the caller of ``logger.info(...)`` and friends, not the
        guard object that forwards the call
    """
    _skipped_files = (os.path.normcase(logging._srcfile), os.path.normcase(os.path.abspath(__file__)))

    def findCaller(self, *args, **kwargs):
        f = logging.currentframe()
        while f is not None:
            filename = os.path.normcase(os.path.abspath(f.f_code.co_filename))
            if filename not in self._skipped_files:
                return f.f_code.co_filename, f.f_lineno, f.f_code.co_name, None
            f = f.f_back
        return "(unknown file)", 0, "(unknown function)", None


class NestedLoggingGuard(object):
    """
        Logs a message right away and, used as a context manager, indents
        everything logged inside and closes with ``<message> done`` or
        ``<message> failed``
    """
    depth = 0
    indent = 2

    def __init__(self, _logger, lvl=None, message=None):
        self._logger = _logger
        self._level = lvl
        self._message = message
        if lvl is not None and message is not None:
            self._logger.log(lvl, self._prefix() + message)

    @classmethod
    def _prefix(cls):
        return " " * (cls.depth * cls.indent)

    def __enter__(self):
        if self._message is None:
            raise VBitSimPreconditionError("Nothing to nest under: the guard has no message")
        NestedLoggingGuard.depth += 1
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        NestedLoggingGuard.depth -= 1
        outcome = "done" if exc_type is None else "failed"
        self._logger.log(self._level, "%s%s %s" % (self._prefix(), self._message.strip(), outcome))

    def verbose(self, message):
        return self.log(VERBOSE, message)

    def debug(self, message):
        return self.log(logging.DEBUG, message)

    def info(self, message):
        return self.log(logging.INFO, message)

    def success(self, message):
        return self.log(SUCCESS, message)

    def warning(self, message):
        return self.log(logging.WARNING, message)

    def error(self, message):
        return self.log(logging.ERROR, message)

    def log(self, lvl, message):
        return NestedLoggingGuard(self._logger, lvl, message)


class CycleBufferHandler(logging.handlers.BufferingHandler):
    """ Keeps the last ``capacity`` records, never flushes by itself """

    def __init__(self, capacity):
        super(CycleBufferHandler, self).__init__(capacity)
        self.buffer = collections.deque(maxlen=capacity)

    def shouldFlush(self, record):
        return False

    def flush(self):
        with self.lock:
            self.buffer.clear()

    def show_messages(self, stream=None):
        """ writes the buffered records to ``stream`` (stderr) and forgets them """
        stream = stream or sys.stderr
        if self.buffer:
            stream.write("\n".join(self.format(record) for record in self.buffer) + "\n")
        self.flush()


class Settings(object):
    """
        Line oriented ``key=value`` store

        Blank lines and everything after ``#`` are ignored. Values are
        kept as stripped strings, typed access is up to the caller.
    """
    def __init__(self, basename="vbitsim.cfg", directory=None):
        if directory is None:
            directory = os.getcwd()
        self.values = {}
        self.directory = directory
        self.config_path = os.path.join(directory, basename)
        self.load()

    @classmethod
    def from_path(cls, path):
        directory, basename = os.path.split(os.path.abspath(path))
        if not os.path.isfile(path):
            raise ConfigurationError("Config `%s` does not exist" % path)
        return cls(basename, directory)

    def load(self):
        if not os.path.isfile(self.config_path):
            return
        with open(self.config_path) as f:
            for line_number, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or not key:
                    raise ConfigurationError("Bad config `%s` line %d: expected key=value, got `%s`"
                                             % (self.config_path, line_number, line))
                self.values[key] = value.strip()

    def save(self):
        with open(self.config_path, "w") as f:
            for key in sorted(self.values):
                f.write("%s=%s\n" % (key, self.values[key]))

    def get(self, key, default=None):
        result = self.values.get(key, default)
        if result is None:
            return default
        return result

    def keys(self):
        return sorted(self.values)

    def __contains__(self, key):
        return key in self.values

    def __getitem__(self, key):
        return self.values.get(key)

    def __setitem__(self, key, value):
        if value is not None:
            self.values[key] = str(value)
        else:
            self.values.pop(key, None)


def ceil_div(a, b):
    return -(-a // b)


def parse_dims(text, count=None):
    """ Parses "8x8" or "4x8x3" into a tuple of positive integers

    :param text: dimension string, "x" separated
    :param count: expected number of dimensions, if given
    :raises: ConfigurationError
    """
    if not re.match(r"^\s*\d+(\s*[xX]\s*\d+)*\s*$", str(text)):
        raise ConfigurationError("Bad dimensions `%s`, expected e.g. 8x8" % text)
    dims = tuple(int(part) for part in re.split(r"[xX]", str(text)))
    if count is not None and len(dims) != count:
        raise ConfigurationError("Bad dimensions `%s`, expected %d values" % (text, count))
    if any(d <= 0 for d in dims):
        raise ConfigurationError("Bad dimensions `%s`, values must be positive" % text)
    return dims


def parse_int(text):
    """ Accepts decimal and 0x-prefixed hexadecimal integers """
    try:
        return int(str(text).strip(), 0)
    except ValueError:
        raise ConfigurationError("Bad integer `%s`" % text)
