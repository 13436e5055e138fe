"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Package version, exit codes and the package logger.
"""
import logging
import logging.handlers
import os

from .utility import CycleBufferHandler, MyLogger, NestedLoggingGuard, set_logging_levels

with open(os.path.join(os.path.dirname(__file__), "VERSION")) as version_file:
    __version__ = version_file.readline().strip()
__docformat__ = "restructuredtext en"

EXIT_CODE_OK = 0
EXIT_CODE_VERIFICATION_FAILED = 1
EXIT_CODE_USAGE_ERROR = 2
EXIT_CODE_UNEXPECTED_ERROR = 60

# `user_log_channel` accumulates the most recent messages so the command line
# can replay them when a run dies unexpectedly. Console and file channels are
# attached by the command line, a library user configures its own.
#
set_logging_levels()
logging.setLoggerClass(MyLogger)
__logger = logging.getLogger('vbitsim')
logging.setLoggerClass(logging.Logger)
logger = NestedLoggingGuard(__logger)
__logger.setLevel(logging.DEBUG)
__logger.addHandler(logging.NullHandler())

user_formatter = logging.Formatter('[%(name)s][%(levelname)6s]: %(message)s')
log_formatter = logging.Formatter('[%(asctime)s][%(levelname)8s]: %(message)s          //  %(filename)s:%(lineno)-5d')

user_log_channel = CycleBufferHandler(capacity=1024)  # store up to 1024 messages
user_log_channel.setLevel(logging.DEBUG)
user_log_channel.setFormatter(user_formatter)
__logger.addHandler(user_log_channel)


def add_console_channel(level, stream=None):
    channel = logging.StreamHandler(stream)
    channel.setLevel(level)
    channel.setFormatter(user_formatter)
    __logger.addHandler(channel)
    return channel


def add_file_channel(path):
    channel = logging.handlers.RotatingFileHandler(path,
                                                   maxBytes=500 * 1024,  # up to 500 kB
                                                   backupCount=2,  # up to two log files
                                                   encoding="utf-8")
    channel.setLevel(logging.NOTSET)
    channel.setFormatter(log_formatter)
    __logger.addHandler(channel)
    return channel


def remove_channel(channel):
    __logger.removeHandler(channel)
    channel.close()
