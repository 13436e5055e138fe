"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import logging
import sys
import traceback

from vbitsim.base import *
from vbitsim.cli import build_parser, run
from vbitsim.errors import *
from vbitsim.utility import VERBOSE, set_logging_levels


def _console_level(args):
    if args.quiet:
        return logging.ERROR
    return {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}.get(args.verbose, VERBOSE)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if sys.stderr.isatty():
        set_logging_levels(colors=True)
    channels = [add_console_channel(_console_level(args))]

    try:
        if args.log_file:
            channels.append(add_file_channel(args.log_file))
        return run(args)

    except VerificationError as e:
        logger.error(str(e))
        return EXIT_CODE_VERIFICATION_FAILED
    except VBitSimInternalError as e:
        # VBitSimInternalError should never be raised.
        # It's a vbitsim logic error and should be reported.
        logger.error(str(e))
        logger.error(traceback.format_exc())
        user_log_channel.show_messages()
        return EXIT_CODE_UNEXPECTED_ERROR
    except VBitSimFatalError as e:
        logger.error(str(e))
        return EXIT_CODE_USAGE_ERROR
    except Exception as e:
        # All errors should be handled by above clauses.
        # If any propagates here it's a vbitsim logic error and should be reported.
        logger.error(str(e))
        logger.error(traceback.format_exc())
        user_log_channel.show_messages()
        return EXIT_CODE_UNEXPECTED_ERROR
    finally:
        for channel in channels:
            remove_channel(channel)


if __name__ == "__main__":
    sys.exit(main())
