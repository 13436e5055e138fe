"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Provides Exception classes for error handling.
"""


class VBitSimError(RuntimeError):
    """ Basic class of all vbitsim errors"""
    partial_trace = None


class VBitSimNonFatalError(VBitSimError):
    """ vbitsim can continue execution properly """
    pass


class VerificationError(VBitSimNonFatalError):
    """ A kernel result differs from its scalar oracle """

    def __init__(self, message, mismatches=None, first_index=None):
        super(VerificationError, self).__init__(message)
        self.mismatches = mismatches
        self.first_index = first_index


class VBitSimFatalError(VBitSimError):
    """
        vbitsim can't continue properly

        Primary usage is assert-like statements on user input:
        if <condition>: raise ConfigurationError(...)

        Example: a vector length that is not a power of two
    """
    pass


class ConfigurationError(VBitSimFatalError):
    pass


class TraceParseError(ConfigurationError):

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = "line %d: %s" % (line_number, message)
        super(TraceParseError, self).__init__(message)
        self.line_number = line_number


class MachineFault(VBitSimFatalError):
    """ Raised by the machine while executing an instruction """

    def __init__(self, message, instruction=None):
        super(MachineFault, self).__init__(message)
        self.instruction = instruction


class IllegalInstructionError(MachineFault):
    pass


class MemoryAccessError(MachineFault):
    pass


class ShapeMismatchError(VBitSimFatalError):
    pass


class QuantizationError(VBitSimFatalError):
    pass


class VBitSimInternalError(VBitSimFatalError):
    pass


class VBitSimPreconditionError(VBitSimInternalError):
    pass


class VBitSimPostconditionError(VBitSimInternalError):
    pass


class VBitSimUnreachableBranchError(VBitSimInternalError):
    pass
