"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Quantized tensors, their packed forms, convolution shapes, the
tensor file format and the seeded tensor generator.
"""
import struct

import numpy as np

from .errors import *
from .utility import ceil_div

MASK64 = (1 << 64) - 1


def value_range(precision_bits, signed):
    if signed:
        return -(1 << (precision_bits - 1)), (1 << (precision_bits - 1)) - 1
    return 0, (1 << precision_bits) - 1


def check_precision(precision_bits):
    if not 1 <= int(precision_bits) <= 8:
        raise QuantizationError("Precision must be within [1, 8] bits, got %r" % (precision_bits,))
    return int(precision_bits)


class QuantTensor(object):
    """
    Integer tensor of ``precision_bits`` bit values, one byte per value.

    Signed values are kept as int8, unsigned as uint8, so the raw bytes
    are the two's complement encoding the machine loads.
    """

    def __init__(self, values, precision_bits, signed=False, shape=None):
        self.precision_bits = check_precision(precision_bits)
        self.signed = bool(signed)
        values = np.asarray(values)
        if shape is not None:
            values = values.reshape(shape)
        lo, hi = value_range(self.precision_bits, self.signed)
        if values.size and (values.min() < lo or values.max() > hi):
            raise QuantizationError("Values outside [%d, %d] for a %s %d-bit tensor"
                                    % (lo, hi, "signed" if self.signed else "unsigned", self.precision_bits))
        self.values = values.astype(np.int8 if self.signed else np.uint8)

    @classmethod
    def zeros(cls, shape, precision_bits, signed=False):
        # skips the range check and copy, dry runs create large operands this way
        tensor = cls.__new__(cls)
        tensor.precision_bits = check_precision(precision_bits)
        tensor.signed = bool(signed)
        tensor.values = np.zeros(shape, dtype=np.int8 if signed else np.uint8)
        return tensor

    @property
    def shape(self):
        return self.values.shape

    @property
    def numel(self):
        return int(self.values.size)

    @property
    def value_range(self):
        return value_range(self.precision_bits, self.signed)

    def raw_bytes(self):
        return np.ascontiguousarray(self.values).view(np.uint8).ravel()

    def reshape(self, shape):
        return QuantTensor(self.values.reshape(shape), self.precision_bits, self.signed)

    def __eq__(self, other):
        return (isinstance(other, QuantTensor) and self.precision_bits == other.precision_bits and
                self.signed == other.signed and self.shape == other.shape and
                np.array_equal(self.values, other.values))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "QuantTensor(shape=%s, %s%d)" % (self.shape, "s" if self.signed else "u", self.precision_bits)


class PackedTensor(object):
    """
    Sub-byte tensor in one of two layouts.

    ``bitplane``: ``planes[m]`` holds bit m of every element, element i at
    bit i (byte i // 8, bit i % 8), ``ceil(numel / 8)`` bytes per plane.
    ``dense``: ``p`` bits per element back to back, element 0 in the low
    bits of byte 0, ``ceil(numel * p / 8)`` bytes.
    """
    BITPLANE = "bitplane"
    DENSE = "dense"

    def __init__(self, layout, precision_bits, signed, shape, planes=None, data=None):
        if layout not in (self.BITPLANE, self.DENSE):
            raise VBitSimPreconditionError("Unknown packed layout `%s`" % layout)
        self.layout = layout
        self.precision_bits = check_precision(precision_bits)
        self.signed = bool(signed)
        self.shape = tuple(shape)
        self.planes = [np.asarray(p, dtype=np.uint8) for p in planes] if planes is not None else None
        self.data = np.asarray(data, dtype=np.uint8) if data is not None else None
        if layout == self.BITPLANE:
            if self.planes is None or len(self.planes) != self.precision_bits:
                raise VBitSimPreconditionError("Bit-plane tensor needs %d planes" % self.precision_bits)
            if any(p.size != self.plane_bytes for p in self.planes):
                raise VBitSimPreconditionError("Bit-plane buffers must be %d bytes" % self.plane_bytes)
        elif self.data is None or self.data.size != self.dense_bytes:
            raise VBitSimPreconditionError("Dense buffer must be %d bytes" % self.dense_bytes)

    @property
    def numel(self):
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    @property
    def plane_bytes(self):
        return ceil_div(self.numel, 8)

    @property
    def dense_bytes(self):
        return ceil_div(self.numel * self.precision_bits, 8)

    @property
    def nbytes(self):
        if self.layout == self.BITPLANE:
            return self.plane_bytes * self.precision_bits
        return self.dense_bytes

    def __eq__(self, other):
        if not isinstance(other, PackedTensor):
            return False
        same = (self.layout, self.precision_bits, self.signed, self.shape) == \
               (other.layout, other.precision_bits, other.signed, other.shape)
        if not same:
            return False
        if self.layout == self.BITPLANE:
            return all(np.array_equal(a, b) for a, b in zip(self.planes, other.planes))
        return np.array_equal(self.data, other.data)

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "PackedTensor(%s, shape=%s, %s%d)" % (self.layout, self.shape,
                                                     "s" if self.signed else "u", self.precision_bits)


class ConvParams(object):
    """ Shape of one 2d convolution, batch size 1, NCHW """

    def __init__(self, in_channels, out_channels, kernel_h, kernel_w, stride=1, padding=0,
                 input_h=1, input_w=1):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_h = int(kernel_h)
        self.kernel_w = int(kernel_w)
        self.stride = int(stride)
        self.padding = int(padding)
        self.input_h = int(input_h)
        self.input_w = int(input_w)
        positive = (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w,
                    self.stride, self.input_h, self.input_w)
        if any(v <= 0 for v in positive) or self.padding < 0:
            raise ShapeMismatchError("Convolution dimensions must be positive (padding nonnegative): %r" % (self,))
        if self.output_h < 1 or self.output_w < 1:
            raise ShapeMismatchError("Convolution %r has no output pixels" % (self,))

    @property
    def output_h(self):
        return (self.input_h + 2 * self.padding - self.kernel_h) // self.stride + 1

    @property
    def output_w(self):
        return (self.input_w + 2 * self.padding - self.kernel_w) // self.stride + 1

    @property
    def input_shape(self):
        return self.in_channels, self.input_h, self.input_w

    @property
    def weight_shape(self):
        return self.out_channels, self.in_channels, self.kernel_h, self.kernel_w

    @property
    def output_shape(self):
        return self.out_channels, self.output_h, self.output_w

    @property
    def reduction_length(self):
        return self.in_channels * self.kernel_h * self.kernel_w

    @property
    def output_pixels(self):
        return self.output_h * self.output_w

    @property
    def macs(self):
        return self.reduction_length * self.out_channels * self.output_pixels

    def check_operands(self, inputs, weights):
        if tuple(inputs.shape) != self.input_shape:
            raise ShapeMismatchError("Input shape %s does not match %s" % (tuple(inputs.shape), self.input_shape))
        if tuple(weights.shape) != self.weight_shape:
            raise ShapeMismatchError("Weight shape %s does not match %s" % (tuple(weights.shape), self.weight_shape))

    def as_tuple(self):
        return (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w, self.stride,
                self.padding, self.input_h, self.input_w)

    def __eq__(self, other):
        return isinstance(other, ConvParams) and self.as_tuple() == other.as_tuple()

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(self.as_tuple())

    def __repr__(self):
        return ("ConvParams(cin=%d, cout=%d, k=%dx%d, stride=%d, pad=%d, input=%dx%d)"
                % self.as_tuple())


# ----------------------------------------------------------------------
# seeded generation

class SplitMix64(object):
    """
    SplitMix64 stream. ``next_u64(n)`` yields the same numbers as ``n``
    scalar steps of the reference generator.
    """
    GAMMA = 0x9E3779B97F4A7C15
    MIX1 = 0xBF58476D1CE4E5B9
    MIX2 = 0x94D049BB133111EB

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self, count):
        steps = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(self.state) + steps * np.uint64(self.GAMMA)
        self.state = (self.state + count * self.GAMMA) & MASK64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(self.MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(self.MIX2)
        return z ^ (z >> np.uint64(31))

    def next(self):
        return int(self.next_u64(1)[0])

    def integers(self, count, low, high):
        """ ``count`` integers in [low, high] """
        span = np.uint64(high - low + 1)
        return (self.next_u64(count) % span).astype(np.int64) + low

    def floats(self, count):
        """ ``count`` doubles in [0, 1) """
        return (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def random_quant_tensor(shape, precision_bits, signed=False, seed=0, rng=None):
    rng = SplitMix64(seed) if rng is None else rng
    lo, hi = value_range(check_precision(precision_bits), signed)
    numel = int(np.prod(shape, dtype=np.int64))
    return QuantTensor(rng.integers(numel, lo, hi).reshape(shape), precision_bits, signed)


# ----------------------------------------------------------------------
# file format

MAGIC = b"VBTS"
FORMAT_VERSION = 1
LAYOUT_UNPACKED = 0
LAYOUT_DENSE = 1
LAYOUT_BITPLANE = 2
_HEADER = struct.Struct("<4sBBBBB3x")


def tensor_to_bytes(tensor):
    if isinstance(tensor, QuantTensor):
        layout, payload = LAYOUT_UNPACKED, tensor.raw_bytes()
    elif tensor.layout == PackedTensor.DENSE:
        layout, payload = LAYOUT_DENSE, tensor.data
    else:
        layout, payload = LAYOUT_BITPLANE, np.concatenate(tensor.planes) if tensor.planes else np.zeros(0, np.uint8)
    shape = tuple(tensor.shape)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(shape), tensor.precision_bits,
                          1 if tensor.signed else 0, layout)
    dims = struct.pack("<%dI" % len(shape), *shape)
    return header + dims + payload.tobytes()


def tensor_from_bytes(blob):
    if len(blob) < _HEADER.size:
        raise ConfigurationError("Tensor file too short")
    magic, version, rank, precision, flags, layout = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise ConfigurationError("Not a tensor file (magic %r, version %d)" % (magic, version))
    offset = _HEADER.size + 4 * rank
    if len(blob) < offset:
        raise ConfigurationError("Tensor file truncated in its dimensions")
    shape = struct.unpack_from("<%dI" % rank, blob, _HEADER.size)
    signed = bool(flags & 1)
    payload = np.frombuffer(blob, dtype=np.uint8, offset=offset)
    numel = int(np.prod(shape, dtype=np.int64))
    if layout == LAYOUT_UNPACKED:
        if payload.size != numel:
            raise ConfigurationError("Tensor payload has %d bytes, expected %d" % (payload.size, numel))
        values = payload.view(np.int8) if signed else payload
        return QuantTensor(values.reshape(shape), precision, signed)
    if layout == LAYOUT_DENSE:
        expected = ceil_div(numel * precision, 8)
        if payload.size != expected:
            raise ConfigurationError("Dense payload has %d bytes, expected %d" % (payload.size, expected))
        return PackedTensor(PackedTensor.DENSE, precision, signed, shape, data=payload.copy())
    if layout == LAYOUT_BITPLANE:
        plane_bytes = ceil_div(numel, 8)
        if payload.size != plane_bytes * precision:
            raise ConfigurationError("Bit-plane payload has %d bytes, expected %d"
                                     % (payload.size, plane_bytes * precision))
        planes = [payload[m * plane_bytes:(m + 1) * plane_bytes].copy() for m in range(precision)]
        return PackedTensor(PackedTensor.BITPLANE, precision, signed, shape, planes=planes)
    raise ConfigurationError("Unknown tensor layout flag %d" % layout)


def write_tensor(path, tensor):
    with open(path, "wb") as f:
        f.write(tensor_to_bytes(tensor))


def read_tensor(path):
    with open(path, "rb") as f:
        return tensor_from_bytes(f.read())
