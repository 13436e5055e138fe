"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Scalar reference implementations. Nothing here imports the machine,
the packers or the kernels; integer results are exact python ints or
int64, floats are doubles.
"""
import math

import numpy as np

from .errors import *


def _values(t):
    """ QuantTensor or array-like to a python int list """
    values = getattr(t, "values", t)
    return [int(v) for v in np.asarray(values).ravel()]


def popcount_ref(x):
    count = 0
    while x:
        count += x & 1
        x >>= 1
    return count


def dot_ref(w, a):
    w, a = _values(w), _values(a)
    if len(w) != len(a):
        raise ShapeMismatchError("dot_ref operands have %d and %d elements" % (len(w), len(a)))
    total = 0
    for x, y in zip(w, a):
        total += x * y
    return total


def matmul_ref(A, B):
    A = np.asarray(getattr(A, "values", A))
    B = np.asarray(getattr(B, "values", B))
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeMismatchError("matmul_ref cannot multiply %s by %s" % (A.shape, B.shape))
    rows, inner, cols = A.shape[0], A.shape[1], B.shape[1]
    out = np.zeros((rows, cols), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            total = 0
            for k in range(inner):
                total += int(A[r, k]) * int(B[k, c])
            out[r, c] = total
    return out


def conv2d_ref(inputs, weights, params):
    """
    Direct convolution: one shifted window per kernel offset, summed
    over input channels in int64.
    """
    x = np.asarray(getattr(inputs, "values", inputs)).astype(np.int64)
    w = np.asarray(getattr(weights, "values", weights)).astype(np.int64)
    if x.shape != params.input_shape or w.shape != params.weight_shape:
        raise ShapeMismatchError("conv2d_ref shapes %s, %s do not match %r" % (x.shape, w.shape, params))
    pad, stride = params.padding, params.stride
    out_h, out_w = params.output_h, params.output_w
    padded = np.zeros((params.in_channels, params.input_h + 2 * pad, params.input_w + 2 * pad), dtype=np.int64)
    padded[:, pad:pad + params.input_h, pad:pad + params.input_w] = x
    out = np.zeros(params.output_shape, dtype=np.int64)
    for ky in range(params.kernel_h):
        for kx in range(params.kernel_w):
            window = padded[:, ky:ky + stride * out_h:stride, kx:kx + stride * out_w:stride][:, :out_h, :out_w]
            for o in range(params.out_channels):
                for c in range(params.in_channels):
                    out[o] += w[o, c, ky, kx] * window[c]
    return out


# ----------------------------------------------------------------------
# packing references

def _encoding(value, bits):
    return value & ((1 << bits) - 1)


def pack_bitplanes_ref(values, bits):
    """ list of ``bits`` bytearrays, plane m bit i = bit m of element i """
    values = _values(values)
    planes = [bytearray((len(values) + 7) // 8) for _ in range(bits)]
    for i, v in enumerate(values):
        code = _encoding(v, bits)
        for m in range(bits):
            if (code >> m) & 1:
                planes[m][i // 8] |= 1 << (i % 8)
    return [bytes(p) for p in planes]


def pack_dense_ref(values, bits):
    values = _values(values)
    out = bytearray((len(values) * bits + 7) // 8)
    position = 0
    for v in values:
        code = _encoding(v, bits)
        for b in range(bits):
            if (code >> b) & 1:
                out[position // 8] |= 1 << (position % 8)
            position += 1
    return bytes(out)


def unpack_dense_ref(data, count, bits, signed=False):
    values = []
    for i in range(count):
        code = 0
        for b in range(bits):
            position = i * bits + b
            code |= ((data[position // 8] >> (position % 8)) & 1) << b
        if signed and code >> (bits - 1):
            code -= 1 << bits
        values.append(code)
    return values


# ----------------------------------------------------------------------
# quantized layer

def round_half_away_ref(x):
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _clamp(q, bits, signed):
    lo, hi = (-(1 << (bits - 1)), (1 << (bits - 1)) - 1) if signed else (0, (1 << bits) - 1)
    return min(max(q, lo), hi)


def quantize_ref(x, scheme):
    if not math.isfinite(x):
        raise QuantizationError("Cannot quantize %r" % x)
    return _clamp(round_half_away_ref(x / scheme.scale) + scheme.zero_point, scheme.precision_bits, scheme.signed)


def rescale_ref(acc, factor, scheme):
    return _clamp(round_half_away_ref(float(acc) * factor) + scheme.zero_point, scheme.precision_bits, scheme.signed)


def quantized_layer_ref(cfg, input_fp, weights):
    """
    quantize -> integer conv -> rescale -> dequantize, elementwise in
    doubles.

    :param cfg: LayerConfig
    :param input_fp: float array of the layer's input shape
    :param weights: integer weights (QuantTensor or array)
    :returns: float64 array of the output shape
    """
    a, o = cfg.activation_scheme, cfg.output_scheme
    factor = cfg.rescale_factor
    if not (math.isfinite(factor) and factor > 0) or not (a.scale > 0 and o.scale > 0):
        raise QuantizationError("Layer %s has invalid scales" % cfg.name)
    flat = np.asarray(input_fp, dtype=np.float64).ravel()
    q_in = np.array([quantize_ref(float(x), a) for x in flat], dtype=np.int64).reshape(cfg.params.input_shape)
    acc = conv2d_ref(q_in - a.zero_point, weights, cfg.params)
    out = [(rescale_ref(int(v), factor, o) - o.zero_point) * o.scale for v in acc.ravel()]
    return np.array(out, dtype=np.float64).reshape(cfg.params.output_shape)
