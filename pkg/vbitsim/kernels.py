"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Bit-serial kernels and the int8 baseline as instruction sequences.

A product of an M-bit w and an N-bit a is evaluated plane by plane::

    w . a = sum_m sum_n 2^(m+n) popcount(w_m AND a_n)

For signed operands the most significant plane carries the weight
-2^(M-1); such terms are shift-accumulated into a second accumulator
that is subtracted at the end.

GEMM layout (matmul, conv2d): every vector element is one row of A
(one output pixel), elements hold 32-bit plane words. The reduction
dimension is padded to a multiple of 32 and walked word by word. Weight
plane words are broadcast across the vector in memory, prepared on the
host once per layer, because the instruction set has no scalar operand
form.
"""
import numpy as np

from .base import logger
from .errors import *
from .isa import *
from .machine import releases_scratch
from .packing import pack_planes_at, stage, stage_bytes
from .tensors import PackedTensor, QuantTensor
from .utility import ceil_div

KERNEL_REGION = "compute"

# GEMM registers
_ACC = 0
_ACC_NEG = 1
_A_PLANES = 2     # v2..v9
_W_PLANES = 10    # v10..v17
_AND = 18
_COUNT = 19
# dot registers
_PART = 20
_HALF = 21


def negative_term(m, n, w_bits, a_bits, w_signed, a_signed):
    """ True when 2^(m+n) popcount(w_m AND a_n) enters with a minus sign """
    w_msb = w_signed and m == w_bits - 1
    a_msb = a_signed and n == a_bits - 1
    return w_msb != a_msb


def _check_signedness(w_signed, a_signed, mixed_signedness):
    if w_signed != a_signed and not mixed_signedness:
        raise QuantizationError("Operands differ in signedness, pass mixed_signedness=True to allow it")


def _plane_words(plane, words):
    padded = np.zeros(4 * words, dtype=np.uint8)
    padded[:plane.size] = plane
    return padded


# ----------------------------------------------------------------------
# dot product

@releases_scratch
def dot_bitserial(machine, w, a, mixed_signedness=False):
    """
    Bit-serial dot product of two bit-plane tensors.

    The plane words are spread across vector elements; each term is
    VAND, VPOPCNT, a halving tree of VADDs through a scratch buffer and
    a VSHACC into element 0 of an accumulator.

    :returns: python int, None on a dry-run machine
    """
    if w.layout != PackedTensor.BITPLANE or a.layout != PackedTensor.BITPLANE:
        raise VBitSimPreconditionError("dot_bitserial needs bit-plane operands")
    if w.numel != a.numel:
        raise ShapeMismatchError("Dot operands have %d and %d elements" % (w.numel, a.numel))
    _check_signedness(w.signed, a.signed, mixed_signedness)
    M, N = w.precision_bits, a.precision_bits
    terms = [(m, n, negative_term(m, n, M, N, w.signed, a.signed)) for m in range(M) for n in range(N)]
    any_negative = any(neg for _, _, neg in terms)

    words = ceil_div(w.numel, 32)
    w_addrs = [stage(machine, 4 * words, lambda p=p: _plane_words(p, words)) for p in w.planes]
    a_addrs = [stage(machine, 4 * words, lambda p=p: _plane_words(p, words)) for p in a.planes]
    chunk = min(machine.config.vlmax(32), max(words, 1))
    scratch = machine.memory.allocate(4 * chunk)
    result = machine.memory.allocate(4)

    def reduce_to_first(count):
        program = [vse(_PART, scratch)]
        while count > 1:
            half, keep = count // 2, count - count // 2
            program += [vsetvl(half, 32), vle(_HALF, scratch + 4 * keep), vadd(_PART, _PART, _HALF)]
            if keep > 1:
                program += [vsetvl(keep, 32), vse(_PART, scratch)]
            count = keep
        return program

    def body(first, count):
        program = [vsetvl(count, 32)]
        program += [vle(_W_PLANES + m, w_addrs[m] + 4 * first) for m in range(M)]
        program += [vle(_A_PLANES + n, a_addrs[n] + 4 * first) for n in range(N)]
        for m, n, negative in terms:
            program += [vsetvl(count, 32), vand(_PART, _W_PLANES + m, _A_PLANES + n), vpopcnt(_PART, _PART)]
            program += reduce_to_first(count)
            program += [vsetvl(1, 32), vshacc(_ACC_NEG if negative else _ACC, _PART, m + n)]
        return program

    with machine.region(KERNEL_REGION):
        machine.run_program([vsetvl(1, 32), vxor(_ACC, _ACC, _ACC)] +
                            ([vxor(_ACC_NEG, _ACC_NEG, _ACC_NEG)] if any_negative else []))
        full, rest = divmod(words, chunk)
        machine.run_loop(lambda first: body(first, chunk), [i * chunk for i in range(full)])
        if rest:
            machine.run_program(body(full * chunk, rest))
        machine.run_program([vsetvl(1, 32)] +
                            ([vsub(_ACC, _ACC, _ACC_NEG)] if any_negative else []) +
                            [vse(_ACC, result)])
    if machine.dry_run:
        return None
    return int(machine.memory.read_array(result, 1, "<i4")[0])


# ----------------------------------------------------------------------
# bit-serial GEMM

def _word_major(rows, reduction, words):
    """ (rows, K) values -> flat (word, row, bit) order with K padded to 32 * words """
    padded = np.zeros((rows.shape[0], 32 * words), dtype=rows.dtype)
    padded[:, :reduction] = rows
    return padded.reshape(rows.shape[0], words, 32).transpose(1, 0, 2).ravel()


def _row_major_padded(cols, reduction, words):
    padded = np.zeros((cols.shape[0], 32 * words), dtype=cols.dtype)
    padded[:, :reduction] = cols
    return padded.ravel()


@releases_scratch
def gemm_bitserial(machine, activations, weights, emulate_packing=False):
    """
    Bit-serial ``activations (P x K) . weights (C x K)^T``.

    Both operands are QuantTensors, their bit planes are packed on the
    machine (region ``pack``). Activation rows run in parallel across
    vector elements, blocks of up to VLEN/32 rows.

    :returns: (C, P) int64 array, None on a dry-run machine
    """
    rows, reduction = activations.shape
    cols = weights.shape[0]
    if weights.shape[1] != reduction:
        raise ShapeMismatchError("GEMM reduction lengths differ: %d and %d" % (reduction, weights.shape[1]))
    if rows == 0 or cols == 0 or reduction == 0:
        raise ShapeMismatchError("GEMM operands must not be empty: %dx%d by %dx%d" % (rows, reduction, cols, reduction))
    M, N = weights.precision_bits, activations.precision_bits
    words = ceil_div(reduction, 32)
    block = min(machine.config.vlmax(32), rows)
    terms = [(m, n, negative_term(m, n, M, N, weights.signed, activations.signed))
             for m in range(M) for n in range(N)]
    any_negative = any(neg for _, _, neg in terms)

    with logger.debug("Bit-serial GEMM %dx%d by %dx%d at W%d/A%d" % (rows, reduction, cols, reduction, M, N)):
        a_numel = 32 * words * rows
        a_src = stage_bytes(machine, a_numel,
                            lambda: _word_major(activations.raw_bytes().reshape(rows, reduction), reduction, words))
        a_planes = pack_planes_at(machine, a_src, a_numel, N, emulate_packing)

        w_numel = 32 * words * cols
        w_src = stage_bytes(machine, w_numel,
                            lambda: _row_major_padded(weights.raw_bytes().reshape(cols, reduction), reduction, words))
        w_planes = pack_planes_at(machine, w_src, w_numel, M, emulate_packing)

        def splat():
            plane_words = np.stack([machine.memory.read_array(addr, cols * words, "<u4") for addr in w_planes])
            return np.ascontiguousarray(np.broadcast_to(plane_words.T[:, :, None], (cols * words, M, block)))

        w_splat = stage(machine, 4 * cols * words * M * block, splat)
        out = machine.memory.allocate(4 * cols * rows)

        def body(item, count):
            start, c = item
            program = [vsetvl(count, 32), vxor(_ACC, _ACC, _ACC)]
            if any_negative:
                program.append(vxor(_ACC_NEG, _ACC_NEG, _ACC_NEG))
            for j in range(words):
                program += [vle(_A_PLANES + n, a_planes[n] + 4 * (j * rows + start)) for n in range(N)]
                program += [vle(_W_PLANES + m, w_splat + 4 * block * ((c * words + j) * M + m)) for m in range(M)]
                for m, n, negative in terms:
                    program += [vand(_AND, _W_PLANES + m, _A_PLANES + n), vpopcnt(_COUNT, _AND),
                                vshacc(_ACC_NEG if negative else _ACC, _COUNT, m + n)]
            if any_negative:
                program.append(vsub(_ACC, _ACC, _ACC_NEG))
            program.append(vse(_ACC, out + 4 * (c * rows + start)))
            return program

        full, rest = divmod(rows, block)
        with machine.region(KERNEL_REGION):
            machine.run_loop(lambda item: body(item, block), [(b * block, c) for b in range(full) for c in range(cols)])
            if rest:
                machine.run_loop(lambda item: body(item, rest), [(full * block, c) for c in range(cols)])
    if machine.dry_run:
        return None
    return machine.memory.read_array(out, cols * rows, "<i4").astype(np.int64).reshape(cols, rows)


def matmul_bitserial(machine, A, B, emulate_packing=False, mixed_signedness=False):
    """
    ``A (R x K) . B (K x C)`` on the bit-serial GEMM; B is packed once
    and reused by every row block.

    :returns: (R, C) int64 array, None on a dry-run machine
    """
    if len(A.shape) != 2 or len(B.shape) != 2 or A.shape[1] != B.shape[0]:
        raise ShapeMismatchError("Cannot multiply %s by %s" % (A.shape, B.shape))
    _check_signedness(B.signed, A.signed, mixed_signedness)
    weights = QuantTensor(B.values.T, B.precision_bits, B.signed)
    result = gemm_bitserial(machine, A, weights, emulate_packing)
    return None if result is None else result.T.copy()


# ----------------------------------------------------------------------
# convolution

def im2col(values, params):
    """ (C, H, W) -> (P, K), K ordered (channel, ky, kx) like the weights """
    padded = np.pad(values, ((0, 0), (params.padding, params.padding), (params.padding, params.padding)))
    out_h, out_w, stride = params.output_h, params.output_w, params.stride
    cols = np.empty((params.output_pixels, params.reduction_length), dtype=values.dtype)
    k = 0
    for ci in range(params.in_channels):
        for ky in range(params.kernel_h):
            for kx in range(params.kernel_w):
                patch = padded[ci, ky:ky + stride * (out_h - 1) + 1:stride, kx:kx + stride * (out_w - 1) + 1:stride]
                cols[:, k] = patch.ravel()
                k += 1
    return cols


def conv2d_bitserial(machine, inputs, weights, params, emulate_packing=False, mixed_signedness=False):
    """
    Convolution lowered to im2col (host) and the bit-serial GEMM.

    Weights are packed once per call, activations per call; both packing
    traces are part of the returned cost.

    :returns: (Cout, Hout, Wout) int64 array, None on a dry-run machine
    """
    params.check_operands(inputs, weights)
    _check_signedness(weights.signed, inputs.signed, mixed_signedness)
    if machine.dry_run:
        cols = QuantTensor.zeros((params.output_pixels, params.reduction_length),
                                 inputs.precision_bits, inputs.signed)
    else:
        cols = QuantTensor(im2col(inputs.values, params), inputs.precision_bits, inputs.signed)
    w_rows = weights.reshape((params.out_channels, params.reduction_length))
    result = gemm_bitserial(machine, cols, w_rows, emulate_packing)
    return None if result is None else result.reshape(params.output_shape)


@releases_scratch
def conv2d_int8_baseline(machine, inputs, weights, params):
    """
    Convolution on byte elements with the widening VMACC.

    Per block of output pixels and output channel the 32-bit
    accumulators collect one VMACC per reduction index; weights are
    broadcast vectors prepared on the host.

    :returns: (Cout, Hout, Wout) int64 array, None on a dry-run machine
    """
    params.check_operands(inputs, weights)
    rows, reduction, cols = params.output_pixels, params.reduction_length, params.out_channels
    block = min(machine.config.vlmax(32), rows)
    if weights.signed and not inputs.signed:
        signedness, w_reg, a_reg = MACC_SIGNED_UNSIGNED, 10, 11
    elif inputs.signed and not weights.signed:
        signedness, w_reg, a_reg = MACC_SIGNED_UNSIGNED, 11, 10
    else:
        signedness, w_reg, a_reg = (MACC_SIGNED if weights.signed else MACC_UNSIGNED), 10, 11

    with logger.debug("Int8 conv %r" % (params,)):
        a_src = stage(machine, reduction * rows,
                      lambda: np.ascontiguousarray(im2col(inputs.values, params).T).view(np.uint8))
        w_splat = stage(machine, cols * reduction * block,
                        lambda: np.ascontiguousarray(np.broadcast_to(
                            weights.raw_bytes().reshape(cols, reduction)[:, :, None], (cols, reduction, block))))
        out = machine.memory.allocate(4 * cols * rows)

        def body(item, count):
            start, c = item
            program = [vsetvl(count, 32), vxor(_ACC, _ACC, _ACC), vsetvl(count, 8)]
            for k in range(reduction):
                program += [vle(w_reg, w_splat + block * (c * reduction + k)),
                            vle(a_reg, a_src + k * rows + start),
                            vmacc(_ACC, 10, 11, signedness)]
            program += [vsetvl(count, 32), vse(_ACC, out + 4 * (c * rows + start))]
            return program

        full, rest = divmod(rows, block)
        with machine.region(KERNEL_REGION):
            machine.run_loop(lambda item: body(item, block), [(b * block, c) for b in range(full) for c in range(cols)])
            if rest:
                machine.run_loop(lambda item: body(item, rest), [(full * block, c) for c in range(cols)])
    if machine.dry_run:
        return None
    result = machine.memory.read_array(out, cols * rows, "<i4").astype(np.int64)
    return result.reshape(params.output_shape)
