"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Sub-byte packing as instruction sequences.

Sources are staged in memory one byte per element (two's complement
for signed tensors). Bit-plane packing produces one buffer per bit
position, element ``i`` at bit ``i`` of its plane; dense packing puts
``p`` bits per element back to back. Every traced instruction runs in
the ``pack`` region so reports can attribute packing cycles.
"""
import numpy as np

from .base import logger
from .errors import *
from .isa import *
from .machine import releases_scratch
from .tensors import PackedTensor, QuantTensor
from .utility import ceil_div

PACK_REGION = "pack"

# registers v0..v7 receive bit planes
_SRC = 8
_TMP = 9
_DENSE = 0
# emulated packing
_ONES = 10
_LOW_BYTE = 11
_X = 12
_T = 13
_NARROW = 14

_BYTE_LSBS = 0x0101010101010101
# shift-or steps collecting the LSBs of 8 bytes into the low byte
_GATHER_SHIFTS = (7, 14, 28)


def stage(machine, nbytes, build):
    """
    Host side placement of a buffer, not traced.

    ``build()`` is only called by functional machines; dry runs just
    reserve the address range.
    """
    if machine.dry_run:
        return machine.memory.allocate(nbytes)
    payload = np.ascontiguousarray(build())
    if payload.nbytes != nbytes:
        raise VBitSimPreconditionError("Staged %d bytes, expected %d" % (payload.nbytes, nbytes))
    return machine.memory.store(payload)


def staged_length(cfg, numel):
    """ Source length (elements) the packers may read: a whole number of chunks """
    vlmax = cfg.vlmax(8)
    if numel < vlmax:
        return ceil_div(numel, 8) * 8
    return ceil_div(numel, vlmax) * vlmax


def stage_bytes(machine, numel, build):
    """ Stages ``numel`` one-byte elements, zero padded to :func:`staged_length` """
    length = staged_length(machine.config, numel)

    def padded():
        raw = np.ascontiguousarray(build()).view(np.uint8).ravel()
        return np.pad(raw, (0, length - raw.size))

    return stage(machine, length, padded)


# ----------------------------------------------------------------------
# instruction sequences

def emit_pack_bitplanes(machine, src_addr, numel, bits, plane_addrs):
    """ Bit planes through VBITPACK with p=1, one call per chunk and plane """
    if numel == 0:
        return
    chunk = min(machine.config.vlmax(8), numel)
    group = 8 * chunk

    def body(start, count):
        program = [vsetvl(chunk, 8)]
        program += [vxor(m, m, m) for m in range(bits)]
        # last chunk first: it ends up in the most significant slice
        for c in reversed(range(ceil_div(count, chunk))):
            program.append(vle(_SRC, src_addr + start + c * chunk))
            for m in range(bits):
                if m:
                    program.append(vsrl(_TMP, _SRC, m))
                program.append(vbitpack(m, _TMP if m else _SRC, 1))
        program.append(vsetvl(ceil_div(count, 8), 8))
        program += [vse(m, plane_addrs[m] + start // 8) for m in range(bits)]
        return program

    full, rest = divmod(numel, group)
    machine.run_loop(lambda start: body(start, group), [g * group for g in range(full)])
    if rest:
        machine.run_program(body(full * group, rest))


def emit_pack_bitplanes_emulated(machine, src_addr, numel, bits, plane_addrs):
    """
    Bit planes with base instructions only.

    Per 64-bit word of eight source bytes: shift plane bit m down, mask
    the byte LSBs, fold them into the low byte with three shift-or steps
    and mask it. The low bytes are then narrowed to consecutive plane
    bytes with single element load/store pairs.
    """
    if numel == 0:
        return
    words = ceil_div(numel, 8)
    chunk = min(machine.config.vlmax(64), words)
    consts = stage(machine, 16 * chunk, lambda: np.concatenate([
        np.full(chunk, _BYTE_LSBS, dtype="<u8"), np.full(chunk, 0xFF, dtype="<u8")]))
    scratch = machine.memory.allocate(8 * chunk)
    machine.run_program([vsetvl(chunk, 64), vle(_ONES, consts), vle(_LOW_BYTE, consts + 8 * chunk)])

    def body(first, count):
        program = []
        for m in range(bits):
            program.append(vsetvl(count, 64))
            if m == 0:
                program += [vle(_SRC, src_addr + 8 * first), vand(_X, _SRC, _ONES)]
            else:
                program += [vsrl(_X, _SRC, m), vand(_X, _X, _ONES)]
            for shift in _GATHER_SHIFTS:
                program += [vsrl(_T, _X, shift), vor(_X, _X, _T)]
            program += [vand(_X, _X, _LOW_BYTE), vse(_X, scratch), vsetvl(1, 8)]
            for e in range(count):
                program += [vle(_NARROW, scratch + 8 * e), vse(_NARROW, plane_addrs[m] + first + e)]
        return program

    full, rest = divmod(words, chunk)
    machine.run_loop(lambda first: body(first, chunk), [i * chunk for i in range(full)])
    if rest:
        machine.run_program(body(full * chunk, rest))


def emit_pack_dense(machine, src_addr, numel, bits, dst_addr):
    """ Dense packing through VBITPACK with p=bits, bits must divide 8 """
    if 8 % bits:
        raise VBitSimPreconditionError("VBITPACK dense packing needs a precision dividing 8, got %d" % bits)
    if numel == 0:
        return
    chunk = min(machine.config.vlmax(8), numel)
    group = (8 // bits) * chunk

    def body(start, count):
        program = [vsetvl(chunk, 8), vxor(_DENSE, _DENSE, _DENSE)]
        for c in reversed(range(ceil_div(count, chunk))):
            program += [vle(_SRC, src_addr + start + c * chunk), vbitpack(_DENSE, _SRC, bits)]
        program += [vsetvl(ceil_div(count * bits, 8), 8), vse(_DENSE, dst_addr + start * bits // 8)]
        return program

    full, rest = divmod(numel, group)
    machine.run_loop(lambda start: body(start, group), [g * group for g in range(full)])
    if rest:
        machine.run_program(body(full * group, rest))


def pack_planes_at(machine, src_addr, numel, bits, emulate=False):
    """ Packs a staged source into freshly allocated planes, returns their addresses """
    plane_bytes = ceil_div(numel, 8)
    plane_addrs = [machine.memory.allocate(plane_bytes) for _ in range(bits)]
    emit = emit_pack_bitplanes_emulated if emulate else emit_pack_bitplanes
    with machine.region(PACK_REGION):
        emit(machine, src_addr, numel, bits, plane_addrs)
    return plane_addrs


# ----------------------------------------------------------------------
# tensor level operations

@releases_scratch
def _pack_bitplanes(machine, t, emulate):
    with logger.debug("Packing %s into bit planes%s" % (t, " (base instructions)" if emulate else "")):
        src = stage_bytes(machine, t.numel, t.raw_bytes)
        plane_addrs = pack_planes_at(machine, src, t.numel, t.precision_bits, emulate)
    if machine.dry_run:
        return None
    plane_bytes = ceil_div(t.numel, 8)
    planes = [machine.memory.read(addr, plane_bytes) for addr in plane_addrs]
    return PackedTensor(PackedTensor.BITPLANE, t.precision_bits, t.signed, t.shape, planes=planes)


def pack_bitplanes(machine, t):
    """
    Bit-plane layout of ``t`` through VBITPACK.

    :returns: PackedTensor, or None on a dry-run machine
    """
    return _pack_bitplanes(machine, t, emulate=False)


def pack_bitplanes_emulated(machine, t):
    """ Same planes as :func:`pack_bitplanes` without VBITPACK """
    return _pack_bitplanes(machine, t, emulate=True)


def pack_dense_host(t):
    """ Untraced dense packer for precisions VBITPACK cannot slice a byte into """
    bits = np.unpackbits(t.raw_bytes()[:, None], axis=1, bitorder="little")[:, :t.precision_bits]
    data = np.packbits(bits.ravel(), bitorder="little")
    return PackedTensor(PackedTensor.DENSE, t.precision_bits, t.signed, t.shape, data=data)


@releases_scratch
def pack_dense(machine, t):
    """
    Dense layout of ``t``. Precisions dividing 8 go through VBITPACK,
    others are packed on the host without trace.
    """
    p = t.precision_bits
    if 8 % p:
        logger.debug("Precision %d does not divide a byte, packing %s on the host" % (p, t))
        return None if machine.dry_run else pack_dense_host(t)
    nbytes = ceil_div(t.numel * p, 8)
    src = stage_bytes(machine, t.numel, t.raw_bytes)
    dst = machine.memory.allocate(nbytes)
    with machine.region(PACK_REGION):
        emit_pack_dense(machine, src, t.numel, p, dst)
    if machine.dry_run:
        return None
    return PackedTensor(PackedTensor.DENSE, p, t.signed, t.shape, data=machine.memory.read(dst, nbytes))


def _sign_extend(values, bits, signed):
    values = values.astype(np.int64)
    if signed:
        values -= (values >> (bits - 1)) << bits
    return values


def unpack_dense(pt):
    if pt.layout != PackedTensor.DENSE:
        raise VBitSimPreconditionError("unpack_dense needs a dense tensor, got %s" % pt.layout)
    p = pt.precision_bits
    bits = np.unpackbits(pt.data, bitorder="little")[:pt.numel * p].reshape(pt.numel, p)
    values = bits.astype(np.int64) @ (np.int64(1) << np.arange(p, dtype=np.int64))
    return QuantTensor(_sign_extend(values, p, pt.signed).reshape(pt.shape), p, pt.signed)


def unpack_bitplanes(pt):
    if pt.layout != PackedTensor.BITPLANE:
        raise VBitSimPreconditionError("unpack_bitplanes needs a bit-plane tensor, got %s" % pt.layout)
    values = np.zeros(pt.numel, dtype=np.int64)
    for m, plane in enumerate(pt.planes):
        values |= np.unpackbits(plane, bitorder="little")[:pt.numel].astype(np.int64) << m
    return QuantTensor(_sign_extend(values, pt.precision_bits, pt.signed).reshape(pt.shape),
                       pt.precision_bits, pt.signed)
