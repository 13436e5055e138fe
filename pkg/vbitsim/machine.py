"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Bit-exact machine state and execution semantics: vector register
file, flat byte memory and the instruction set including VPOPCNT,
VSHACC and VBITPACK.

Element ``i`` of a register occupies bits ``[i*sew, (i+1)*sew)``, bit 0
of an element is its least significant bit. All writes are tail
undisturbed: elements at index >= vl are never modified.
"""
import contextlib
import functools

import numpy as np

from .base import logger
from .config import MachineConfig, NUM_VREGS
from .errors import *
from .isa import *
from .perf import instr_cycles
from .trace import Trace

UNSIGNED_DTYPES = {8: np.dtype("<u1"), 16: np.dtype("<u2"), 32: np.dtype("<u4"), 64: np.dtype("<u8")}
SIGNED_DTYPES = {8: np.dtype("<i1"), 16: np.dtype("<i2"), 32: np.dtype("<i4"), 64: np.dtype("<i8")}

_POPCOUNT_TABLE = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


class VectorRegisterFile(object):
    """ 32 registers of vlen_bits each, stored as raw little-endian bytes """

    def __init__(self, vlen_bits):
        self.vlen_bits = vlen_bits
        self.regs = np.zeros((NUM_VREGS, vlen_bits // 8), dtype=np.uint8)
        self.vl = 0
        self.sew_bits = 8

    @property
    def vlmax(self):
        return self.vlen_bits // self.sew_bits

    def elements(self, reg, sew=None, count=None, signed=False):
        """ Writable view of the first ``count`` elements of ``reg`` """
        sew = self.sew_bits if sew is None else sew
        count = self.vl if count is None else count
        dtype = SIGNED_DTYPES[sew] if signed else UNSIGNED_DTYPES[sew]
        return self.regs[reg].view(dtype)[:count]

    def read(self, reg, sew=None, count=None, signed=False):
        return self.elements(reg, sew, count, signed).copy()

    def write(self, reg, values, sew=None):
        values = np.asarray(values)
        view = self.elements(reg, sew, count=len(values))
        view[:] = values.astype(view.dtype, copy=False)

    def as_int(self, reg):
        return int.from_bytes(self.regs[reg].tobytes(), "little")

    def set_int(self, reg, value):
        self.regs[reg][:] = np.frombuffer(int(value).to_bytes(self.vlen_bits // 8, "little"), dtype=np.uint8)


class Memory(object):
    """
    Flat byte addressable memory. Out of range accesses raise
    :class:`MemoryAccessError`, addresses never wrap.

    A dry-run memory keeps the bounds and the allocator but no bytes.
    """

    def __init__(self, size, dry_run=False):
        self.size = size
        self.data = None if dry_run else np.zeros(size, dtype=np.uint8)
        self._next_free = 0

    def check(self, addr, nbytes, instruction=None):
        if addr < 0 or nbytes < 0 or addr + nbytes > self.size:
            raise MemoryAccessError("Access of %d bytes at %#x outside memory of %d bytes"
                                    % (nbytes, addr, self.size), instruction)

    def read(self, addr, nbytes):
        self.check(addr, nbytes)
        if self.data is None:
            return np.zeros(nbytes, dtype=np.uint8)
        return self.data[addr:addr + nbytes].copy()

    def write(self, addr, payload):
        payload = np.ascontiguousarray(payload)
        raw = payload.view(np.uint8).ravel() if payload.dtype != np.uint8 else payload.ravel()
        self.check(addr, raw.size)
        if self.data is not None:
            self.data[addr:addr + raw.size] = raw

    def read_array(self, addr, count, dtype):
        dtype = np.dtype(dtype)
        return self.read(addr, count * dtype.itemsize).view(dtype)

    def allocate(self, nbytes, align=64):
        addr = -(-self._next_free // align) * align
        if addr + nbytes > self.size:
            raise MemoryAccessError("Out of simulated memory: need %d bytes at %#x, size is %d bytes"
                                    % (nbytes, addr, self.size))
        self._next_free = addr + nbytes
        return addr

    def store(self, payload, align=64):
        """ Allocates room for ``payload``, writes it and returns the address """
        payload = np.ascontiguousarray(payload)
        addr = self.allocate(payload.nbytes, align)
        self.write(addr, payload)
        return addr

    def mark(self):
        """ Allocator position, hand it to :meth:`release` to free what came after """
        return self._next_free

    def release(self, mark):
        if not 0 <= mark <= self._next_free:
            raise VBitSimPreconditionError("Cannot release to %#x, allocator is at %#x" % (mark, self._next_free))
        self._next_free = mark

    @contextlib.contextmanager
    def scratch(self):
        """ Everything allocated inside the block is freed when it ends """
        mark = self.mark()
        try:
            yield
        finally:
            self.release(mark)

    @property
    def used(self):
        return self._next_free


def releases_scratch(func):
    """
    Frees the simulated memory a ``func(machine, ...)`` call allocated
    once it returns. Results must already be copied to the host.
    """
    @functools.wraps(func)
    def wrapper(machine, *args, **kwargs):
        with machine.memory.scratch():
            return func(machine, *args, **kwargs)
    return wrapper


class VectorMachine(object):
    """
    One sequential machine instance.

    Every executed instruction is costed by the cycle model and
    appended to :attr:`trace`. With ``dry_run=True`` instructions are
    validated and costed, vl and sew are tracked, but register and
    memory contents are left alone; cycle costs never depend on data so
    the resulting trace equals the one of a functional run.
    """

    def __init__(self, config=None, dry_run=False):
        self.config = config if config is not None else MachineConfig.default()
        self.dry_run = dry_run
        self.vrf = VectorRegisterFile(self.config.vlen_bits)
        self.memory = Memory(self.config.memory_bytes, dry_run)
        self.trace = Trace()
        self._sinks = [self.trace]
        self._regions = []

    @property
    def vl(self):
        return self.vrf.vl

    @property
    def sew(self):
        return self.vrf.sew_bits

    # ------------------------------------------------------------------
    # tracing helpers

    @contextlib.contextmanager
    def region(self, name):
        """ Tags every instruction executed inside with ``name`` """
        self._regions.append(name)
        try:
            yield
        finally:
            self._regions.pop()

    @contextlib.contextmanager
    def _capture(self):
        trace = Trace()
        self._sinks.append(trace)
        try:
            yield trace
        finally:
            self._sinks.pop()

    @property
    def _current_region(self):
        return self._regions[-1] if self._regions else None

    def charge_scalar(self, label, cycles):
        self._sinks[-1].charge_scalar(label, cycles, self._current_region)

    # ------------------------------------------------------------------
    # program execution

    def run_program(self, instructions):
        """
        Executes ``instructions`` in order and returns their trace.

        The first failing instruction aborts the program, its error
        carries the partial trace as ``partial_trace``.
        """
        trace = Trace()
        self._sinks.append(trace)
        try:
            for instr in instructions:
                self.execute(instr)
        except VBitSimError as e:
            e.partial_trace = trace
            raise
        finally:
            self._sinks.pop()
            self._sinks[-1].extend(trace)
        return trace

    def run_loop(self, body, iterations):
        """
        Runs ``body(it)`` for every iteration and returns the folded trace.

        All iterations must produce programs of identical shape; the
        trace keeps one copy of the body with a repeat count. A dry run
        only generates and costs the first iteration.
        """
        iterations = list(iterations)
        if not iterations:
            return Trace()
        with self._capture() as first:
            self._run_body(body(iterations[0]))
        if not self.dry_run:
            signature = first.signature()
            for it in iterations[1:]:
                with self._capture() as other:
                    self._run_body(body(it))
                if other.signature() != signature:
                    raise VBitSimPostconditionError("Loop iteration %r differs in shape from the first one" % (it,))
        folded = Trace()
        folded.extend(first, repeat=len(iterations))
        self._sinks[-1].extend(folded)
        return folded

    def _run_body(self, instructions):
        for instr in instructions:
            self.execute(instr)

    def execute(self, instr):
        """ Executes one instruction and returns its cycle cost """
        handler = self._HANDLERS.get(instr.opcode)
        if handler is None:
            raise IllegalInstructionError("Unknown opcode %s" % (instr.opcode,), instr)
        handler(self, instr)
        cycles = instr_cycles(instr, self.config, self.vrf.vl, self.vrf.sew_bits)
        self._sinks[-1].record(instr, self.vrf.vl, self.vrf.sew_bits, cycles, region=self._current_region)
        return cycles

    # ------------------------------------------------------------------
    # operand checks

    def _check_register(self, instr, reg, name):
        if reg is None or not 0 <= reg < NUM_VREGS:
            raise IllegalInstructionError("%s: register %s=%r outside [0, %d]"
                                          % (instr.opcode, name, reg, NUM_VREGS - 1), instr)

    def _check_immediate(self, instr, low=0, high=None):
        high = self.vrf.sew_bits - 1 if high is None else high
        if instr.imm is None or not low <= instr.imm <= high:
            raise IllegalInstructionError("%s: immediate %r outside [%d, %d] at sew=%d"
                                          % (instr.opcode, instr.imm, low, high, self.vrf.sew_bits), instr)

    # ------------------------------------------------------------------
    # instruction semantics

    def vsetvl(self, requested_elements, sew_bits):
        """ Sets sew and returns the effective vector length """
        if sew_bits not in self.config.supported_sews:
            raise ConfigurationError("Unsupported element width %r, machine supports %s"
                                     % (sew_bits, ", ".join(str(s) for s in self.config.supported_sews)))
        if requested_elements is None or requested_elements < 0:
            raise IllegalInstructionError("vsetvl: requested length %r is negative" % (requested_elements,))
        self.vrf.sew_bits = sew_bits
        self.vrf.vl = min(requested_elements, self.config.vlmax(sew_bits))
        return self.vrf.vl

    def _exec_vsetvl(self, instr):
        self.vsetvl(instr.avl, instr.sew)

    def _exec_binary(self, instr):
        self._check_register(instr, instr.vd, "vd")
        self._check_register(instr, instr.vs1, "vs1")
        if instr.vs2 is not None:
            self._check_register(instr, instr.vs2, "vs2")
        else:
            self._check_immediate(instr)
        if self.dry_run or self.vrf.vl == 0:
            return
        sew = self.vrf.sew_bits
        dtype = UNSIGNED_DTYPES[sew]
        a = self.vrf.read(instr.vs1)
        if instr.vs2 is not None:
            b = self.vrf.read(instr.vs2)
        else:
            b = np.full(a.shape, instr.imm, dtype=dtype)
        op = instr.opcode
        if op == VAND:
            result = a & b
        elif op == VOR:
            result = a | b
        elif op == VXOR:
            result = a ^ b
        elif op == VADD:
            result = a + b
        elif op == VSUB:
            result = a - b
        elif op == VMUL:
            result = a * b
        elif op == VSLL:
            result = np.left_shift(a, b & dtype.type(sew - 1))
        elif op == VSRL:
            result = np.right_shift(a, b & dtype.type(sew - 1))
        else:
            raise VBitSimUnreachableBranchError("No ALU semantics for %s" % op)
        self.vrf.elements(instr.vd)[:] = result

    def _exec_vmv(self, instr):
        self._check_register(instr, instr.vd, "vd")
        self._check_register(instr, instr.vs1, "vs1")
        if self.dry_run:
            return
        self.vrf.elements(instr.vd)[:] = self.vrf.read(instr.vs1)

    def _exec_vmacc(self, instr):
        self._check_register(instr, instr.vd, "vd")
        self._check_register(instr, instr.vs1, "vs1")
        self._check_register(instr, instr.vs2, "vs2")
        self._check_immediate(instr, MACC_SIGNED, MACC_SIGNED_UNSIGNED)
        sew = self.vrf.sew_bits
        acc_bits = max(sew, 32)
        if acc_bits != sew and self.vrf.vl > self.config.vlmax(acc_bits):
            raise IllegalInstructionError("vmacc: widening to %d bits needs vl <= %d, vl is %d"
                                          % (acc_bits, self.config.vlmax(acc_bits), self.vrf.vl), instr)
        if self.dry_run or self.vrf.vl == 0:
            return
        acc = self.vrf.elements(instr.vd, sew=acc_bits)
        if acc_bits == sew:
            # low sew bits of a product do not depend on signedness
            acc[:] = acc + self.vrf.read(instr.vs1) * self.vrf.read(instr.vs2)
            return
        a = self.vrf.read(instr.vs1, signed=instr.imm in (MACC_SIGNED, MACC_SIGNED_UNSIGNED)).astype(np.int64)
        b = self.vrf.read(instr.vs2, signed=instr.imm == MACC_SIGNED).astype(np.int64)
        total = (acc.astype(np.int64) + a * b) & 0xFFFFFFFF
        acc[:] = total.astype(np.uint32)

    def _exec_vpopcnt(self, instr):
        self._check_register(instr, instr.vd, "vd")
        self._check_register(instr, instr.vs2, "vs2")
        if self.dry_run or self.vrf.vl == 0:
            return
        sew = self.vrf.sew_bits
        raw = self.vrf.regs[instr.vs2][:self.vrf.vl * sew // 8]
        counts = _POPCOUNT_TABLE[raw].reshape(self.vrf.vl, sew // 8).sum(axis=1)
        self.vrf.elements(instr.vd)[:] = counts

    def _exec_vshacc(self, instr):
        self._check_register(instr, instr.vd, "vd")
        self._check_register(instr, instr.vs2, "vs2")
        self._check_immediate(instr)
        if self.dry_run or self.vrf.vl == 0:
            return
        dtype = UNSIGNED_DTYPES[self.vrf.sew_bits]
        acc = self.vrf.elements(instr.vd)
        acc[:] = acc + np.left_shift(self.vrf.read(instr.vs2), dtype.type(instr.imm))

    def _exec_vbitpack(self, instr):
        self._check_register(instr, instr.vd, "vd")
        self._check_register(instr, instr.vs2, "vs2")
        self._check_immediate(instr, 1, self.vrf.sew_bits)
        sew, vl, p = self.vrf.sew_bits, self.vrf.vl, instr.imm
        if sew % p:
            raise IllegalInstructionError("vbitpack: precision %d does not divide sew=%d" % (p, sew), instr)
        if self.dry_run or vl == 0:
            return
        active_bytes = vl * sew // 8
        slice_bits = vl * p
        region = np.unpackbits(self.vrf.regs[instr.vd][:active_bytes], bitorder="little")
        source = self.vrf.read(instr.vs2)
        fields = (source[:, None] >> np.arange(p, dtype=source.dtype)) & source.dtype.type(1)
        shifted = np.concatenate([fields.astype(np.uint8).ravel(), region[:vl * sew - slice_bits]])
        self.vrf.regs[instr.vd][:active_bytes] = np.packbits(shifted, bitorder="little")

    def _exec_vmem(self, instr):
        self._check_register(instr, instr.vd, "vd")
        if instr.addr is None:
            raise IllegalInstructionError("%s needs an address" % instr.opcode, instr)
        nbytes = self.vrf.vl * self.vrf.sew_bits // 8
        self.memory.check(instr.addr, nbytes, instr)
        if self.dry_run or nbytes == 0:
            return
        if instr.opcode == VLE:
            self.vrf.regs[instr.vd][:nbytes] = self.memory.data[instr.addr:instr.addr + nbytes]
        else:
            self.memory.data[instr.addr:instr.addr + nbytes] = self.vrf.regs[instr.vd][:nbytes]

    # no comprehension: class-level names are not visible inside one
    _HANDLERS = dict(list(zip(BINARY_OPCODES, [_exec_binary] * len(BINARY_OPCODES))) +
                     [(VMV, _exec_vmv), (VMACC, _exec_vmacc), (VPOPCNT, _exec_vpopcnt),
                      (VSHACC, _exec_vshacc), (VBITPACK, _exec_vbitpack), (VLE, _exec_vmem),
                      (VSE, _exec_vmem), (VSETVL, _exec_vsetvl)])

    # ------------------------------------------------------------------
    # convenience wrappers, one instruction each

    def exec_alu(self, op, vd, vs1, vs2=None, imm=None):
        return self.execute(binary(op, vd, vs1, vs2=vs2, imm=imm))

    def exec_vpopcnt(self, vd, vs2):
        return self.execute(vpopcnt(vd, vs2))

    def exec_vshacc(self, vd, vs2, shamt):
        return self.execute(vshacc(vd, vs2, shamt))

    def exec_vbitpack(self, vd, vs2, precision):
        return self.execute(vbitpack(vd, vs2, precision))

    def exec_vmem(self, op, vreg, base_addr):
        return self.execute(Instruction(op, vd=vreg, addr=base_addr))

    def load_program_data(self, program):
        """ Applies the ``.data`` preloads of a parsed text program """
        for addr, sew, values in program.data:
            if sew not in UNSIGNED_DTYPES:
                raise TraceParseError("Unsupported element width e%d in .data" % sew)
            mask = (1 << sew) - 1
            payload = np.array([v & mask for v in values], dtype=UNSIGNED_DTYPES[sew])
            self.memory.write(addr, payload)
            logger.verbose("preloaded %d elements of e%d at %#x" % (len(values), sew, addr))
