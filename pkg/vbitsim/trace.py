"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Execution trace: the committed instruction sequence with per
instruction cycle costs and running aggregates.
"""
import collections

from .errors import *
from .isa import OPCODE_CLASSES, SCALAR


class TraceEntry(collections.namedtuple("TraceEntry", "instruction vl sew cycles repeat region")):
    """
    One executed instruction. ``repeat`` > 1 stands for a loop body
    executed that many times with identical vl and sew.
    """
    __slots__ = ()

    @property
    def total_cycles(self):
        return self.cycles * self.repeat


class Trace(object):
    """
    Ordered list of executed instructions plus aggregates.

    Aggregates are updated on every append so they always equal the
    sum over entries. Scalar work charged by the host side (rescale)
    lives in :attr:`scalar_work` and is part of :attr:`total_cycles`.
    """

    def __init__(self):
        self.entries = []
        self.scalar_work = []  # (label, cycles, region)
        self.total_cycles = 0
        self.instruction_count = 0
        self.cycles_by_class = collections.Counter(dict((c, 0) for c in OPCODE_CLASSES))
        self.cycles_by_opcode = collections.Counter()
        self.count_by_opcode = collections.Counter()
        self.cycles_by_region = collections.Counter()

    def record(self, instruction, vl, sew, cycles, repeat=1, region=None):
        entry = TraceEntry(instruction, vl, sew, cycles, repeat, region)
        self._add(entry)
        return entry

    def _add(self, entry):
        self.entries.append(entry)
        total = entry.cycles * entry.repeat
        self.total_cycles += total
        self.instruction_count += entry.repeat
        self.cycles_by_class[entry.instruction.opcode_class] += total
        self.cycles_by_opcode[entry.instruction.opcode] += total
        self.count_by_opcode[entry.instruction.opcode] += entry.repeat
        if entry.region is not None:
            self.cycles_by_region[entry.region] += total

    def charge_scalar(self, label, cycles, region=None):
        if cycles < 0:
            raise VBitSimPreconditionError("Negative scalar charge %d for %s" % (cycles, label))
        self.scalar_work.append((label, cycles, region))
        self.total_cycles += cycles
        self.cycles_by_class[SCALAR] += cycles
        if region is not None:
            self.cycles_by_region[region] += cycles

    def extend(self, other, repeat=1):
        """ Appends ``other`` ``repeat`` times, folding repeats into the entries """
        for entry in other.entries:
            self._add(entry._replace(repeat=entry.repeat * repeat))
        for label, cycles, region in other.scalar_work:
            for _ in range(repeat):
                self.charge_scalar(label, cycles, region)

    def __add__(self, other):
        result = Trace()
        result.extend(self)
        result.extend(other)
        return result

    def __len__(self):
        return self.instruction_count

    def __iter__(self):
        return iter(self.entries)

    @property
    def vector_cycles(self):
        return self.total_cycles - self.scalar_cycles

    @property
    def scalar_cycles(self):
        return sum(cycles for _, cycles, _ in self.scalar_work)

    def region_cycles(self, region):
        return self.cycles_by_region.get(region, 0)

    def signature(self):
        """ Shape of the trace: what identical loop iterations must share """
        return tuple((e.instruction.opcode, e.vl, e.sew, e.cycles, e.repeat) for e in self.entries)

    def format(self):
        lines = []
        for entry in self.entries:
            suffix = " x%d" % entry.repeat if entry.repeat != 1 else ""
            lines.append("%-40s # vl=%d sew=%d cycles=%d%s"
                         % (entry.instruction, entry.vl, entry.sew, entry.cycles, suffix))
        return "\n".join(lines)
