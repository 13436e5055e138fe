"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Analytic cycle model, cycle attribution, speedups and roofline data.

Every vector instruction costs ``issue_overhead_cycles`` plus the
cycles the lanes need to stream its elements::

    issue_overhead + ceil(vl * width / (lanes * lane_datapath_bits))

``width`` is the element width, or the accumulator width of a
widening VMACC. Memory instructions scale the streaming term by
``memory_bandwidth_factor``. VSETVL only costs the issue overhead.

Op counting rule for rooflines: a MAC is 2 ops, a popcount over b bits
is b ops, an AND over b bits is b ops, nothing else counts.
"""
import collections
import csv
import math

from .errors import *
from .isa import *
from .utility import ceil_div

OP_COUNTING_RULE = "mac=2 popcount_per_bit=1 and_per_bit=1"


def instr_cycles(instr, cfg, vl, sew):
    """ Cycle cost of ``instr`` executed with the given vl and sew """
    if instr.opcode == VSETVL:
        return cfg.issue_overhead_cycles
    width = max(sew, 32) if instr.opcode == VMACC else sew
    stream = ceil_div(vl * width, cfg.datapath_bits)
    if instr.opcode in MEMORY_OPCODES:
        stream = int(math.ceil(stream * cfg.memory_bandwidth_factor))
    return cfg.issue_overhead_cycles + stream


def ops_executed(instr, vl, sew):
    if instr.opcode in (VAND, VPOPCNT):
        return vl * sew
    if instr.opcode == VMACC:
        return 2 * vl
    return 0


def bytes_moved(instr, vl, sew):
    if instr.opcode in MEMORY_OPCODES:
        return vl * sew // 8
    return 0


class CycleReport(object):
    """
    Cycles of a trace split into opcode classes, plus the useful op
    count and memory traffic used for rooflines.
    """

    def __init__(self, breakdown=None, ops=0, nbytes=0, instructions=0, region_cycles=None):
        self.breakdown = collections.OrderedDict((c, 0) for c in OPCODE_CLASSES)
        for key, value in (breakdown or {}).items():
            self.breakdown[key] += value
        self.ops_executed = ops
        self.bytes_moved = nbytes
        self.instruction_count = instructions
        self.region_cycles = collections.Counter(region_cycles or {})

    @property
    def total_cycles(self):
        return sum(self.breakdown.values())

    @property
    def arithmetic_intensity(self):
        return float(self.ops_executed) / self.bytes_moved if self.bytes_moved else float("inf")

    @property
    def performance(self):
        return float(self.ops_executed) / self.total_cycles if self.total_cycles else 0.0

    def __add__(self, other):
        breakdown = collections.Counter(self.breakdown)
        breakdown.update(other.breakdown)
        return CycleReport(breakdown, self.ops_executed + other.ops_executed,
                           self.bytes_moved + other.bytes_moved,
                           self.instruction_count + other.instruction_count,
                           self.region_cycles + other.region_cycles)

    def __eq__(self, other):
        return (isinstance(other, CycleReport) and
                dict(self.breakdown) == dict(other.breakdown) and
                self.ops_executed == other.ops_executed and
                self.bytes_moved == other.bytes_moved and
                self.instruction_count == other.instruction_count)

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "CycleReport(total=%d, %s, ops=%d, bytes=%d)" % (
            self.total_cycles, ", ".join("%s=%d" % kv for kv in self.breakdown.items()),
            self.ops_executed, self.bytes_moved)


def attribute(trace, cfg):
    """ Folds the cycle model over ``trace`` """
    report = CycleReport()
    for entry in trace.entries:
        instr, repeat = entry.instruction, entry.repeat
        cycles = instr_cycles(instr, cfg, entry.vl, entry.sew) * repeat
        report.breakdown[instr.opcode_class] += cycles
        report.ops_executed += ops_executed(instr, entry.vl, entry.sew) * repeat
        report.bytes_moved += bytes_moved(instr, entry.vl, entry.sew) * repeat
        report.instruction_count += repeat
        if entry.region is not None:
            report.region_cycles[entry.region] += cycles
    for _, cycles, region in trace.scalar_work:
        report.breakdown[SCALAR] += cycles
        if region is not None:
            report.region_cycles[region] += cycles
    return report


def _cycles_of(report):
    if isinstance(report, CycleReport):
        return report.total_cycles
    return report


def speedup(baseline, new):
    """ baseline cycles / new cycles, both reports or plain cycle counts """
    new_cycles = _cycles_of(new)
    if new_cycles <= 0:
        raise ConfigurationError("Cannot compute a speedup over %r cycles" % (new_cycles,))
    return float(_cycles_of(baseline)) / new_cycles


def geomean(values):
    values = list(values)
    if not values:
        return float("nan")
    if any(v <= 0 for v in values):
        raise ConfigurationError("Geometric mean needs positive values")
    return math.exp(sum(math.log(v) for v in values) / len(values))


def mean(values):
    values = list(values)
    return sum(values) / float(len(values)) if values else float("nan")


# ----------------------------------------------------------------------
# roofline

# ops per datapath bit at peak: a bit-serial AND or popcount handles one
# op per bit; an int8 MAC is 2 ops over a 32 bit accumulator
BITSERIAL_OPS_PER_BIT = 1.0
INT8_OPS_PER_BIT = 2.0 / 32

RooflinePoint = collections.namedtuple("RooflinePoint",
                                       "config size intensity performance ops bytes cycles "
                                       "peak_compute peak_bandwidth")


def peak_compute(cfg, ops_per_bit):
    return cfg.lanes * cfg.lane_datapath_bits * ops_per_bit


def peak_bandwidth(cfg):
    """ bytes per cycle """
    return cfg.datapath_bits / 8.0 / cfg.memory_bandwidth_factor


def roof(point):
    return min(point.peak_compute, point.intensity * point.peak_bandwidth)


def under_roof(point, tolerance=1e-9):
    return point.performance <= roof(point) * (1.0 + tolerance)


DEFAULT_ROOFLINE_SIZES = (4, 8, 16, 32, 64, 128, 256, 512)
# dry-run machines hold no bytes, large sweeps only need the address range
ROOFLINE_MEMORY_BYTES = 1 << 30


def roofline_sweep(sizes=DEFAULT_ROOFLINE_SIZES, configs=None, channels=16, kernel_bits=2):
    """
    One roofline point per (size, config) for a 3x3 conv, stride 1,
    padding 1, ``channels`` in and out.

    ``configs`` maps a label to (MachineConfig, kind) with kind
    "bitserial" or "int8"; by default the 8-lane machine runs the
    bit-serial kernel and the 4-lane baseline runs int8.
    """
    from .config import MachineConfig
    from .kernels import conv2d_bitserial, conv2d_int8_baseline
    from .machine import VectorMachine
    from .tensors import ConvParams, QuantTensor

    if configs is None:
        configs = collections.OrderedDict([
            ("quark-8-lane", (MachineConfig.quark_8_lane(), "bitserial")),
            ("baseline-4-lane", (MachineConfig.default(), "int8")),
        ])
    sizes = list(sizes)
    if not sizes or any(int(s) <= 0 for s in sizes):
        raise ConfigurationError("Roofline sizes must be positive, got %s" % (sizes,))

    points = []
    for size in sizes:
        params = ConvParams(channels, channels, 3, 3, 1, 1, size, size)
        for label, (cfg, kind) in configs.items():
            machine = VectorMachine(cfg.replace(memory_bytes=max(cfg.memory_bytes, ROOFLINE_MEMORY_BYTES)),
                                    dry_run=True)
            if kind == "bitserial":
                inputs = QuantTensor.zeros((channels, size, size), kernel_bits, signed=False)
                weights = QuantTensor.zeros((channels, channels, 3, 3), kernel_bits, signed=kernel_bits > 1)
                conv2d_bitserial(machine, inputs, weights, params, mixed_signedness=True)
                ops_per_bit = BITSERIAL_OPS_PER_BIT
            elif kind == "int8":
                inputs = QuantTensor.zeros((channels, size, size), 8, signed=False)
                weights = QuantTensor.zeros((channels, channels, 3, 3), 8, signed=True)
                conv2d_int8_baseline(machine, inputs, weights, params)
                ops_per_bit = INT8_OPS_PER_BIT
            else:
                raise ConfigurationError("Unknown roofline kernel kind `%s`" % kind)
            report = attribute(machine.trace, cfg)
            point = RooflinePoint(label, "%dx%d" % (size, size), report.arithmetic_intensity,
                                  report.performance, report.ops_executed, report.bytes_moved,
                                  report.total_cycles, peak_compute(cfg, ops_per_bit), peak_bandwidth(cfg))
            if not under_roof(point):
                raise VBitSimPostconditionError("Roofline point %s above its roof" % (point,))
            points.append(point)
    return points


def write_csv(stream, fieldnames, rows, preamble=(), footer=()):
    """ CSV with ``#`` comment lines before the header and after the rows """
    for line in preamble:
        stream.write("# %s\n" % line)
    writer = csv.DictWriter(stream, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    for line in footer:
        stream.write("# %s\n" % line)
