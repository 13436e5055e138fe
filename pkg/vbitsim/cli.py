"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Command line: argument parsing, the resolved run settings and the
subcommands writing CSV reports.
"""
import argparse
import collections
import hashlib
import multiprocessing
import os
import sys

import numpy as np

from .base import __version__, logger, EXIT_CODE_OK
from .config import MachineConfig
from .errors import *
from .isa import OPCODE_CLASSES, VSE, read_program
from .kernels import conv2d_bitserial, conv2d_int8_baseline, dot_bitserial, matmul_bitserial
from .machine import VectorMachine
from .oracle import conv2d_ref, dot_ref, matmul_ref, quantized_layer_ref
from .packing import PACK_REGION, pack_bitplanes, pack_bitplanes_emulated
from .perf import (OP_COUNTING_RULE, DEFAULT_ROOFLINE_SIZES, attribute, geomean, mean, roofline_sweep,
                   speedup, write_csv)
from .pipeline import (BASELINE_MODE, MODES, dequantize, forward_layer, layer_operands, read_layer_set,
                       resnet18_layer_set, resolve_mode, run_layer, weight_signed)
from .tensors import ConvParams, SplitMix64, random_quant_tensor
from .utility import parse_dims, parse_int

DEFAULT_SEED = 1

# flag -> MachineConfig field
MACHINE_FLAGS = collections.OrderedDict([
    ("lanes", "lanes"),
    ("vlen", "vlen_bits"),
    ("issue_overhead", "issue_overhead_cycles"),
    ("datapath_bits", "lane_datapath_bits"),
    ("rescale_cycles", "scalar_cycles_per_rescale_element"),
    ("bandwidth_factor", "memory_bandwidth_factor"),
    ("memory_bytes", "memory_bytes"),
])
# cycle model constants a roofline applies on top of its presets
ROOFLINE_OVERRIDES = ("issue_overhead_cycles", "lane_datapath_bits", "memory_bandwidth_factor")


def _precision(text):
    try:
        bits = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("precision must be an integer, got `%s`" % text)
    if not 1 <= bits <= 8:
        raise argparse.ArgumentTypeError("precision must be within [1, 8] bits, got %d" % bits)
    return bits


def _positive(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, got `%s`" % text)
    if value <= 0:
        raise argparse.ArgumentTypeError("expected a positive integer, got %d" % value)
    return value


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer seed, got `%s`" % text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative, got %d" % value)
    return value


def _mode_name(text):
    name = text.replace("-", "_")
    if name not in MODES:
        raise argparse.ArgumentTypeError("unknown mode `%s`, choose one of %s"
                                         % (text, ", ".join(m.replace("_", "-") for m in MODES)))
    return name


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("machine")
    group.add_argument("--preset", choices=["baseline-4-lane", "quark-8-lane"], default=None,
                       help="machine preset (default: baseline-4-lane)")
    group.add_argument("--config", default=None, help="key=value machine configuration file")
    group.add_argument("--lanes", type=_positive, default=None, help="number of vector lanes")
    group.add_argument("--vlen", type=_positive, default=None, help="bits per vector register")
    group.add_argument("--issue-overhead", type=int, default=None, help="cycles charged per instruction")
    group.add_argument("--datapath-bits", type=_positive, default=None, help="datapath bits per lane")
    group.add_argument("--rescale-cycles", type=int, default=None,
                       help="scalar cycles per rescaled output element")
    group.add_argument("--bandwidth-factor", type=float, default=None,
                       help="scale of the streaming term of memory instructions")
    group.add_argument("--memory-bytes", type=_positive, default=None, help="simulated memory size")

    group = common.add_argument_group("run")
    group.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help="tensor generator seed")
    group.add_argument("-o", "--output", default=None, help="output file (default: stdout)")
    group.add_argument("-v", "--verbose", action="count", default=0, help="more log output, repeatable")
    group.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    group.add_argument("--log-file", default=None, help="also write a detailed log to this file")

    parser = argparse.ArgumentParser(prog="vbitsim",
                                     description="Simulator of an integer vector processor with "
                                                 "bit-serial sub-byte instructions")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    p = commands.add_parser("kernel", parents=[common], help="run and verify one kernel")
    p.add_argument("kernel", choices=["dot", "matmul", "conv2d"])
    p.add_argument("--size", default=None,
                   help="dot: L, matmul: RxKxC, conv2d: HxW (defaults 256, 8x64x8, 8x8)")
    p.add_argument("--kernel", dest="kernel_size", default="3x3", help="conv2d kernel HxW")
    p.add_argument("--channels", default="4x4", help="conv2d input x output channels")
    p.add_argument("--stride", type=_positive, default=1)
    p.add_argument("--pad", type=int, default=0)
    p.add_argument("--wbits", type=_precision, default=None, help="weight precision (default: from mode)")
    p.add_argument("--abits", type=_precision, default=None, help="activation precision (default: from mode)")
    p.add_argument("--mode", type=_mode_name, default="int2")

    p = commands.add_parser("bench-resnet18", parents=[common], help="per-layer ResNet18 speedups")
    p.add_argument("--layers", default=None, help="layer file instead of the built-in ResNet18 set")
    p.add_argument("--modes", default=",".join(MODES),
                   help="comma separated modes (default: %(default)s)")
    p.add_argument("--verify", action="store_true",
                   help="compute values and check every layer against the scalar reference (slow)")
    p.add_argument("--jobs", type=_positive, default=1, help="parallel worker processes")

    p = commands.add_parser("roofline", parents=[common], help="roofline points of a 3x3 conv sweep")
    p.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_ROOFLINE_SIZES),
                   help="comma separated square input sizes (default: %(default)s)")
    p.add_argument("--channels", type=_positive, default=16)
    p.add_argument("--bits", type=_precision, default=2, help="bit-serial operand precision")

    p = commands.add_parser("trace", parents=[common], help="replay a text instruction trace")
    p.add_argument("trace_file")
    p.add_argument("--registers", default=None, help="comma separated registers to print, e.g. v2,v3")
    p.add_argument("--dump", action="store_true", help="also print every executed instruction")

    commands.add_parser("config", parents=[common], help="print the effective machine configuration")
    return parser


class RunSpec(object):
    """ Validated view of the command line """

    def __init__(self, args):
        self.args = args
        self.command = args.command
        self.seed = args.seed
        self.output = args.output
        self.overrides = collections.OrderedDict()
        for flag, field in MACHINE_FLAGS.items():
            value = getattr(args, flag, None)
            if value is not None:
                self.overrides[field] = value
        self.machine_config = self._machine_config()

    def _machine_config(self):
        base = MachineConfig.preset(self.args.preset) if self.args.preset else MachineConfig.default()
        if self.args.config:
            base = MachineConfig.load(self.args.config, base)
        return base.replace(**self.overrides)

    def preamble(self, configs=None):
        lines = ["vbitsim %s" % __version__, "command: %s" % self.command, "seed: %d" % self.seed]
        for cfg in configs or [self.machine_config]:
            lines.append("machine: %s" % cfg.describe())
        lines.append("op_counting_rule: %s" % OP_COUNTING_RULE)
        return lines


# ----------------------------------------------------------------------
# helpers

def checksum(values):
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<i8").tobytes()).hexdigest()[:16]


def verify(result, expected, what):
    result = np.asarray(result, dtype=np.int64)
    expected = np.asarray(expected, dtype=np.int64)
    if result.shape != expected.shape:
        raise VerificationError("%s: result shape %s, expected %s" % (what, result.shape, expected.shape))
    wrong = np.flatnonzero(result.ravel() != expected.ravel())
    if wrong.size:
        first = int(wrong[0])
        raise VerificationError("%s: %d mismatches, first at flat index %d (%d != %d)"
                                % (what, wrong.size, first, result.ravel()[first], expected.ravel()[first]),
                                int(wrong.size), first)


def _open_output(spec):
    if spec.output is None:
        return sys.stdout, False
    return open(spec.output, "w", newline=""), True


def _emit(spec, fieldnames, rows, preamble, footer=()):
    stream, close = _open_output(spec)
    try:
        write_csv(stream, fieldnames, rows, preamble, footer)
    finally:
        if close:
            stream.close()


# ----------------------------------------------------------------------
# kernel

KERNEL_FIELDS = ["kernel", "mode", "shape", "wbits", "abits", "total_cycles"] + \
                ["%s_cycles" % c for c in OPCODE_CLASSES] + \
                ["packing_cycles", "instructions", "ops", "bytes", "checksum", "status"]

DEFAULT_SIZES = {"dot": "256", "matmul": "8x64x8", "conv2d": "8x8"}


def cmd_kernel(spec):
    args = spec.args
    mode = resolve_mode(args.mode)
    wbits = args.wbits if args.wbits is not None else mode.weight_bits
    abits = args.abits if args.abits is not None else mode.activation_bits
    if mode.is_baseline and args.kernel != "conv2d":
        raise ConfigurationError("The int8 baseline exists for conv2d only")
    size = args.size if args.size is not None else DEFAULT_SIZES[args.kernel]
    rng = SplitMix64(spec.seed)
    machine = VectorMachine(spec.machine_config)

    with logger.info("Running %s kernel in mode %s at W%d/A%d" % (args.kernel, mode.name, wbits, abits)):
        if args.kernel == "dot":
            length, = parse_dims(size, 1)
            w = random_quant_tensor((length,), wbits, weight_signed(wbits), rng=rng)
            a = random_quant_tensor((length,), abits, False, rng=rng)
            pack = pack_bitplanes_emulated if mode.emulate_packing else pack_bitplanes
            result = dot_bitserial(machine, pack(machine, w), pack(machine, a), mixed_signedness=True)
            expected = dot_ref(w, a)
            shape = "%d" % length
        elif args.kernel == "matmul":
            rows, inner, cols = parse_dims(size, 3)
            A = random_quant_tensor((rows, inner), abits, False, rng=rng)
            B = random_quant_tensor((inner, cols), wbits, weight_signed(wbits), rng=rng)
            result = matmul_bitserial(machine, A, B, mode.emulate_packing, mixed_signedness=True)
            expected = matmul_ref(A, B)
            shape = "%dx%dx%d" % (rows, inner, cols)
        else:
            h, w_ = parse_dims(size, 2)
            kh, kw = parse_dims(args.kernel_size, 2)
            cin, cout = parse_dims(args.channels, 2)
            if args.pad < 0:
                raise ConfigurationError("--pad must be nonnegative")
            params = ConvParams(cin, cout, kh, kw, args.stride, args.pad, h, w_)
            inputs = random_quant_tensor(params.input_shape, abits, False, rng=rng)
            weights = random_quant_tensor(params.weight_shape, wbits, weight_signed(wbits), rng=rng)
            if mode.is_baseline:
                result = conv2d_int8_baseline(machine, inputs, weights, params)
            else:
                result = conv2d_bitserial(machine, inputs, weights, params, mode.emulate_packing,
                                          mixed_signedness=True)
            expected = conv2d_ref(inputs, weights, params)
            shape = "%dx%dx%d->%dx%dx%d" % (params.input_shape + params.output_shape)
        verify(result, expected, "%s kernel" % args.kernel)
    logger.success("%s kernel matches the scalar reference" % args.kernel)

    report = attribute(machine.trace, machine.config)
    row = dict(kernel=args.kernel, mode=mode.name, shape=shape, wbits=wbits, abits=abits,
               total_cycles=report.total_cycles, packing_cycles=machine.trace.region_cycles(PACK_REGION),
               instructions=report.instruction_count, ops=report.ops_executed, bytes=report.bytes_moved,
               checksum=checksum(result), status="verified")
    for cls, cycles in report.breakdown.items():
        row["%s_cycles" % cls] = cycles
    _emit(spec, KERNEL_FIELDS, [row], spec.preamble())
    return EXIT_CODE_OK


# ----------------------------------------------------------------------
# bench-resnet18

BENCH_FIELDS = ["index", "layer", "mode", "excluded", "vector_cycles", "packing_cycles", "scalar_cycles",
                "total_cycles", "speedup_vs_int8"]


def bench_job(job):
    """ One (layer, mode) run; module level so worker processes can pickle it """
    index, layer, mode_name, config_values, seed, check = job
    mode = MODES[mode_name]
    machine_config = MachineConfig(**config_values)
    cfg = layer.at_precision(mode.weight_bits, mode.activation_bits)
    inputs, weights = layer_operands(cfg, seed + index)
    if check:
        input_fp = dequantize(inputs, cfg.activation_scheme)
        output, report = forward_layer(cfg, input_fp, weights, mode, machine_config)
        expected = quantized_layer_ref(cfg, input_fp, weights)
        if not np.array_equal(output, expected):
            wrong = np.flatnonzero(output.ravel() != expected.ravel())
            raise VerificationError("Layer %s in mode %s differs from the reference at %d elements"
                                    % (layer.name, mode.name, wrong.size), int(wrong.size), int(wrong[0]))
    else:
        report = run_layer(cfg, inputs, mode, weights, machine_config, dry_run=True)
    return dict(index=index, layer=layer.name, mode=mode.name, excluded=int(layer.excluded),
                vector_cycles=report.vector_cycles, packing_cycles=report.packing_cycles,
                scalar_cycles=report.scalar_rescale_cycles, total_cycles=report.total_cycles)


def bench_rows(layers, mode_names, machine_config, seed, check=False, jobs=1):
    """ Rows sorted by (layer index, mode order) with speedups over the int8 baseline """
    work = [(index, layer, mode_name, machine_config.as_dict(), seed, check)
            for index, layer in enumerate(layers) for mode_name in mode_names]
    if jobs > 1 and len(work) > 1:
        pool = multiprocessing.Pool(min(jobs, len(work)))
        try:
            rows = pool.map(bench_job, work)
        finally:
            pool.close()
            pool.join()
    else:
        rows = [bench_job(job) for job in work]

    order = dict((name, i) for i, name in enumerate(MODES))
    rows.sort(key=lambda r: (r["index"], order[r["mode"]]))
    baseline = dict((r["index"], r["total_cycles"]) for r in rows if r["mode"] == BASELINE_MODE)
    for row in rows:
        if row["index"] in baseline:
            row["speedup_vs_int8"] = "%.4f" % speedup(baseline[row["index"]], row["total_cycles"])
        else:
            row["speedup_vs_int8"] = ""
    return rows


def bench_summary(rows, layers):
    """ (mode, layer count, mean speedup, geomean speedup) over layers not excluded """
    summary = []
    for mode_name in MODES:
        ratios = [float(r["speedup_vs_int8"]) for r in rows
                  if r["mode"] == mode_name and r["speedup_vs_int8"] and not layers[r["index"]].excluded]
        if ratios and mode_name != BASELINE_MODE:
            summary.append((mode_name, len(ratios), mean(ratios), geomean(ratios)))
    return summary


def cmd_bench_resnet18(spec):
    args = spec.args
    layers = read_layer_set(args.layers) if args.layers else resnet18_layer_set()
    mode_names = [resolve_mode(m.strip()).name for m in args.modes.split(",") if m.strip()]
    mode_names = list(collections.OrderedDict.fromkeys(mode_names))
    if not mode_names:
        raise ConfigurationError("--modes selects no mode")
    with logger.info("Benchmarking %d layers in modes %s" % (len(layers), ", ".join(mode_names))):
        rows = bench_rows(layers, mode_names, spec.machine_config, spec.seed, args.verify, args.jobs)
    footer = ["summary mode=%s layers=%d mean_speedup_vs_int8=%.4f geomean_speedup_vs_int8=%.4f" % s
              for s in bench_summary(rows, layers)]
    for line in footer:
        logger.info(line)
    preamble = spec.preamble() + ["layers: %s" % (args.layers or "resnet18 (built-in)"),
                                  "values: %s" % ("verified against the scalar reference" if args.verify
                                                  else "not computed (dry run)")]
    _emit(spec, BENCH_FIELDS, rows, preamble, footer)
    return EXIT_CODE_OK


# ----------------------------------------------------------------------
# roofline

ROOFLINE_FIELDS = ["config", "size", "intensity", "performance", "ops", "bytes", "cycles",
                   "peak_compute", "peak_bandwidth"]


def _parse_sizes(text):
    sizes = []
    for token in text.split(","):
        if token.strip():
            sizes.append(parse_int(token))
    if not sizes or any(s <= 0 for s in sizes):
        raise ConfigurationError("Bad size ladder `%s`" % text)
    return sizes


def cmd_roofline(spec):
    args = spec.args
    overrides = dict((k, v) for k, v in spec.overrides.items() if k in ROOFLINE_OVERRIDES)
    configs = collections.OrderedDict([
        ("quark-8-lane", (MachineConfig.quark_8_lane().replace(**overrides), "bitserial")),
        ("baseline-4-lane", (MachineConfig.default().replace(**overrides), "int8")),
    ])
    sizes = _parse_sizes(args.sizes)
    with logger.info("Roofline sweep over %d sizes" % len(sizes)):
        points = roofline_sweep(sizes, configs, args.channels, args.bits)
    rows = []
    for p in points:
        rows.append(dict(config=p.config, size=p.size, intensity="%.6f" % p.intensity,
                         performance="%.6f" % p.performance, ops=p.ops, bytes=p.bytes, cycles=p.cycles,
                         peak_compute="%.4f" % p.peak_compute, peak_bandwidth="%.4f" % p.peak_bandwidth))
    preamble = spec.preamble([cfg for cfg, _ in configs.values()]) + [
        "kernel: conv2d 3x3 stride 1 padding 1, %d channels, bit-serial W%d/A%d on quark-8-lane, "
        "int8 on baseline-4-lane" % (args.channels, args.bits, args.bits),
        "peak_compute = lanes * lane_datapath_bits * ops_per_bit (bit-serial 1, int8 2/32)"]
    _emit(spec, ROOFLINE_FIELDS, rows, preamble)
    return EXIT_CODE_OK


# ----------------------------------------------------------------------
# trace

def _register_list(text):
    regs = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token.startswith("v"):
            raise ConfigurationError("Bad register `%s`" % token)
        regs.append(parse_int(token[1:]))
    return regs


def trace_report(machine, trace, registers):
    lines = ["instructions=%d" % trace.instruction_count, "total_cycles=%d" % trace.total_cycles]
    lines += ["cycles.%s=%d" % (cls, trace.cycles_by_class[cls]) for cls in OPCODE_CLASSES]
    lines += ["vl=%d" % machine.vl, "sew=%d" % machine.sew]
    lines += ["v%d=%#x" % (reg, machine.vrf.as_int(reg)) for reg in registers]
    return lines


def cmd_trace(spec):
    args = spec.args
    if not os.path.isfile(args.trace_file):
        raise ConfigurationError("Trace file `%s` does not exist" % args.trace_file)
    program = read_program(args.trace_file)
    machine = VectorMachine(spec.machine_config)
    machine.load_program_data(program)
    with logger.info("Replaying %d instructions from %s" % (len(program), args.trace_file)):
        try:
            trace = machine.run_program(program.instructions)
        except MachineFault as e:
            if e.partial_trace is not None:
                logger.error("Aborted after %d instructions, %d cycles"
                             % (e.partial_trace.instruction_count, e.partial_trace.total_cycles))
            raise
    if args.registers:
        registers = _register_list(args.registers)
    else:
        registers = sorted(set(i.vd for i in program.instructions if i.vd is not None and i.opcode != VSE))
    lines = ["# vbitsim %s trace %s" % (__version__, args.trace_file),
             "# machine: %s" % machine.config.describe()]
    if args.dump and trace.entries:
        lines += ["# " + line for line in trace.format().splitlines()]
    lines += trace_report(machine, trace, registers)
    stream, close = _open_output(spec)
    try:
        stream.write("\n".join(lines) + "\n")
    finally:
        if close:
            stream.close()
    return EXIT_CODE_OK


# ----------------------------------------------------------------------
# config

def cmd_config(spec):
    stream, close = _open_output(spec)
    try:
        for key, value in spec.machine_config.as_items():
            stream.write("%s=%s\n" % (key, value))
    finally:
        if close:
            stream.close()
    return EXIT_CODE_OK


COMMANDS = {
    "kernel": cmd_kernel,
    "bench-resnet18": cmd_bench_resnet18,
    "roofline": cmd_roofline,
    "trace": cmd_trace,
    "config": cmd_config,
}


def run(args):
    """ Executes parsed arguments, returns the exit code; errors propagate """
    spec = RunSpec(args)
    logger.debug("Machine: %s" % spec.machine_config.describe())
    return COMMANDS[spec.command](spec)
