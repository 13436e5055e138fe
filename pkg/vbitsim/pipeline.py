"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Quantized inference flow of one convolution layer: quantize, integer
convolution on the vector machine, floating point rescale on the scalar
side. Also the ResNet18 (32x32 input) layer set and its text format.
"""
import collections
import math

import numpy as np

from .base import logger
from .errors import *
from .kernels import conv2d_bitserial, conv2d_int8_baseline, im2col
from .machine import VectorMachine
from .packing import PACK_REGION
from .perf import attribute
from .tensors import ConvParams, QuantTensor, SplitMix64, random_quant_tensor, value_range

RESCALE_REGION = "rescale"


class QuantScheme(object):
    """ Per-tensor affine quantization: real = (q - zero_point) * scale """

    def __init__(self, precision_bits, signed=False, scale=1.0, zero_point=0):
        self.precision_bits = int(precision_bits)
        self.signed = bool(signed)
        self.scale = float(scale)
        self.zero_point = int(zero_point)
        if not 1 <= self.precision_bits <= 8:
            raise QuantizationError("Precision must be within [1, 8] bits, got %d" % self.precision_bits)
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise QuantizationError("Scale must be finite and positive, got %r" % scale)
        lo, hi = self.value_range
        if not lo <= self.zero_point <= hi:
            raise QuantizationError("Zero point %d not representable in [%d, %d]" % (self.zero_point, lo, hi))

    @property
    def value_range(self):
        return value_range(self.precision_bits, self.signed)

    def replace(self, **changes):
        values = dict(precision_bits=self.precision_bits, signed=self.signed,
                      scale=self.scale, zero_point=self.zero_point)
        values.update(changes)
        return QuantScheme(**values)

    def __eq__(self, other):
        return (isinstance(other, QuantScheme) and
                (self.precision_bits, self.signed, self.scale, self.zero_point) ==
                (other.precision_bits, other.signed, other.scale, other.zero_point))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "QuantScheme(%s%d, scale=%r, zero_point=%d)" % (
            "s" if self.signed else "u", self.precision_bits, self.scale, self.zero_point)


def weight_signed(bits):
    """ 1-bit weights are {0, 1}, wider weights are two's complement """
    return bits > 1


class LayerConfig(object):

    def __init__(self, name, params, weight_scheme, activation_scheme, output_scheme=None, excluded=False):
        self.name = name
        self.params = params
        self.weight_scheme = weight_scheme
        self.activation_scheme = activation_scheme
        self.output_scheme = output_scheme if output_scheme is not None else activation_scheme
        self.excluded = bool(excluded)
        if self.weight_scheme.zero_point != 0:
            raise QuantizationError("Layer %s weights must be symmetric, got zero point %d"
                                    % (name, self.weight_scheme.zero_point))
        factor = self.rescale_factor
        if not (math.isfinite(factor) and factor > 0):
            raise QuantizationError("Layer %s has rescale factor %r" % (name, factor))

    @property
    def rescale_factor(self):
        return self.activation_scheme.scale * self.weight_scheme.scale / self.output_scheme.scale

    def at_precision(self, weight_bits, activation_bits):
        """ Same layer and scales at other precisions; activations stay unsigned """
        return LayerConfig(self.name, self.params,
                           self.weight_scheme.replace(precision_bits=weight_bits, signed=weight_signed(weight_bits),
                                                      zero_point=0),
                           self.activation_scheme.replace(precision_bits=activation_bits, signed=False),
                           self.output_scheme.replace(precision_bits=activation_bits, signed=False),
                           self.excluded)

    def __eq__(self, other):
        return (isinstance(other, LayerConfig) and self.name == other.name and self.params == other.params and
                self.weight_scheme == other.weight_scheme and self.activation_scheme == other.activation_scheme and
                self.output_scheme == other.output_scheme and self.excluded == other.excluded)

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "LayerConfig(%s, %r%s)" % (self.name, self.params, ", excluded" if self.excluded else "")


class LayerRunReport(object):
    """ Result and cycle attribution of one layer run """

    def __init__(self, layer, mode, output, accumulators, trace, cycle_report):
        self.layer = layer
        self.mode = mode
        self.output = output
        self.accumulators = accumulators
        self.trace = trace
        self.cycle_report = cycle_report
        self.vector_cycles = trace.vector_cycles
        self.packing_cycles = trace.region_cycles(PACK_REGION)
        self.scalar_rescale_cycles = trace.scalar_cycles
        self.instruction_counts = collections.Counter(trace.count_by_opcode)
        if not 0 <= self.packing_cycles <= self.vector_cycles:
            raise VBitSimPostconditionError("Packing cycles %d outside [0, %d]"
                                            % (self.packing_cycles, self.vector_cycles))

    @property
    def total_cycles(self):
        return self.vector_cycles + self.scalar_rescale_cycles

    def __repr__(self):
        return "LayerRunReport(%s, %s, vector=%d, packing=%d, scalar=%d)" % (
            self.layer.name, self.mode.name, self.vector_cycles, self.packing_cycles, self.scalar_rescale_cycles)


# ----------------------------------------------------------------------
# quantization

def round_half_away(x):
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _clamp_to(q, scheme):
    lo, hi = scheme.value_range
    return np.clip(q, lo, hi).astype(np.int64)


def quantize(t, scheme):
    """ q = clamp(round(t / scale) + zero_point) """
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise QuantizationError("Cannot quantize non-finite values")
    q = round_half_away(t / scheme.scale) + scheme.zero_point
    return QuantTensor(_clamp_to(q, scheme), scheme.precision_bits, scheme.signed)


def dequantize(q, scheme):
    return (np.asarray(q.values, dtype=np.float64) - scheme.zero_point) * scheme.scale


def charge_rescale(machine, numel):
    with machine.region(RESCALE_REGION):
        machine.charge_scalar("rescale", numel * machine.config.scalar_cycles_per_rescale_element)


def rescale(acc, factor, out_scheme, machine=None):
    """
    Floating point requantization of accumulators, done by the scalar
    core; with a ``machine`` its cost is charged to the scalar side.
    """
    if not (math.isfinite(factor) and factor > 0):
        raise QuantizationError("Rescale factor must be finite and positive, got %r" % factor)
    acc = np.asarray(acc, dtype=np.int64)
    if machine is not None:
        charge_rescale(machine, acc.size)
    q = round_half_away(acc.astype(np.float64) * factor) + out_scheme.zero_point
    return QuantTensor(_clamp_to(q, out_scheme), out_scheme.precision_bits, out_scheme.signed)


def subtract_zero_point(acc, weights, params, zero_point):
    """
    Turns sum(w * q) into sum(w * (q - zero_point)) over the taps that
    fall inside the input; padding taps are real zeros and stay out.
    """
    acc = np.asarray(acc, dtype=np.int64)
    if zero_point == 0:
        return acc
    inside = im2col(np.ones(params.input_shape, dtype=np.int64), params)
    w = np.asarray(weights.values, dtype=np.int64).reshape(params.out_channels, params.reduction_length)
    taps = (inside @ w.T).T.reshape(params.output_shape)
    return acc - zero_point * taps


# ----------------------------------------------------------------------
# modes and layer runs

class Mode(collections.namedtuple("Mode", "name weight_bits activation_bits kernel emulate_packing")):
    __slots__ = ()

    @property
    def is_baseline(self):
        return self.kernel == "int8"


MODES = collections.OrderedDict((m.name, m) for m in (
    Mode("int1", 1, 1, "bitserial", False),
    Mode("int2", 2, 2, "bitserial", False),
    Mode("int2_no_vbitpack", 2, 2, "bitserial", True),
    Mode("int8_baseline", 8, 8, "int8", False),
))
BASELINE_MODE = "int8_baseline"


def resolve_mode(mode):
    if isinstance(mode, Mode):
        return mode
    name = str(mode).replace("-", "_")
    if name not in MODES:
        raise ConfigurationError("Unknown mode `%s`, choose one of %s" % (mode, ", ".join(MODES)))
    return MODES[name]


def layer_operands(cfg, seed):
    """ Deterministic activations and weights of ``cfg`` """
    rng = SplitMix64(seed)
    a, w = cfg.activation_scheme, cfg.weight_scheme
    inputs = random_quant_tensor(cfg.params.input_shape, a.precision_bits, a.signed, rng=rng)
    weights = random_quant_tensor(cfg.params.weight_shape, w.precision_bits, w.signed, rng=rng)
    return inputs, weights


def run_layer(cfg, inputs, mode, weights, machine_config=None, dry_run=False):
    """
    Runs one layer on a fresh machine.

    ``cfg`` must already be at the precisions of ``mode``. On a dry-run
    machine values are not computed: output and accumulators are None
    but every cycle field is populated.

    :rtype: LayerRunReport
    """
    mode = resolve_mode(mode)
    if (cfg.weight_scheme.precision_bits, cfg.activation_scheme.precision_bits) != \
            (mode.weight_bits, mode.activation_bits):
        raise QuantizationError("Layer %s is W%d/A%d, mode %s needs W%d/A%d"
                                % (cfg.name, cfg.weight_scheme.precision_bits, cfg.activation_scheme.precision_bits,
                                   mode.name, mode.weight_bits, mode.activation_bits))
    for t, scheme, what in ((inputs, cfg.activation_scheme, "input"), (weights, cfg.weight_scheme, "weight")):
        if (t.precision_bits, t.signed) != (scheme.precision_bits, scheme.signed):
            raise QuantizationError("Layer %s %s tensor is %r, expected %r" % (cfg.name, what, t, scheme))
    cfg.params.check_operands(inputs, weights)

    machine = VectorMachine(machine_config, dry_run=dry_run)
    with logger.debug("Running layer %s in mode %s%s" % (cfg.name, mode.name, " (dry run)" if dry_run else "")):
        if mode.is_baseline:
            acc = conv2d_int8_baseline(machine, inputs, weights, cfg.params)
        else:
            acc = conv2d_bitserial(machine, inputs, weights, cfg.params,
                                   emulate_packing=mode.emulate_packing, mixed_signedness=True)
        if acc is None:
            charge_rescale(machine, int(np.prod(cfg.params.output_shape)))
            output = None
        else:
            acc = subtract_zero_point(acc, weights, cfg.params, cfg.activation_scheme.zero_point)
            output = rescale(acc, cfg.rescale_factor, cfg.output_scheme, machine)
    report = LayerRunReport(cfg, mode, output, acc, machine.trace, attribute(machine.trace, machine.config))
    logger.verbose("%r" % report)
    return report


def forward_layer(cfg, input_fp, weights, mode, machine_config=None):
    """ quantize -> run_layer -> dequantize; returns (float output, report) """
    inputs = quantize(np.asarray(input_fp).reshape(cfg.params.input_shape), cfg.activation_scheme)
    report = run_layer(cfg, inputs, mode, weights, machine_config)
    return dequantize(report.output, cfg.output_scheme), report


# ----------------------------------------------------------------------
# layer sets

DEFAULT_WEIGHT_SCALE = 0.0625
DEFAULT_ACTIVATION_SCALE = 0.25


def make_layer(name, cin, cout, k, stride, pad, h, w, weight_bits=2, activation_bits=2,
               weight_scale=DEFAULT_WEIGHT_SCALE, activation_scale=DEFAULT_ACTIVATION_SCALE,
               output_scale=None, excluded=False):
    params = ConvParams(cin, cout, k, k, stride, pad, h, w)
    if output_scale is None:
        # keeps outputs spread over the activation range
        output_scale = activation_scale * weight_scale * params.reduction_length / 4.0
    return LayerConfig(name, params,
                       QuantScheme(weight_bits, weight_signed(weight_bits), weight_scale),
                       QuantScheme(activation_bits, False, activation_scale),
                       QuantScheme(activation_bits, False, output_scale),
                       excluded)


def resnet18_layer_set(weight_bits=2, activation_bits=2):
    """
    The 20 convolutions of ResNet18 for 32x32 inputs: stem, four stages
    of two BasicBlocks and the three 1x1 downsample convolutions. The
    stem runs at full precision in the quantized network and is flagged
    excluded.
    """
    layers = [make_layer("conv1", 3, 64, 3, 1, 1, 32, 32, weight_bits, activation_bits, excluded=True)]
    channels, size = 64, 32
    for stage, out_channels in enumerate((64, 128, 256, 512), start=1):
        for block in range(2):
            prefix = "layer%d.%d" % (stage, block)
            stride = 2 if block == 0 and out_channels != channels else 1
            layers.append(make_layer(prefix + ".conv1", channels, out_channels, 3, stride, 1, size, size,
                                     weight_bits, activation_bits))
            out_size = layers[-1].params.output_h
            layers.append(make_layer(prefix + ".conv2", out_channels, out_channels, 3, 1, 1, out_size, out_size,
                                     weight_bits, activation_bits))
            if stride != 1:
                layers.append(make_layer(prefix + ".downsample", channels, out_channels, 1, stride, 0, size, size,
                                         weight_bits, activation_bits))
            channels, size = out_channels, out_size
    return layers


LAYER_FIELDS = "name cin cout k stride pad h w wbits abits w_scale a_scale o_scale [excluded]"


def format_layer(layer):
    p = layer.params
    line = "%s %d %d %d %d %d %d %d %d %d %r %r %r" % (
        layer.name, p.in_channels, p.out_channels, p.kernel_h, p.stride, p.padding, p.input_h, p.input_w,
        layer.weight_scheme.precision_bits, layer.activation_scheme.precision_bits,
        layer.weight_scheme.scale, layer.activation_scheme.scale, layer.output_scheme.scale)
    return line + (" excluded" if layer.excluded else "")


def parse_layer(line, line_number=None):
    where = "line %d: " % line_number if line_number is not None else ""
    tokens = line.split()
    excluded = len(tokens) == 14 and tokens[13] == "excluded"
    if len(tokens) != 13 and not excluded:
        raise ConfigurationError("%sexpected `%s`, got `%s`" % (where, LAYER_FIELDS, line.strip()))
    try:
        ints = [int(tok) for tok in tokens[1:10]]
        scales = [float(tok) for tok in tokens[10:13]]
    except ValueError:
        raise ConfigurationError("%sbad number in `%s`" % (where, line.strip()))
    try:
        return make_layer(tokens[0], *ints, weight_scale=scales[0], activation_scale=scales[1],
                          output_scale=scales[2], excluded=excluded)
    except (ShapeMismatchError, QuantizationError) as e:
        raise ConfigurationError("%s%s" % (where, e))


def write_layer_set(path, layers):
    with open(path, "w") as f:
        f.write("# %s\n" % LAYER_FIELDS)
        for layer in layers:
            f.write(format_layer(layer) + "\n")


def read_layer_set(path):
    layers = []
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                layers.append(parse_layer(line, line_number))
    if not layers:
        raise ConfigurationError("Layer file `%s` defines no layers" % path)
    return layers
