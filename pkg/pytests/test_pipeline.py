"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import os

import numpy as np
import pytest

from vbitsim.config import MachineConfig
from vbitsim.errors import *
from vbitsim.oracle import conv2d_ref, quantized_layer_ref
from vbitsim.pipeline import *
from vbitsim.tensors import ConvParams, QuantTensor

SMALL = MachineConfig.default().replace(vlen_bits=512, memory_bytes=1 << 22)


def small_layer(name="small", cin=4, cout=3, k=3, stride=1, pad=1, size=6):
    return make_layer(name, cin, cout, k, stride, pad, size, size)


def test_quantize_examples():
    scheme = QuantScheme(2, scale=0.5)
    q = quantize([0.0, 0.25, 0.74, 0.75, 10.0, -3.0], scheme)
    assert q.values.tolist() == [0, 1, 1, 2, 3, 0]
    assert q.precision_bits == 2 and not q.signed
    signed = QuantScheme(4, signed=True, scale=0.25, zero_point=1)
    assert quantize([-0.125, 0.125, 5.0], signed).values.tolist() == [0, 2, 7]
    with pytest.raises(QuantizationError):
        quantize([np.inf], scheme)


def test_dequantize_inverts_quantize_on_the_grid():
    scheme = QuantScheme(3, scale=0.25, zero_point=2)
    q = QuantTensor([0, 1, 5, 7], 3)
    assert quantize(dequantize(q, scheme), scheme) == q


def test_rescale_examples(machine):
    out = rescale(np.array([7, -7, 1000, 0]), 0.5, QuantScheme(8, signed=True), machine)
    assert out.values.tolist() == [4, -4, 127, 0]
    assert machine.trace.scalar_cycles == 4 * machine.config.scalar_cycles_per_rescale_element
    with pytest.raises(QuantizationError):
        rescale(np.array([1]), 0.0, QuantScheme(8))


def test_scheme_validation():
    with pytest.raises(QuantizationError):
        QuantScheme(9)
    with pytest.raises(QuantizationError):
        QuantScheme(2, scale=-1.0)
    with pytest.raises(QuantizationError):
        QuantScheme(2, zero_point=4)


def test_weight_signedness():
    assert not weight_signed(1)
    assert weight_signed(2)
    assert weight_signed(8)


def test_modes():
    assert list(MODES) == ["int1", "int2", "int2_no_vbitpack", "int8_baseline"]
    assert resolve_mode("int2-no-vbitpack").emulate_packing
    assert resolve_mode(BASELINE_MODE).is_baseline
    with pytest.raises(ConfigurationError):
        resolve_mode("int4")


def test_resnet18_layer_set():
    layers = resnet18_layer_set()
    assert len(layers) == 20
    assert [layer.name for layer in layers if layer.excluded] == ["conv1"]
    assert len([layer for layer in layers if layer.name.endswith("downsample")]) == 3
    by_name = dict((layer.name, layer) for layer in layers)
    stage2 = by_name["layer2.0.conv1"].params
    assert stage2 == ConvParams(64, 128, 3, 3, 2, 1, 32, 32)
    assert stage2.output_shape == (128, 16, 16)
    assert by_name["layer4.1.conv2"].params.output_shape == (512, 4, 4)
    assert by_name["layer3.0.downsample"].params == ConvParams(128, 256, 1, 1, 2, 0, 16, 16)
    for layer in layers:
        assert layer.weight_scheme.signed and not layer.activation_scheme.signed


def test_layer_at_precision_keeps_scales():
    layer = small_layer()
    int1 = layer.at_precision(1, 1)
    assert int1.weight_scheme.precision_bits == 1 and not int1.weight_scheme.signed
    assert int1.rescale_factor == layer.rescale_factor
    assert layer.at_precision(2, 2) == layer


def test_layer_file_roundtrip(tmp_path):
    layers = resnet18_layer_set() + [make_layer("odd", 3, 5, 5, 2, 2, 9, 7, 3, 4, 0.1, 0.3, 0.7)]
    directory = str(tmp_path)
    path = os.path.join(directory, "layers.txt")
    write_layer_set(path, layers)
    assert read_layer_set(path) == layers


@pytest.mark.parametrize("line", [
    "conv 3 4 3 1 1 8",
    "conv 3 4 3 1 1 8 8 2 2 0.1 0.1 x",
    "conv 3 4 3 1 1 8 8 2 2 0.1 -0.1 0.1",
    "conv 3 4 9 1 0 8 8 2 2 0.1 0.1 0.1",
    "conv 3 4 3 1 1 8 8 2 2 0.1 0.1 0.1 skipped",
])
def test_parse_layer_errors(line):
    with pytest.raises(ConfigurationError):
        parse_layer(line, 1)


@pytest.mark.parametrize("mode", list(MODES))
def test_forward_layer_matches_reference(mode):
    base = small_layer()
    cfg = base.at_precision(MODES[mode].weight_bits, MODES[mode].activation_bits)
    inputs, weights = layer_operands(cfg, seed=5)
    input_fp = dequantize(inputs, cfg.activation_scheme)
    output, report = forward_layer(cfg, input_fp, weights, mode, SMALL)
    assert np.array_equal(output, quantized_layer_ref(cfg, input_fp, weights))
    assert report.output.shape == cfg.params.output_shape
    assert report.scalar_rescale_cycles == 3 * 6 * 6 * SMALL.scalar_cycles_per_rescale_element
    assert report.total_cycles == report.vector_cycles + report.scalar_rescale_cycles


def shifted_layer(mode, zero_point=1):
    base = small_layer(size=5).at_precision(MODES[mode].weight_bits, MODES[mode].activation_bits)
    return LayerConfig(base.name, base.params, base.weight_scheme,
                       base.activation_scheme.replace(zero_point=zero_point), base.output_scheme)


@pytest.mark.parametrize("mode", list(MODES))
def test_activation_zero_point_is_subtracted(mode):
    cfg = shifted_layer(mode)
    inputs, weights = layer_operands(cfg, seed=12)
    input_fp = dequantize(inputs, cfg.activation_scheme)
    output, report = forward_layer(cfg, input_fp, weights, mode, SMALL)
    assert np.array_equal(output, quantized_layer_ref(cfg, input_fp, weights))
    centered = inputs.values.astype(np.int64) - 1
    assert np.array_equal(report.accumulators, conv2d_ref(centered, weights, cfg.params))


@pytest.mark.parametrize("mode", ["int2", "int8_baseline"])
def test_zero_point_input_gives_zero_accumulators(mode):
    # every input equal to the zero point is a real zero, padded border included
    cfg = shifted_layer(mode, zero_point=2)
    inputs = QuantTensor(np.full(cfg.params.input_shape, 2), cfg.activation_scheme.precision_bits)
    weights = layer_operands(cfg, seed=4)[1]
    report = run_layer(cfg, inputs, mode, weights, SMALL)
    assert not report.accumulators.any()


def test_weights_must_be_symmetric():
    base = small_layer()
    with pytest.raises(QuantizationError):
        LayerConfig("w", base.params, base.weight_scheme.replace(zero_point=1), base.activation_scheme)


def test_int2_modes_agree_and_differ_in_packing_cost():
    cfg = small_layer(stride=2, size=7)
    inputs, weights = layer_operands(cfg, seed=9)
    fast = run_layer(cfg, inputs, "int2", weights, SMALL)
    slow = run_layer(cfg, inputs, "int2_no_vbitpack", weights, SMALL)
    assert fast.output == slow.output
    assert np.array_equal(fast.accumulators, slow.accumulators)
    assert slow.packing_cycles > fast.packing_cycles
    assert slow.vector_cycles - slow.packing_cycles == fast.vector_cycles - fast.packing_cycles
    assert fast.instruction_counts["VBITPACK"] > 0
    assert slow.instruction_counts["VBITPACK"] == 0


def test_int8_baseline_does_not_pack():
    cfg = small_layer().at_precision(8, 8)
    inputs, weights = layer_operands(cfg, seed=1)
    report = run_layer(cfg, inputs, BASELINE_MODE, weights, SMALL)
    assert report.packing_cycles == 0
    assert report.instruction_counts["VMACC"] > 0


def test_run_layer_checks_precision():
    cfg = small_layer()
    inputs, weights = layer_operands(cfg, seed=1)
    with pytest.raises(QuantizationError):
        run_layer(cfg, inputs, "int1", weights, SMALL)
    with pytest.raises(ShapeMismatchError):
        run_layer(cfg, inputs.reshape((4, 3, 12)), "int2", weights, SMALL)


def test_dry_run_layer_has_costs_but_no_values():
    cfg = small_layer()
    inputs, weights = layer_operands(cfg, seed=3)
    live = run_layer(cfg, inputs, "int2", weights, SMALL)
    dry = run_layer(cfg, inputs, "int2", weights, SMALL, dry_run=True)
    assert dry.output is None and dry.accumulators is None
    assert (dry.vector_cycles, dry.packing_cycles, dry.scalar_rescale_cycles) == \
           (live.vector_cycles, live.packing_cycles, live.scalar_rescale_cycles)


def test_accumulators_fit_32_bits():
    # worst case |acc| over the network: K * max|w| * max a at the widest precision
    for layer in resnet18_layer_set(8, 8):
        assert layer.params.reduction_length * 128 * 255 < 1 << 31


def _network_cycles(config=None):
    cycles = {}
    for index, layer in enumerate(resnet18_layer_set()):
        for name, mode in MODES.items():
            cfg = layer.at_precision(mode.weight_bits, mode.activation_bits)
            inputs = QuantTensor.zeros(cfg.params.input_shape, mode.activation_bits)
            weights = QuantTensor.zeros(cfg.params.weight_shape, mode.weight_bits, weight_signed(mode.weight_bits))
            cycles[index, name] = run_layer(cfg, inputs, mode, weights, config, dry_run=True).total_cycles
    return cycles


def test_resnet18_mode_ordering():
    layers = resnet18_layer_set()
    cycles = _network_cycles()
    speedups, unpacked_speedups = [], []
    for index, layer in enumerate(layers):
        int1, int2, emulated, int8 = [cycles[index, name] for name in MODES]
        assert int1 < int2 < emulated
        assert int2 < int8
        if not layer.excluded:
            speedups.append(float(int8) / int2)
            unpacked_speedups.append(float(int8) / emulated)
    assert 2.0 <= sum(speedups) / len(speedups) <= 10.0
    assert sum(unpacked_speedups) / len(unpacked_speedups) > 1.0


def test_more_lanes_help_every_layer():
    base = _network_cycles(MachineConfig.default())
    wide = _network_cycles(MachineConfig.default().replace(lanes=8, label="eight-lanes"))
    for key, cycles in base.items():
        assert wide[key] < cycles
