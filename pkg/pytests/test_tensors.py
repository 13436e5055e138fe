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

from vbitsim.errors import *
from vbitsim.machine import VectorMachine
from vbitsim.packing import pack_bitplanes, pack_dense_host
from vbitsim.tensors import *


def test_quant_tensor_range_checks():
    assert QuantTensor([0, 3], 2).values.dtype == np.uint8
    assert QuantTensor([-2, 1], 2, signed=True).values.dtype == np.int8
    with pytest.raises(QuantizationError):
        QuantTensor([4], 2)
    with pytest.raises(QuantizationError):
        QuantTensor([-3], 2, signed=True)
    with pytest.raises(QuantizationError):
        QuantTensor([0], 9)


def test_signed_raw_bytes_are_twos_complement():
    assert QuantTensor([-1, -2, 1], 2, signed=True).raw_bytes().tolist() == [0xFF, 0xFE, 0x01]


def test_packed_tensor_sizes():
    t = QuantTensor.zeros((3, 7), 3)
    dense = pack_dense_host(t)
    assert dense.numel == 21
    assert dense.nbytes == 8
    with pytest.raises(VBitSimPreconditionError):
        PackedTensor(PackedTensor.BITPLANE, 2, False, (8,), planes=[np.zeros(1, np.uint8)])
    with pytest.raises(VBitSimPreconditionError):
        PackedTensor(PackedTensor.DENSE, 2, False, (8,), data=np.zeros(3, np.uint8))


def test_conv_params():
    params = ConvParams(64, 128, 3, 3, 2, 1, 32, 32)
    assert params.output_shape == (128, 16, 16)
    assert params.reduction_length == 576
    assert params.macs == 576 * 128 * 256
    with pytest.raises(ShapeMismatchError):
        ConvParams(1, 1, 5, 5, 1, 0, 3, 3)
    with pytest.raises(ShapeMismatchError):
        ConvParams(0, 1, 3, 3)
    with pytest.raises(ShapeMismatchError):
        ConvParams(1, 1, 1, 1, 1, -1, 3, 3)


def test_splitmix64_reference_value():
    assert SplitMix64(0).next() == 0xE220A8397B1DCDAF


def test_splitmix64_batches_equal_single_steps():
    batch = SplitMix64(12345).next_u64(10)
    rng = SplitMix64(12345)
    assert [int(v) for v in batch] == [rng.next() for _ in range(10)]


def test_seeded_tensors_are_reproducible():
    a = random_quant_tensor((4, 5), 3, signed=True, seed=42)
    b = random_quant_tensor((4, 5), 3, signed=True, seed=42)
    assert a == b
    assert a != random_quant_tensor((4, 5), 3, signed=True, seed=43)
    lo, hi = value_range(3, True)
    assert a.values.min() >= lo and a.values.max() <= hi
    floats = SplitMix64(1).floats(1000)
    assert floats.min() >= 0.0 and floats.max() < 1.0


def test_tensor_file_roundtrip(tmp_path):
    directory = str(tmp_path)
    t = random_quant_tensor((2, 3, 5), 2, signed=True, seed=3)
    machine = VectorMachine()
    for i, tensor in enumerate([t, pack_dense_host(t), pack_bitplanes(machine, t)]):
        path = os.path.join(directory, "t%d.vbt" % i)
        write_tensor(path, tensor)
        assert read_tensor(path) == tensor


def test_tensor_file_rejects_garbage():
    with pytest.raises(ConfigurationError):
        tensor_from_bytes(b"VB")
    with pytest.raises(ConfigurationError):
        tensor_from_bytes(b"NOPE" + bytes(12))
    blob = tensor_to_bytes(QuantTensor([1, 2, 3], 2))
    with pytest.raises(ConfigurationError):
        tensor_from_bytes(blob[:-1])
