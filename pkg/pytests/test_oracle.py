"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies

from vbitsim.errors import QuantizationError, ShapeMismatchError
from vbitsim.oracle import *
from vbitsim.pipeline import QuantScheme
from vbitsim.tensors import ConvParams, SplitMix64


def test_popcount():
    assert popcount_ref(0) == 0
    assert popcount_ref(0b1011) == 3
    assert popcount_ref((1 << 64) - 1) == 64


def test_dot_and_matmul():
    assert dot_ref([1, -2, 3], [4, 5, -6]) == 4 - 10 - 18
    assert dot_ref([], []) == 0
    with pytest.raises(ShapeMismatchError):
        dot_ref([1], [1, 2])
    A = np.array([[1, 2], [3, 4]])
    B = np.array([[5, 6], [7, 8]])
    assert matmul_ref(A, B).tolist() == [[19, 22], [43, 50]]
    with pytest.raises(ShapeMismatchError):
        matmul_ref(A, np.ones((3, 2)))


@settings(max_examples=30, deadline=None)
@given(strategies.integers(1, 3), strategies.integers(1, 3), strategies.integers(1, 3),
       strategies.integers(0, 1), strategies.integers(1, 2), strategies.integers(3, 6), strategies.integers(0, 2 ** 32 - 1))
def test_conv_equals_matmul_of_patches(cin, cout, k, pad, stride, size, seed):
    rng = SplitMix64(seed)
    params = ConvParams(cin, cout, k, k, stride, pad, size, size)
    x = rng.integers(int(np.prod(params.input_shape)), -3, 3).reshape(params.input_shape)
    w = rng.integers(int(np.prod(params.weight_shape)), -3, 3).reshape(params.weight_shape)
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = conv2d_ref(x, w, params)
    for oy in range(params.output_h):
        for ox in range(params.output_w):
            patch = padded[:, oy * stride:oy * stride + k, ox * stride:ox * stride + k]
            for o in range(cout):
                assert out[o, oy, ox] == int((patch * w[o]).sum())


def test_packing_references():
    assert pack_bitplanes_ref([3, 1, 2, 0, 3], 2) == [bytes([0b10011]), bytes([0b10101])]
    assert pack_dense_ref([1, 2, 3, 0, 3], 2) == bytes([0b00111001, 0b11])
    assert pack_dense_ref([-1, 1], 3) == bytes([0b001111])
    assert unpack_dense_ref(bytes([0b001111]), 2, 3, signed=True) == [-1, 1]
    assert unpack_dense_ref(bytes([0b001111]), 2, 3) == [7, 1]


@pytest.mark.parametrize("x, expected", [(0.5, 1), (-0.5, -1), (1.5, 2), (2.5, 3), (-2.5, -3), (0.49, 0), (0.0, 0)])
def test_round_half_away_from_zero(x, expected):
    assert round_half_away_ref(x) == expected


def test_quantize_and_rescale_examples():
    unsigned2 = QuantScheme(2, scale=0.5)
    assert [quantize_ref(x, unsigned2) for x in (0.0, 0.25, 0.74, 0.75, 10.0, -3.0)] == [0, 1, 1, 2, 3, 0]
    signed2 = QuantScheme(2, signed=True, scale=1.0)
    assert [quantize_ref(x, signed2) for x in (-5.0, -1.5, 1.5, 7.0)] == [-2, -2, 1, 1]
    assert rescale_ref(7, 0.5, QuantScheme(8)) == 4
    assert rescale_ref(-7, 0.5, QuantScheme(8, signed=True)) == -4
    assert rescale_ref(1000, 1.0, QuantScheme(2)) == 3
    with pytest.raises(QuantizationError):
        quantize_ref(float("nan"), unsigned2)
