"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import glob
import os

import pytest

from vbitsim.config import MachineConfig
from vbitsim.machine import VectorMachine

# List of specific golden traces to be run, e.g. ["vbitpack_four_calls"].
# To run all of them set to empty list []
SPECIFIC_TESTS = []

GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run exhaustive and full network tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: exhaustive or full network test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def pytest_generate_tests(metafunc):
    if "trace_path" in metafunc.fixturenames and "expected_path" in metafunc.fixturenames:
        args = []
        ids = []
        for trace_path in glob.glob(os.path.join(GOLDEN_DIR, "*.trace")):
            case = os.path.splitext(os.path.basename(trace_path))[0]
            expected_path = os.path.splitext(trace_path)[0] + ".expected"
            if (len(SPECIFIC_TESTS) == 0 or case in SPECIFIC_TESTS) and os.path.isfile(expected_path):
                args.append([trace_path, expected_path])
                ids.append(case)

        assert (len(ids) > 0), "No golden trace(s) defined"

        args_with_ids = sorted(list(zip(args, ids)), key=lambda item: item[1])
        args, ids = zip(*args_with_ids)
        metafunc.parametrize(["trace_path", "expected_path"], args, ids=ids)


def read_expected(path):
    """ ``key=value`` lines of a golden ``.expected`` file """
    lines = []
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                lines.append(line)
    return lines


@pytest.fixture
def config():
    return MachineConfig.default()


@pytest.fixture
def small_config():
    """ 256 bit vectors: 32 bytes or 8 words per register, strip-mining kicks in early """
    return MachineConfig.default().replace(vlen_bits=256, memory_bytes=1 << 20)


@pytest.fixture
def machine(config):
    return VectorMachine(config)


@pytest.fixture
def small_machine(small_config):
    return VectorMachine(small_config)
