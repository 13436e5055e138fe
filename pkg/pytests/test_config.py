"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import os

import pytest

from vbitsim.config import MachineConfig
from vbitsim.errors import ConfigurationError
from vbitsim.utility import Settings, ceil_div, parse_dims, parse_int


def test_presets():
    default = MachineConfig.default()
    assert (default.lanes, default.vlen_bits, default.vrf_bytes) == (4, 4096, 16 * 1024)
    quark = MachineConfig.preset("quark-8-lane")
    assert (quark.lanes, quark.vlen_bits, quark.vrf_bytes) == (8, 8192, 32 * 1024)
    with pytest.raises(ConfigurationError):
        MachineConfig.preset("gpu")


@pytest.mark.parametrize("changes", [
    dict(lanes=0),
    dict(vlen_bits=3000),
    dict(vlen_bits=128),
    dict(supported_sews=[8, 12]),
    dict(issue_overhead_cycles=-1),
    dict(memory_bandwidth_factor=0.0),
    dict(colour="red"),
])
def test_invalid_configs(changes):
    with pytest.raises(ConfigurationError):
        MachineConfig.default().replace(**changes)


def test_config_is_immutable():
    with pytest.raises(AttributeError):
        MachineConfig.default().lanes = 8


def test_config_file_roundtrip(tmp_path):
    directory = str(tmp_path)
    path = os.path.join(directory, "machine.cfg")
    cfg = MachineConfig.quark_8_lane().replace(issue_overhead_cycles=3, memory_bandwidth_factor=1.5,
                                               supported_sews=[8, 32])
    cfg.save(path)
    assert MachineConfig.load(path) == cfg


def test_config_file_overlays_a_preset(tmp_path):
    directory = str(tmp_path)
    path = os.path.join(directory, "machine.cfg")
    with open(path, "w") as f:
        f.write("# eight lanes, cheaper issue\npreset = quark-8-lane\nissue_overhead_cycles = 1\n")
    cfg = MachineConfig.load(path)
    assert cfg.lanes == 8 and cfg.issue_overhead_cycles == 1


def test_config_file_errors(tmp_path):
    directory = str(tmp_path)
    path = os.path.join(directory, "machine.cfg")
    with open(path, "w") as f:
        f.write("lanes = four\n")
    with pytest.raises(ConfigurationError):
        MachineConfig.load(path)
    with open(path, "w") as f:
        f.write("just words\n")
    with pytest.raises(ConfigurationError) as e:
        MachineConfig.load(path)
    assert "line 1" in str(e.value)
    with pytest.raises(ConfigurationError):
        MachineConfig.load(os.path.join(directory, "missing.cfg"))


def test_settings_store(tmp_path):
    directory = str(tmp_path)
    settings = Settings("store.cfg", directory)
    settings["a"] = 1
    settings["b"] = "x"
    settings["b"] = None
    settings.save()
    reloaded = Settings("store.cfg", directory)
    assert reloaded.keys() == ["a"]
    assert reloaded["a"] == "1"
    assert reloaded.get("b", "default") == "default"


def test_parsing_helpers():
    assert parse_dims("8x8", 2) == (8, 8)
    assert parse_dims("4 x 8 X 3") == (4, 8, 3)
    for bad in ("8x", "0x4", "a"):
        with pytest.raises(ConfigurationError):
            parse_dims(bad)
    with pytest.raises(ConfigurationError):
        parse_dims("8x8", 3)
    assert parse_int("0x10") == 16
    with pytest.raises(ConfigurationError):
        parse_int("ten")
    assert ceil_div(9, 8) == 2
