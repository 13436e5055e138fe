"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Machine configuration: lane count, vector length and the constants of
the cycle model.
"""
import os

from .errors import *
from .utility import Settings, parse_int

SEWS = (8, 16, 32, 64)
NUM_VREGS = 32


class MachineConfig(object):
    """
    Immutable description of one vector machine.

    Every report header prints :meth:`as_items` so results are
    self-describing. Use :meth:`replace` to derive variants.
    """

    FIELDS = ("label", "lanes", "vlen_bits", "supported_sews", "issue_overhead_cycles",
              "lane_datapath_bits", "scalar_cycles_per_rescale_element",
              "memory_bandwidth_factor", "memory_bytes")

    def __init__(self, label="baseline-4-lane", lanes=4, vlen_bits=4096, supported_sews=SEWS,
                 issue_overhead_cycles=2, lane_datapath_bits=64, scalar_cycles_per_rescale_element=4,
                 memory_bandwidth_factor=1.0, memory_bytes=64 * 1024 * 1024):
        object.__setattr__(self, "label", str(label))
        object.__setattr__(self, "lanes", int(lanes))
        object.__setattr__(self, "vlen_bits", int(vlen_bits))
        object.__setattr__(self, "supported_sews", tuple(sorted(int(s) for s in supported_sews)))
        object.__setattr__(self, "issue_overhead_cycles", int(issue_overhead_cycles))
        object.__setattr__(self, "lane_datapath_bits", int(lane_datapath_bits))
        object.__setattr__(self, "scalar_cycles_per_rescale_element", int(scalar_cycles_per_rescale_element))
        object.__setattr__(self, "memory_bandwidth_factor", float(memory_bandwidth_factor))
        object.__setattr__(self, "memory_bytes", int(memory_bytes))
        self.validate()

    def __setattr__(self, key, value):
        raise AttributeError("MachineConfig is immutable, use replace()")

    @classmethod
    def default(cls):
        """ 4 lanes, 4096 bit vectors: 16 KiB of vector registers """
        return cls()

    @classmethod
    def quark_8_lane(cls):
        """ 8 lanes, 8192 bit vectors: 32 KiB of vector registers """
        return cls(label="quark-8-lane", lanes=8, vlen_bits=8192)

    @classmethod
    def preset(cls, name):
        presets = {"baseline-4-lane": cls.default, "quark-8-lane": cls.quark_8_lane}
        if name not in presets:
            raise ConfigurationError("Unknown machine preset `%s`, choose one of %s"
                                     % (name, ", ".join(sorted(presets))))
        return presets[name]()

    def validate(self):
        if self.lanes <= 0:
            raise ConfigurationError("lanes must be positive, got %d" % self.lanes)
        if self.lane_datapath_bits <= 0:
            raise ConfigurationError("lane_datapath_bits must be positive, got %d" % self.lane_datapath_bits)
        if self.vlen_bits <= 0 or self.vlen_bits & (self.vlen_bits - 1):
            raise ConfigurationError("vlen_bits must be a power of two, got %d" % self.vlen_bits)
        if self.vlen_bits % (64 * self.lanes):
            raise ConfigurationError("vlen_bits (%d) must be divisible by 64 x lanes (%d)"
                                     % (self.vlen_bits, 64 * self.lanes))
        if not self.supported_sews or any(s not in SEWS for s in self.supported_sews):
            raise ConfigurationError("supported_sews must be a subset of %s, got %s"
                                     % (SEWS, self.supported_sews))
        if self.issue_overhead_cycles < 0:
            raise ConfigurationError("issue_overhead_cycles must be nonnegative")
        if self.scalar_cycles_per_rescale_element < 0:
            raise ConfigurationError("scalar_cycles_per_rescale_element must be nonnegative")
        if not self.memory_bandwidth_factor > 0.0:
            raise ConfigurationError("memory_bandwidth_factor must be positive")
        if self.memory_bytes <= 0:
            raise ConfigurationError("memory_bytes must be positive")

    @property
    def vrf_bytes(self):
        return NUM_VREGS * self.vlen_bits // 8

    @property
    def datapath_bits(self):
        """ bits processed by all lanes in one cycle """
        return self.lanes * self.lane_datapath_bits

    def vlmax(self, sew_bits):
        return self.vlen_bits // sew_bits

    def replace(self, **changes):
        values = dict(self.as_dict())
        for key, value in changes.items():
            if key not in self.FIELDS:
                raise ConfigurationError("Unknown machine setting `%s`" % key)
            if value is not None:
                values[key] = value
        return MachineConfig(**values)

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in self.FIELDS)

    def as_items(self):
        """ (key, text) pairs in declaration order, as written to config files """
        items = []
        for name in self.FIELDS:
            value = getattr(self, name)
            if name == "supported_sews":
                value = ",".join(str(s) for s in value)
            items.append((name, str(value)))
        return items

    def describe(self):
        return " ".join("%s=%s" % item for item in self.as_items())

    @classmethod
    def from_settings(cls, settings, base=None):
        """ Overlays a :class:`Settings` store on ``base`` (default preset) """
        if base is None:
            base = cls.default()
        if settings.get("preset") is not None:
            base = cls.preset(settings["preset"])
        changes = {}
        for key in settings.keys():
            if key == "preset":
                continue
            if key not in cls.FIELDS:
                raise ConfigurationError("Unknown machine setting `%s` in `%s`" % (key, settings.config_path))
            text = settings[key]
            if key == "label":
                changes[key] = text
            elif key == "supported_sews":
                changes[key] = [parse_int(s) for s in text.split(",") if s.strip()]
            elif key == "memory_bandwidth_factor":
                try:
                    changes[key] = float(text)
                except ValueError:
                    raise ConfigurationError("Bad value `%s` for %s" % (text, key))
            else:
                changes[key] = parse_int(text)
        return base.replace(**changes)

    @classmethod
    def load(cls, path, base=None):
        return cls.from_settings(Settings.from_path(path), base)

    def save(self, path):
        directory, basename = os.path.split(os.path.abspath(path))
        settings = Settings(basename, directory)
        settings.values = {}
        for key, value in self.as_items():
            settings[key] = value
        settings.save()

    def __eq__(self, other):
        return isinstance(other, MachineConfig) and self.as_dict() == other.as_dict()

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(tuple(self.as_items()))

    def __repr__(self):
        return "MachineConfig(%s)" % ", ".join("%s=%r" % (k, v) for k, v in self.as_dict().items())
