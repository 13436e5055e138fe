"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.
"""
import csv
import os
import shutil
import subprocess
import sys
import tempfile

import pytest

from conftest import read_expected
from vbitsim.__main__ import main
from vbitsim.base import EXIT_CODE_OK, EXIT_CODE_USAGE_ERROR, EXIT_CODE_VERIFICATION_FAILED
from vbitsim.errors import VerificationError
from vbitsim.cli import verify
from vbitsim.pipeline import make_layer, write_layer_set


class TempDirectory(object):

    def __init__(self):
        self.__name = None

    def __enter__(self):
        self.__name = tempfile.mkdtemp()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        shutil.rmtree(self.__name, ignore_errors=True)

    def path(self, basename):
        return os.path.join(self.__name, basename)


def read_rows(path):
    """ (comment lines, csv rows) of a report """
    with open(path) as f:
        lines = f.read().splitlines()
    comments = [line[2:] for line in lines if line.startswith("# ")]
    rows = list(csv.DictReader([line for line in lines if not line.startswith("#")]))
    return comments, rows


def test_golden_trace(trace_path, expected_path):
    with TempDirectory() as d:
        assert main(["trace", trace_path, "-q", "-o", d.path("out.txt")]) == EXIT_CODE_OK
        with open(d.path("out.txt")) as f:
            lines = f.read().splitlines()
    for expected in read_expected(expected_path):
        assert expected in lines


def test_trace_dump_and_register_selection():
    trace = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden", "vbitpack_four_calls.trace")
    with TempDirectory() as d:
        assert main(["trace", trace, "-q", "--dump", "--registers", "v2", "-o", d.path("out.txt")]) == EXIT_CODE_OK
        with open(d.path("out.txt")) as f:
            lines = f.read().splitlines()
    assert "v2=0xe4e41b1b5555aaaa" in lines
    assert not any(line.startswith("v1=") for line in lines)
    assert len([line for line in lines if "vbitpack v2, v1, 2" in line]) == 4


def test_trace_errors(caplog):
    with TempDirectory() as d:
        with open(d.path("bad.trace"), "w") as f:
            f.write("vsetvl 4, e8\nvle v1, 0x0\nvfoo v1, v2, v3\n")
        assert main(["trace", d.path("bad.trace"), "-q"]) == EXIT_CODE_USAGE_ERROR
        assert "line 3" in caplog.text

        with open(d.path("empty.trace"), "w") as f:
            f.write("# nothing to run\n")
        assert main(["trace", d.path("empty.trace"), "-q", "-o", d.path("out.txt")]) == EXIT_CODE_OK
        with open(d.path("out.txt")) as f:
            assert "total_cycles=0" in f.read().splitlines()

        with open(d.path("fault.trace"), "w") as f:
            f.write("vsetvl 512, e8\nvle v1, 0x3ffffff\n")
        assert main(["trace", d.path("fault.trace"), "-q", "--memory-bytes", "4096"]) == EXIT_CODE_USAGE_ERROR
        assert main(["trace", d.path("missing.trace"), "-q"]) == EXIT_CODE_USAGE_ERROR


def test_kernel_conv2d_report():
    with TempDirectory() as d:
        out = d.path("conv.csv")
        assert main(["kernel", "conv2d", "--size", "6x6", "--channels", "3x4", "--pad", "1", "-q",
                     "-o", out]) == EXIT_CODE_OK
        comments, rows = read_rows(out)
    assert any(line.startswith("machine: label=baseline-4-lane") for line in comments)
    assert any(line.startswith("op_counting_rule:") for line in comments)
    assert len(rows) == 1
    row = rows[0]
    assert row["status"] == "verified"
    assert row["shape"] == "3x6x6->4x6x6"
    assert int(row["total_cycles"]) == sum(int(row["%s_cycles" % c]) for c in
                                           ("alu", "popcnt", "shacc", "bitpack", "memory", "scalar"))
    assert 0 < int(row["packing_cycles"]) < int(row["total_cycles"])


@pytest.mark.parametrize("kernel, size", [("dot", "100"), ("matmul", "5x40x3")])
def test_kernel_dot_and_matmul(kernel, size):
    with TempDirectory() as d:
        assert main(["kernel", kernel, "--size", size, "--wbits", "3", "--abits", "2", "-q",
                     "-o", d.path("k.csv")]) == EXIT_CODE_OK
        _, rows = read_rows(d.path("k.csv"))
    assert rows[0]["wbits"] == "3" and rows[0]["abits"] == "2"


def test_packing_mode_changes_cost_not_values():
    with TempDirectory() as d:
        for mode in ("int2", "int2-no-vbitpack"):
            assert main(["kernel", "conv2d", "--mode", mode, "--seed", "3", "-q",
                         "-o", d.path(mode + ".csv")]) == EXIT_CODE_OK
        _, fast = read_rows(d.path("int2.csv"))
        _, slow = read_rows(d.path("int2-no-vbitpack.csv"))
    assert fast[0]["checksum"] == slow[0]["checksum"]
    assert int(slow[0]["packing_cycles"]) > int(fast[0]["packing_cycles"])


def test_kernel_output_is_deterministic():
    with TempDirectory() as d:
        for name in ("a.csv", "b.csv"):
            assert main(["kernel", "matmul", "--seed", "11", "-q", "-o", d.path(name)]) == EXIT_CODE_OK
        with open(d.path("a.csv")) as a, open(d.path("b.csv")) as b:
            assert a.read() == b.read()


@pytest.mark.parametrize("argv", [
    ["kernel", "conv2d", "--wbits", "9"],
    ["kernel", "conv2d", "--wbits", "two"],
    ["kernel", "fft"],
    ["kernel", "dot", "--seed", "-1"],
    ["roofline", "--lanes", "0"],
    [],
])
def test_usage_errors_exit_with_2(argv):
    with pytest.raises(SystemExit) as e:
        main(argv + ["-q"] if argv else argv)
    assert e.value.code == EXIT_CODE_USAGE_ERROR


@pytest.mark.parametrize("argv", [
    ["kernel", "dot", "--size", "0"],
    ["kernel", "conv2d", "--size", "8"],
    ["kernel", "dot", "--mode", "int8-baseline"],
    ["kernel", "conv2d", "--vlen", "1000"],
    ["bench-resnet18", "--modes", "int3"],
    ["roofline", "--sizes", "4,-8"],
    ["config", "--preset", "quark-8-lane", "--config", "/nonexistent/machine.cfg"],
])
def test_configuration_errors_return_2(argv):
    assert main(argv + ["-q"]) == EXIT_CODE_USAGE_ERROR


def test_verification_failure_exit_code(monkeypatch):
    def broken(*args, **kwargs):
        raise VerificationError("conv2d kernel: 1 mismatches, first at flat index 0 (1 != 0)", 1, 0)

    monkeypatch.setattr("vbitsim.cli.verify", broken)
    assert main(["kernel", "conv2d", "-q"]) == EXIT_CODE_VERIFICATION_FAILED


def test_verify_reports_first_mismatch():
    verify([1, 2, 3], [1, 2, 3], "same")
    with pytest.raises(VerificationError) as e:
        verify([1, 5, 3, 7], [1, 2, 3, 4], "diff")
    assert (e.value.mismatches, e.value.first_index) == (2, 1)
    with pytest.raises(VerificationError):
        verify([1, 2], [1, 2, 3], "shape")


def test_bench_on_a_layer_file_with_verification():
    layers = [make_layer("a", 3, 4, 3, 1, 1, 6, 6, excluded=True),
              make_layer("b", 4, 8, 3, 2, 1, 6, 6),
              make_layer("c", 8, 8, 1, 1, 0, 3, 3)]
    with TempDirectory() as d:
        write_layer_set(d.path("layers.txt"), layers)
        args = ["bench-resnet18", "--layers", d.path("layers.txt"), "--verify", "-q", "--vlen", "512",
                "--memory-bytes", str(1 << 22), "-o", d.path("bench.csv")]
        assert main(args) == EXIT_CODE_OK
        comments, rows = read_rows(d.path("bench.csv"))
    assert len(rows) == 3 * 4
    assert [r["mode"] for r in rows[:4]] == ["int1", "int2", "int2_no_vbitpack", "int8_baseline"]
    assert all(float(r["speedup_vs_int8"]) > 0 for r in rows)
    summary = [line for line in comments if line.startswith("summary ")]
    assert len(summary) == 3
    assert all("layers=2 " in line for line in summary)


def test_bench_resnet18_default_run():
    with TempDirectory() as d:
        assert main(["bench-resnet18", "-q", "--jobs", "2", "-o", d.path("bench.csv")]) == EXIT_CODE_OK
        comments, rows = read_rows(d.path("bench.csv"))
    assert len(rows) == 20 * 4
    assert rows[0]["layer"] == "conv1" and rows[0]["excluded"] == "1"
    for row in rows:
        assert int(row["total_cycles"]) == int(row["vector_cycles"]) + int(row["scalar_cycles"])
        if row["mode"] == "int8_baseline":
            assert row["packing_cycles"] == "0"
            assert row["speedup_vs_int8"] == "1.0000"
    int2 = [line for line in comments if line.startswith("summary mode=int2 ")][0]
    mean_speedup = float(int2.split("mean_speedup_vs_int8=")[1].split()[0])
    assert 2.0 <= mean_speedup <= 10.0


def test_roofline_report():
    with TempDirectory() as d:
        assert main(["roofline", "--sizes", "4,16", "-q", "-o", d.path("roof.csv")]) == EXIT_CODE_OK
        comments, rows = read_rows(d.path("roof.csv"))
    assert [(r["config"], r["size"]) for r in rows] == [("quark-8-lane", "4x4"), ("baseline-4-lane", "4x4"),
                                                       ("quark-8-lane", "16x16"), ("baseline-4-lane", "16x16")]
    for r in rows:
        roof = min(float(r["peak_compute"]), float(r["intensity"]) * float(r["peak_bandwidth"]))
        assert float(r["performance"]) <= roof * (1 + 1e-3)


def test_config_roundtrip():
    with TempDirectory() as d:
        assert main(["config", "--preset", "quark-8-lane", "--issue-overhead", "3", "-q",
                     "-o", d.path("machine.cfg")]) == EXIT_CODE_OK
        assert main(["config", "--config", d.path("machine.cfg"), "-q", "-o", d.path("again.cfg")]) == EXIT_CODE_OK
        with open(d.path("machine.cfg")) as a, open(d.path("again.cfg")) as b:
            first = a.read()
            assert first == b.read()
    assert "lanes=8\n" in first
    assert "issue_overhead_cycles=3\n" in first


def test_log_file_channel():
    with TempDirectory() as d:
        log = d.path("run.log")
        assert main(["kernel", "dot", "-vv", "--log-file", log, "-o", d.path("k.csv")]) == EXIT_CODE_OK
        with open(log) as f:
            text = f.read()
    assert "Running dot kernel" in text


def test_entry_point_runs_in_a_fresh_interpreter():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    result = subprocess.run([sys.executable, "-m", "vbitsim", "config", "-q"], cwd=root,
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, universal_newlines=True)
    assert result.returncode == 0, result.stderr
    assert "lanes=4" in result.stdout.splitlines()


def test_temp_directory_is_removed():
    with TempDirectory() as d:
        path = d.path("kept.txt")
        with open(path, "w") as f:
            f.write("x")
    assert not os.path.exists(os.path.dirname(path))
