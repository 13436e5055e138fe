"""
This file is part of vbitsim, a simulator of an integer vector
processor with sub-byte instructions.

Copyright (c) 2024-2026 vbitsim developers.

vbitsim is released under the 3-Clause BSD license. See
file LICENSE.txt for full license details.

Instruction set: opcodes, the decoded instruction record and the
line oriented text format of programs.

Text format, one instruction per line, ``#`` starts a comment::

    .data 0x0 e8 1 2 3       # preload memory before execution
    vsetvl 3, e8
    vle v1, 0x0
    vsll v2, v1, 1           # immediate operand
    vadd v3, v1, v2          # register operand
    vse v3, 0x40
"""
import collections
import re

from .errors import *
from .utility import parse_int

VAND = "VAND"
VOR = "VOR"
VXOR = "VXOR"
VADD = "VADD"
VSUB = "VSUB"
VSLL = "VSLL"
VSRL = "VSRL"
VMUL = "VMUL"
VMACC = "VMACC"
VMV = "VMV"
VLE = "VLE"
VSE = "VSE"
VSETVL = "VSETVL"
VPOPCNT = "VPOPCNT"
VSHACC = "VSHACC"
VBITPACK = "VBITPACK"

# vd = op(vs1, vs2 or imm)
BINARY_OPCODES = (VAND, VOR, VXOR, VADD, VSUB, VSLL, VSRL, VMUL)
MEMORY_OPCODES = (VLE, VSE)
OPCODES = BINARY_OPCODES + (VMACC, VMV) + MEMORY_OPCODES + (VSETVL, VPOPCNT, VSHACC, VBITPACK)

ALU = "alu"
POPCNT = "popcnt"
SHACC = "shacc"
BITPACK = "bitpack"
MEMORY = "memory"
SCALAR = "scalar"
OPCODE_CLASSES = (ALU, POPCNT, SHACC, BITPACK, MEMORY, SCALAR)

OPCODE_CLASS = dict([(op, ALU) for op in BINARY_OPCODES + (VMACC, VMV)] +
                    [(op, MEMORY) for op in MEMORY_OPCODES] +
                    [(VSETVL, SCALAR), (VPOPCNT, POPCNT), (VSHACC, SHACC), (VBITPACK, BITPACK)])

# VMACC operand signedness, selected by the immediate
MACC_SIGNED = 0
MACC_UNSIGNED = 1
MACC_SIGNED_UNSIGNED = 2


class Instruction(collections.namedtuple("Instruction", "opcode vd vs1 vs2 imm addr avl sew")):
    """
    Decoded vector instruction.

    ``vd`` is the destination, for VSE it names the register that is
    stored. ``avl`` and ``sew`` are only used by VSETVL.
    """
    __slots__ = ()

    def __new__(cls, opcode, vd=None, vs1=None, vs2=None, imm=None, addr=None, avl=None, sew=None):
        return super(Instruction, cls).__new__(cls, opcode, vd, vs1, vs2, imm, addr, avl, sew)

    @property
    def opcode_class(self):
        return OPCODE_CLASS[self.opcode]

    def registers(self):
        return [r for r in (self.vd, self.vs1, self.vs2) if r is not None]

    def __str__(self):
        return format_instruction(self)


def vsetvl(avl, sew):
    return Instruction(VSETVL, avl=avl, sew=sew)


def binary(opcode, vd, vs1, vs2=None, imm=None):
    return Instruction(opcode, vd=vd, vs1=vs1, vs2=vs2, imm=imm)


def vand(vd, vs1, vs2):
    return Instruction(VAND, vd=vd, vs1=vs1, vs2=vs2)


def vor(vd, vs1, vs2):
    return Instruction(VOR, vd=vd, vs1=vs1, vs2=vs2)


def vxor(vd, vs1, vs2):
    return Instruction(VXOR, vd=vd, vs1=vs1, vs2=vs2)


def vadd(vd, vs1, vs2):
    return Instruction(VADD, vd=vd, vs1=vs1, vs2=vs2)


def vsub(vd, vs1, vs2):
    return Instruction(VSUB, vd=vd, vs1=vs1, vs2=vs2)


def vsll(vd, vs1, imm):
    return Instruction(VSLL, vd=vd, vs1=vs1, imm=imm)


def vsrl(vd, vs1, imm):
    return Instruction(VSRL, vd=vd, vs1=vs1, imm=imm)


def vmacc(vd, vs1, vs2, signedness=MACC_SIGNED):
    return Instruction(VMACC, vd=vd, vs1=vs1, vs2=vs2, imm=signedness)


def vmv(vd, vs1):
    return Instruction(VMV, vd=vd, vs1=vs1)


def vle(vd, addr):
    return Instruction(VLE, vd=vd, addr=addr)


def vse(vs, addr):
    return Instruction(VSE, vd=vs, addr=addr)


def vpopcnt(vd, vs2):
    return Instruction(VPOPCNT, vd=vd, vs2=vs2)


def vshacc(vd, vs2, shamt):
    return Instruction(VSHACC, vd=vd, vs2=vs2, imm=shamt)


def vbitpack(vd, vs2, precision):
    return Instruction(VBITPACK, vd=vd, vs2=vs2, imm=precision)


def format_instruction(instr):
    mnemonic = instr.opcode.lower()
    if instr.opcode == VSETVL:
        operands = ["%d" % instr.avl, "e%d" % instr.sew]
    elif instr.opcode in MEMORY_OPCODES:
        operands = ["v%d" % instr.vd, "%#x" % instr.addr]
    elif instr.opcode in BINARY_OPCODES:
        operands = ["v%d" % instr.vd, "v%d" % instr.vs1,
                    "v%d" % instr.vs2 if instr.vs2 is not None else "%d" % instr.imm]
    elif instr.opcode == VMACC:
        operands = ["v%d" % instr.vd, "v%d" % instr.vs1, "v%d" % instr.vs2]
        if instr.imm:
            operands.append("%d" % instr.imm)
    elif instr.opcode == VMV:
        operands = ["v%d" % instr.vd, "v%d" % instr.vs1]
    elif instr.opcode == VPOPCNT:
        operands = ["v%d" % instr.vd, "v%d" % instr.vs2]
    elif instr.opcode in (VSHACC, VBITPACK):
        operands = ["v%d" % instr.vd, "v%d" % instr.vs2, "%d" % instr.imm]
    else:
        raise VBitSimUnreachableBranchError("Unknown opcode %s" % instr.opcode)
    return "%s %s" % (mnemonic, ", ".join(operands))


class Program(object):
    """ Parsed text program: memory preloads plus the instruction list """

    def __init__(self, instructions=None, data=None):
        self.instructions = list(instructions or [])
        self.data = list(data or [])  # (addr, sew, [values])

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)


_REGISTER_RE = re.compile(r"^[vV](\d+)$")
_SEW_RE = re.compile(r"^[eE](\d+)$")


def _register(token, line_number):
    m = _REGISTER_RE.match(token)
    if m is None:
        raise TraceParseError("expected a vector register, got `%s`" % token, line_number)
    return int(m.group(1))


def _number(token, line_number):
    try:
        return parse_int(token)
    except ConfigurationError:
        raise TraceParseError("expected a number, got `%s`" % token, line_number)


def _sew(token, line_number):
    m = _SEW_RE.match(token)
    if m is None:
        raise TraceParseError("expected an element width like e8, got `%s`" % token, line_number)
    return int(m.group(1))


def _expect(operands, count, mnemonic, line_number):
    if len(operands) not in count:
        raise TraceParseError("%s takes %s operands, got %d"
                              % (mnemonic, " or ".join(str(c) for c in count), len(operands)), line_number)


def parse_line(line, line_number=None):
    """ Parses one instruction line (comments already stripped) """
    parts = line.strip().split(None, 1)
    mnemonic = parts[0].upper()
    operands = [op.strip() for op in parts[1].split(",")] if len(parts) > 1 else []
    if mnemonic not in OPCODES:
        raise TraceParseError("unknown mnemonic `%s`" % parts[0], line_number)

    if mnemonic == VSETVL:
        _expect(operands, (2,), "vsetvl", line_number)
        return vsetvl(_number(operands[0], line_number), _sew(operands[1], line_number))
    if mnemonic in MEMORY_OPCODES:
        _expect(operands, (2,), mnemonic.lower(), line_number)
        return Instruction(mnemonic, vd=_register(operands[0], line_number), addr=_number(operands[1], line_number))
    if mnemonic in BINARY_OPCODES:
        _expect(operands, (3,), mnemonic.lower(), line_number)
        vd = _register(operands[0], line_number)
        vs1 = _register(operands[1], line_number)
        if _REGISTER_RE.match(operands[2]):
            return binary(mnemonic, vd, vs1, vs2=_register(operands[2], line_number))
        return binary(mnemonic, vd, vs1, imm=_number(operands[2], line_number))
    if mnemonic == VMACC:
        _expect(operands, (3, 4), "vmacc", line_number)
        signedness = _number(operands[3], line_number) if len(operands) == 4 else MACC_SIGNED
        return vmacc(*[_register(op, line_number) for op in operands[:3]], signedness=signedness)
    if mnemonic == VMV:
        _expect(operands, (2,), "vmv", line_number)
        return vmv(_register(operands[0], line_number), _register(operands[1], line_number))
    if mnemonic == VPOPCNT:
        _expect(operands, (2,), "vpopcnt", line_number)
        return vpopcnt(_register(operands[0], line_number), _register(operands[1], line_number))
    _expect(operands, (3,), mnemonic.lower(), line_number)
    return Instruction(mnemonic, vd=_register(operands[0], line_number), vs2=_register(operands[1], line_number),
                       imm=_number(operands[2], line_number))


def parse_program(text):
    """
    Parses the text format into a :class:`Program`.

    :raises: TraceParseError citing the offending line
    """
    program = Program()
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("."):
            tokens = line.split()
            if tokens[0].lower() != ".data":
                raise TraceParseError("unknown directive `%s`" % tokens[0], line_number)
            if len(tokens) < 3:
                raise TraceParseError(".data needs an address and an element width", line_number)
            addr = _number(tokens[1], line_number)
            sew = _sew(tokens[2], line_number)
            values = [_number(tok, line_number) for tok in tokens[3:]]
            program.data.append((addr, sew, values))
            continue
        program.instructions.append(parse_line(line, line_number))
    return program


def read_program(path):
    with open(path) as f:
        return parse_program(f.read())


def format_program(program):
    lines = []
    for addr, sew, values in program.data:
        lines.append(".data %#x e%d %s" % (addr, sew, " ".join(str(v) for v in values)))
    lines.extend(format_instruction(instr) for instr in program.instructions)
    return "\n".join(lines) + ("\n" if lines else "")
