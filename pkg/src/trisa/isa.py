"""Instruction encoding and decoding.

The supported set is RV64I, MUL from the M extension, a small Zicsr subset
(``csrrw``/``csrrs``/``csrrc`` plus the ``rdcycle`` alias), ``mret``, and the
TRISA extensions living in the custom-0 opcode (0x0B).

Custom-0 layout (R-type)::

    funct7[31:25] rs2[24:20] rs1[19:15] funct3[14:12] rd[11:7] 0001011

``funct7`` selects the operation. ``funct3`` is zero except for ``cload`` and
``cstore`` where it carries the access width using the RISC-V load/store
``funct3`` codes. Capability register fields hold 0-7 for c0-c7, 8 for DDC
and 9 for PCC.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

MASK64 = (1 << 64) - 1

ABI_NAMES = (
    "zero ra sp gp tp t0 t1 t2 s0 s1 a0 a1 a2 a3 a4 a5 a6 a7 "
    "s2 s3 s4 s5 s6 s7 s8 s9 s10 s11 t3 t4 t5 t6"
).split()

CAP_NAMES = ("c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "ddc", "pcc")
DDC = 8
PCC = 9

CSR_NAMES = {
    0x300: "mstatus",
    0x305: "mtvec",
    0x341: "mepc",
    0x342: "mcause",
    0x343: "mtval",
    0xC00: "cycle",
    0xC02: "instret",
}
CSR_NUMBERS = {name: num for num, name in CSR_NAMES.items()}
CSR_CYCLE = 0xC00

OP_LOAD = 0x03
OP_CUSTOM0 = 0x0B
OP_MISC_MEM = 0x0F
OP_IMM = 0x13
OP_AUIPC = 0x17
OP_IMM_32 = 0x1B
OP_STORE = 0x23
OP_REG = 0x33
OP_LUI = 0x37
OP_REG_32 = 0x3B
OP_BRANCH = 0x63
OP_JALR = 0x67
OP_JAL = 0x6F
OP_SYSTEM = 0x73


class IllegalInstruction(Exception):
    """Raised for encodings outside the supported set."""

    def __init__(self, raw: int, reason: str = "unsupported encoding"):
        super().__init__(f"illegal instruction 0x{raw:08x}: {reason}")
        self.raw = raw


@dataclass(frozen=True, slots=True)
class Instruction:
    mnemonic: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    raw: int | None = field(default=None, compare=False)


# mnemonic -> (format, opcode, funct3, funct7)
# funct7 doubles as funct6 for the 64-bit immediate shifts.
SPEC: dict[str, tuple[str, int, int, int]] = {
    "lui": ("U", OP_LUI, 0, 0),
    "auipc": ("U", OP_AUIPC, 0, 0),
    "jal": ("J", OP_JAL, 0, 0),
    "jalr": ("I", OP_JALR, 0, 0),
    "beq": ("B", OP_BRANCH, 0, 0),
    "bne": ("B", OP_BRANCH, 1, 0),
    "blt": ("B", OP_BRANCH, 4, 0),
    "bge": ("B", OP_BRANCH, 5, 0),
    "bltu": ("B", OP_BRANCH, 6, 0),
    "bgeu": ("B", OP_BRANCH, 7, 0),
    "lb": ("I", OP_LOAD, 0, 0),
    "lh": ("I", OP_LOAD, 1, 0),
    "lw": ("I", OP_LOAD, 2, 0),
    "ld": ("I", OP_LOAD, 3, 0),
    "lbu": ("I", OP_LOAD, 4, 0),
    "lhu": ("I", OP_LOAD, 5, 0),
    "lwu": ("I", OP_LOAD, 6, 0),
    "sb": ("S", OP_STORE, 0, 0),
    "sh": ("S", OP_STORE, 1, 0),
    "sw": ("S", OP_STORE, 2, 0),
    "sd": ("S", OP_STORE, 3, 0),
    "addi": ("I", OP_IMM, 0, 0),
    "slti": ("I", OP_IMM, 2, 0),
    "sltiu": ("I", OP_IMM, 3, 0),
    "xori": ("I", OP_IMM, 4, 0),
    "ori": ("I", OP_IMM, 6, 0),
    "andi": ("I", OP_IMM, 7, 0),
    "slli": ("SH", OP_IMM, 1, 0x00),
    "srli": ("SH", OP_IMM, 5, 0x00),
    "srai": ("SH", OP_IMM, 5, 0x10),
    "add": ("R", OP_REG, 0, 0x00),
    "sub": ("R", OP_REG, 0, 0x20),
    "sll": ("R", OP_REG, 1, 0x00),
    "slt": ("R", OP_REG, 2, 0x00),
    "sltu": ("R", OP_REG, 3, 0x00),
    "xor": ("R", OP_REG, 4, 0x00),
    "srl": ("R", OP_REG, 5, 0x00),
    "sra": ("R", OP_REG, 5, 0x20),
    "or": ("R", OP_REG, 6, 0x00),
    "and": ("R", OP_REG, 7, 0x00),
    "mul": ("R", OP_REG, 0, 0x01),
    "addiw": ("I", OP_IMM_32, 0, 0),
    "slliw": ("SHW", OP_IMM_32, 1, 0x00),
    "srliw": ("SHW", OP_IMM_32, 5, 0x00),
    "sraiw": ("SHW", OP_IMM_32, 5, 0x20),
    "addw": ("R", OP_REG_32, 0, 0x00),
    "subw": ("R", OP_REG_32, 0, 0x20),
    "mulw": ("R", OP_REG_32, 0, 0x01),
    "sllw": ("R", OP_REG_32, 1, 0x00),
    "srlw": ("R", OP_REG_32, 5, 0x00),
    "sraw": ("R", OP_REG_32, 5, 0x20),
    "fence": ("FENCE", OP_MISC_MEM, 0, 0),
    "ecall": ("SYS", OP_SYSTEM, 0, 0x00000073),
    "ebreak": ("SYS", OP_SYSTEM, 0, 0x00100073),
    "mret": ("SYS", OP_SYSTEM, 0, 0x30200073),
    "csrrw": ("CSR", OP_SYSTEM, 1, 0),
    "csrrs": ("CSR", OP_SYSTEM, 2, 0),
    "csrrc": ("CSR", OP_SYSTEM, 3, 0),
    "rdcycle": ("RDCYCLE", OP_SYSTEM, 2, 0),
    # TRISA custom-0
    "cflush": ("X_FLUSH", OP_CUSTOM0, 0, 0x00),
    "fence.spec": ("X_NONE", OP_CUSTOM0, 0, 0x01),
    "csetbounds": ("X_CCR", OP_CUSTOM0, 0, 0x02),
    "candperm": ("X_CCR", OP_CUSTOM0, 0, 0x03),
    "cseal": ("X_CCC", OP_CUSTOM0, 0, 0x04),
    "cunseal": ("X_CCC", OP_CUSTOM0, 0, 0x05),
    "cmove": ("X_CC", OP_CUSTOM0, 0, 0x08),
    "cgettag": ("X_RC", OP_CUSTOM0, 0, 0x09),
    "cincoffset": ("X_CCR", OP_CUSTOM0, 0, 0x0A),
    "clc": ("X_CLC", OP_CUSTOM0, 0, 0x0B),
    "csc": ("X_CSC", OP_CUSTOM0, 0, 0x0C),
}

CLOAD_F7 = 0x06
CSTORE_F7 = 0x07
_LOAD_SUFFIX = {0: ".b", 1: ".h", 2: ".w", 3: "", 4: ".bu", 5: ".hu", 6: ".wu"}
for _f3, _sfx in _LOAD_SUFFIX.items():
    SPEC["cload" + _sfx] = ("X_LOAD", OP_CUSTOM0, _f3, CLOAD_F7)
    if _f3 < 4:
        SPEC["cstore" + _sfx] = ("X_STORE", OP_CUSTOM0, _f3, CSTORE_F7)

# width in bytes and signedness for every load-like mnemonic
LOAD_WIDTH = {0: (1, True), 1: (2, True), 2: (4, True), 3: (8, True),
              4: (1, False), 5: (2, False), 6: (4, False)}

BRANCHES = frozenset(m for m, s in SPEC.items() if s[0] == "B")
LOADS = frozenset(m for m, s in SPEC.items() if s[1] == OP_LOAD)
STORES = frozenset(m for m, s in SPEC.items() if s[1] == OP_STORE)
MNEMONICS = frozenset(SPEC)

_R_LOOKUP = {(s[1], s[2], s[3]): m for m, s in SPEC.items() if s[0] == "R"}
_I_LOOKUP = {(s[1], s[2]): m for m, s in SPEC.items() if s[0] in ("I", "S", "B")}
_SH_LOOKUP = {(s[1], s[2], s[3]): m for m, s in SPEC.items() if s[0] in ("SH", "SHW")}
_SYS_LOOKUP = {s[3]: m for m, s in SPEC.items() if s[0] == "SYS"}
_CSR_LOOKUP = {s[2]: m for m, s in SPEC.items() if s[0] == "CSR"}
_X_LOOKUP = {(s[2], s[3]): m for m, s in SPEC.items() if s[1] == OP_CUSTOM0}


def sext(value: int, bits: int) -> int:
    """Interpret the low ``bits`` of ``value`` as two's complement."""
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def _check(cond: bool, what: str) -> None:
    if not cond:
        raise ValueError(what)


def _check_cap(index: int, what: str) -> None:
    _check(0 <= index < len(CAP_NAMES), f"{what} capability register out of range: {index}")


def encode(ins: Instruction) -> int:
    """Encode ``ins`` into its 32-bit word.

    Raises ValueError when a field does not fit its encoding.
    """
    try:
        fmt, opcode, f3, f7 = SPEC[ins.mnemonic]
    except KeyError:
        raise ValueError(f"unknown mnemonic {ins.mnemonic!r}") from None
    rd, rs1, rs2, imm = ins.rd, ins.rs1, ins.rs2, ins.imm
    for reg, name in ((rd, "rd"), (rs1, "rs1"), (rs2, "rs2")):
        _check(0 <= reg < 32, f"{name} out of range: {reg}")

    if fmt == "R":
        _check(imm == 0, "R-type takes no immediate")
        return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == "I":
        _check(rs2 == 0, "I-type has no rs2")
        _check(-2048 <= imm < 2048, f"immediate {imm} outside 12-bit signed range")
        return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == "SH":
        _check(rs2 == 0, "shift has no rs2")
        _check(0 <= imm < 64, f"shift amount {imm} outside 0..63")
        return (f7 << 26) | (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == "SHW":
        _check(rs2 == 0, "shift has no rs2")
        _check(0 <= imm < 32, f"shift amount {imm} outside 0..31")
        return (f7 << 25) | (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == "S":
        _check(rd == 0, "store has no rd")
        _check(-2048 <= imm < 2048, f"offset {imm} outside 12-bit signed range")
        imm &= 0xFFF
        return ((imm >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((imm & 0x1F) << 7) | opcode
    if fmt == "B":
        _check(rd == 0, "branch has no rd")
        _check(imm % 2 == 0, f"branch offset {imm} is odd")
        _check(-4096 <= imm < 4096, f"branch offset {imm} outside 13-bit signed range")
        imm &= 0x1FFF
        return (((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15) \
            | (f3 << 12) | (((imm >> 1) & 0xF) << 8) | (((imm >> 11) & 1) << 7) | opcode
    if fmt == "U":
        _check(rs1 == 0 and rs2 == 0, "U-type has only rd")
        _check(imm % 4096 == 0 and -(1 << 31) <= imm < (1 << 31),
               f"upper immediate {imm} is not a sign-extended 20-bit field")
        return (imm & 0xFFFFF000) | (rd << 7) | opcode
    if fmt == "J":
        _check(rs1 == 0 and rs2 == 0, "jal has only rd")
        _check(imm % 2 == 0, f"jump offset {imm} is odd")
        _check(-(1 << 20) <= imm < (1 << 20), f"jump offset {imm} outside 21-bit signed range")
        imm &= 0x1FFFFF
        return (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3FF) << 21) | (((imm >> 11) & 1) << 20) \
            | (((imm >> 12) & 0xFF) << 12) | (rd << 7) | opcode
    if fmt == "FENCE":
        _check(rd == 0 and rs1 == 0 and rs2 == 0, "fence takes no registers")
        _check(0 <= imm < 256, f"fence pred/succ {imm} outside 0..255")
        return (imm << 20) | opcode
    if fmt == "SYS":
        _check(rd == 0 and rs1 == 0 and rs2 == 0 and imm == 0, f"{ins.mnemonic} takes no operands")
        return f7
    if fmt == "CSR":
        _check(rs2 == 0, "csr instruction has no rs2")
        _check(0 <= imm < 4096, f"csr number {imm} outside 0..4095")
        return (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == "RDCYCLE":
        _check(rs1 == 0 and rs2 == 0 and imm == 0, "rdcycle takes only rd")
        return (CSR_CYCLE << 20) | (f3 << 12) | (rd << 7) | opcode

    # custom-0
    _check(imm == 0, f"{ins.mnemonic} takes no immediate")
    if fmt == "X_FLUSH":
        _check(rd == 0 and rs2 == 0, "cflush takes only rs1")
    elif fmt == "X_NONE":
        _check(rd == 0 and rs1 == 0 and rs2 == 0, "fence.spec takes no operands")
    elif fmt == "X_CCR":
        _check_cap(rd, "destination")
        _check_cap(rs1, "source")
    elif fmt == "X_CCC":
        _check_cap(rd, "destination")
        _check_cap(rs1, "source")
        _check_cap(rs2, "authorising")
    elif fmt == "X_CC":
        _check(rs2 == 0, "cmove has two operands")
        _check_cap(rd, "destination")
        _check_cap(rs1, "source")
    elif fmt in ("X_RC", "X_LOAD"):
        _check(rs2 == 0, f"{ins.mnemonic} has two operands")
        _check_cap(rs1, "source")
    elif fmt == "X_STORE":
        _check(rd == 0, "cstore has no rd")
        _check_cap(rs1, "address")
    elif fmt == "X_CLC":
        _check(rs2 == 0, "clc has two operands")
        _check_cap(rd, "destination")
        _check_cap(rs1, "address")
    elif fmt == "X_CSC":
        _check(rd == 0, "csc has no rd")
        _check_cap(rs1, "address")
        _check_cap(rs2, "source")
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode


def _decode_fields(raw: int) -> Instruction:
    opcode = raw & 0x7F
    rd = (raw >> 7) & 0x1F
    f3 = (raw >> 12) & 0x7
    rs1 = (raw >> 15) & 0x1F
    rs2 = (raw >> 20) & 0x1F
    f7 = raw >> 25

    if opcode in (OP_REG, OP_REG_32):
        m = _R_LOOKUP.get((opcode, f3, f7))
        if m:
            return Instruction(m, rd, rs1, rs2, 0, raw)
    elif opcode in (OP_IMM, OP_IMM_32) and f3 in (1, 5):
        if opcode == OP_IMM:
            m = _SH_LOOKUP.get((opcode, f3, raw >> 26))
            shamt = (raw >> 20) & 0x3F
        else:
            m = _SH_LOOKUP.get((opcode, f3, f7))
            shamt = rs2
        if m:
            return Instruction(m, rd, rs1, 0, shamt, raw)
    elif opcode in (OP_IMM, OP_IMM_32, OP_LOAD, OP_JALR):
        m = _I_LOOKUP.get((opcode, f3))
        if m:
            return Instruction(m, rd, rs1, 0, sext(raw >> 20, 12), raw)
    elif opcode == OP_STORE:
        m = _I_LOOKUP.get((opcode, f3))
        if m:
            return Instruction(m, 0, rs1, rs2, sext((f7 << 5) | rd, 12), raw)
    elif opcode == OP_BRANCH:
        m = _I_LOOKUP.get((opcode, f3))
        if m:
            imm = (((raw >> 31) & 1) << 12) | (((raw >> 7) & 1) << 11) \
                | (((raw >> 25) & 0x3F) << 5) | (((raw >> 8) & 0xF) << 1)
            return Instruction(m, 0, rs1, rs2, sext(imm, 13), raw)
    elif opcode in (OP_LUI, OP_AUIPC):
        return Instruction("lui" if opcode == OP_LUI else "auipc", rd, 0, 0, sext(raw & 0xFFFFF000, 32), raw)
    elif opcode == OP_JAL:
        imm = (((raw >> 31) & 1) << 20) | (((raw >> 12) & 0xFF) << 12) \
            | (((raw >> 20) & 1) << 11) | (((raw >> 21) & 0x3FF) << 1)
        return Instruction("jal", rd, 0, 0, sext(imm, 21), raw)
    elif opcode == OP_MISC_MEM and f3 == 0:
        return Instruction("fence", 0, 0, 0, (raw >> 20) & 0xFF, raw)
    elif opcode == OP_SYSTEM:
        if f3 == 0:
            m = _SYS_LOOKUP.get(raw)
            if m:
                return Instruction(m, raw=raw)
        else:
            csr = raw >> 20
            if f3 == 2 and csr == CSR_CYCLE and rs1 == 0:
                return Instruction("rdcycle", rd, raw=raw)
            m = _CSR_LOOKUP.get(f3)
            if m:
                return Instruction(m, rd, rs1, 0, csr, raw)
    elif opcode == OP_CUSTOM0:
        m = _X_LOOKUP.get((f3, f7))
        if m:
            return Instruction(m, rd, rs1, rs2, 0, raw)
    raise IllegalInstruction(raw)


@lru_cache(maxsize=65536)
def decode(raw: int) -> Instruction:
    """Decode a 32-bit instruction word.

    Only canonical encodings are accepted: a word decodes successfully iff
    re-encoding the result reproduces it bit for bit. Anything else raises
    :class:`IllegalInstruction`.
    """
    if not 0 <= raw <= 0xFFFFFFFF:
        raise IllegalInstruction(raw & 0xFFFFFFFF, "not a 32-bit word")
    ins = _decode_fields(raw)
    try:
        canonical = encode(ins)
    except ValueError as exc:
        raise IllegalInstruction(raw, str(exc)) from None
    if canonical != raw:
        raise IllegalInstruction(raw, "non-canonical encoding")
    return ins


def _fence_set(bits: int) -> str:
    s = "".join(c for c, b in zip("iorw", (8, 4, 2, 1)) if bits & b)
    return s or "0"


def _csr_name(num: int) -> str:
    return CSR_NAMES.get(num, f"0x{num:03x}")


def format_instruction(ins: Instruction) -> str:
    """Render ``ins`` in assembler syntax with x-register names.

    Branch and jump targets are printed as signed pc-relative offsets so the
    text re-assembles to the same word anywhere.
    """
    m = ins.mnemonic
    fmt = SPEC[m][0]
    x = lambda r: f"x{r}"  # noqa: E731
    c = lambda r: CAP_NAMES[r]  # noqa: E731
    if fmt == "R":
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {x(ins.rs2)}"
    if fmt == "I":
        if m in LOADS or m == "jalr":
            return f"{m} {x(ins.rd)}, {ins.imm}({x(ins.rs1)})"
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {ins.imm}"
    if fmt in ("SH", "SHW"):
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {ins.imm}"
    if fmt == "S":
        return f"{m} {x(ins.rs2)}, {ins.imm}({x(ins.rs1)})"
    if fmt == "B":
        return f"{m} {x(ins.rs1)}, {x(ins.rs2)}, {ins.imm}"
    if fmt == "U":
        return f"{m} {x(ins.rd)}, 0x{(ins.imm >> 12) & 0xFFFFF:x}"
    if fmt == "J":
        return f"{m} {x(ins.rd)}, {ins.imm}"
    if fmt == "FENCE":
        return f"fence {_fence_set(ins.imm >> 4)}, {_fence_set(ins.imm & 0xF)}"
    if fmt == "SYS" or fmt == "X_NONE":
        return m
    if fmt == "CSR":
        return f"{m} {x(ins.rd)}, {_csr_name(ins.imm)}, {x(ins.rs1)}"
    if fmt == "RDCYCLE":
        return f"rdcycle {x(ins.rd)}"
    if fmt == "X_FLUSH":
        return f"cflush {x(ins.rs1)}"
    if fmt == "X_CCR":
        return f"{m} {c(ins.rd)}, {c(ins.rs1)}, {x(ins.rs2)}"
    if fmt == "X_CCC":
        return f"{m} {c(ins.rd)}, {c(ins.rs1)}, {c(ins.rs2)}"
    if fmt == "X_CC":
        return f"{m} {c(ins.rd)}, {c(ins.rs1)}"
    if fmt == "X_RC":
        return f"{m} {x(ins.rd)}, {c(ins.rs1)}"
    if fmt == "X_LOAD":
        return f"{m} {x(ins.rd)}, ({c(ins.rs1)})"
    if fmt == "X_STORE":
        return f"{m} {x(ins.rs2)}, ({c(ins.rs1)})"
    if fmt == "X_CLC":
        return f"{m} {c(ins.rd)}, ({c(ins.rs1)})"
    if fmt == "X_CSC":
        return f"{m} {c(ins.rs2)}, ({c(ins.rs1)})"
    raise AssertionError(fmt)


def disassemble_word(raw: int) -> str:
    """One line of assembly for ``raw``, or a ``.word`` directive if it is not decodable."""
    try:
        return format_instruction(decode(raw))
    except IllegalInstruction:
        return f".word 0x{raw:08x}"
