"""Two-pass assembler and disassembler for ``.trs`` programs.

Pass one splits lines, places labels and sizes every statement (pseudo
instructions have a size that depends only on their operands). Pass two
encodes, resolving labels against the finished symbol table.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .config import ZonesConfig
from .image import ProgramImage, Section
from .isa import (ABI_NAMES, CAP_NAMES, CSR_NUMBERS, LOADS, SPEC, IllegalInstruction, Instruction, decode,
                  encode, format_instruction, sext)

ASM_ZONES = ("kernel", "green", "dmz")


class AsmError(Exception):
    KINDS = ("UnknownMnemonic", "DuplicateLabel", "UndefinedLabel", "ImmediateOutOfRange",
             "BadOperandCount", "BadOperand", "BadDirective", "Overlap")

    def __init__(self, kind: str, line: int, message: str):
        assert kind in self.KINDS, kind
        super().__init__(f"line {line}: {kind}: {message}")
        self.kind = kind
        self.line = line
        self.message = message


class _OpError(Exception):
    """Operand problem found without a line number; re-raised as AsmError."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


_REGS = {f"x{i}": i for i in range(32)}
_REGS.update({name: i for i, name in enumerate(ABI_NAMES)})
_REGS["fp"] = 8
_CAPS = {name: i for i, name in enumerate(CAP_NAMES)}

_LABEL = re.compile(r"^\s*([A-Za-z_.$][\w.$]*)\s*:")
_SYMBOL = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_MEM = re.compile(r"^(.*)\(\s*([\w.$]+)\s*\)$")
_CHAR_ESC = {"n": "\n", "t": "\t", "r": "\r", "0": "\0", "\\": "\\", "'": "'", '"': '"'}


def parse_register(tok: str) -> int:
    try:
        return _REGS[tok.strip().lower()]
    except KeyError:
        raise _OpError("BadOperand", f"not an integer register: {tok!r}") from None


def parse_cap_register(tok: str) -> int:
    try:
        return _CAPS[tok.strip().lower()]
    except KeyError:
        raise _OpError("BadOperand", f"not a capability register: {tok!r}") from None


def _strip_comment(line: str) -> str:
    quote = None
    i = 0
    while i < len(line):
        ch = line[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            return line[:i]
        i += 1
    return line


def _split_operands(text: str) -> list[str]:
    out, cur, quote, depth = [], [], None, 0
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            cur.append(ch)
            if ch == "\\" and i + 1 < len(text):
                i += 1
                cur.append(text[i])
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            cur.append(ch)
        elif ch == "(":
            depth += 1
            cur.append(ch)
        elif ch == ")":
            depth -= 1
            cur.append(ch)
        elif ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
        i += 1
    tail = "".join(cur).strip()
    if tail or out:
        out.append(tail)
    return out


def _parse_number(tok: str) -> int | None:
    t = tok.strip()
    if len(t) >= 3 and t[0] == "'" and t[-1] == "'":
        body = t[1:-1]
        if len(body) == 1:
            return ord(body)
        if len(body) == 2 and body[0] == "\\" and body[1] in _CHAR_ESC:
            return ord(_CHAR_ESC[body[1]])
        raise _OpError("BadOperand", f"bad character literal {tok}")
    try:
        return int(t, 0)
    except ValueError:
        return None


def _parse_string(tok: str) -> bytes:
    t = tok.strip()
    if len(t) < 2 or t[0] != '"' or t[-1] != '"':
        raise _OpError("BadOperand", f"expected a quoted string, got {tok!r}")
    out = bytearray()
    body = t[1:-1]
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt == "x":
                digits = body[i + 2:i + 4]
                if len(digits) != 2 or any(d not in "0123456789abcdefABCDEF" for d in digits):
                    raise _OpError("BadOperand", f"bad \\x escape in {tok}")
                out.append(int(digits, 16))
                i += 4
                continue
            if nxt not in _CHAR_ESC:
                raise _OpError("BadOperand", f"unknown escape \\{nxt}")
            out += _CHAR_ESC[nxt].encode()
            i += 2
            continue
        out += ch.encode("utf-8")
        i += 1
    return bytes(out)


def _fits(value: int, bits: int) -> bool:
    return -(1 << (bits - 1)) <= value < (1 << (bits - 1))


def _li_base(value: int) -> list[tuple[str, int]]:
    value = sext(value, 64)
    if _fits(value, 32):
        hi20 = ((value + 0x800) >> 12) & 0xFFFFF
        lo12 = sext(value, 12)
        seq = []
        if hi20:
            seq.append(("lui", sext(hi20 << 12, 32)))
        if lo12 or not hi20:
            seq.append(("addiw" if hi20 else "addi", lo12))
        return seq
    lo12 = sext(value, 12)
    rest = sext(value - lo12, 64)
    shift = (rest & -rest).bit_length() - 1
    rest >>= shift
    if shift > 12 and not _fits(rest, 12) and _fits(sext(rest << 12, 64), 32):
        shift -= 12
        rest = sext(rest << 12, 64)
    seq = _li_base(rest)
    seq.append(("slli", shift))
    if lo12:
        seq.append(("addi", lo12))
    return seq


def li_sequence(value: int) -> list[tuple[str, int]]:
    """Instruction sequence materialising a 64-bit constant.

    Mirrors LLVM's RISC-V constant materialisation: ``addi`` for 12-bit
    values, ``lui`` (+ ``addiw``) for 32-bit values, a recursive
    shift-and-add split above that, and for positive values a shorter
    variant that builds the constant shifted left and ends with ``srli``.
    """
    value = sext(value, 64)
    best = _li_base(value)
    if value > 0 and len(best) > 2:
        lz = 64 - value.bit_length()
        ones = (value << lz | ((1 << lz) - 1)) & ((1 << 64) - 1)
        for shifted in (ones, ones & ~((1 << lz) - 1)):
            seq = _li_base(shifted) + [("srli", lz)]
            if len(seq) < len(best):
                best = seq
                if len(best) <= 2:
                    break
    return best


@dataclass
class _Stmt:
    line: int
    sec: Section
    addr: int
    mnemonic: str
    ops: list[str]


@dataclass
class _Data:
    line: int
    sec: Section
    addr: int
    width: int
    values: list[str]


_BRANCH_ZERO = {"beqz": ("beq", False), "bnez": ("bne", False), "bltz": ("blt", False),
                "bgez": ("bge", False), "blez": ("bge", True), "bgtz": ("blt", True)}
_BRANCH_SWAP = {"bgt": "blt", "ble": "bge", "bgtu": "bltu", "bleu": "bgeu"}
_CSR_PSEUDO = {"csrw": "csrrw", "csrs": "csrrs", "csrc": "csrrc"}
PSEUDOS = frozenset({"nop", "li", "la", "mv", "not", "neg", "negw", "sext.w", "seqz", "snez", "sltz", "sgtz",
                     "j", "jr", "ret", "call", "csrr", "csrw", "csrs", "csrc"}
                    | set(_BRANCH_ZERO) | set(_BRANCH_SWAP))

_NOP_BYTES = (0x00000013).to_bytes(4, "little")
_DATA_WIDTH = {".byte": 1, ".half": 2, ".short": 2, ".word": 4, ".long": 4, ".dword": 8, ".quad": 8}
_IGNORED = {".globl", ".global", ".text", ".option", ".type", ".size", ".local"}


class Assembler:
    def __init__(self, zones: ZonesConfig | None = None):
        self.zones = zones or ZonesConfig()
        self.zone_ranges = {z: getattr(self.zones, z) for z in ASM_ZONES}

    # -- pass one -----------------------------------------------------------

    def _zone_for(self, addr: int) -> str | None:
        for z, r in self.zone_ranges.items():
            if addr in r:
                return z
        return None

    def _size_of(self, m: str, ops: list[str], consts: dict[str, int]) -> int:
        if m == "li":
            if len(ops) != 2:
                return 4
            value = self._const(ops[1], consts)
            return 8 if value is None else 4 * len(li_sequence(value))
        if m == "la":
            return 8
        return 4

    def _const(self, tok: str, consts: dict[str, int]) -> int | None:
        """Value of a constant expression known in pass one (numbers and .equ names)."""
        n = _parse_number(tok)
        if n is not None:
            return n
        m = re.match(r"^([A-Za-z_.$][\w.$]*)\s*([+-])\s*(.+)$", tok.strip())
        if tok.strip() in consts:
            return consts[tok.strip()]
        if m and m.group(1) in consts:
            off = _parse_number(m.group(3))
            if off is not None:
                return consts[m.group(1)] + (off if m.group(2) == "+" else -off)
        return None

    def assemble(self, text: str) -> ProgramImage:
        sections: list[Section] = []
        symbols: dict[str, int] = {}
        consts: dict[str, int] = {}
        stmts: list[_Stmt | _Data] = []
        cur: Section | None = None
        label_lines: dict[str, int] = {}

        def ensure_section(lineno: int) -> Section:
            nonlocal cur
            if cur is None:
                cur = Section("green", self.zones.green.start)
                sections.append(cur)
            return cur

        def new_section(zone: str, start: int) -> None:
            nonlocal cur
            cur = Section(zone, start)
            sections.append(cur)

        for lineno, raw in enumerate(text.splitlines(), 1):
            line = _strip_comment(raw).strip()
            while True:
                m = _LABEL.match(line)
                if not m:
                    break
                name = m.group(1)
                if name.lower() in _REGS or name.lower() in _CAPS:
                    raise AsmError("BadOperand", lineno, f"label {name!r} is spelled like a register")
                if name in symbols or name in consts:
                    raise AsmError("DuplicateLabel", lineno,
                                   f"{name!r} already defined on line {label_lines.get(name, '?')}")
                sec = ensure_section(lineno)
                symbols[name] = sec.end
                label_lines[name] = lineno
                line = line[m.end():].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            head = parts[0].lower()
            rest = parts[1] if len(parts) > 1 else ""
            try:
                ops = _split_operands(rest)
            except _OpError as e:
                raise AsmError(e.kind, lineno, str(e)) from None

            if head.startswith("."):
                try:
                    self._directive(head, ops, lineno, ensure_section, new_section, sections, stmts,
                                    consts, symbols, label_lines)
                except _OpError as e:
                    raise AsmError(e.kind, lineno, str(e)) from None
                cur = sections[-1] if sections else None
                continue

            if head not in SPEC and head not in PSEUDOS:
                raise AsmError("UnknownMnemonic", lineno, f"unknown mnemonic {head!r}")
            sec = ensure_section(lineno)
            try:
                size = self._size_of(head, ops, consts)
            except _OpError as e:
                raise AsmError(e.kind, lineno, str(e)) from None
            stmts.append(_Stmt(lineno, sec, sec.end, head, ops))
            sec.data += bytes(size)

        # overlap check
        spans = sorted((s.start, s.end, s) for s in sections if s.data)
        for (a0, a1, _), (b0, b1, sb) in zip(spans, spans[1:]):
            if b0 < a1:
                line = next((st.line for st in stmts if b0 <= st.addr < b1), 0)
                raise AsmError("Overlap", line, f"section at 0x{b0:x} overlaps [0x{a0:x}, 0x{a1:x})")

        # pass two
        all_syms = dict(consts)
        all_syms.update(symbols)
        for st in stmts:
            sec = st.sec
            off = st.addr - sec.start
            try:
                if isinstance(st, _Data):
                    blob = self._encode_data(st, all_syms)
                else:
                    words = [encode(i) for i in self._expand(st, all_syms, consts)]
                    blob = b"".join(w.to_bytes(4, "little") for w in words)
            except _OpError as e:
                raise AsmError(e.kind, st.line, str(e)) from None
            except ValueError as e:
                raise AsmError("ImmediateOutOfRange", st.line, str(e)) from None
            sec.data[off:off + len(blob)] = blob

        kept = [s for s in sections if s.data]
        if "_start" in symbols:
            entry = symbols["_start"]
        elif kept:
            entry = kept[0].start
        else:
            entry = self.zones.green.start
        return ProgramImage(kept, symbols, entry)

    def _directive(self, head, ops, lineno, ensure_section, new_section, sections, stmts, consts,
                   symbols, label_lines):
        if head in _IGNORED:
            return
        if head == ".zone":
            if len(ops) != 1 or ops[0].lower() not in ASM_ZONES:
                raise _OpError("BadDirective", f".zone expects one of {', '.join(ASM_ZONES)}")
            zone = ops[0].lower()
            r = self.zone_ranges[zone]
            start = max([s.end for s in sections if s.zone == zone] + [r.start])
            new_section(zone, start)
            return
        if head == ".org":
            if len(ops) != 1 or _parse_number(ops[0]) is None:
                raise _OpError("BadDirective", ".org expects one numeric address")
            addr = _parse_number(ops[0])
            zone = self._zone_for(addr)
            if zone is None:
                raise _OpError("BadDirective", f".org 0x{addr:x} is outside the kernel, green and dmz zones")
            new_section(zone, addr)
            return
        if head in (".equ", ".set"):
            if len(ops) != 2 or not _SYMBOL.match(ops[0]):
                raise _OpError("BadDirective", f"{head} expects a name and a value")
            value = self._const(ops[1], consts)
            if value is None:
                raise _OpError("BadDirective", f"{head} value must be a constant")
            if ops[0].lower() in _REGS or ops[0].lower() in _CAPS:
                raise _OpError("BadOperand", f"constant {ops[0]!r} is spelled like a register")
            if ops[0] in symbols or ops[0] in consts:
                raise _OpError("DuplicateLabel", f"{ops[0]!r} already defined")
            consts[ops[0]] = value
            return
        sec = ensure_section(lineno)
        if head in _DATA_WIDTH:
            if not ops or any(not o for o in ops):
                raise _OpError("BadOperandCount", f"{head} needs at least one value")
            width = _DATA_WIDTH[head]
            stmts.append(_Data(lineno, sec, sec.end, width, ops))
            sec.data += bytes(width * len(ops))
            return
        if head in (".ascii", ".asciz", ".string"):
            if not ops:
                raise _OpError("BadOperandCount", f"{head} needs a string")
            for o in ops:
                sec.data += _parse_string(o) + (b"\0" if head != ".ascii" else b"")
            return
        if head in (".space", ".zero", ".skip"):
            if len(ops) not in (1, 2):
                raise _OpError("BadOperandCount", f"{head} expects a size and an optional fill byte")
            n = _parse_number(ops[0])
            fill = _parse_number(ops[1]) if len(ops) == 2 else 0
            if n is None or n < 0 or fill is None or not 0 <= fill < 256:
                raise _OpError("BadDirective", f"bad {head} operands")
            sec.data += bytes([fill]) * n
            return
        if head in (".align", ".p2align", ".balign"):
            n = _parse_number(ops[0]) if len(ops) == 1 else None
            if n is None or n < 0 or (head == ".balign" and n & (n - 1)):
                raise _OpError("BadDirective", f"bad {head} operand")
            align = n if head == ".balign" else 1 << n
            if align:
                pad = -sec.end % align
                # zero bytes up to a word boundary, then nops, the usual code-section fill
                sec.data += bytes(pad % 4) + _NOP_BYTES * (pad // 4)
            return
        raise _OpError("BadDirective", f"unknown directive {head}")

    # -- pass two -----------------------------------------------------------

    def _value(self, tok: str, syms: dict[str, int]) -> int:
        tok = tok.strip()
        n = _parse_number(tok)
        if n is not None:
            return n
        m = re.match(r"^([A-Za-z_.$][\w.$]*)\s*(?:([+-])\s*(.+))?$", tok)
        if not m:
            raise _OpError("BadOperand", f"cannot parse operand {tok!r}")
        name = m.group(1)
        if name in _REGS or name in _CAPS:
            raise _OpError("BadOperand", f"expected an immediate, got register {name!r}")
        if name not in syms:
            raise _OpError("UndefinedLabel", f"undefined label {name!r}")
        value = syms[name]
        if m.group(2):
            off = _parse_number(m.group(3))
            if off is None:
                raise _OpError("BadOperand", f"offset must be a number in {tok!r}")
            value += off if m.group(2) == "+" else -off
        return value

    def _encode_data(self, st: _Data, syms) -> bytes:
        out = bytearray()
        bits = 8 * st.width
        for v in st.values:
            n = self._value(v, syms)
            if not -(1 << (bits - 1)) <= n < (1 << bits):
                raise _OpError("ImmediateOutOfRange", f"{v} does not fit {st.width} byte(s)")
            out += (n & ((1 << bits) - 1)).to_bytes(st.width, "little")
        return bytes(out)

    def _target(self, tok: str, pc: int, syms) -> int:
        """Branch/jump operand: a label (absolute) or a number (pc-relative offset)."""
        if _parse_number(tok) is not None:
            return _parse_number(tok)
        return self._value(tok, syms) - pc

    def _mem(self, tok: str, syms) -> tuple[int, int]:
        m = _MEM.match(tok.strip())
        if not m:
            raise _OpError("BadOperand", f"expected offset(register), got {tok!r}")
        off = m.group(1).strip()
        return parse_register(m.group(2)), (self._value(off, syms) if off else 0)

    def _cap_mem(self, tok: str) -> int:
        m = _MEM.match(tok.strip())
        if not m or m.group(1).strip():
            raise _OpError("BadOperand", f"expected (capability register), got {tok!r}")
        return parse_cap_register(m.group(2))

    def _csr(self, tok: str, syms) -> int:
        name = tok.strip().lower()
        if name in CSR_NUMBERS:
            return CSR_NUMBERS[name]
        n = _parse_number(tok)
        if n is None:
            raise _OpError("BadOperand", f"unknown CSR {tok!r}")
        return n

    def _expand(self, st: _Stmt, syms, consts) -> list[Instruction]:
        m, ops, pc = st.mnemonic, st.ops, st.addr
        r, c = parse_register, parse_cap_register
        I = Instruction  # noqa: E741

        def need(n: int) -> None:
            if len(ops) != n:
                raise _OpError("BadOperandCount", f"{m} takes {n} operand(s), got {len(ops)}")

        # pseudo instructions
        if m == "nop":
            need(0)
            return [I("addi", 0, 0, 0, 0)]
        if m == "li":
            need(2)
            rd = r(ops[0])
            value = self._const(ops[1], consts)
            if value is None:
                return self._la(rd, self._value(ops[1], syms), st.addr)
            if not -(1 << 63) <= value < (1 << 64):
                raise _OpError("ImmediateOutOfRange", f"li value {value} does not fit 64 bits")
            out = []
            src = 0
            for op, imm in li_sequence(value):
                if op == "lui":
                    out.append(I("lui", rd, 0, 0, imm))
                else:
                    out.append(I(op, rd, src, 0, imm))
                src = rd
            return out
        if m == "la":
            need(2)
            return self._la(r(ops[0]), self._value(ops[1], syms), st.addr)
        if m in ("mv", "not", "neg", "negw", "sext.w", "seqz", "snez", "sltz", "sgtz"):
            need(2)
            rd, rs = r(ops[0]), r(ops[1])
            return [{
                "mv": I("addi", rd, rs, 0, 0), "not": I("xori", rd, rs, 0, -1),
                "neg": I("sub", rd, 0, rs, 0), "negw": I("subw", rd, 0, rs, 0),
                "sext.w": I("addiw", rd, rs, 0, 0), "seqz": I("sltiu", rd, rs, 0, 1),
                "snez": I("sltu", rd, 0, rs, 0), "sltz": I("slt", rd, rs, 0, 0),
                "sgtz": I("slt", rd, 0, rs, 0),
            }[m]]
        if m == "j":
            need(1)
            return [I("jal", 0, 0, 0, self._target(ops[0], pc, syms))]
        if m == "call":
            need(1)
            return [I("jal", 1, 0, 0, self._target(ops[0], pc, syms))]
        if m == "jr":
            need(1)
            return [I("jalr", 0, r(ops[0]), 0, 0)]
        if m == "ret":
            need(0)
            return [I("jalr", 0, 1, 0, 0)]
        if m in _BRANCH_ZERO:
            need(2)
            base, swap = _BRANCH_ZERO[m]
            rs = r(ops[0])
            a, b = (0, rs) if swap else (rs, 0)
            return [I(base, 0, a, b, self._target(ops[1], pc, syms))]
        if m in _BRANCH_SWAP:
            need(3)
            return [I(_BRANCH_SWAP[m], 0, r(ops[1]), r(ops[0]), self._target(ops[2], pc, syms))]
        if m == "csrr":
            need(2)
            return [self._csr_ins("csrrs", r(ops[0]), self._csr(ops[1], syms), 0)]
        if m in _CSR_PSEUDO:
            need(2)
            return [self._csr_ins(_CSR_PSEUDO[m], 0, self._csr(ops[0], syms), r(ops[1]))]

        fmt = SPEC[m][0]
        if m == "jal":
            if len(ops) == 1:
                return [I("jal", 1, 0, 0, self._target(ops[0], pc, syms))]
            need(2)
            return [I("jal", r(ops[0]), 0, 0, self._target(ops[1], pc, syms))]
        if m == "jalr":
            if len(ops) == 1:
                if _MEM.match(ops[0]):
                    rs, off = self._mem(ops[0], syms)
                    return [I("jalr", 1, rs, 0, off)]
                return [I("jalr", 1, r(ops[0]), 0, 0)]
            if len(ops) == 2:
                if _MEM.match(ops[1]):
                    rs, off = self._mem(ops[1], syms)
                    return [I("jalr", r(ops[0]), rs, 0, off)]
                return [I("jalr", r(ops[0]), r(ops[1]), 0, 0)]
            need(3)
            return [I("jalr", r(ops[0]), r(ops[1]), 0, self._value(ops[2], syms))]
        if fmt == "R":
            need(3)
            return [I(m, r(ops[0]), r(ops[1]), r(ops[2]), 0)]
        if fmt == "I" and m in LOADS:
            need(2)
            rs, off = self._mem(ops[1], syms)
            return [I(m, r(ops[0]), rs, 0, off)]
        if fmt in ("I", "SH", "SHW"):
            need(3)
            return [I(m, r(ops[0]), r(ops[1]), 0, self._value(ops[2], syms))]
        if fmt == "S":
            need(2)
            rs, off = self._mem(ops[1], syms)
            return [I(m, 0, rs, r(ops[0]), off)]
        if fmt == "B":
            need(3)
            return [I(m, 0, r(ops[0]), r(ops[1]), self._target(ops[2], pc, syms))]
        if fmt == "U":
            need(2)
            field = self._value(ops[1], syms)
            if not 0 <= field <= 0xFFFFF:
                raise _OpError("ImmediateOutOfRange", f"{m} immediate {field} outside 0..0xfffff")
            return [I(m, r(ops[0]), 0, 0, sext(field << 12, 32))]
        if fmt == "FENCE":
            if not ops:
                return [I("fence", 0, 0, 0, 0xFF)]
            need(2)
            return [I("fence", 0, 0, 0, (_fence_bits(ops[0]) << 4) | _fence_bits(ops[1]))]
        if fmt in ("SYS", "X_NONE"):
            need(0)
            return [I(m, 0, 0, 0, 0)]
        if fmt == "CSR":
            need(3)
            return [self._csr_ins(m, r(ops[0]), self._csr(ops[1], syms), r(ops[2]))]
        if fmt == "RDCYCLE":
            need(1)
            return [I("rdcycle", r(ops[0]), 0, 0, 0)]
        if fmt == "X_FLUSH":
            need(1)
            return [I(m, 0, r(ops[0]), 0, 0)]
        if fmt == "X_CCR":
            need(3)
            return [I(m, c(ops[0]), c(ops[1]), r(ops[2]), 0)]
        if fmt == "X_CCC":
            need(3)
            return [I(m, c(ops[0]), c(ops[1]), c(ops[2]), 0)]
        if fmt == "X_CC":
            need(2)
            return [I(m, c(ops[0]), c(ops[1]), 0, 0)]
        if fmt == "X_RC":
            need(2)
            return [I(m, r(ops[0]), c(ops[1]), 0, 0)]
        if fmt == "X_LOAD":
            need(2)
            return [I(m, r(ops[0]), self._cap_mem(ops[1]), 0, 0)]
        if fmt == "X_STORE":
            need(2)
            return [I(m, 0, self._cap_mem(ops[1]), r(ops[0]), 0)]
        if fmt == "X_CLC":
            need(2)
            return [I(m, c(ops[0]), self._cap_mem(ops[1]), 0, 0)]
        if fmt == "X_CSC":
            need(2)
            return [I(m, 0, self._cap_mem(ops[1]), c(ops[0]), 0)]
        raise AssertionError(m)  # pragma: no cover

    @staticmethod
    def _csr_ins(m: str, rd: int, csr: int, rs1: int) -> Instruction:
        if m == "csrrs" and csr == CSR_NUMBERS["cycle"] and rs1 == 0:
            return Instruction("rdcycle", rd, 0, 0, 0)  # canonical spelling of the same word
        return Instruction(m, rd, rs1, 0, csr)

    @staticmethod
    def _la(rd: int, addr: int, pc: int) -> list[Instruction]:
        """``auipc`` + ``addi`` pair reaching ``addr`` from ``pc``."""
        delta = sext(addr - pc, 64)
        if not _fits(delta + 0x800, 32):
            raise _OpError("ImmediateOutOfRange", f"address 0x{addr:x} out of la range")
        hi = ((delta + 0x800) >> 12) & 0xFFFFF
        return [Instruction("auipc", rd, 0, 0, sext(hi << 12, 32)),
                Instruction("addi", rd, rd, 0, sext(delta, 12))]


def _fence_bits(tok: str) -> int:
    if tok.strip() == "0":
        return 0
    bits = 0
    for ch in tok.strip().lower():
        if ch not in "iorw":
            raise _OpError("BadOperand", f"bad fence set {tok!r}")
        bits |= {"i": 8, "o": 4, "r": 2, "w": 1}[ch]
    return bits


def assemble(text: str, zones: ZonesConfig | None = None) -> ProgramImage:
    return Assembler(zones).assemble(text)


def disassemble(image: ProgramImage) -> str:
    """Listing that re-assembles to the same sections and bytes."""
    addr_syms: dict[int, list[str]] = {}
    for name, addr in image.symbols.items():
        addr_syms.setdefault(addr, []).append(name)
    lines = []
    for sec in image.sections:
        lines.append(f".org 0x{sec.start:x}")
        data = bytes(sec.data)
        n_words = len(data) // 4
        for i in range(n_words):
            addr = sec.start + 4 * i
            raw = int.from_bytes(data[4 * i:4 * i + 4], "little")
            try:
                text = format_instruction(decode(raw))
            except IllegalInstruction:
                text = f".word 0x{raw:08x}"
            names = ", ".join(sorted(addr_syms.get(addr, ())))
            note = f"  <{names}>" if names else ""
            lines.append(f"    {text:<36}# 0x{addr:08x}: {raw:08x}{note}")
        for j in range(4 * n_words, len(data)):
            lines.append(f"    .byte 0x{data[j]:02x}")
    return "\n".join(lines) + "\n"


__all__ = ["AsmError", "Assembler", "assemble", "disassemble", "li_sequence", "parse_register"]
