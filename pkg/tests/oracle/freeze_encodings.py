"""Freeze reference encodings from clang for a broad instruction sample.

Run from the tests directory:  python3 -m oracle.freeze_encodings
Writes tests/data/llvm_encodings.json as a list of {"text", "words"} where
``text`` is TRISA assembly and ``words`` the 32-bit words clang produced.
TRISA custom instructions are fed to clang through ``.insn r`` using the
field values from docs/assembly.md.
"""
from __future__ import annotations

import json
import random
import struct
import subprocess
import tempfile
from pathlib import Path

from .reference import CLANG

OUT = Path(__file__).resolve().parent.parent / "data" / "llvm_encodings.json"

REGS = [f"x{i}" for i in range(32)]
ABI = ["zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
       "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"]
CAPS = [f"c{i}" for i in range(8)] + ["ddc", "pcc"]

R_OPS = ["add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and",
         "addw", "subw", "sllw", "srlw", "sraw", "mul", "mulw"]
I_OPS = ["addi", "slti", "sltiu", "xori", "ori", "andi", "addiw"]
SH64 = ["slli", "srli", "srai"]
SH32 = ["slliw", "srliw", "sraiw"]
LOADS = ["lb", "lh", "lw", "ld", "lbu", "lhu", "lwu"]
STORES = ["sb", "sh", "sw", "sd"]
BRANCHES = ["beq", "bne", "blt", "bge", "bltu", "bgeu"]
CSRS = ["mstatus", "mtvec", "mepc", "mcause", "mtval"]

# mnemonic -> (operand shape, funct3, funct7) per docs/assembly.md
CUSTOM = {
    "cflush": ("x", 0, 0x00),
    "fence.spec": ("", 0, 0x01),
    "csetbounds": ("ccx", 0, 0x02),
    "candperm": ("ccx", 0, 0x03),
    "cseal": ("ccc", 0, 0x04),
    "cunseal": ("ccc", 0, 0x05),
    "cmove": ("cc", 0, 0x08),
    "cgettag": ("xc", 0, 0x09),
    "cincoffset": ("ccx", 0, 0x0A),
    "clc": ("cm", 0, 0x0B),
    "csc": ("sm", 0, 0x0C),
}
CLOAD = {"cload.b": 0, "cload.h": 1, "cload.w": 2, "cload": 3, "cload.bu": 4, "cload.hu": 5, "cload.wu": 6}
CSTORE = {"cstore.b": 0, "cstore.h": 1, "cstore.w": 2, "cstore": 3}


# Small whole programs checked byte for byte, labels included.
WORKED = [
    "addi x1, x0, 5",
    "beq x0, x0, done\naddi x0, x0, 0\ndone:\naddi x0, x0, 0",
    "ld x5, 0(x10)\nld x6, 8(x10)\nmul x7, x5, x6\nsd x7, 16(x10)",
]


def sample(rng: random.Random) -> list[tuple[str, str]]:
    """(trisa text, clang text) pairs."""
    reg = lambda: rng.choice(REGS if rng.random() < 0.5 else ABI)  # noqa: E731
    out = [(t, t) for t in WORKED]
    for m in R_OPS:
        for _ in range(6):
            t = f"{m} {reg()}, {reg()}, {reg()}"
            out.append((t, t))
    for m in I_OPS:
        for imm in (-2048, -1, 0, 1, 2047, rng.randint(-2048, 2047), rng.randint(-2048, 2047)):
            t = f"{m} {reg()}, {reg()}, {imm}"
            out.append((t, t))
    for m in SH64:
        for sh in (0, 1, 31, 32, 63, rng.randint(0, 63)):
            t = f"{m} {reg()}, {reg()}, {sh}"
            out.append((t, t))
    for m in SH32:
        for sh in (0, 1, 31, rng.randint(0, 31)):
            t = f"{m} {reg()}, {reg()}, {sh}"
            out.append((t, t))
    for m in LOADS:
        for off in (-2048, 0, 2047, rng.randint(-2048, 2047)):
            t = f"{m} {reg()}, {off}({reg()})"
            out.append((t, t))
    for m in STORES:
        for off in (-2048, 0, 2047, rng.randint(-2048, 2047)):
            t = f"{m} {reg()}, {off}({reg()})"
            out.append((t, t))
    for m in ("lui", "auipc"):
        for imm in (0, 1, 0x80000, 0xFFFFF, rng.randint(0, 0xFFFFF)):
            t = f"{m} {reg()}, {imm}"
            out.append((t, t))
    for m in BRANCHES:
        for off in (-4096, -2, 2, 8, 4094, rng.randrange(-4096, 4096, 2)):
            t = f"{m} {reg()}, {reg()}, {off}"
            out.append((t, t))
    for off in (-(1 << 20), -2, 0, 4, (1 << 20) - 2, rng.randrange(-(1 << 20), 1 << 20, 2)):
        t = f"jal {reg()}, {off}"
        out.append((t, t))
    for off in (-2048, 0, 2047, rng.randint(-2048, 2047)):
        t = f"jalr {reg()}, {off}({reg()})"
        out.append((t, t))
    for t in ("ecall", "ebreak", "mret", "fence", "fence rw, rw", "fence iorw, iorw", "fence r, w",
              "fence i, o", "nop", "rdcycle a0", "rdcycle t6", "ret"):
        out.append((t, t))
    for m in ("csrrw", "csrrs", "csrrc"):
        for csr in CSRS:
            t = f"{m} {reg()}, {csr}, {reg()}"
            out.append((t, t))
    for csr in ("cycle", "instret"):
        t = f"csrrs {reg()}, {csr}, zero"
        out.append((t, t))
    values = [0, 1, -1, 2047, -2048, 2048, -2049, 0x7FFFFFFF, -0x80000000, 0x80000000, 0xFFFFFFFF,
              0x100000000, 0x7FFFFFFFFFFFFFFF, -0x8000000000000000, 0x123456789ABCDEF0, 0xFFFFFFFFFFFF,
              0xFFF0000000000000, 0x0000FFFF00000000, 0x8000000000000001]
    for _ in range(120):
        bits = rng.choice((12, 20, 32, 33, 44, 52, 63, 64))
        values.append(rng.getrandbits(bits) - (1 << (bits - 1)) * rng.randint(0, 1))
    for _ in range(40):  # runs of ones and zeros
        lo, hi = sorted(rng.sample(range(65), 2))
        values.append(((1 << hi) - (1 << lo)) - (1 << 64) * rng.randint(0, 1) * (hi == 64))
    for v in values:
        v = ((v + (1 << 63)) % (1 << 64)) - (1 << 63)
        t = f"li {reg()}, {v}"
        out.append((t, t))
    # custom-0
    idx = lambda names: rng.randrange(len(names))  # noqa: E731
    for m, (shape, f3, f7) in CUSTOM.items():
        for _ in range(6):
            if shape == "x":
                r1 = idx(REGS)
                out.append((f"{m} x{r1}", f".insn r 0x0B, {f3}, {f7}, x0, x{r1}, x0"))
            elif shape == "":
                out.append((m, f".insn r 0x0B, {f3}, {f7}, x0, x0, x0"))
                break
            elif shape == "ccx":
                d, s1, s2 = idx(CAPS), idx(CAPS), idx(REGS)
                out.append((f"{m} {CAPS[d]}, {CAPS[s1]}, x{s2}", f".insn r 0x0B, {f3}, {f7}, x{d}, x{s1}, x{s2}"))
            elif shape == "ccc":
                d, s1, s2 = idx(CAPS), idx(CAPS), idx(CAPS)
                out.append((f"{m} {CAPS[d]}, {CAPS[s1]}, {CAPS[s2]}", f".insn r 0x0B, {f3}, {f7}, x{d}, x{s1}, x{s2}"))
            elif shape == "cc":
                d, s1 = idx(CAPS), idx(CAPS)
                out.append((f"{m} {CAPS[d]}, {CAPS[s1]}", f".insn r 0x0B, {f3}, {f7}, x{d}, x{s1}, x0"))
            elif shape == "xc":
                d, s1 = idx(REGS), idx(CAPS)
                out.append((f"{m} x{d}, {CAPS[s1]}", f".insn r 0x0B, {f3}, {f7}, x{d}, x{s1}, x0"))
            elif shape == "cm":
                d, s1 = idx(CAPS), idx(CAPS)
                out.append((f"{m} {CAPS[d]}, ({CAPS[s1]})", f".insn r 0x0B, {f3}, {f7}, x{d}, x{s1}, x0"))
            elif shape == "sm":
                v, s1 = idx(CAPS), idx(CAPS)
                out.append((f"{m} {CAPS[v]}, ({CAPS[s1]})", f".insn r 0x0B, {f3}, {f7}, x0, x{s1}, x{v}"))
    for m, f3 in CLOAD.items():
        for _ in range(3):
            d, s1 = idx(REGS), idx(CAPS)
            out.append((f"{m} x{d}, ({CAPS[s1]})", f".insn r 0x0B, {f3}, 6, x{d}, x{s1}, x0"))
    for m, f3 in CSTORE.items():
        for _ in range(3):
            v, s1 = idx(REGS), idx(CAPS)
            out.append((f"{m} x{v}, ({CAPS[s1]})", f".insn r 0x0B, {f3}, 7, x0, x{s1}, x{v}"))
    return out


def _sections(obj: bytes) -> dict[str, bytes]:
    e_shoff, = struct.unpack_from("<Q", obj, 0x28)
    e_shentsize, e_shnum, e_shstrndx = struct.unpack_from("<HHH", obj, 0x3A)
    heads = [struct.unpack_from("<IIQQQQ", obj, e_shoff + i * e_shentsize) for i in range(e_shnum)]
    strtab_off = heads[e_shstrndx][4]
    out = {}
    for name_off, _t, flags, _a, off, size in heads:
        if flags & 4:  # SHF_EXECINSTR
            end = obj.index(b"\0", strtab_off + name_off)
            out[obj[strtab_off + name_off:end].decode()] = obj[off:off + size]
    return out


def freeze(seed: int = 20240611) -> list[dict]:
    pairs = sample(random.Random(seed))
    src = "".join(f'.section .text.e{i},"ax",@progbits\n{clang}\n' for i, (_t, clang) in enumerate(pairs))
    with tempfile.TemporaryDirectory() as d:
        s, o = Path(d, "enc.s"), Path(d, "enc.o")
        s.write_text(src, encoding="utf-8")
        subprocess.run([CLANG, "--target=riscv64", "-march=rv64im", "-mno-relax", "-c", str(s), "-o", str(o)],
                       check=True, capture_output=True, text=True)
        secs = _sections(o.read_bytes())
    out = []
    for i, (text, _clang) in enumerate(pairs):
        blob = secs[f".text.e{i}"]
        out.append({"text": text, "words": [int.from_bytes(blob[j:j + 4], "little") for j in range(0, len(blob), 4)]})
    return out


if __name__ == "__main__":
    data = freeze()
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(json.dumps(data, indent=0) + "\n", encoding="utf-8")
    print(f"froze {len(data)} encodings")
