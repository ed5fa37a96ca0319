"""Shared strategies and small runners for the test suite."""
from __future__ import annotations

import json
from pathlib import Path

from hypothesis import strategies as st

from trisa import Config, Simulator, assemble
from trisa.isa import CAP_NAMES, SPEC, Instruction

XREG = st.integers(0, 31)
CREG = st.integers(0, len(CAP_NAMES) - 1)
IMM12 = st.integers(-2048, 2047)


def _fields(fmt: str):
    """Strategy of (rd, rs1, rs2, imm) tuples legal for ``fmt``."""
    z = st.just(0)
    table = {
        "R": (XREG, XREG, XREG, z),
        "I": (XREG, XREG, z, IMM12),
        "SH": (XREG, XREG, z, st.integers(0, 63)),
        "SHW": (XREG, XREG, z, st.integers(0, 31)),
        "S": (z, XREG, XREG, IMM12),
        "B": (z, XREG, XREG, st.integers(-2048, 2047).map(lambda v: v * 2)),
        "U": (XREG, z, z, st.integers(-(1 << 19), (1 << 19) - 1).map(lambda v: v << 12)),
        "J": (XREG, z, z, st.integers(-(1 << 19), (1 << 19) - 1).map(lambda v: v * 2)),
        "FENCE": (z, z, z, st.integers(0, 255)),
        "SYS": (z, z, z, z),
        "CSR": (XREG, XREG, z, st.integers(0, 4095)),
        "RDCYCLE": (XREG, z, z, z),
        "X_FLUSH": (z, XREG, z, z),
        "X_NONE": (z, z, z, z),
        "X_CCR": (CREG, CREG, XREG, z),
        "X_CCC": (CREG, CREG, CREG, z),
        "X_CC": (CREG, CREG, z, z),
        "X_RC": (XREG, CREG, z, z),
        "X_LOAD": (XREG, CREG, z, z),
        "X_STORE": (z, CREG, XREG, z),
        "X_CLC": (CREG, CREG, z, z),
        "X_CSC": (z, CREG, CREG, z),
    }
    return st.tuples(*table[fmt])


@st.composite
def instructions(draw, mnemonics=None):
    m = draw(st.sampled_from(sorted(mnemonics or SPEC)))
    rd, rs1, rs2, imm = draw(_fields(SPEC[m][0]))
    if m == "csrrs" and imm == 0xC00 and rs1 == 0:
        imm = 0xC01  # that word is the canonical rdcycle
    return Instruction(m, rd, rs1, rs2, imm)


def words(image) -> list[int]:
    blob = b"".join(bytes(s.data) for s in image.sections)
    return [int.from_bytes(blob[i:i + 4], "little") for i in range(0, len(blob), 4)]


def run_source(source: str, config: Config | None = None, max_steps: int = 200_000, **kw):
    """Assemble and run ``source``; returns (simulator, report)."""
    image = assemble(source, (config or Config()).zones)
    sim = Simulator(config, image=image, **kw)
    return sim, sim.run(max_steps)


CORPUS = Path(__file__).parent / "corpus"
EXPECTED = json.loads((CORPUS / "expected.json").read_text(encoding="utf-8"))


def check_corpus_program(name: str, config: Config) -> None:
    """Assemble and run one corpus program; registers and data must match the frozen reference."""
    exp = EXPECTED[name]
    image = assemble((CORPUS / f"{name}.trs").read_text(encoding="utf-8"))
    assert sum(len(s.data) for s in image.sections) == exp["size"]
    sim = Simulator(config, image=image)
    report = sim.run(2_000_000)
    assert report.status == "halted", report.traps
    assert [f"0x{v:016x}" for v in sim.state.regs] == exp["regs"]
    assert sim.read_bytes(exp["base"], exp["size"]).hex() == exp["memory"]
