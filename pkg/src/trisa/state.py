"""Architectural CPU state and traps."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import capability as capmod
from .capability import Capability, Perm
from .isa import CSR_NUMBERS, DDC, MASK64, PCC

MSTATUS = CSR_NUMBERS["mstatus"]
MTVEC = CSR_NUMBERS["mtvec"]
MEPC = CSR_NUMBERS["mepc"]
MCAUSE = CSR_NUMBERS["mcause"]
MTVAL = CSR_NUMBERS["mtval"]
MSTATUS_MPP = 1 << 11  # set: trap came from Kernel mode

SEAL_ROOT_REG = 7


class PrivilegeMode(str, enum.Enum):
    USER = "User"
    KERNEL = "Kernel"


class TrapCause(str, enum.Enum):
    ILLEGAL_INSTRUCTION = "IllegalInstruction"
    LOAD_ACCESS_FAULT = "LoadAccessFault"
    STORE_ACCESS_FAULT = "StoreAccessFault"
    CAPABILITY_FAULT = "CapabilityFault"
    BUS_FAULT = "BusFault"
    INTEGRITY_VIOLATION = "IntegrityViolation"
    BREAKPOINT = "Breakpoint"
    ENV_CALL = "EnvCall"

    @property
    def code(self) -> int:
        return _CAUSE_CODES[self]


# mcause values; standard RISC-V numbers where one exists
_CAUSE_CODES = {
    TrapCause.ILLEGAL_INSTRUCTION: 2,
    TrapCause.BREAKPOINT: 3,
    TrapCause.LOAD_ACCESS_FAULT: 5,
    TrapCause.STORE_ACCESS_FAULT: 7,
    TrapCause.ENV_CALL: 8,
    TrapCause.BUS_FAULT: 24,
    TrapCause.CAPABILITY_FAULT: 28,
    TrapCause.INTEGRITY_VIOLATION: 29,
}


class Trap(Exception):
    """An architectural exception. Raised inside the core, logged in run reports."""

    def __init__(self, cause: TrapCause, faulting_address: int | None = None,
                 faulting_pc: int = 0, detail: str = ""):
        super().__init__(f"{cause.value} at pc=0x{faulting_pc:x}"
                         + (f" addr=0x{faulting_address:x}" if faulting_address is not None else "")
                         + (f" ({detail})" if detail else ""))
        self.cause = cause
        self.faulting_address = faulting_address
        self.faulting_pc = faulting_pc
        self.detail = detail

    def to_dict(self) -> dict:
        return {
            "cause": self.cause.value,
            "code": self.cause.code,
            "faulting_address": self.faulting_address,
            "faulting_pc": self.faulting_pc,
            "detail": self.detail,
        }

    def __eq__(self, other):
        return isinstance(other, Trap) and self.to_dict() == other.to_dict()

    __hash__ = Exception.__hash__


def default_caps(span_end: int) -> list[Capability]:
    """Reset capability registers.

    DDC and PCC cover ``[0, span_end)`` with every non-sealing permission,
    c7 is the sealing root over the 16-bit otype space, the rest are null.
    """
    caps = [capmod.NULL] * 10
    caps[DDC] = capmod.root(0, span_end, capmod.DATA_PERMS)
    caps[PCC] = capmod.root(0, span_end, capmod.DATA_PERMS)
    caps[SEAL_ROOT_REG] = capmod.root(0, 1 << 16, Perm.SEAL | Perm.UNSEAL)
    return caps


@dataclass
class MachineState:
    pc: int = 0
    regs: list[int] = field(default_factory=lambda: [0] * 32)
    caps: list[Capability] = field(default_factory=lambda: default_caps(1 << 32))
    mode: PrivilegeMode = PrivilegeMode.KERNEL
    cycle: int = 0
    instret: int = 0
    csrs: dict[int, int] = field(default_factory=lambda: {MSTATUS: 0, MTVEC: 0, MEPC: 0, MCAUSE: 0, MTVAL: 0})
    halted: bool = False

    @property
    def trap_vector(self) -> int:
        return self.csrs[MTVEC]

    def set_reg(self, index: int, value: int) -> None:
        if index:
            self.regs[index] = value & MASK64

    def arch_snapshot(self) -> dict:
        """Architectural state as plain data (cycle counters excluded)."""
        return {
            "pc": self.pc,
            "regs": list(self.regs),
            "caps": [str(c) for c in self.caps],
            "mode": self.mode.value,
            "csrs": {f"0x{k:03x}": v for k, v in sorted(self.csrs.items())},
        }
