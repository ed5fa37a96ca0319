"""TRISA: a zoned RISC-V platform simulator with capabilities, a discrete TPM
and a transient-execution timing model, plus attack harnesses."""
from .asm import AsmError, assemble, disassemble
from .config import Config, ConfigError, MitigationSet
from .cpu import RunReport, Simulator, StepKind, StepResult
from .image import ProgramImage, Section
from .state import MachineState, PrivilegeMode, Trap, TrapCause

__version__ = "0.1.0"

__all__ = [
    "AsmError", "Config", "ConfigError", "MachineState", "MitigationSet", "PrivilegeMode", "ProgramImage",
    "RunReport", "Section", "Simulator", "StepKind", "StepResult", "Trap", "TrapCause", "assemble",
    "disassemble",
]
