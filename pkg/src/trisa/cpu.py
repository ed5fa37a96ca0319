"""The simulated hart: fetch, decode, execute, trap, speculate.

One :class:`Simulator` owns a platform (memory, tags, devices), a cache
hierarchy, a branch predictor and a speculation engine. ``step()`` either
executes one instruction or, when a transient window is due, resolves it.
"""
from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

from . import capability as capmod
from .capability import AccessKind, CapabilityFault, FaultCause
from .config import Config, MitigationSet
from .isa import CAP_NAMES, CSR_NAMES, DDC, LOAD_WIDTH, MASK64, PCC, SPEC, IllegalInstruction, decode
from .microarch import (MMIO, AccessRecord, AccessTrace, BranchPredictor, CacheHierarchy, Checkpoint,
                        Outcome, PendingFault, SpeculationEngine, Trigger)
from .platform import DEVICE_ZONES, BusFault, Platform, PrivilegeFault, Zone, route
from .state import (MCAUSE, MEPC, MSTATUS, MSTATUS_MPP, MTVAL, MTVEC, MachineState, PrivilegeMode, Trap,
                    TrapCause, default_caps)
from .tpm import EntropySource

CSR_INSTRET = 0xC02
_READ_ONLY_CSRS = frozenset({0xC00, CSR_INSTRET})

# instructions a transient window will not execute; the shadow waits for resolution
_SHADOW_STALL = frozenset({"ecall", "ebreak", "mret", "fence.spec", "cflush", "csrrw", "csrrs", "csrrc"}) \
    | frozenset(m for m, s in SPEC.items() if s[0] == "B")


def _s64(v: int) -> int:
    return v - (1 << 64) if v >> 63 else v


def _sx32(v: int) -> int:
    v &= 0xFFFFFFFF
    return (v | 0xFFFFFFFF00000000) if v >> 31 else v


def _s32(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v >> 31 else v


_RR = {
    "add": lambda a, b: (a + b) & MASK64,
    "sub": lambda a, b: (a - b) & MASK64,
    "sll": lambda a, b: (a << (b & 63)) & MASK64,
    "slt": lambda a, b: int(_s64(a) < _s64(b)),
    "sltu": lambda a, b: int(a < b),
    "xor": lambda a, b: a ^ b,
    "srl": lambda a, b: a >> (b & 63),
    "sra": lambda a, b: (_s64(a) >> (b & 63)) & MASK64,
    "or": lambda a, b: a | b,
    "and": lambda a, b: a & b,
    "mul": lambda a, b: (a * b) & MASK64,
    "addw": lambda a, b: _sx32(a + b),
    "subw": lambda a, b: _sx32(a - b),
    "mulw": lambda a, b: _sx32(a * b),
    "sllw": lambda a, b: _sx32(a << (b & 31)),
    "srlw": lambda a, b: _sx32((a & 0xFFFFFFFF) >> (b & 31)),
    "sraw": lambda a, b: _sx32(_s32(a) >> (b & 31)),
}

# immediate forms receive the raw signed immediate
_RI = {
    "addi": lambda a, i: (a + i) & MASK64,
    "slti": lambda a, i: int(_s64(a) < i),
    "sltiu": lambda a, i: int(a < (i & MASK64)),
    "xori": lambda a, i: a ^ (i & MASK64),
    "ori": lambda a, i: a | (i & MASK64),
    "andi": lambda a, i: a & (i & MASK64),
    "slli": lambda a, i: (a << i) & MASK64,
    "srli": lambda a, i: a >> i,
    "srai": lambda a, i: (_s64(a) >> i) & MASK64,
    "addiw": lambda a, i: _sx32(a + i),
    "slliw": lambda a, i: _sx32(a << i),
    "srliw": lambda a, i: _sx32((a & 0xFFFFFFFF) >> i),
    "sraiw": lambda a, i: _sx32(_s32(a) >> i),
}

_BRANCH = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: _s64(a) < _s64(b),
    "bge": lambda a, b: _s64(a) >= _s64(b),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}


class SimulatorError(RuntimeError):
    """Misuse of the simulator API (not an architectural event)."""


class _Stall(Exception):
    """The current instruction cannot run transiently."""


class StepKind(enum.Enum):
    CONTINUE = "Continue"
    TRAPPED = "Trapped"
    HALTED = "Halted"


@dataclass(frozen=True)
class StepResult:
    kind: StepKind
    trap: Trap | None = None


class BranchOutcome(NamedTuple):
    """Architectural result of the most recently executed conditional branch."""
    pc: int
    taken: bool
    next_pc: int


CONTINUE = StepResult(StepKind.CONTINUE)
HALTED = StepResult(StepKind.HALTED)


@dataclass
class RunReport:
    status: str  # "halted", "trapped" or "limit_exceeded"
    pc: int
    mode: str
    cycles: int
    instructions: int
    steps: int
    regs: list[int]
    traps: list[dict] = field(default_factory=list)
    stats: dict[str, int] = field(default_factory=dict)

    @property
    def limit_exceeded(self) -> bool:
        return self.status == "limit_exceeded"

    @property
    def unrecovered_trap(self) -> dict | None:
        return self.traps[-1] if self.status == "trapped" else None

    def to_dict(self) -> dict:
        return {
            "report": "run",
            "status": self.status,
            "pc": self.pc,
            "mode": self.mode,
            "cycles": self.cycles,
            "instructions": self.instructions,
            "steps": self.steps,
            "regs": list(self.regs),
            "traps": list(self.traps),
            "stats": dict(sorted(self.stats.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class Simulator:
    """A single deterministic hart plus its platform and timing model."""

    def __init__(self, config: Config | None = None, *, image=None, mitigations: MitigationSet | None = None,
                 record_trace: bool = True, trace_fetch: bool = False, entropy: EntropySource | None = None):
        self.config = (config or Config()).validate()
        self.mitigations = mitigations if mitigations is not None else self.config.mitigations
        self.platform = Platform(self.config.zones, entropy or EntropySource.deterministic(self.config.seed))
        self.zones = self.platform.zones
        self.memory = self.platform.memory
        self.tags = self.platform.tags
        self.hierarchy = CacheHierarchy(self.config.cache)
        self.predictor = BranchPredictor(self.config.predictor)
        sc = self.config.speculation
        self.spec = SpeculationEngine(window=sc.window, resolve_delay=sc.resolve_delay)
        self.speculate = sc.enabled and sc.window > 0
        self.force_mispredict = sc.force_mispredict
        self.issue_cycles = self.config.timing.issue_cycles
        self.record_trace = record_trace
        self.trace_fetch = trace_fetch
        self.trace = AccessTrace()
        self.traps: list[Trap] = []
        self.stats: Counter = Counter()
        self.last_branch: BranchOutcome | None = None
        self.image = None
        self.records = []
        self.state = MachineState(caps=default_caps(self.zones.span_end))
        self._fetch_window = None
        self._issue = 0
        self._lat = 0
        self._dispatch = self._build_dispatch()
        if image is not None:
            self.load(image)

    # -- setup ----------------------------------------------------------------

    def load(self, image) -> None:
        self.image = image
        self.state, self.records = self.platform.load_image(image)
        self._fetch_window = None

    def reg(self, name_or_index) -> int:
        from .asm import parse_register  # local: asm imports nothing from here
        idx = name_or_index if isinstance(name_or_index, int) else parse_register(name_or_index)
        return self.state.regs[idx]

    def read_bytes(self, addr: int, n: int) -> bytes:
        """Architectural memory contents, bypassing caches and permission checks."""
        return self.memory.read(addr, n)

    def write_bytes(self, addr: int, data: bytes) -> None:
        self.memory.write(addr, data)
        self.tags.clear_range(addr, len(data))
        self.platform.note_write(addr, len(data))

    # -- trace ----------------------------------------------------------------

    def _record(self, addr: int, kind: str, level: str, latency: int, authorizer: int) -> None:
        if self.record_trace:
            self.trace.append(AccessRecord(self._issue, addr, kind, level, latency, self.spec.active,
                                           CAP_NAMES[authorizer]))

    # -- memory paths ---------------------------------------------------------

    def _authorize(self, cap_index: int, addr: int, size: int, kind: AccessKind) -> None:
        cap = self.state.caps[cap_index]
        try:
            capmod.checked_access(cap, addr, size, kind)
        except CapabilityFault as f:
            if self.spec.active:
                if f.cause is FaultCause.BOUNDS_VIOLATION and not self.mitigations.cap_enforce_transient:
                    self.stats["transient_bounds_bypass"] += 1
                    return
                self.stats["transient_cap_faults"] += 1
            raise Trap(TrapCause.CAPABILITY_FAULT, addr, self.state.pc, f.cause.value) from None

    def _initiator(self) -> Zone:
        z = self.zones.zone_of(self.state.pc)
        return z if z is not None else Zone.CPU

    def _route(self, addr: int, size: int, kind: str):
        try:
            return route(self.zones, self._initiator(), addr, kind, self.state.mode, size)
        except BusFault as bf:
            raise Trap(TrapCause.BUS_FAULT, addr, self.state.pc, bf.reason) from None

    def _read(self, addr: int, size: int, cap_index: int, kind: AccessKind = AccessKind.LOAD) -> bytes:
        st = self.state
        spec = self.spec
        if addr % size:
            raise Trap(TrapCause.LOAD_ACCESS_FAULT, addr, st.pc, "misaligned")
        self._authorize(cap_index, addr, size, kind)
        try:
            zone = self._route(addr, size, "read").zone
        except PrivilegeFault:
            return self._privileged_read(addr, size, cap_index)
        if zone in DEVICE_ZONES:
            if spec.active:
                raise _Stall
            data = self.platform.device_at(zone).mmio_read(self.platform.offset_in(zone, addr), size)
            lat = self.config.timing.mmio_latency
            self._lat += lat
            self._record(addr, "read", MMIO, lat, cap_index)
            return data
        data = self.memory.read(addr, size)
        if spec.active and spec.store_buffer:
            data = bytes(spec.forward(addr, bytearray(data)))
        lat, level = self.hierarchy.access(addr, "read")
        self._lat += lat
        self._record(addr, "read", level, lat, cap_index)
        return data

    def _privileged_read(self, addr: int, size: int, cap_index: int) -> bytes:
        """User-mode load of a kernel address: fault now, or run ahead on a deferred check."""
        st = self.state
        spec = self.spec
        trap = Trap(TrapCause.LOAD_ACCESS_FAULT, addr, st.pc, "kernel address from User mode")
        if self.mitigations.immediate_check or not self.speculate:
            raise trap
        if spec.active:
            if spec.fault is None:
                spec.fault = PendingFault(self._checkpoint(st.pc), trap, len(spec.store_buffer), spec.retired)
        else:
            cp = self._checkpoint(st.pc)
            spec.begin(Trigger.FAULTING_LOAD, cp, self._issue, st.pc, True)
            spec.fault = PendingFault(cp, trap, 0, 0)
            self.stats["windows"] += 1
        if self.mitigations.kpti:
            # the kernel is not mapped in the user context: nothing to fetch
            return bytes(size)
        data = self.memory.read(addr, size)
        if spec.store_buffer:
            data = bytes(spec.forward(addr, bytearray(data)))
        lat, level = self.hierarchy.access(addr, "read")
        self._lat += lat
        self._record(addr, "read", level, lat, cap_index)
        return data

    def _write(self, addr: int, data: bytes, cap_index: int, kind: AccessKind = AccessKind.STORE,
               cap=None) -> None:
        st = self.state
        size = len(data)
        if addr % size:
            raise Trap(TrapCause.STORE_ACCESS_FAULT, addr, st.pc, "misaligned")
        self._authorize(cap_index, addr, size, kind)
        try:
            zone = self._route(addr, size, "write").zone
        except PrivilegeFault:
            raise Trap(TrapCause.STORE_ACCESS_FAULT, addr, st.pc, "kernel address from User mode") from None
        if zone in DEVICE_ZONES:
            if self.spec.active:
                raise _Stall
            executed = self.platform.device_at(zone).mmio_write(self.platform.offset_in(zone, addr), data)
            lat = self.config.timing.mmio_latency
            if executed:
                lat += self.config.timing.tpm_command_cycles
                self.stats["tpm_commands"] += 1
            self._lat += lat
            self._record(addr, "write", MMIO, lat, cap_index)
            return
        if self.spec.active:
            self.spec.buffer_store(addr, data, cap)
            return
        self._commit_store(addr, data, cap, cap_index, charge=True)

    def _commit_store(self, addr: int, data: bytes, cap, cap_index: int, charge: bool) -> None:
        self.memory.write(addr, data)
        if cap is not None:
            self.tags.store(addr, cap)
        else:
            self.tags.clear_range(addr, len(data))
        if self.platform.records:
            self.platform.note_write(addr, len(data))
        lat, level = self.hierarchy.access(addr, "write")
        if charge:
            self._lat += lat
        self._record(addr, "write", level, lat, cap_index)

    def _fetch(self, pc: int):
        st = self.state
        win = self._fetch_window
        if not (win is not None and win[0] <= pc < win[1] and win[2] is st.caps[PCC] and win[3] is st.mode):
            if pc % 4:
                raise Trap(TrapCause.BUS_FAULT, pc, pc, "misaligned fetch")
            pcc = st.caps[PCC]
            try:
                capmod.checked_access(pcc, pc, 4, AccessKind.FETCH)
            except CapabilityFault as f:
                raise Trap(TrapCause.CAPABILITY_FAULT, pc, pc, f.cause.value) from None
            try:
                zone = route(self.zones, Zone.CPU, pc, "fetch", st.mode, 4).zone
            except BusFault as bf:
                raise Trap(TrapCause.BUS_FAULT, pc, pc, bf.reason) from None
            except PrivilegeFault:
                raise Trap(TrapCause.LOAD_ACCESS_FAULT, pc, pc, "kernel code from User mode") from None
            zr = self.zones.ranges[zone]
            self._fetch_window = (max(zr.start, pcc.base), min(zr.end, pcc.top), pcc, st.mode)
        if self.platform.dirty and self.mitigations.integrity_check:
            self._check_integrity(pc)
        raw = self.memory.read_u32(pc)
        lat, level = self.hierarchy.access(pc, "fetch")
        if self.trace_fetch and self.record_trace:
            self._record(pc, "fetch", level, lat, PCC)
        try:
            return decode(raw)
        except IllegalInstruction:
            raise Trap(TrapCause.ILLEGAL_INSTRUCTION, raw, pc, f"undecodable word 0x{raw:08x}") from None

    def _check_integrity(self, pc: int) -> None:
        for rec in list(self.platform.dirty):
            if pc in rec:
                if self.memory.digest(rec.start, rec.end) != rec.digest:
                    raise Trap(TrapCause.INTEGRITY_VIOLATION, pc, pc,
                               f"attested region [0x{rec.start:x}, 0x{rec.end:x}) modified")
                self.platform.dirty.discard(rec)

    # -- speculation ----------------------------------------------------------

    def _checkpoint(self, pc: int) -> Checkpoint:
        st = self.state
        return Checkpoint(pc, list(st.regs), list(st.caps), st.mode, dict(st.csrs))

    def _restore(self, cp: Checkpoint) -> None:
        st = self.state
        st.pc = cp.pc
        st.regs[:] = cp.regs
        st.caps[:] = cp.caps
        st.mode = cp.mode
        st.csrs = dict(cp.csrs)

    def _resolve(self) -> StepResult:
        res = self.spec.resolve()
        if res.trigger is Trigger.PREDICTED_BRANCH:
            pc, taken, target = self._branch_info
            self.predictor.train(pc, taken, target)
        if res.outcome is Outcome.SQUASHED:
            self.stats["squashes"] += 1
            self._restore(res.checkpoint)
            if res.trigger is Trigger.FAULTING_LOAD:
                return self._take_trap(res.fault.trap)
            return CONTINUE
        self.stats["commits"] += 1
        if res.fault is not None:
            self._restore(res.fault.checkpoint)
            for e in res.stores[:res.fault.buffered]:
                self._commit_store(e.addr, e.data, e.cap, DDC, charge=False)
            self.state.instret += res.fault.retired
            return self._take_trap(res.fault.trap)
        for e in res.stores:
            self._commit_store(e.addr, e.data, e.cap, DDC, charge=False)
        self.state.instret += res.retired
        return CONTINUE

    def _stall(self) -> StepResult:
        st = self.state
        if st.cycle < self.spec.resolve_at_cycle:
            self.stats["stall_cycles"] += self.spec.resolve_at_cycle - st.cycle
            st.cycle = self.spec.resolve_at_cycle
        return self._resolve()

    # -- traps ----------------------------------------------------------------

    def _take_trap(self, trap: Trap) -> StepResult:
        st = self.state
        self.traps.append(trap)
        vec = st.csrs[MTVEC]
        if vec == 0:
            st.halted = True
            return StepResult(StepKind.TRAPPED, trap)
        st.csrs[MEPC] = trap.faulting_pc
        st.csrs[MCAUSE] = trap.cause.code
        st.csrs[MTVAL] = (trap.faulting_address or 0) & MASK64
        if st.mode is PrivilegeMode.KERNEL:
            st.csrs[MSTATUS] |= MSTATUS_MPP
        else:
            st.csrs[MSTATUS] &= ~MSTATUS_MPP
        st.mode = PrivilegeMode.KERNEL
        st.pc = vec
        return StepResult(StepKind.TRAPPED, trap)

    # -- the step -------------------------------------------------------------

    def step(self) -> StepResult:
        st = self.state
        if st.halted:
            raise SimulatorError("machine is halted")
        spec = self.spec
        if spec.active and st.cycle >= spec.resolve_at_cycle:
            return self._resolve()
        self._issue = st.cycle
        self._lat = 0
        was_active = spec.active
        try:
            ins = self._fetch(st.pc)
            if was_active:
                if spec.window_remaining <= 0 or ins.mnemonic in _SHADOW_STALL:
                    raise _Stall
                spec.window_remaining -= 1
            result = self._dispatch[ins.mnemonic](ins)
        except _Stall:
            return self._stall()
        except Trap as trap:
            if was_active:
                self.stats["transient_faults"] += 1
                return self._stall()
            st.cycle += self.issue_cycles + self._lat
            return self._take_trap(trap)
        st.cycle += self.issue_cycles + self._lat
        if was_active:
            spec.retired += 1
        elif not (spec.active and spec.trigger is Trigger.FAULTING_LOAD):
            st.instret += 1
        return result or CONTINUE

    def run(self, max_steps: int = 1_000_000) -> RunReport:
        if max_steps <= 0:
            raise SimulatorError("max_steps must be positive")
        st = self.state
        status = "limit_exceeded"
        steps = 0
        step = self.step
        while steps < max_steps:
            r = step()
            steps += 1
            if r.kind is StepKind.CONTINUE:
                continue
            if r.kind is StepKind.HALTED:
                status = "halted"
                break
            if st.halted:
                status = "trapped"
                break
        return RunReport(status, st.pc, st.mode.value, st.cycle, st.instret, steps, list(st.regs),
                         [t.to_dict() for t in self.traps], dict(self.stats))

    def call(self, entry: int, regs: dict[int, int] | None = None, mode: PrivilegeMode | None = None,
             max_steps: int = 1_000_000) -> RunReport:
        """Jump to ``entry`` (optionally setting registers and mode) and run to the next halt."""
        st = self.state
        st.halted = False
        st.pc = entry
        if mode is not None:
            st.mode = mode
        for idx, value in (regs or {}).items():
            st.set_reg(idx, value)
        self.traps = []
        return self.run(max_steps)

    # -- instruction semantics -------------------------------------------------

    def _build_dispatch(self):
        d = {}
        for m, (fmt, *_rest) in SPEC.items():
            if m in _RR:
                d[m] = self._op_rr
            elif m in _RI:
                d[m] = self._op_ri
            elif fmt == "B":
                d[m] = self._op_branch
            elif m.startswith("cload"):
                d[m] = self._op_cload
            elif m.startswith("cstore"):
                d[m] = self._op_cstore
        for m in ("lb", "lh", "lw", "ld", "lbu", "lhu", "lwu"):
            d[m] = self._op_load
        for m in ("sb", "sh", "sw", "sd"):
            d[m] = self._op_store
        for m in ("csrrw", "csrrs", "csrrc"):
            d[m] = self._op_csr
        d.update({
            "lui": self._op_lui, "auipc": self._op_auipc, "jal": self._op_jal, "jalr": self._op_jalr,
            "fence": self._op_nop, "fence.spec": self._op_nop, "ecall": self._op_ecall,
            "ebreak": self._op_ebreak, "mret": self._op_mret, "rdcycle": self._op_rdcycle,
            "cflush": self._op_cflush, "csetbounds": self._op_csetbounds, "candperm": self._op_candperm,
            "cincoffset": self._op_cincoffset, "cseal": self._op_cseal, "cunseal": self._op_cunseal,
            "cmove": self._op_cmove, "cgettag": self._op_cgettag, "clc": self._op_clc, "csc": self._op_csc,
        })
        missing = set(SPEC) - set(d)
        assert not missing, missing
        return d

    def _advance(self) -> None:
        self.state.pc = (self.state.pc + 4) & MASK64

    def _op_nop(self, ins):
        self._advance()

    def _op_rr(self, ins):
        r = self.state.regs
        if ins.rd:
            r[ins.rd] = _RR[ins.mnemonic](r[ins.rs1], r[ins.rs2])
        self._advance()

    def _op_ri(self, ins):
        r = self.state.regs
        if ins.rd:
            r[ins.rd] = _RI[ins.mnemonic](r[ins.rs1], ins.imm)
        self._advance()

    def _op_lui(self, ins):
        self.state.set_reg(ins.rd, ins.imm)
        self._advance()

    def _op_auipc(self, ins):
        self.state.set_reg(ins.rd, self.state.pc + ins.imm)
        self._advance()

    def _op_jal(self, ins):
        st = self.state
        st.set_reg(ins.rd, st.pc + 4)
        st.pc = (st.pc + ins.imm) & MASK64

    def _op_jalr(self, ins):
        st = self.state
        target = (st.regs[ins.rs1] + ins.imm) & MASK64 & ~1
        st.set_reg(ins.rd, st.pc + 4)
        st.pc = target

    def _op_branch(self, ins):
        st = self.state
        pc = st.pc
        taken = _BRANCH[ins.mnemonic](st.regs[ins.rs1], st.regs[ins.rs2])
        target = (pc + ins.imm) & MASK64
        actual = target if taken else (pc + 4) & MASK64
        self.last_branch = BranchOutcome(pc, taken, actual)
        if not self.speculate:
            self.predictor.train(pc, taken, target)
            st.pc = actual
            return
        if self.force_mispredict:
            predicted_taken = not taken
            predicted_target = target
        else:
            pred = self.predictor.predict(pc)
            predicted_taken = pred.taken
            predicted_target = pred.target if pred.target is not None else target
        predicted = predicted_target if predicted_taken else (pc + 4) & MASK64
        self.spec.begin(Trigger.PREDICTED_BRANCH, self._checkpoint(actual), self._issue, actual,
                        predicted != actual)
        self._branch_info = (pc, taken, target)
        self.stats["windows"] += 1
        if predicted != actual:
            self.stats["mispredictions"] += 1
        st.pc = predicted

    def _op_load(self, ins):
        st = self.state
        size, signed = LOAD_WIDTH[SPEC[ins.mnemonic][2]]
        addr = (st.regs[ins.rs1] + ins.imm) & MASK64
        data = self._read(addr, size, DDC)
        st.set_reg(ins.rd, int.from_bytes(data, "little", signed=signed))
        self._advance()

    def _op_store(self, ins):
        st = self.state
        size = 1 << SPEC[ins.mnemonic][2]
        addr = (st.regs[ins.rs1] + ins.imm) & MASK64
        self._write(addr, (st.regs[ins.rs2] & ((1 << (8 * size)) - 1)).to_bytes(size, "little"), DDC)
        self._advance()

    def _op_cload(self, ins):
        st = self.state
        size, signed = LOAD_WIDTH[SPEC[ins.mnemonic][2]]
        data = self._read(st.caps[ins.rs1].cursor, size, ins.rs1)
        st.set_reg(ins.rd, int.from_bytes(data, "little", signed=signed))
        self._advance()

    def _op_cstore(self, ins):
        st = self.state
        size = 1 << SPEC[ins.mnemonic][2]
        value = st.regs[ins.rs2] & ((1 << (8 * size)) - 1)
        self._write(st.caps[ins.rs1].cursor, value.to_bytes(size, "little"), ins.rs1)
        self._advance()

    def _op_ecall(self, ins):
        raise Trap(TrapCause.ENV_CALL, None, self.state.pc)

    def _op_ebreak(self, ins):
        self.state.halted = True
        return HALTED

    def _require_kernel(self, ins):
        if self.state.mode is not PrivilegeMode.KERNEL:
            raise Trap(TrapCause.ILLEGAL_INSTRUCTION, ins.raw, self.state.pc, f"{ins.mnemonic} needs Kernel mode")

    def _op_mret(self, ins):
        self._require_kernel(ins)
        st = self.state
        st.mode = PrivilegeMode.KERNEL if st.csrs[MSTATUS] & MSTATUS_MPP else PrivilegeMode.USER
        st.csrs[MSTATUS] &= ~MSTATUS_MPP
        st.pc = st.csrs[MEPC]

    def _csr_value(self, num: int) -> int:
        if num == 0xC00:
            return self._issue
        if num == CSR_INSTRET:
            return self.state.instret
        return self.state.csrs[num]

    def _op_csr(self, ins):
        st = self.state
        num = ins.imm
        illegal = Trap(TrapCause.ILLEGAL_INSTRUCTION, ins.raw, st.pc)
        if num not in CSR_NAMES:
            illegal.detail = f"unknown CSR 0x{num:x}"
            raise illegal
        if num < 0xC00 and st.mode is not PrivilegeMode.KERNEL:
            illegal.detail = f"{CSR_NAMES[num]} needs Kernel mode"
            raise illegal
        old = self._csr_value(num)
        operand = st.regs[ins.rs1]
        writes = ins.mnemonic == "csrrw" or ins.rs1 != 0
        if writes:
            if num in _READ_ONLY_CSRS:
                illegal.detail = f"{CSR_NAMES[num]} is read-only"
                raise illegal
            if ins.mnemonic == "csrrw":
                new = operand
            elif ins.mnemonic == "csrrs":
                new = old | operand
            else:
                new = old & ~operand
            st.csrs[num] = new & MASK64
        st.set_reg(ins.rd, old)
        self._advance()

    def _op_rdcycle(self, ins):
        self.state.set_reg(ins.rd, self._issue)
        self._advance()

    def _op_cflush(self, ins):
        st = self.state
        addr = st.regs[ins.rs1]
        self._authorize(DDC, addr, 1, AccessKind.LOAD)
        try:
            zone = self._route(addr, 1, "read").zone
        except PrivilegeFault:
            raise Trap(TrapCause.LOAD_ACCESS_FAULT, addr, st.pc, "kernel address from User mode") from None
        if zone not in DEVICE_ZONES and not self.mitigations.flush_disabled:
            self.hierarchy.flush_line(addr)
            self.stats["flushes"] += 1
        self._advance()

    # capability instructions

    def _cap_op(self, fn, *args):
        try:
            return fn(*args)
        except CapabilityFault as f:
            raise Trap(TrapCause.CAPABILITY_FAULT, None, self.state.pc, f.cause.value) from None

    def _set_cap(self, ins, index: int, cap) -> None:
        if index == PCC:
            raise Trap(TrapCause.ILLEGAL_INSTRUCTION, ins.raw, self.state.pc, "pcc is not writable")
        self.state.caps[index] = cap
        self._advance()

    def _op_csetbounds(self, ins):
        st = self.state
        cap = st.caps[ins.rs1]
        self._set_cap(ins, ins.rd, self._cap_op(capmod.set_bounds, cap, cap.cursor, st.regs[ins.rs2]))

    def _op_candperm(self, ins):
        st = self.state
        self._set_cap(ins, ins.rd, self._cap_op(capmod.and_perms, st.caps[ins.rs1], st.regs[ins.rs2]))

    def _op_cincoffset(self, ins):
        st = self.state
        self._set_cap(ins, ins.rd, self._cap_op(capmod.inc_offset, st.caps[ins.rs1], st.regs[ins.rs2]))

    def _op_cseal(self, ins):
        st = self.state
        self._set_cap(ins, ins.rd, self._cap_op(capmod.seal, st.caps[ins.rs1], st.caps[ins.rs2]))

    def _op_cunseal(self, ins):
        st = self.state
        self._set_cap(ins, ins.rd, self._cap_op(capmod.unseal, st.caps[ins.rs1], st.caps[ins.rs2]))

    def _op_cmove(self, ins):
        self._set_cap(ins, ins.rd, self.state.caps[ins.rs1])

    def _op_cgettag(self, ins):
        self.state.set_reg(ins.rd, int(self.state.caps[ins.rs1].tag))
        self._advance()

    def _op_clc(self, ins):
        st = self.state
        addr = st.caps[ins.rs1].cursor
        raw = self._read(addr, capmod.GRANULE, ins.rs1, AccessKind.LOAD_CAP)
        cap = None
        if self.spec.active:
            fwd = self.spec.forwarded_cap(addr)
            if fwd is False:
                cap = capmod.untagged(raw)  # overwritten by plain data
            elif fwd is not None:
                cap = fwd
        if cap is None:
            cap = self.tags.load(addr, raw)
        self._set_cap(ins, ins.rd, cap)

    def _op_csc(self, ins):
        st = self.state
        auth = st.caps[ins.rs1]
        value = st.caps[ins.rs2]
        self._write(auth.cursor, capmod.to_bytes(value), ins.rs1, AccessKind.STORE_CAP,
                    cap=value if value.tag else None)
        self._advance()
