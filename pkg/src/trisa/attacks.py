"""Attack harnesses: Flush+Reload, Spectre-v1, Meltdown, code patching, and
the mitigation matrix.

Every harness assembles one program holding all contexts (kernel, victim in
the green zone, attacker in the DMZ), loads it into a fresh simulator and
drives the contexts by jumping into them one phase at a time. Each phase
ends in ``ebreak``. Timing comes only from ``rdcycle`` inside the simulated
receiver; the harness reads the receiver's result array and decodes it.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import random
from collections import Counter
from dataclasses import dataclass, field

from .asm import AsmError, assemble
from .config import MITIGATION_NAMES, Config, MitigationSet
from .cpu import Simulator
from .isa import Instruction, encode
from .state import PrivilegeMode

CHANCE = 1 / 256
DEFAULT_MARGIN = 0.25
NUM_PROBES = 256
MAX_SECRET = 1024

ATTACKS = ("flush_reload", "spectre_v1", "meltdown", "integrity")
ATTACK_LABELS = {"flush_reload": "Flush+Reload", "spectre_v1": "Spectre-v1", "meltdown": "Meltdown",
                 "integrity": "Code patching"}

USER = PrivilegeMode.USER
KERNEL = PrivilegeMode.KERNEL


class HarnessError(RuntimeError):
    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind


@dataclass(frozen=True)
class AttackConfig:
    secret: bytes = b"TRISA"
    secret_zone: str = ""  # empty: the attack's natural zone
    trials: int = 1
    seed: int = 0
    mitigations: MitigationSet = field(default_factory=MitigationSet)
    probe_stride: int = 4096
    margin: float = DEFAULT_MARGIN
    secret_source: str = "memory"  # meltdown only: "memory" or "tpm"
    sim_config: Config | None = None

    def validate(self, line_bytes: int) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.probe_stride < 2 * line_bytes:
            raise ValueError(f"probe_stride must be at least {2 * line_bytes} (two cache lines)")
        if self.probe_stride % line_bytes:
            raise ValueError("probe_stride must be a multiple of the line size")
        if len(self.secret) > MAX_SECRET:
            raise ValueError(f"secret longer than {MAX_SECRET} bytes")
        if self.secret_source not in ("memory", "tpm"):
            raise ValueError("secret_source must be 'memory' or 'tpm'")
        if not 0 <= self.margin < 1:
            raise ValueError("margin must be in [0, 1)")


def _render(values) -> str:
    out = []
    for v in values:
        if v is None:
            out.append("?")
        elif 0x20 <= v < 0x7F and v != ord("\\"):
            out.append(chr(v))
        else:
            out.append(f"\\x{v:02x}")
    return "".join(out)


@dataclass
class AttackReport:
    attack: str
    secret: bytes
    recovered: list  # decoded byte per position, None when no unique hit
    verdict: str
    accuracy: float
    total_cycles: int
    mitigations: MitigationSet
    threshold: int
    probe_stride: int
    trials: int
    seed: int
    margin: float = DEFAULT_MARGIN
    note: str = ""
    per_byte: list = field(default_factory=list)
    histogram: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    probe_latencies: list = field(default_factory=list)  # (byte, trial, probe, latency)

    @property
    def recovered_bytes(self) -> bytes:
        return bytes(0 if v is None else v for v in self.recovered)

    @property
    def leaked(self) -> bool:
        return self.verdict == "Leaked"

    def to_dict(self) -> dict:
        return {
            "report": "attack",
            "attack": self.attack,
            "secret": _render(self.secret),
            "secret_hex": self.secret.hex(),
            "recovered": _render(self.recovered),
            "recovered_hex": "".join("??" if v is None else f"{v:02x}" for v in self.recovered),
            "accuracy": self.accuracy,
            "verdict": self.verdict,
            "chance_level": CHANCE,
            "margin": self.margin,
            "note": self.note,
            "total_cycles": self.total_cycles,
            "threshold": self.threshold,
            "probe_stride": self.probe_stride,
            "trials": self.trials,
            "seed": self.seed,
            "mitigations": {n: getattr(self.mitigations, n) for n in MITIGATION_NAMES},
            "per_byte": self.per_byte,
            "latency_histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "stats": dict(sorted(self.stats.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_latency_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("byte_index", "trial", "probe", "latency"))
            w.writerows(self.probe_latencies)


def verdict_for(accuracy: float, margin: float = DEFAULT_MARGIN) -> str:
    return "Leaked" if accuracy > CHANCE + margin else "Blocked"


# -- program layout -----------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    probe: int
    stride: int
    results: int
    attacker: int
    kernel_code: int
    kernel_secret: int
    kernel_scratch: int
    victim: int
    array1: int
    array1_len: int
    secret: int

    @classmethod
    def build(cls, cfg: Config, stride: int, secret_zone: str) -> Layout:
        z = cfg.zones
        probe = z.dmz.start
        if stride >= 0x1000:
            # attacker code and results live in the gap after probe line 0
            region = probe + 2 * cfg.cache.l1.line_bytes
            if region + 0xE00 > probe + stride:
                raise HarnessError("Layout", "probe stride leaves no room for the receiver")
        else:
            region = probe + NUM_PROBES * stride
        if region + 0xE00 > z.dmz.end:
            raise HarnessError("Layout", "DMZ too small for probe array and receiver")
        secret = {"green": z.green.start + 0x1440, "kernel": z.kernel.start + 0x1440,
                  "dmz": region + 0x900}[secret_zone]
        return cls(
            probe=probe, stride=stride, results=region, attacker=region + 0x800 + 0x400,
            kernel_code=z.kernel.start, kernel_secret=z.kernel.start + 0x1440,
            kernel_scratch=z.kernel.start + 0x2000,
            victim=z.green.start, array1=z.green.start + 0x840, array1_len=16, secret=secret,
        )


def _fence(on: bool) -> str:
    return "    fence.spec\n" if on else ""


def receiver_source(L: Layout) -> str:
    """Attacker-side routines: warm every probe line, flush them all, time a reload of each."""
    return f"""
.org 0x{L.attacker:x}
probe_init:
    li t0, 0
    li t5, {NUM_PROBES}
    li t6, {L.stride}
    li a0, 0x{L.probe:x}
init_loop:
    fence.spec
    mul t1, t0, t6
    add t1, t1, a0
    sb zero, 0(t1)
    addi t0, t0, 1
    blt t0, t5, init_loop
    fence.spec
    ebreak

probe_flush:
    li t0, 0
    li t5, {NUM_PROBES}
    li t6, {L.stride}
    li a0, 0x{L.probe:x}
flush_loop:
    fence.spec
    mul t1, t0, t6
    add t1, t1, a0
    cflush t1
    addi t0, t0, 1
    blt t0, t5, flush_loop
    fence.spec
    ebreak

probe_reload:
    li t0, 0
    li t5, {NUM_PROBES}
    li s1, {L.stride}
    li a0, 0x{L.probe:x}
    li a1, 0x{L.results:x}
reload_loop:
    fence.spec
    mul t1, t0, s1
    add t1, t1, a0
    rdcycle t2
    lb t3, 0(t1)
    rdcycle t4
    sub t4, t4, t2
    slli t6, t0, 3
    add t6, t6, a1
    sd t4, 0(t6)
    addi t0, t0, 1
    blt t0, t5, reload_loop
    fence.spec
    ebreak
"""


def _secret_data(L: Layout, secret: bytes, zone: str) -> str:
    if not secret:
        return ""
    return f"""
.org 0x{L.secret:x}
secret:
    .byte {", ".join(str(b) for b in secret)}
"""


def _assemble(source: str, cfg: Config):
    try:
        return assemble(source, cfg.zones)
    except AsmError as exc:  # generated code must always assemble
        raise HarnessError("AssemblyFailed", str(exc)) from exc


class _Harness:
    """Shared plumbing: simulator construction, phases and decoding."""

    name = ""
    natural_zone = "green"
    allowed_zones = ("green", "dmz")

    def __init__(self, cfg: AttackConfig):
        self.cfg = cfg
        self.sim_cfg = dataclasses.replace(cfg.sim_config or Config(), mitigations=cfg.mitigations,
                                           seed=cfg.seed)
        cfg.validate(self.sim_cfg.cache.l1.line_bytes)
        self.zone = cfg.secret_zone or self.natural_zone
        if self.zone not in self.allowed_zones:
            raise ValueError(f"{self.name}: secret_zone must be one of {', '.join(self.allowed_zones)}")
        self.L = Layout.build(self.sim_cfg, cfg.probe_stride, self.zone)
        self.threshold = self.sim_cfg.hit_threshold
        self.rng = random.Random(cfg.seed)
        self.sim: Simulator | None = None
        self.latencies: list[tuple[int, int, int, int]] = []
        self.histogram: Counter = Counter()
        self.per_byte: list[dict] = []

    def build(self, source: str) -> Simulator:
        image = _assemble(source, self.sim_cfg)
        self.image = image
        self.sim = Simulator(self.sim_cfg, image=image)
        return self.sim

    def phase(self, label: str, regs: dict[int, int] | None = None, mode=USER, max_steps: int = 200_000):
        report = self.sim.call(self.image.symbols[label], regs, mode, max_steps)
        if report.status != "halted":
            raise HarnessError("PhaseFailed", f"{self.name}: phase {label} ended {report.status} "
                                              f"{report.traps[-1] if report.traps else ''}")
        return report

    def reload_and_decode(self, byte_index: int, trial: int) -> int | None:
        self.phase("probe_reload")
        raw = self.sim.read_bytes(self.L.results, 8 * NUM_PROBES)
        hits = []
        for probe in range(NUM_PROBES):
            lat = int.from_bytes(raw[8 * probe:8 * probe + 8], "little")
            self.latencies.append((byte_index, trial, probe, lat))
            self.histogram[lat] += 1
            if lat < self.threshold:
                hits.append(probe)
        self._last_hits = hits
        return hits[0] if len(hits) == 1 else None

    def leak_byte(self, index: int, trial: int) -> int | None:
        raise NotImplementedError

    def expected_secret(self) -> bytes:
        return self.cfg.secret

    def run(self) -> AttackReport:
        self.setup()
        secret = self.expected_secret()
        recovered = []
        for i in range(len(secret)):
            votes = Counter()
            hit_sets = []
            for t in range(self.cfg.trials):
                v = self.leak_byte(i, t)
                hit_sets.append(self._last_hits)
                if v is not None:
                    votes[v] += 1
            best = min(votes, key=lambda k: (-votes[k], k)) if votes else None
            recovered.append(best)
            self.per_byte.append({"index": i, "expected": secret[i], "recovered": best,
                                  "hits": hit_sets[-1] if len(hit_sets[-1]) <= 8 else hit_sets[-1][:8] + ["..."]})
        return self.report(secret, recovered)

    def report(self, secret: bytes, recovered: list, note: str = "") -> AttackReport:
        if secret:
            accuracy = sum(1 for a, b in zip(secret, recovered) if a == b) / len(secret)
            verdict = verdict_for(accuracy, self.cfg.margin)
        else:
            accuracy, verdict = 1.0, "Blocked"
            note = note or "empty secret: nothing to leak, reported as Blocked"
        stats = {k: v for k, v in self.sim.stats.items()}
        return AttackReport(
            attack=self.name, secret=secret, recovered=recovered, verdict=verdict, accuracy=accuracy,
            total_cycles=self.sim.state.cycle, mitigations=self.cfg.mitigations, threshold=self.threshold,
            probe_stride=self.cfg.probe_stride, trials=self.cfg.trials, seed=self.cfg.seed,
            margin=self.cfg.margin, note=note, per_byte=self.per_byte, histogram=dict(self.histogram),
            stats=stats, probe_latencies=self.latencies,
        )


# -- Flush+Reload ---------------------------------------------------------------

class FlushReload(_Harness):
    name = "flush_reload"

    def source(self) -> str:
        L = self.L
        return f"""
.org 0x{L.victim:x}
sender:                     # a0 = index of the secret byte to transmit
    li t1, {L.stride}
    li t2, 0x{L.probe:x}
    la t0, secret
    add t0, t0, a0
    lbu t0, 0(t0)
    mul t0, t0, t1
    add t0, t0, t2
    lb t0, 0(t0)
    ebreak
""" + receiver_source(L) + _secret_data(L, self.cfg.secret, self.zone)

    def setup(self):
        self.build(self.source() if self.cfg.secret else self._empty_source())
        self.phase("probe_init")

    def _empty_source(self) -> str:
        return f".org 0x{self.L.victim:x}\nsender:\n    ebreak\n" + receiver_source(self.L)

    def leak_byte(self, index: int, trial: int) -> int | None:
        self.phase("probe_flush")
        self.phase("sender", {10: index})
        return self.reload_and_decode(index, trial)


def run_flush_reload(config: AttackConfig | None = None) -> AttackReport:
    return FlushReload(config or AttackConfig()).run()


# -- Spectre v1 -------------------------------------------------------------------

class SpectreV1(_Harness):
    name = "spectre_v1"
    training_rounds = 6

    def victim_source(self) -> str:
        L = self.L
        m = self.cfg.mitigations
        head = f"""
.org 0x{L.victim:x}
victim_init:                # c1 := read-only capability over array1
    la t0, array1
    cincoffset c1, ddc, t0
    li t1, {L.array1_len}
    csetbounds c1, c1, t1
    li t1, 1
    candperm c1, c1, t1
    ebreak

victim_use:                 # legitimate use of the secret keeps it cached
    la t0, secret
    lb t1, 0(t0)
    ebreak

victim:                     # a0 = untrusted index
    li t1, {L.stride}
    li t2, 0x{L.probe:x}
    li t3, {L.array1_len}
"""
        if m.branch_avoidance:
            body = """    sltu t4, a0, t3
    neg t4, t4
    and a0, a0, t4
    cincoffset c2, c1, a0
    cload.bu t0, (c2)
    mul t0, t0, t1
    add t0, t0, t2
    lb t0, 0(t0)
    ebreak
"""
        else:
            body = "    bgeu a0, t3, victim_done\n" + _fence(m.speculation_barriers) + """    cincoffset c2, c1, a0
    cload.bu t0, (c2)
    mul t0, t0, t1
    add t0, t0, t2
    lb t0, 0(t0)
victim_done:
""" + _fence(m.speculation_barriers) + "    ebreak\n"
        data = f"""
.org 0x{L.array1:x}
array1:
    .byte {", ".join(str(i + 1) for i in range(L.array1_len))}
"""
        return head + body + data

    def source(self) -> str:
        secret = self.cfg.secret or b"\0"
        return self.victim_source() + receiver_source(self.L) + _secret_data(self.L, secret, self.zone)

    def setup(self):
        self.build(self.source())
        self.phase("victim_init")
        self.phase("probe_init")

    def leak_byte(self, index: int, trial: int) -> int | None:
        L = self.L
        for _ in range(self.training_rounds):
            self.phase("victim", {10: self.rng.randrange(L.array1_len)})
        self.phase("probe_flush")
        self.phase("victim_use")
        self.phase("victim", {10: (L.secret + index - L.array1) & ((1 << 64) - 1)})
        return self.reload_and_decode(index, trial)


def run_spectre_v1(config: AttackConfig | None = None) -> AttackReport:
    return SpectreV1(config or AttackConfig()).run()


# -- Meltdown ----------------------------------------------------------------------

class Meltdown(_Harness):
    name = "meltdown"
    natural_zone = "kernel"
    allowed_zones = ("kernel",)

    def source(self) -> str:
        L = self.L
        cfg = self.sim_cfg
        secret = self.cfg.secret or b"\0"
        tpm = cfg.zones.tpm_mmio.start
        n = len(secret)
        kernel = f"""
.org 0x{L.kernel_code:x}
kernel_boot:
    la t0, trap_handler
    csrw mtvec, t0
    ebreak

trap_handler:               # ecall: touch secret byte a0; anything else: resume at s11
    csrr t6, mcause
    li t5, 8
    bne t6, t5, handler_fault
    fence.spec              # hardened entry: no speculation down the syscall path
    la t4, ksecret
    add t4, t4, a0
    lbu t4, 0(t4)
    csrr t6, mepc
    addi t6, t6, 4
    csrw mepc, t6
    mret
handler_fault:
    fence.spec
    csrw mepc, s11
    mret

tpm_stage:                  # GetRandom(n) through the TPM FIFO into the kernel staging buffer
    li s2, 0x{tpm:x}
    li t0, 1
    sb t0, 0x10(s2)
    li t0, {n & 0xFF}
    sb t0, 0x10(s2)
    li t0, {n >> 8}
    sb t0, 0x10(s2)
    li t0, 1
    sd t0, 0(s2)
stage_poll:
    ld t0, 8(s2)
    andi t0, t0, 2
    beqz t0, stage_poll
    la t1, ksecret
    li t2, 0
    li t3, {n}
stage_copy:
    lbu t0, 0x10(s2)
    add t4, t1, t2
    sb t0, 0(t4)
    addi t2, t2, 1
    blt t2, t3, stage_copy
    ebreak
"""
        data = f"""
.org 0x{L.kernel_secret:x}
ksecret:
    .byte {", ".join(str(b) for b in (secret if self.cfg.secret_source == "memory" else bytes(n)))}
"""
        user = f"""
.org 0x{L.attacker + 0x400:x}
user_syscall:
    ecall
    ebreak

user_attack:                # a0 = kernel address
    li t1, {L.stride}
    li t2, 0x{L.probe:x}
    la s11, user_recover
    lbu t0, 0(a0)
    mul t0, t0, t1
    add t0, t0, t2
    lb t0, 0(t0)
user_recover:
    ebreak
"""
        return kernel + data + receiver_source(L) + user

    def setup(self):
        self.build(self.source())
        self.phase("kernel_boot", mode=KERNEL)
        if self.cfg.secret_source == "tpm" and self.cfg.secret:
            self.phase("tpm_stage", mode=KERNEL)
        self.phase("probe_init")

    def expected_secret(self) -> bytes:
        if self.cfg.secret_source == "tpm" and self.cfg.secret:
            return self.sim.read_bytes(self.image.symbols["ksecret"], len(self.cfg.secret))
        return self.cfg.secret

    def leak_byte(self, index: int, trial: int) -> int | None:
        self.phase("probe_flush")
        self.phase("user_syscall", {10: index})
        self.phase("user_attack", {10: self.image.symbols["ksecret"] + index})
        return self.reload_and_decode(index, trial)

    def run(self) -> AttackReport:
        report = super().run()
        if self.cfg.secret_source == "tpm":
            report.note = (report.note + " " if report.note else "") + \
                "secret is TPM output staged in kernel memory"
        return report


def run_meltdown(config: AttackConfig | None = None) -> AttackReport:
    return Meltdown(config or AttackConfig(secret=b"\x2a")).run()


# -- code patching ----------------------------------------------------------------

class CodePatch(_Harness):
    """A DMZ program rewrites an attested green routine and then invokes it."""

    name = "integrity"
    GOOD = 42
    EVIL = 7

    def source(self) -> str:
        L = self.L
        patch = encode(Instruction("addi", 10, 0, 0, self.EVIL))
        return f"""
.org 0x{L.victim:x}
service:
    li a0, {self.GOOD}
    ebreak

.org 0x{L.attacker:x}
patcher:
    la t0, service
    li t1, 0x{patch:x}
    sw t1, 0(t0)
    ebreak
"""

    def run(self) -> AttackReport:
        self.build(self.source())
        self.phase("patcher")
        report = self.sim.call(self.image.symbols["service"], None, USER)
        violations = self.sim.platform.verify_integrity()
        executed_patch = report.status == "halted" and self.sim.state.regs[10] == self.EVIL
        detected = [t for t in self.sim.traps if t.cause.value == "IntegrityViolation"]
        secret = bytes([self.EVIL])
        recovered = [self.EVIL] if executed_patch else [None]
        if detected:
            note = "tampered attested code detected at fetch; execution stopped"
        elif violations:
            note = "tampered code ran; post-run attestation flags " + \
                ", ".join(f"[0x{v.start:x}, 0x{v.end:x})" for v in violations)
        else:
            note = "no tampering observed"
        self.per_byte.append({"index": 0, "expected": self.EVIL, "recovered": recovered[0], "hits": []})
        return self.report(secret, recovered, note)


def run_integrity(config: AttackConfig | None = None) -> AttackReport:
    return CodePatch(config or AttackConfig()).run()


RUNNERS = {
    "flush_reload": run_flush_reload,
    "spectre_v1": run_spectre_v1,
    "meltdown": run_meltdown,
    "integrity": run_integrity,
}


def run_attack(name: str, config: AttackConfig) -> AttackReport:
    name = name.replace("-", "_")
    aliases = {"spectre": "spectre_v1", "flushreload": "flush_reload"}
    return RUNNERS[aliases.get(name, name)](config)


# -- covert channel ---------------------------------------------------------------

@dataclass
class BenchReport:
    bytes_sent: int
    bits_sent: int
    bits_correct: int
    cycles: int
    bandwidth_bits_per_kcycle: float
    error_rate: float
    seed: int
    mitigations: MitigationSet

    def to_dict(self) -> dict:
        return {
            "report": "covert_channel",
            "bytes_sent": self.bytes_sent,
            "bits_sent": self.bits_sent,
            "bits_correct": self.bits_correct,
            "cycles": self.cycles,
            "bandwidth_bits_per_kcycle": self.bandwidth_bits_per_kcycle,
            "error_rate": self.error_rate,
            "seed": self.seed,
            "mitigations": {n: getattr(self.mitigations, n) for n in MITIGATION_NAMES},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def covert_channel_bench(n_bytes: int = 128, seed: int = 0, mitigations: MitigationSet | None = None,
                         sim_config: Config | None = None) -> BenchReport:
    """Stream a seeded random message through the Flush+Reload channel.

    Bytes the receiver cannot decode count as 0x00. Bandwidth is raw
    channel throughput (bits sent per thousand cycles); quality is the error rate.
    """
    if n_bytes < 1:
        raise ValueError("message length must be at least one byte")
    message = random.Random(seed).randbytes(n_bytes)
    cfg = AttackConfig(secret=message, seed=seed, mitigations=mitigations or MitigationSet(),
                       sim_config=sim_config)
    harness = FlushReload(cfg)
    report = harness.run()
    bits_sent = 8 * n_bytes
    received = report.recovered_bytes
    bits_correct = sum(8 - bin(a ^ b).count("1") for a, b in zip(message, received))
    cycles = report.total_cycles
    return BenchReport(n_bytes, bits_sent, bits_correct, cycles, bits_sent * 1000 / cycles,
                       1 - bits_correct / bits_sent, seed, cfg.mitigations)


# -- matrix -----------------------------------------------------------------------

def matrix_rows() -> list[MitigationSet]:
    return [MitigationSet.none()] + [MitigationSet.parse(n) for n in MITIGATION_NAMES] + [MitigationSet.all()]


@dataclass
class MatrixReport:
    rows: list[tuple[MitigationSet, dict[str, AttackReport]]]
    trials: int
    seed: int
    secret: bytes

    def verdict(self, row_label: str, attack: str) -> str:
        for ms, cells in self.rows:
            if ms.label() == row_label:
                return cells[attack].verdict
        raise KeyError(row_label)

    def to_dict(self) -> dict:
        return {
            "report": "matrix",
            "attacks": list(ATTACKS),
            "trials": self.trials,
            "seed": self.seed,
            "secret_hex": self.secret.hex(),
            "rows": [
                {
                    "mitigations": ms.label(),
                    "cells": {a: {"verdict": r.verdict, "accuracy": r.accuracy, "total_cycles": r.total_cycles}
                              for a, r in cells.items()},
                }
                for ms, cells in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        head = f"{'mitigations':<24}" + "".join(f"{ATTACK_LABELS[a]:>15}" for a in ATTACKS)
        lines = [head, "-" * len(head)]
        for ms, cells in self.rows:
            lines.append(f"{ms.label():<24}" + "".join(f"{cells[a].verdict:>15}" for a in ATTACKS))
        return "\n".join(lines)


def _matrix_cell(args):
    attack, ms, secret, trials, seed, sim_config = args
    cfg = AttackConfig(secret=secret, trials=trials, seed=seed, mitigations=ms, sim_config=sim_config)
    return RUNNERS[attack](cfg)


def mitigation_matrix(trials: int = 1, seed: int = 0, secret: bytes = b"TRISA",
                      sim_config: Config | None = None, workers: int = 1) -> MatrixReport:
    """Every attack under no mitigation, each single mitigation, and all of them."""
    rows = matrix_rows()
    jobs = [(a, ms, secret, trials, seed, sim_config) for ms in rows for a in ATTACKS]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_matrix_cell, jobs))
    else:
        results = [_matrix_cell(j) for j in jobs]
    it = iter(results)
    table = [(ms, {a: next(it) for a in ATTACKS}) for ms in rows]
    return MatrixReport(table, trials, seed, secret)


def load_report_schema() -> dict:
    """JSON Schema covering every report the CLI writes."""
    from importlib.resources import files
    return json.loads(files(__package__).joinpath("report_schema.json").read_text(encoding="utf-8"))
