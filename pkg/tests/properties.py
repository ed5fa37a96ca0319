"""Property checks shared by the unit suites and the acceptance run.

Each ``check_*`` takes a concrete case and raises AssertionError on a
violation. Cases come either from hypothesis strategies or from the seeded
``random_*`` generators.
"""
from __future__ import annotations

import dataclasses
import random

from hypothesis import strategies as st

from trisa import Config, Simulator, Trap, assemble
from trisa import capability as cm
from trisa.capability import Capability, CapabilityFault, Perm
from trisa.config import CacheConfig, CacheLevelConfig, SpeculationConfig
from trisa.isa import DDC, Instruction, encode

SMALL_CACHE = Config(cache=CacheConfig(CacheLevelConfig(1024, 64, 2, 4), CacheLevelConfig(2048, 64, 4, 12),
                                       CacheLevelConfig(4096, 64, 4, 40, True)))

# -- capability monotonicity -------------------------------------------------

OPS = ("bounds", "perms", "offset", "seal", "unseal", "widen")


def random_chain(rng: random.Random, length: int = 12):
    root_base = rng.randrange(0, 1 << 20) * 16
    root_len = rng.randrange(1, 1 << 16)
    perms = rng.randrange(0, 128)
    ops = []
    for _ in range(length):
        ops.append((rng.choice(OPS), rng.randrange(-64, 1 << 16), rng.randrange(0, 1 << 16), rng.randrange(0, 128)))
    return (root_base, root_len, perms), ops


chain_cases = st.tuples(
    st.tuples(st.integers(0, 1 << 20).map(lambda v: v * 16), st.integers(1, 1 << 16), st.integers(0, 127)),
    st.lists(st.tuples(st.sampled_from(OPS), st.integers(-64, 1 << 16), st.integers(0, 1 << 16),
                       st.integers(0, 127)), max_size=12),
)


def check_chain(case) -> int:
    """Apply a derivation chain; authority must never leave the root's. Returns faults seen."""
    (base, length, perms), ops = case
    root = cm.root(base, length, Perm(perms))
    sealer = cm.root(0, 1 << 16, Perm.SEAL | Perm.UNSEAL)
    cap = root
    faults = 0
    for op, a, b, mask in ops:
        before = cap
        try:
            if op == "bounds":
                cap = cm.set_bounds(cap, cap.base + a, b)
            elif op == "perms":
                cap = cm.and_perms(cap, mask)
                assert int(cap.perms) & ~int(before.perms) == 0
            elif op == "offset":
                cap = cm.inc_offset(cap, a)
            elif op == "seal":
                cap = cm.seal(cap, cm.inc_offset(sealer, b))
            elif op == "unseal":
                cap = cm.unseal(cap, cm.inc_offset(sealer, b))
            else:  # "widen": any attempt to grow bounds must fault
                try:
                    cm.set_bounds(cap, cap.base - 1 - (a % 64), cap.length + 2 + b)
                except CapabilityFault:
                    pass
                else:
                    raise AssertionError("bounds widened")
        except CapabilityFault:
            faults += 1
            assert cap == before
        assert cm.is_subset(cap, root), f"{cap} escapes {root}"
        if before.sealed and op in ("bounds", "perms", "offset"):
            assert cap == before  # sealed values are immutable
    return faults


# -- tag integrity -----------------------------------------------------------

GRANULES = 8
BUF = 0x20000
RESULT = 0x20100
MAX_OPS = 16


def random_tag_ops(rng: random.Random, n: int = 12):
    ops = []
    for _ in range(n):
        kind = rng.choice(("csc", "plain", "plain", "cstore"))
        size = rng.choice((1, 2, 4, 8))
        ops.append((kind, rng.randrange(GRANULES), rng.randrange(16 // size) * size, size))
    return ops


tag_ops = st.lists(
    st.tuples(st.sampled_from(("csc", "plain", "cstore")), st.integers(0, GRANULES - 1),
              st.integers(0, 15), st.sampled_from((1, 2, 4, 8)))
    .map(lambda t: (t[0], t[1], t[2] // t[3] * t[3], t[3])),
    max_size=MAX_OPS,
)


CODE = 0x10000
_STORE = {1: ("sb", ".b"), 2: ("sh", ".h"), 4: ("sw", ".w"), 8: ("sd", "")}


def tag_program(ops) -> list[Instruction]:
    """Straight-line code for one case.

    s0 holds BUF, c1 is the capability being spilled, t6 the plain data.
    Every granule is read back with clc and its tag stored to RESULT.
    """
    I = Instruction  # noqa: E741
    S0, T0, T1, T6 = 8, 5, 6, 31
    code = [I("lui", S0, imm=BUF), I("cincoffset", 1, DDC, S0), I("addi", T6, 0, 0, -0x5B)]
    for kind, g, off, size in ops:
        if kind == "plain":
            code.append(I(_STORE[size][0], 0, S0, T6, 16 * g + off))
            continue
        code += [I("addi", T0, S0, 0, 16 * g + (off if kind == "cstore" else 0)), I("cincoffset", 2, DDC, T0)]
        if kind == "csc":
            code.append(I("csc", 0, 2, 1))
        else:
            code.append(I("cstore" + _STORE[size][1], 0, 2, T6))
    for g in range(GRANULES):
        code += [I("addi", T0, S0, 0, 16 * g), I("cincoffset", 2, DDC, T0), I("clc", 3, 2),
                 I("cgettag", T1, 3), I("sb", 0, S0, T1, RESULT - BUF + g)]
    code.append(I("ebreak"))
    return code


_tag_sim = None


def check_tag_program(ops) -> None:
    global _tag_sim
    if _tag_sim is None:
        cfg = dataclasses.replace(SMALL_CACHE, speculation=SpeculationConfig(enabled=False))
        _tag_sim = Simulator(cfg, record_trace=False)
    sim = _tag_sim
    code = b"".join(encode(i).to_bytes(4, "little") for i in tag_program(ops))
    sim.write_bytes(CODE, code)
    sim.write_bytes(BUF, bytes(0x200))  # setup: fresh, untagged buffer
    report = sim.call(CODE, max_steps=10_000)
    assert report.status == "halted", report.traps
    expect = [0] * GRANULES
    for kind, g, _off, _size in ops:
        expect[g] = 1 if kind == "csc" else 0
    got = list(sim.read_bytes(RESULT, GRANULES))
    assert got == expect, (got, expect)
    # anything still tagged must be the exact capability that was spilled
    spilled = sim.state.caps[1]
    for granule, cap in sim.tags.snapshot().items():
        assert cap == spilled, f"forged capability at granule {granule:#x}: {cap}"


# -- squash soundness --------------------------------------------------------

SPEC_BUF = 0x20000
SPEC_BUF_LEN = 256
_RR = ("add", "sub", "xor", "or", "and", "sll", "srl", "sra", "mul", "slt", "sltu", "addw", "subw", "mulw")
_RI = ("addi", "xori", "ori", "andi", "slti", "sltiu", "addiw")
_SH = ("slli", "srli", "srai")
_LD = (("ld", 8), ("lw", 4), ("lwu", 4), ("lh", 2), ("lhu", 2), ("lb", 1), ("lbu", 1))
_ST = (("sd", 8), ("sw", 4), ("sh", 2), ("sb", 1))
_BR = ("beq", "bne", "blt", "bge", "bltu", "bgeu")
_R = ("a0", "a1", "a2", "a3", "a4", "a5")


def random_spec_program(rng: random.Random, length: int = 40) -> str:
    """A terminating program mixing ALU work, memory traffic, capability
    spills and forward branches, so every branch opens a shadow that runs
    stores, loads and tag writes which later get squashed or committed."""
    r = lambda: rng.choice(_R)  # noqa: E731
    lines = [".org 0x10000", f"    li s0, {SPEC_BUF}", "    cincoffset c1, ddc, s0"]
    lines += [f"    li {reg}, {rng.getrandbits(64) - (1 << 63)}" for reg in _R]
    for i in range(length):
        lines.append(f"L{i}:")
        k = rng.random()
        if k < 0.25:
            lines.append(f"    {rng.choice(_RR)} {r()}, {r()}, {r()}")
        elif k < 0.35:
            lines.append(f"    {rng.choice(_RI)} {r()}, {r()}, {rng.randint(-2048, 2047)}")
        elif k < 0.40:
            lines.append(f"    {rng.choice(_SH)} {r()}, {r()}, {rng.randint(0, 63)}")
        elif k < 0.55:
            m, size = rng.choice(_LD)
            lines.append(f"    {m} {r()}, {rng.randrange(SPEC_BUF_LEN // size) * size}(s0)")
        elif k < 0.70:
            m, size = rng.choice(_ST)
            lines.append(f"    {m} {r()}, {rng.randrange(SPEC_BUF_LEN // size) * size}(s0)")
        elif k < 0.75:
            lines += [f"    addi t0, s0, {16 * rng.randrange(SPEC_BUF_LEN // 16)}", "    cincoffset c2, ddc, t0",
                      "    csc c1, (c2)"]
        elif k < 0.80:
            lines += [f"    addi t0, s0, {16 * rng.randrange(SPEC_BUF_LEN // 16)}", "    cincoffset c2, ddc, t0",
                      "    clc c3, (c2)", f"    cgettag {r()}, c3"]
        else:
            target = min(length, i + rng.randint(1, 6))
            lines.append(f"    {rng.choice(_BR)} {r()}, {r()}, L{target}")
    lines += [f"L{length}:", "    ebreak"]
    return "\n".join(lines) + "\n"


def architectural_state(sim) -> dict:
    snap = sim.state.arch_snapshot()
    snap["instret"] = sim.state.instret
    snap["memory"] = sim.read_bytes(SPEC_BUF, SPEC_BUF_LEN).hex()
    snap["tags"] = {g: str(c) for g, c in sorted(sim.tags.snapshot().items())}
    return snap


def check_squash(source: str) -> dict:
    """Run ``source`` without speculation and with every branch mispredicted.

    Architectural state must match exactly. Returns the speculative run's stats.
    """
    image = assemble(source)
    base = Config()
    plain = Simulator(dataclasses.replace(base, speculation=SpeculationConfig(enabled=False)), image=image)
    forced = Simulator(dataclasses.replace(base, speculation=SpeculationConfig(force_mispredict=True)), image=image)
    r1, r2 = plain.run(100_000), forced.run(100_000)
    assert r1.status == r2.status == "halted", (r1.traps, r2.traps)
    assert architectural_state(forced) == architectural_state(plain)
    return dict(forced.stats)


# -- TPM isolation -----------------------------------------------------------

TPM_PROGRAM = """
.org 0x10000
# Ask the TPM for a key in every slot, seal and MAC something, leave
# responses sitting in the FIFO, then read the whole register window.
start:
    li s0, 0x200000
    li s2, 0
keys:
    li t0, 2
    sb t0, 0x10(s0)
    sb s2, 0x10(s0)
    li t0, 1
    sd t0, 0(s0)
    addi s2, s2, 1
    li t1, 8
    bltu s2, t1, keys
    li t0, 3
    sb t0, 0x10(s0)
    sb zero, 0x10(s0)
    li t0, 4
    sh t0, 0x10(s0)
    li t0, 0x41424344
    sw t0, 0x10(s0)
    li t0, 1
    sd t0, 0(s0)
    li s1, 0x20000
    li s3, 0x1000
    li t2, 0
sweep:
    add t3, s0, t2
    ld t4, 0(t3)
    add t5, s1, t2
    sd t4, 0(t5)
    addi t2, t2, 8
    bltu t2, s3, sweep
    ebreak
"""


def _windows(key: bytes, width: int = 4):
    return {key[i:i + width] for i in range(len(key) - width + 1)}


def tpm_isolation_sweep(plant: bool = False) -> dict:
    """Provision every key slot through MMIO, then read every mapped address.

    The program reads the TPM register window itself. RAM, the external I/O
    device and the TPM window again are read through the simulator's load path
    in Kernel mode, the most privileged view a program can have. Returns
    counts; ``leaks`` is the number of 4-byte key fragments found.
    ``plant`` copies one key into DMZ RAM first, as a control for the detector.
    """
    sim = Simulator(SMALL_CACHE, image=assemble(TPM_PROGRAM), record_trace=False)
    report = sim.run(100_000)
    assert report.status == "halted", report.traps
    keys = sim.platform.tpm.key_material()
    assert len(keys) == 8
    if plant:
        sim.write_bytes(0x180000, keys[3])
    observed = [sim.read_bytes(0x20000, 0x1000)]
    refused = 0
    for initiator_pc in (0x10000, 0x100000):  # a green and a DMZ program
        sim.state.pc = initiator_pc
        for start, end, _zone in sim.zones.mapped():
            chunk = bytearray()
            for addr in range(start, end, 8):
                try:
                    chunk += sim._read(addr, 8, 8)  # DDC-authorised load, Kernel mode
                except Trap:
                    refused += 1
            observed.append(bytes(chunk))
    blob = b"\x00".join(observed)
    fragments = set().union(*(_windows(k) for k in keys))
    leaks = sum(1 for i in range(len(blob) - 3) if blob[i:i + 4] in fragments)
    return {"bytes_observed": sum(len(o) for o in observed), "refused": refused, "keys": len(keys), "leaks": leaks,
            "tpm_commands": sim.stats["tpm_commands"]}


def seal_round_trips(n: int, seed: int) -> dict:
    """Seal random payloads, unseal them, and try one random single-byte corruption of each blob."""
    from trisa.tpm import CreateKey, EntropySource, SealData, TpmDevice, TpmError, TpmErrorKind, UnsealData

    rng = random.Random(seed)
    dev = TpmDevice(EntropySource.deterministic(seed))
    for slot in range(8):
        dev.execute(CreateKey(slot))
    ok = detected = 0
    for _ in range(n):
        slot = rng.randrange(8)
        data = rng.randbytes(rng.randrange(0, 200))
        blob = dev.execute(SealData(slot, data))
        if dev.execute(UnsealData(slot, blob)) == data:
            ok += 1
        bad = bytearray(blob)
        bad[rng.randrange(len(bad))] ^= rng.randrange(1, 256)
        try:
            dev.execute(UnsealData(slot, bytes(bad)))
        except TpmError as exc:
            detected += exc.kind is TpmErrorKind.UNSEAL_FAILED
    return {"payloads": n, "round_trips": ok, "mutations": n, "detected": detected}
