"""Transient execution inside the core: squash, commit, barriers and faulting loads."""
import dataclasses
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import run_source
from properties import architectural_state, check_squash, random_spec_program
from trisa import Config, MitigationSet, PrivilegeMode, Simulator, assemble
from trisa.config import SpeculationConfig
from trisa.microarch import DRAM

FORCED = dataclasses.replace(Config(), speculation=SpeculationConfig(force_mispredict=True))
NO_SPEC = dataclasses.replace(Config(), speculation=SpeculationConfig(enabled=False))


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_squash_restores_architectural_state(seed):
    stats = check_squash(random_spec_program(random.Random(seed)))
    assert stats.get("squashes", 0) == stats.get("mispredictions", 0)


def test_predicted_execution_matches_non_speculative():
    commits = squashes = 0
    for seed in range(30):
        image = assemble(random_spec_program(random.Random(seed)))
        a, b = Simulator(Config(), image=image), Simulator(NO_SPEC, image=image)
        a.run(100_000)
        b.run(100_000)
        assert architectural_state(a) == architectural_state(b)
        commits += a.stats["commits"]
        squashes += a.stats["squashes"]
    assert commits > 0 and squashes > 0


SHADOW = """.org 0x10000
    li s0, 0x30000
    li s1, 0x30040
    ld t3, 0(s0)
    li t0, 1
    beqz t0, shadow
    j after
shadow:
{shadow}
after:
{after}
    ebreak
.org 0x30000
    .dword 0x1111, 0, 0, 0, 0, 0, 0, 0
    .dword 0x2222
"""


def test_transient_load_leaves_line_cached():
    src = SHADOW.format(shadow="    ld a0, 0(s1)", after="""    rdcycle t0
    ld t1, 0(s1)
    rdcycle t2
    sub a1, t2, t0""")
    sim, r = run_source(src, FORCED)
    assert r.status == "halted"
    assert sim.reg("a0") == 0  # the shadow write to a0 was squashed
    assert sim.reg("t1") == 0x2222
    assert sim.reg("a1") == 2 + FORCED.cache.l1.hit_latency
    transient = sim.trace.transient()
    assert [(t.address, t.kind) for t in transient] == [(0x30040, "read")]
    assert sim.stats["squashes"] == 1


def test_squashed_store_is_never_observed():
    # shadow stores 0x77 to s0 and reloads it (forwarding inside the window)
    shadow = """    li a2, 0x77
    sd a2, 0(s0)
    ld a3, 0(s0)
    slli a3, a3, 6
    add a3, a3, s0
    ld a4, 0(a3)"""
    after = """    ld a0, 0(s0)
    bnez zero, late
    j done
late:
    ld a1, 0(s0)
    sd a1, 8(s0)
done:"""
    sim, r = run_source(SHADOW.format(shadow=shadow, after=after), FORCED)
    assert r.status == "halted"
    assert sim.reg("a0") == 0x1111
    assert sim.read_bytes(0x30000, 16) == (0x1111).to_bytes(8, "little") + bytes(8)
    # the in-window reload saw the buffered value and touched line 0x30000 + 0x77*64
    assert any(t.address == 0x30000 + 0x77 * 64 for t in sim.trace.transient())
    # a later window reading the same address sees memory, not the dead store
    late_reads = [t for t in sim.trace.transient() if t.address == 0x30000 and t.kind == "read"]
    assert late_reads
    assert not any(t.kind == "write" for t in sim.trace if t.address == 0x30000)


def _fenced(source: str) -> str:
    out = []
    for line in source.splitlines():
        out.append(line)
        stripped = line.strip()
        if stripped.endswith(":") or stripped.split(" ")[0] in ("beq", "bne", "blt", "bge", "bltu", "bgeu"):
            out.append("    fence.spec")
    return "\n".join(out) + "\n"


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_barrier_after_every_branch_blocks_transient_access(seed):
    src = _fenced(random_spec_program(random.Random(seed)))
    for cfg in (FORCED, Config()):
        sim, r = run_source(src, cfg)
        assert r.status == "halted"
        assert sim.trace.transient() == []


def test_window_budget_stalls_long_shadows():
    cfg = dataclasses.replace(FORCED, speculation=SpeculationConfig(force_mispredict=True, window=3,
                                                                    resolve_delay=500))
    shadow = "\n".join(f"    ld a{k % 6}, {8 * k}(s0)" for k in range(8))
    sim, r = run_source(SHADOW.format(shadow=shadow, after=""), cfg)
    assert len(sim.trace.transient()) == 3
    assert sim.stats["stall_cycles"] > 0


def test_branch_inside_shadow_waits_for_outer_resolution():
    shadow = """    ld a0, 0(s0)
    beqz zero, inner
inner:
    ld a1, 0(s1)"""
    sim, r = run_source(SHADOW.format(shadow=shadow, after=""), FORCED)
    assert [t.address for t in sim.trace.transient()] == [0x30000]
    assert sim.stats["windows"] == 1


# -- faulting loads (user mode reading the kernel zone) ----------------------

MELT = """.org 0x2440
secret:
    .byte 0x2a
.org 0x10000
warm:
    li s0, 0x2440
    lbu t0, 0(s0)
    ebreak
.org 0x100000
user:
    li s0, 0x2440
    li s1, 0x120000
    lbu t0, 0(s0)
    slli t0, t0, 12
    add t0, t0, s1
    ld t1, 0(t0)
    ebreak
"""


def _melt(mitigations):
    sim = Simulator(Config(), image=assemble(MELT), mitigations=mitigations)
    # the victim touches its secret in kernel mode, so it sits in the cache
    sim.call(sim.image.symbol("warm"), mode=PrivilegeMode.KERNEL)
    report = sim.call(sim.image.symbol("user"), mode=PrivilegeMode.USER)
    return sim, report


def test_deferred_check_runs_dependents_then_faults():
    sim, r = _melt(MitigationSet())
    assert r.status == "trapped" and r.traps[-1]["cause"] == "LoadAccessFault"
    assert r.traps[-1]["faulting_pc"] == sim.image.symbol("user") + 12
    assert sim.reg("t1") == 0
    assert sim.hierarchy.probe(0x120000 + 0x2A * 4096) != DRAM
    assert sim.hierarchy.probe(0x120000) == DRAM


def test_kpti_forwards_zero():
    sim, r = _melt(MitigationSet(kpti=True))
    assert r.traps[-1]["cause"] == "LoadAccessFault"
    assert sim.hierarchy.probe(0x120000) != DRAM
    assert sim.hierarchy.probe(0x120000 + 0x2A * 4096) == DRAM


def test_immediate_check_faults_before_any_effect():
    sim, r = _melt(MitigationSet(immediate_check=True))
    assert r.traps[-1]["cause"] == "LoadAccessFault"
    assert sim.trace.transient() == []
    assert all(t.address < 0x100000 for t in sim.trace)  # only the kernel-mode warm-up


def test_user_store_to_kernel_traps():
    src = """.org 0x100000
user:
    li t0, 0x2000
    sd t0, 0(t0)
    ebreak
"""
    sim = Simulator(Config(), image=assemble(src), mitigations=MitigationSet(immediate_check=True))
    r = sim.call(sim.image.symbol("user"), mode=PrivilegeMode.USER)
    assert r.traps[-1]["cause"] == "StoreAccessFault"
    assert sim.read_bytes(0x2000, 8) == bytes(8)
