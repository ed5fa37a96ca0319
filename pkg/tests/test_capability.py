"""Capability values, derivation rules and tag memory."""
import pytest
from hypothesis import given, settings

from properties import chain_cases, check_chain, check_tag_program, tag_ops
from trisa import capability as cm
from trisa.capability import AccessKind, CapabilityFault, FaultCause, Perm, TagMemory

RW = Perm.LOAD | Perm.STORE


def fault(fn, *args):
    with pytest.raises(CapabilityFault) as info:
        fn(*args)
    return info.value.cause


def test_set_bounds_examples():
    parent = cm.root(0x1000, 0x100, RW)
    child = cm.set_bounds(parent, 0x1020, 0x10)
    assert (child.base, child.length, child.cursor, child.perms, child.tag) == (0x1020, 0x10, 0x1020, RW, True)
    assert fault(cm.set_bounds, parent, 0x1000, 0x101) is FaultCause.BOUNDS_ESCALATION
    assert fault(cm.set_bounds, parent, 0xFFF, 0x10) is FaultCause.BOUNDS_ESCALATION
    same = cm.set_bounds(cm.inc_offset(parent, 5), 0x1000, 0x100)
    assert same == parent


def test_set_bounds_rejects_untagged_and_sealed():
    cap = cm.root(0x1000, 0x100, RW)
    assert fault(cm.set_bounds, cm.NULL, 0, 0) is FaultCause.TAG_CLEARED
    sealed = cm.seal(cap, cm.inc_offset(cm.root(0, 1 << 16, Perm.SEAL), 7))
    assert fault(cm.set_bounds, sealed, 0x1000, 0x10) is FaultCause.SEALED


def test_and_perms_examples():
    cap = cm.root(0x1000, 0x100, RW)
    assert cm.and_perms(cap, Perm.LOAD).perms == Perm.LOAD
    assert cm.and_perms(cm.and_perms(cap, Perm.LOAD), RW).perms == Perm.LOAD
    empty = cm.and_perms(cm.and_perms(cap, Perm.LOAD), Perm.NONE)
    assert empty.perms == Perm.NONE
    for kind in AccessKind:
        assert fault(cm.checked_access, empty, 0x1000, 1, kind) is FaultCause.PERMISSION_DENIED


def test_seal_unseal_examples():
    cap = cm.root(0x1000, 0x100, RW)
    root = cm.root(0, 1 << 16, Perm.SEAL | Perm.UNSEAL)
    s7, s8 = cm.inc_offset(root, 7), cm.inc_offset(root, 8)
    sealed = cm.seal(cap, s7)
    assert sealed.sealed and sealed.otype == 7
    assert cm.unseal(sealed, s7) == cap
    assert fault(cm.unseal, sealed, s8) is FaultCause.TYPE_MISMATCH
    assert fault(cm.checked_access, sealed, 0x1000, 1, AccessKind.LOAD) is FaultCause.SEALED
    assert fault(cm.checked_access, sealed, 0x1000, 1, AccessKind.STORE) is FaultCause.SEALED
    assert fault(cm.seal, cap, cm.and_perms(s7, Perm.UNSEAL)) is FaultCause.PERMISSION_DENIED
    assert fault(cm.unseal, cap, s7) is FaultCause.TYPE_MISMATCH


def test_checked_access_examples():
    cap = cm.root(0x1000, 8, RW)
    cm.checked_access(cap, 0x1000, 8, AccessKind.LOAD)
    assert fault(cm.checked_access, cap, 0x1001, 8, AccessKind.LOAD) is FaultCause.BOUNDS_VIOLATION
    load_only = cm.and_perms(cap, Perm.LOAD)
    assert fault(cm.checked_access, load_only, 0x1000, 1, AccessKind.STORE) is FaultCause.PERMISSION_DENIED
    assert fault(cm.checked_access, cm.NULL, 0, 1, AccessKind.LOAD) is FaultCause.TAG_CLEARED


def test_bounds_cannot_overflow_address_space():
    with pytest.raises(ValueError):
        cm.Capability(True, (1 << 64) - 4, 8, 0, RW)


def test_tag_memory_clears_on_overlapping_store():
    tags = TagMemory()
    cap = cm.root(0x100, 0x10, RW)
    tags.store(0x40, cap)
    assert tags.is_tagged(0x4F) and tags.load(0x40, bytes(16)) == cap
    tags.clear_range(0x3F, 2)  # straddles into the granule
    assert not tags.is_tagged(0x40)
    raw = cm.to_bytes(cap)
    forged = tags.load(0x40, raw)
    assert not forged.tag and forged.cursor == cap.cursor


@settings(max_examples=3_000, deadline=None)
@given(chain_cases)
def test_derivation_chains_are_monotone(case):
    check_chain(case)


@settings(max_examples=2_000, deadline=None)
@given(tag_ops)
def test_plain_stores_never_leave_forged_tags(ops):
    check_tag_program(ops)
