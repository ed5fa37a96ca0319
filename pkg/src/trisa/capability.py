"""CHERI-style capabilities: bounds, permissions, sealing and tag memory.

Capabilities are immutable values. Every derivation returns a new capability
whose authority (address range times permission set) is contained in its
parent's; there is no operation that widens either.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace

GRANULE = 16
_ADDR_LIMIT = 1 << 64
_OTYPE_LIMIT = 1 << 16


class Perm(enum.IntFlag):
    NONE = 0
    LOAD = 1
    STORE = 2
    EXECUTE = 4
    LOAD_CAP = 8
    STORE_CAP = 16
    SEAL = 32
    UNSEAL = 64


ALL_PERMS = Perm(127)
DATA_PERMS = Perm.LOAD | Perm.STORE | Perm.EXECUTE | Perm.LOAD_CAP | Perm.STORE_CAP


class AccessKind(enum.Enum):
    LOAD = "load"
    STORE = "store"
    FETCH = "fetch"
    LOAD_CAP = "load_cap"
    STORE_CAP = "store_cap"


_REQUIRED = {
    AccessKind.LOAD: Perm.LOAD,
    AccessKind.STORE: Perm.STORE,
    AccessKind.FETCH: Perm.EXECUTE,
    AccessKind.LOAD_CAP: Perm.LOAD_CAP,
    AccessKind.STORE_CAP: Perm.STORE_CAP,
}


class FaultCause(str, enum.Enum):
    TAG_CLEARED = "TagCleared"
    SEALED = "Sealed"
    PERMISSION_DENIED = "PermissionDenied"
    BOUNDS_VIOLATION = "BoundsViolation"
    BOUNDS_ESCALATION = "BoundsEscalation"
    TYPE_MISMATCH = "TypeMismatch"


class CapabilityFault(Exception):
    def __init__(self, cause: FaultCause, detail: str = ""):
        super().__init__(f"{cause.value}{': ' + detail if detail else ''}")
        self.cause = cause


@dataclass(frozen=True, slots=True)
class Capability:
    tag: bool
    base: int
    length: int
    cursor: int
    perms: Perm
    sealed: bool = False
    otype: int = 0

    def __post_init__(self):
        if not (0 <= self.base < _ADDR_LIMIT and 0 <= self.length and self.base + self.length <= _ADDR_LIMIT):
            raise ValueError(f"bounds [{self.base:#x}, +{self.length:#x}) overflow the address space")
        if not 0 <= self.otype < _OTYPE_LIMIT:
            raise ValueError(f"otype {self.otype} does not fit 16 bits")

    @property
    def top(self) -> int:
        return self.base + self.length

    def __str__(self) -> str:
        seal = f" sealed({self.otype})" if self.sealed else ""
        tag = "" if self.tag else " untagged"
        return f"cap[{self.base:#x}..{self.top:#x}) @{self.cursor:#x} {self.perms!r}{seal}{tag}"


NULL = Capability(False, 0, 0, 0, Perm.NONE)


def root(base: int, length: int, perms: Perm = DATA_PERMS, cursor: int | None = None) -> Capability:
    return Capability(True, base, length, base if cursor is None else cursor, perms)


def _require_usable(cap: Capability) -> None:
    if not cap.tag:
        raise CapabilityFault(FaultCause.TAG_CLEARED)
    if cap.sealed:
        raise CapabilityFault(FaultCause.SEALED)


def set_bounds(cap: Capability, new_base: int, new_length: int) -> Capability:
    """Narrow ``cap`` to ``[new_base, new_base + new_length)`` with the cursor at ``new_base``."""
    _require_usable(cap)
    if new_base < cap.base or new_length < 0 or new_base + new_length > cap.top:
        raise CapabilityFault(
            FaultCause.BOUNDS_ESCALATION,
            f"[{new_base:#x}, +{new_length:#x}) not within [{cap.base:#x}, {cap.top:#x})",
        )
    return replace(cap, base=new_base, length=new_length, cursor=new_base)


def and_perms(cap: Capability, mask: Perm | int) -> Capability:
    _require_usable(cap)
    return replace(cap, perms=Perm(cap.perms & Perm(int(mask) & int(ALL_PERMS))))


def inc_offset(cap: Capability, delta: int) -> Capability:
    """Move the cursor. Untagged values may be used as plain integers."""
    if cap.tag and cap.sealed:
        raise CapabilityFault(FaultCause.SEALED)
    return replace(cap, cursor=(cap.cursor + delta) % _ADDR_LIMIT)


def _check_authority(auth: Capability, perm: Perm) -> int:
    _require_usable(auth)
    if not auth.perms & perm:
        raise CapabilityFault(FaultCause.PERMISSION_DENIED, f"missing {perm.name}")
    if not auth.base <= auth.cursor < auth.top:
        raise CapabilityFault(FaultCause.BOUNDS_VIOLATION, "otype cursor outside authorising bounds")
    if auth.cursor >= _OTYPE_LIMIT:
        raise CapabilityFault(FaultCause.BOUNDS_VIOLATION, "otype does not fit 16 bits")
    return auth.cursor


def seal(cap: Capability, sealer: Capability) -> Capability:
    otype = _check_authority(sealer, Perm.SEAL)
    _require_usable(cap)
    return replace(cap, sealed=True, otype=otype)


def unseal(cap: Capability, unsealer: Capability) -> Capability:
    otype = _check_authority(unsealer, Perm.UNSEAL)
    if not cap.tag:
        raise CapabilityFault(FaultCause.TAG_CLEARED)
    if not cap.sealed:
        raise CapabilityFault(FaultCause.TYPE_MISMATCH, "capability is not sealed")
    if cap.otype != otype:
        raise CapabilityFault(FaultCause.TYPE_MISMATCH, f"sealed with {cap.otype}, unsealer offers {otype}")
    return replace(cap, sealed=False, otype=0)


def checked_access(cap: Capability, addr: int, size: int, kind: AccessKind) -> None:
    """Raise :class:`CapabilityFault` unless ``cap`` authorises the access."""
    _require_usable(cap)
    if not cap.perms & _REQUIRED[kind]:
        raise CapabilityFault(FaultCause.PERMISSION_DENIED, f"{kind.value} needs {_REQUIRED[kind].name}")
    if addr < cap.base or addr + size > cap.top:
        raise CapabilityFault(
            FaultCause.BOUNDS_VIOLATION,
            f"[{addr:#x}, +{size}) outside [{cap.base:#x}, {cap.top:#x})",
        )


def is_subset(child: Capability, parent: Capability) -> bool:
    """True when ``child``'s range and permissions lie within ``parent``'s.

    Sealing is ignored: a sealed capability still carries authority that an
    unseal would release.
    """
    if not child.tag or child.perms == Perm.NONE or child.length == 0:
        return True
    return (
        parent.tag
        and parent.base <= child.base
        and child.top <= parent.top
        and int(child.perms) & ~int(parent.perms) == 0
    )


def to_bytes(cap: Capability) -> bytes:
    """The 16 bytes written to memory when a capability is stored.

    Only the cursor and a metadata word reach data memory; full bounds live in
    the tag side table, so plain loads of a capability granule see an address
    and an opaque word.
    """
    meta = int(cap.perms) | (int(cap.sealed) << 7) | (cap.otype << 8)
    return struct.pack("<QQ", cap.cursor, meta)


def untagged(raw: bytes) -> Capability:
    """What a capability load yields from a granule without a valid tag."""
    cursor, _meta = struct.unpack("<QQ", raw)
    return Capability(False, 0, 0, cursor, Perm.NONE)


class TagMemory:
    """One validity tag per 16-byte granule, with the capability it guards."""

    def __init__(self):
        self._caps: dict[int, Capability] = {}

    def __len__(self) -> int:
        return len(self._caps)

    def clear_range(self, addr: int, size: int) -> None:
        if not self._caps:
            return
        for g in range(addr // GRANULE, (addr + size - 1) // GRANULE + 1):
            self._caps.pop(g, None)

    def store(self, addr: int, cap: Capability) -> None:
        g = addr // GRANULE
        if cap.tag:
            self._caps[g] = cap
        else:
            self._caps.pop(g, None)

    def load(self, addr: int, raw: bytes) -> Capability:
        cap = self._caps.get(addr // GRANULE)
        return cap if cap is not None else untagged(raw)

    def is_tagged(self, addr: int) -> bool:
        return addr // GRANULE in self._caps

    def snapshot(self) -> dict[int, Capability]:
        return dict(self._caps)
