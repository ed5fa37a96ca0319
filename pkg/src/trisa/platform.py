"""Zoned system model: address map, dual buses, devices and integrity records.

Layout (default, see :class:`~trisa.config.ZonesConfig`)::

    kernel       0x0000_1000 .. 0x0001_0000   privileged RAM
    green        0x0001_0000 .. 0x0010_0000   trusted RAM
    dmz          0x0010_0000 .. 0x0020_0000   Internet-facing RAM
    tpm_mmio     0x0020_0000 .. 0x0020_1000   TPM command/status/FIFO registers
    external_io  0x0030_0000 .. 0x0030_1000   Bus B staging device

Bus A joins the internal side (green, kernel, the CPU itself and the TPM
registers) to the DMZ. Bus B joins the DMZ to external I/O. Nothing joins
external I/O to the internal side.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import NamedTuple

from .capability import TagMemory
from .config import ZonesConfig
from .state import MachineState, PrivilegeMode, default_caps
from .tpm import EntropySource, TpmDevice


class Zone(str, enum.Enum):
    KERNEL = "kernel"
    GREEN = "green"
    DMZ = "dmz"
    TPM_MMIO = "tpm_mmio"
    EXTERNAL_IO = "external_io"
    CPU = "cpu"  # initiator of instruction fetches


RAM_ZONES = (Zone.KERNEL, Zone.GREEN, Zone.DMZ)
DEVICE_ZONES = (Zone.TPM_MMIO, Zone.EXTERNAL_IO)
_INTERNAL = frozenset({Zone.GREEN, Zone.KERNEL, Zone.CPU})


class BusFault(Exception):
    def __init__(self, reason: str, addr: int, detail: str = ""):
        super().__init__(f"{reason} at 0x{addr:x}{': ' + detail if detail else ''}")
        self.reason = reason  # "NoRoute" or "Unmapped"
        self.addr = addr


class PrivilegeFault(Exception):
    """User-mode access to the kernel zone."""

    def __init__(self, addr: int):
        super().__init__(f"kernel address 0x{addr:x} needs Kernel mode")
        self.addr = addr


class ImageError(Exception):
    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind  # "UnmappedSection" or "Overlap"


class Route(NamedTuple):
    zone: Zone
    bus: str  # "local", "A" or "B"


class ZoneMap:
    def __init__(self, cfg: ZonesConfig | None = None):
        cfg = cfg or ZonesConfig()
        self.cfg = cfg
        self.ranges = {z: getattr(cfg, z.value) for z in Zone if z is not Zone.CPU}
        self._ordered = sorted(((r.start, r.end, z) for z, r in self.ranges.items()))
        self.span_end = max(r.end for r in self.ranges.values())

    def zone_of(self, addr: int) -> Zone | None:
        for start, end, z in self._ordered:
            if start <= addr < end:
                return z
        return None

    def range_of(self, zone: Zone):
        return self.ranges[zone]

    def mapped(self):
        """(start, end, zone) for every mapped range, in address order."""
        return list(self._ordered)


def bus_between(initiator: Zone, target: Zone) -> str | None:
    """Bus a request travels from ``initiator`` to ``target`` or None when no route exists."""
    if initiator in _INTERNAL and target in (Zone.GREEN, Zone.KERNEL, Zone.TPM_MMIO):
        return "local"
    if initiator is target:
        return "local"
    if (initiator in _INTERNAL and target is Zone.DMZ) or (initiator is Zone.DMZ and target in _INTERNAL):
        return "A"
    if {initiator, target} == {Zone.DMZ, Zone.EXTERNAL_IO}:
        return "B"
    return None


def route(zones: ZoneMap, initiator: Zone, addr: int, kind: str = "read",
          mode: PrivilegeMode = PrivilegeMode.KERNEL, size: int = 1) -> Route:
    """Resolve ``addr`` and check that ``initiator`` may reach it.

    Raises :class:`BusFault` for unmapped addresses or forbidden bus pairs and
    :class:`PrivilegeFault` for user-mode access to the kernel zone. The
    caller decides whether a privilege fault is raised now or deferred.
    """
    target = zones.zone_of(addr)
    if target is None or zones.zone_of(addr + size - 1) is not target:
        raise BusFault("Unmapped", addr)
    if kind == "fetch" and target in DEVICE_ZONES:
        raise BusFault("NoRoute", addr, "devices are not executable")
    bus = bus_between(initiator, target)
    if bus is None:
        raise BusFault("NoRoute", addr, f"{initiator.value} -> {target.value}")
    if target is Zone.KERNEL and mode is not PrivilegeMode.KERNEL:
        raise PrivilegeFault(addr)
    return Route(target, bus)


class ExternalIo:
    """Uncached staging buffer on Bus B; stands in for the network side."""

    def __init__(self, size: int):
        self.data = bytearray(size)

    def mmio_read(self, offset: int, size: int) -> bytes:
        return bytes(self.data[offset:offset + size])

    def mmio_write(self, offset: int, data: bytes) -> bool:
        self.data[offset:offset + len(data)] = data
        return False


class PhysicalMemory:
    """Backing store for the RAM zones."""

    def __init__(self, zones: ZoneMap):
        self.zones = zones
        self.banks = [(zones.ranges[z].start, zones.ranges[z].end, bytearray(zones.ranges[z].size))
                      for z in RAM_ZONES]

    def _locate(self, addr: int, size: int) -> tuple[bytearray, int]:
        for start, end, buf in self.banks:
            if start <= addr and addr + size <= end:
                return buf, addr - start
        raise BusFault("Unmapped", addr, "not RAM")

    def read(self, addr: int, size: int) -> bytes:
        buf, off = self._locate(addr, size)
        return bytes(buf[off:off + size])

    def write(self, addr: int, data: bytes) -> None:
        buf, off = self._locate(addr, len(data))
        buf[off:off + len(data)] = data

    def read_u32(self, addr: int) -> int:
        buf, off = self._locate(addr, 4)
        return int.from_bytes(buf[off:off + 4], "little")

    def digest(self, start: int, end: int) -> bytes:
        buf, off = self._locate(start, end - start)
        return hashlib.sha256(buf[off:off + end - start]).digest()


@dataclass(frozen=True)
class IntegrityRecord:
    start: int
    end: int  # exclusive
    zone: str
    digest: bytes

    def __contains__(self, addr: int) -> bool:
        return self.start <= addr < self.end

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "zone": self.zone, "digest": self.digest.hex()}


def verify_integrity(records, memory: PhysicalMemory) -> list[IntegrityRecord]:
    """Records whose region no longer hashes to the recorded digest. Empty means Ok."""
    return [r for r in records if memory.digest(r.start, r.end) != r.digest]


class Platform:
    """Memory, tag table, devices and integrity records of one simulated board."""

    def __init__(self, zones: ZonesConfig | ZoneMap | None = None, entropy: EntropySource | None = None):
        self.zones = zones if isinstance(zones, ZoneMap) else ZoneMap(zones)
        self.memory = PhysicalMemory(self.zones)
        self.tags = TagMemory()
        self.tpm = TpmDevice(entropy)
        self.external_io = ExternalIo(self.zones.ranges[Zone.EXTERNAL_IO].size)
        self.devices = {Zone.TPM_MMIO: self.tpm, Zone.EXTERNAL_IO: self.external_io}
        self.records: list[IntegrityRecord] = []
        self.dirty: set[IntegrityRecord] = set()

    def device_at(self, zone: Zone):
        return self.devices[zone]

    def offset_in(self, zone: Zone, addr: int) -> int:
        return addr - self.zones.ranges[zone].start

    def load_image(self, image) -> tuple[MachineState, list[IntegrityRecord]]:
        """Copy sections into memory and attest green and kernel sections.

        Returns a reset machine state whose pc is the image entry point.
        """
        spans = []
        for sec in image.sections:
            end = sec.start + len(sec.data)
            if not sec.data:
                continue
            zone = self.zones.zone_of(sec.start)
            if zone not in RAM_ZONES or self.zones.zone_of(end - 1) is not zone:
                raise ImageError("UnmappedSection", f"[0x{sec.start:x}, 0x{end:x}) is not inside one RAM zone")
            for s, e in spans:
                if sec.start < e and s < end:
                    raise ImageError("Overlap", f"[0x{sec.start:x}, 0x{end:x}) overlaps [0x{s:x}, 0x{e:x})")
            spans.append((sec.start, end))
        for sec in image.sections:
            if sec.data:
                self.memory.write(sec.start, bytes(sec.data))
                self.tags.clear_range(sec.start, len(sec.data))
        self.records = [
            IntegrityRecord(s, e, self.zones.zone_of(s).value, self.memory.digest(s, e))
            for s, e in sorted(spans)
            if self.zones.zone_of(s) in (Zone.GREEN, Zone.KERNEL)
        ]
        self.dirty = set()
        state = MachineState(pc=image.entry, caps=default_caps(self.zones.span_end))
        return state, list(self.records)

    def note_write(self, addr: int, size: int) -> None:
        for r in self.records:
            if addr < r.end and r.start < addr + size:
                self.dirty.add(r)

    def verify_integrity(self) -> list[IntegrityRecord]:
        return verify_integrity(self.records, self.memory)
