"""Program images and their on-disk format.

Binary layout (little-endian)::

    magic   b"TRIS"
    u16     format version (1)
    u16     section count
    u64     entry address
    per section:  u8 zone id, 3 pad bytes, u64 start, u64 length
    section payloads, concatenated in table order

Symbols travel separately as a JSON object ``{"entry": int, "symbols": {name: addr}}``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

MAGIC = b"TRIS"
VERSION = 1
ZONE_IDS = {"kernel": 0, "green": 1, "dmz": 2}
ZONE_NAMES = {v: k for k, v in ZONE_IDS.items()}
_HEADER = struct.Struct("<4sHHQ")
_ENTRY = struct.Struct("<B3xQQ")


class ImageFormatError(ValueError):
    pass


@dataclass
class Section:
    zone: str
    start: int
    data: bytearray = field(default_factory=bytearray)

    @property
    def end(self) -> int:
        return self.start + len(self.data)


@dataclass
class ProgramImage:
    sections: list[Section]
    symbols: dict[str, int]
    entry: int

    def symbol(self, name: str) -> int:
        return self.symbols[name]

    def section_at(self, addr: int) -> Section | None:
        for s in self.sections:
            if s.start <= addr < s.end:
                return s
        return None

    def words(self):
        """(address, 32-bit word) over every 4-byte aligned word of every section."""
        for s in self.sections:
            for off in range(0, len(s.data) - 3, 4):
                yield s.start + off, int.from_bytes(s.data[off:off + 4], "little")

    def to_bytes(self) -> bytes:
        out = bytearray(_HEADER.pack(MAGIC, VERSION, len(self.sections), self.entry))
        for s in self.sections:
            out += _ENTRY.pack(ZONE_IDS[s.zone], s.start, len(s.data))
        for s in self.sections:
            out += s.data
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes, symbols: dict[str, int] | None = None) -> ProgramImage:
        if len(blob) < _HEADER.size:
            raise ImageFormatError("truncated header")
        magic, version, count, entry = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ImageFormatError("not a TRISA image (bad magic)")
        if version != VERSION:
            raise ImageFormatError(f"unsupported image version {version}")
        pos = _HEADER.size
        table = []
        for _ in range(count):
            if pos + _ENTRY.size > len(blob):
                raise ImageFormatError("truncated section table")
            zid, start, length = _ENTRY.unpack_from(blob, pos)
            if zid not in ZONE_NAMES:
                raise ImageFormatError(f"unknown zone id {zid}")
            table.append((ZONE_NAMES[zid], start, length))
            pos += _ENTRY.size
        sections = []
        for zone, start, length in table:
            if pos + length > len(blob):
                raise ImageFormatError("truncated section payload")
            sections.append(Section(zone, start, bytearray(blob[pos:pos + length])))
            pos += length
        if pos != len(blob):
            raise ImageFormatError("trailing bytes after last section")
        return cls(sections, dict(symbols or {}), entry)

    def symbols_json(self) -> str:
        return json.dumps({"entry": self.entry, "symbols": dict(sorted(self.symbols.items()))}, indent=2)

    def save(self, path, symbols_path=None) -> Path:
        """Write the image and its symbol map (default: ``<path>.syms.json``)."""
        path = Path(path)
        path.write_bytes(self.to_bytes())
        sym = Path(symbols_path) if symbols_path else symbols_path_for(path)
        sym.write_text(self.symbols_json() + "\n", encoding="utf-8")
        return sym

    @classmethod
    def load(cls, path, symbols_path=None) -> ProgramImage:
        path = Path(path)
        sym = Path(symbols_path) if symbols_path else symbols_path_for(path)
        symbols = {}
        if sym.exists():
            symbols = json.loads(sym.read_text(encoding="utf-8")).get("symbols", {})
        return cls.from_bytes(path.read_bytes(), symbols)


def symbols_path_for(image_path) -> Path:
    p = Path(image_path)
    return p.with_name(p.name + ".syms.json")
