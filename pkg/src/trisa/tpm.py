"""Discrete TPM model and entropy sources.

The device keeps its key slots, PCR bank and scratch RAM in Python objects
that are never part of the CPU address map. The only CPU-visible surface is
four MMIO registers::

    0x00  CMD       write 1 (GO) to execute the command queued in the FIFO
    0x08  STATUS    bit0 READY, bit1 RESPONSE, bit2 ERROR, bits 8..15 error code
    0x10  FIFO      writes push command bytes, reads pop response bytes
    0x18  RESP_LEN  response bytes still unread

Every command is HMAC-SHA256 based. Sealing XORs the payload with a keystream
derived from the slot key and appends an authentication tag.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import os
import struct
from dataclasses import dataclass

NUM_SLOTS = 8
NUM_PCRS = 8
DIGEST = 32
NONCE = 16

REG_CMD = 0x00
REG_STATUS = 0x08
REG_FIFO = 0x10
REG_RESP_LEN = 0x18

STATUS_READY = 1
STATUS_RESPONSE = 2
STATUS_ERROR = 4


class EntropySource:
    """Byte stream feeding the TPM.

    ``deterministic(seed)`` is HMAC-SHA256 in counter mode keyed by the seed,
    so equal seeds give equal streams. ``system()`` stands in for an ideal
    hardware source (the quantum RNG) and reads the OS generator.
    """

    def __init__(self, seed: int | None):
        self.seed = seed
        self._key = b"trisa-entropy:" + (seed or 0).to_bytes(16, "little", signed=True)
        self._counter = 0
        self._pool = b""

    @classmethod
    def deterministic(cls, seed: int) -> EntropySource:
        return cls(seed)

    @classmethod
    def system(cls) -> EntropySource:
        return cls(None)

    @property
    def kind(self) -> str:
        return "System" if self.seed is None else "Deterministic"

    def next(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("n must be non-negative")
        if self.seed is None:
            return os.urandom(n)
        while len(self._pool) < n:
            block = hmac.new(self._key, self._counter.to_bytes(8, "little"), hashlib.sha256).digest()
            self._counter += 1
            self._pool += block
        out, self._pool = self._pool[:n], self._pool[n:]
        return out


def entropy_next(source: EntropySource, n: int) -> bytes:
    return source.next(n)


class TpmErrorKind(str, enum.Enum):
    BAD_SLOT = "BadSlot"
    BAD_COMMAND = "BadCommand"
    VERIFY_FAILED = "VerifyFailed"
    UNSEAL_FAILED = "UnsealFailed"

    @property
    def code(self) -> int:
        return list(TpmErrorKind).index(self) + 1


class TpmError(Exception):
    def __init__(self, kind: TpmErrorKind, detail: str = ""):
        super().__init__(f"{kind.value}{': ' + detail if detail else ''}")
        self.kind = kind


# Commands ----------------------------------------------------------------

@dataclass(frozen=True)
class GetRandom:
    n: int


@dataclass(frozen=True)
class CreateKey:
    slot: int


@dataclass(frozen=True)
class Hmac:
    slot: int
    message: bytes


@dataclass(frozen=True)
class Verify:
    slot: int
    message: bytes
    mac: bytes


@dataclass(frozen=True)
class SealData:
    slot: int
    data: bytes


@dataclass(frozen=True)
class UnsealData:
    slot: int
    blob: bytes


@dataclass(frozen=True)
class PcrExtend:
    index: int
    value: bytes


@dataclass(frozen=True)
class PcrRead:
    index: int


@dataclass(frozen=True)
class Quote:
    slot: int
    indices: tuple[int, ...]


VERIFY_OK = b"\x01"

_OPCODES = {GetRandom: 1, CreateKey: 2, Hmac: 3, Verify: 4, SealData: 5,
            UnsealData: 6, PcrExtend: 7, PcrRead: 8, Quote: 9}


def encode_command(cmd) -> bytes:
    """Serialise a command into the byte sequence written to the FIFO."""
    op = bytes([_OPCODES[type(cmd)]])
    match cmd:
        case GetRandom(n):
            return op + struct.pack("<H", n)
        case CreateKey(slot):
            return op + bytes([slot])
        case Hmac(slot, msg) | SealData(slot, msg) | UnsealData(slot, msg):
            return op + bytes([slot]) + struct.pack("<H", len(msg)) + msg
        case Verify(slot, msg, mac):
            return op + bytes([slot]) + struct.pack("<H", len(msg)) + msg + mac
        case PcrExtend(index, value):
            return op + bytes([index]) + struct.pack("<H", len(value)) + value
        case PcrRead(index):
            return op + bytes([index])
        case Quote(slot, indices):
            mask = 0
            for i in indices:
                mask |= 1 << i
            return op + bytes([slot, mask])
    raise TypeError(f"not a TPM command: {cmd!r}")


def decode_command(buf: bytes):
    bad = TpmError(TpmErrorKind.BAD_COMMAND, "malformed command")
    if not buf:
        raise bad
    op, body = buf[0], buf[1:]

    def with_len(expect_tail: int = 0):
        if len(body) < 3:
            raise bad
        slot, (n,) = body[0], struct.unpack_from("<H", body, 1)
        if len(body) != 3 + n + expect_tail:
            raise bad
        return slot, body[3:3 + n], body[3 + n:]

    if op == 1 and len(body) == 2:
        return GetRandom(struct.unpack("<H", body)[0])
    if op == 2 and len(body) == 1:
        return CreateKey(body[0])
    if op == 3:
        slot, msg, _ = with_len()
        return Hmac(slot, msg)
    if op == 4:
        slot, msg, mac = with_len(DIGEST)
        return Verify(slot, msg, mac)
    if op == 5:
        slot, data, _ = with_len()
        return SealData(slot, data)
    if op == 6:
        slot, blob, _ = with_len()
        return UnsealData(slot, blob)
    if op == 7:
        idx, value, _ = with_len()
        return PcrExtend(idx, value)
    if op == 8 and len(body) == 1:
        return PcrRead(body[0])
    if op == 9 and len(body) == 2:
        return Quote(body[0], tuple(i for i in range(NUM_PCRS) if body[1] >> i & 1))
    raise bad


class TpmDevice:
    """The discrete TPM: private key slots, PCRs and an on-chip HMAC engine."""

    def __init__(self, entropy: EntropySource | None = None):
        self.entropy = entropy or EntropySource.deterministic(0)
        self._slots: list[bytes | None] = [None] * NUM_SLOTS
        self._pcrs = [bytes(DIGEST) for _ in range(NUM_PCRS)]
        self._ram = bytearray(4096)  # device scratch, not address mapped
        self._cmd_fifo = bytearray()
        self._resp_fifo = bytearray()
        self._status = STATUS_READY
        self.commands_executed = 0

    # -- command engine ----------------------------------------------------

    def _key(self, slot: int, missing: TpmErrorKind = TpmErrorKind.BAD_SLOT) -> bytes:
        if not 0 <= slot < NUM_SLOTS:
            raise TpmError(TpmErrorKind.BAD_SLOT, f"slot {slot} out of range")
        key = self._slots[slot]
        if key is None:
            raise TpmError(missing, f"slot {slot} holds no key")
        return key

    def _pcr_index(self, index: int) -> int:
        if not 0 <= index < NUM_PCRS:
            raise TpmError(TpmErrorKind.BAD_COMMAND, f"PCR {index} out of range")
        return index

    @staticmethod
    def _mac(key: bytes, *parts: bytes) -> bytes:
        return hmac.new(key, b"".join(parts), hashlib.sha256).digest()

    def _keystream(self, key: bytes, nonce: bytes, n: int) -> bytes:
        out = bytearray()
        counter = 0
        while len(out) < n:
            out += self._mac(key, b"seal-stream", nonce, counter.to_bytes(8, "little"))
            counter += 1
        return bytes(out[:n])

    def execute(self, cmd):
        """Run one command and return its response bytes. Raises :class:`TpmError`."""
        self.commands_executed += 1
        match cmd:
            case GetRandom(n):
                return self.entropy.next(n)
            case CreateKey(slot):
                if not 0 <= slot < NUM_SLOTS:
                    raise TpmError(TpmErrorKind.BAD_SLOT, f"slot {slot} out of range")
                self._slots[slot] = self.entropy.next(DIGEST)
                return b""
            case Hmac(slot, msg):
                return self._mac(self._key(slot), b"hmac", msg)
            case Verify(slot, msg, mac):
                key = self._key(slot, TpmErrorKind.VERIFY_FAILED)
                if not hmac.compare_digest(self._mac(key, b"hmac", msg), mac):
                    raise TpmError(TpmErrorKind.VERIFY_FAILED)
                return VERIFY_OK
            case SealData(slot, data):
                key = self._key(slot)
                nonce = self.entropy.next(NONCE)
                ct = bytes(a ^ b for a, b in zip(data, self._keystream(key, nonce, len(data))))
                return nonce + ct + self._mac(key, b"seal-tag", nonce, ct)
            case UnsealData(slot, blob):
                key = self._key(slot, TpmErrorKind.UNSEAL_FAILED)
                if len(blob) < NONCE + DIGEST:
                    raise TpmError(TpmErrorKind.UNSEAL_FAILED, "blob too short")
                nonce, ct, tag = blob[:NONCE], blob[NONCE:-DIGEST], blob[-DIGEST:]
                if not hmac.compare_digest(self._mac(key, b"seal-tag", nonce, ct), tag):
                    raise TpmError(TpmErrorKind.UNSEAL_FAILED, "authentication tag mismatch")
                return bytes(a ^ b for a, b in zip(ct, self._keystream(key, nonce, len(ct))))
            case PcrExtend(index, value):
                i = self._pcr_index(index)
                self._pcrs[i] = hashlib.sha256(self._pcrs[i] + value).digest()
                return self._pcrs[i]
            case PcrRead(index):
                return self._pcrs[self._pcr_index(index)]
            case Quote(slot, indices):
                key = self._key(slot)
                sel = sorted(set(self._pcr_index(i) for i in indices))
                return self._mac(key, b"quote", bytes(sel), *(self._pcrs[i] for i in sel))
        raise TpmError(TpmErrorKind.BAD_COMMAND, f"unknown command {cmd!r}")

    def key_material(self) -> list[bytes]:
        """Slot contents, for isolation tests only. Never reachable from the CPU."""
        return [k for k in self._slots if k is not None]

    # -- MMIO surface ------------------------------------------------------

    def mmio_read(self, offset: int, size: int) -> bytes:
        if offset == REG_FIFO:
            out = bytes(self._resp_fifo[:size]).ljust(size, b"\0")
            del self._resp_fifo[:size]
            if not self._resp_fifo:
                self._status &= ~STATUS_RESPONSE
            return out
        if offset == REG_STATUS:
            value = self._status
        elif offset == REG_RESP_LEN:
            value = len(self._resp_fifo)
        else:
            value = 0
        return value.to_bytes(8, "little")[:size]

    def mmio_write(self, offset: int, data: bytes) -> bool:
        """Handle a register write. Returns True when a command executed."""
        if offset == REG_FIFO:
            self._cmd_fifo += data
            return False
        if offset == REG_CMD and int.from_bytes(data, "little") & 1:
            self._resp_fifo.clear()
            try:
                response = self.execute(decode_command(bytes(self._cmd_fifo)))
            except TpmError as exc:
                self._status = STATUS_READY | STATUS_ERROR | (exc.kind.code << 8)
            else:
                self._resp_fifo += response
                self._status = STATUS_READY | (STATUS_RESPONSE if response else 0)
            self._cmd_fifo.clear()
            return True
        return False

    def visible_state(self) -> bytes:
        """Everything a CPU could observe through MMIO right now."""
        return bytes(self._resp_fifo) + self._status.to_bytes(8, "little")
