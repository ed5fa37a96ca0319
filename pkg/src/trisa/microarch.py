"""Timing model: inclusive set-associative caches, a 2-bit branch predictor and
the single-level transient execution window."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

from .config import CacheConfig, CacheLevelConfig, PredictorConfig

LEVEL_NAMES = ("L1", "L2", "L3")
DRAM = "DRAM"
MMIO = "MMIO"


class AccessRecord(NamedTuple):
    cycle: int
    address: int
    kind: str  # "read", "write" or "fetch"
    level: str  # L1, L2, L3, DRAM or MMIO
    latency: int
    transient: bool
    authorizer: str


class AccessTrace(list):
    """Chronological list of :class:`AccessRecord`."""

    FIELDS = AccessRecord._fields

    def transient(self) -> list[AccessRecord]:
        return [r for r in self if r.transient]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.FIELDS)
            for r in self:
                w.writerow((r.cycle, f"0x{r.address:x}", r.kind, r.level, r.latency, int(r.transient), r.authorizer))


class CacheLevel:
    """One set-associative level. Each set lists resident line numbers, MRU first."""

    def __init__(self, name: str, cfg: CacheLevelConfig):
        self.name = name
        self.cfg = cfg
        self.num_sets = cfg.num_sets
        self.ways = cfg.associativity
        self.latency = cfg.hit_latency
        self.sets: list[list[int]] = [[] for _ in range(self.num_sets)]

    def set_of(self, line: int) -> list[int]:
        return self.sets[line % self.num_sets]

    def __contains__(self, line: int) -> bool:
        return line in self.sets[line % self.num_sets]

    def lines(self) -> set[int]:
        return {ln for s in self.sets for ln in s}

    def lru_ranks(self, set_index: int) -> dict[int, int]:
        """Line -> rank, 0 being most recently used."""
        return {ln: rank for rank, ln in enumerate(self.sets[set_index])}


class CacheHierarchy:
    """Inclusive L1/L2/L3 hierarchy in front of DRAM.

    A hit at level *k* refreshes LRU at *k* and fills every faster level.
    Slower levels are not touched. Filling a full set evicts its LRU line, and
    an eviction from level *k* back-invalidates the line in all faster levels
    so that inclusion holds after every access.
    """

    def __init__(self, cfg: CacheConfig | None = None):
        cfg = cfg or CacheConfig()
        self.cfg = cfg
        self.levels = [CacheLevel(n, c) for n, c in zip(LEVEL_NAMES, cfg.levels)]
        self.line_bytes = cfg.l1.line_bytes
        self.line_shift = self.line_bytes.bit_length() - 1
        self.dram_latency = cfg.dram.latency
        self.latency_of = {lv.name: lv.latency for lv in self.levels}
        self.latency_of[DRAM] = self.dram_latency

    def line_of(self, addr: int) -> int:
        return addr >> self.line_shift

    def probe(self, addr: int) -> str:
        """Name of the fastest level holding ``addr`` without touching any state."""
        line = addr >> self.line_shift
        for lv in self.levels:
            if line in lv:
                return lv.name
        return DRAM

    def access(self, addr: int, kind: str = "read") -> tuple[int, str]:
        """Perform one access and return ``(latency, level_hit)``.

        Reads, writes (write-allocate) and fetches update the hierarchy the
        same way; no write-back cost is modelled.
        """
        line = addr >> self.line_shift
        levels = self.levels
        hit = len(levels)
        for i, lv in enumerate(levels):
            s = lv.sets[line % lv.num_sets]
            if line in s:
                hit = i
                if s[0] != line:
                    s.remove(line)
                    s.insert(0, line)
                break
        for i in range(hit - 1, -1, -1):
            self._fill(i, line)
        if hit == len(levels):
            return self.dram_latency, DRAM
        lv = levels[hit]
        return lv.latency, lv.name

    def _fill(self, index: int, line: int) -> None:
        lv = self.levels[index]
        s = lv.sets[line % lv.num_sets]
        s.insert(0, line)
        if len(s) > lv.ways:
            victim = s.pop()
            for upper in self.levels[:index]:
                us = upper.sets[victim % upper.num_sets]
                if victim in us:
                    us.remove(victim)

    def flush_line(self, addr: int) -> None:
        line = addr >> self.line_shift
        for lv in self.levels:
            s = lv.sets[line % lv.num_sets]
            if line in s:
                s.remove(line)

    def resident(self) -> dict[str, set[int]]:
        return {lv.name: lv.lines() for lv in self.levels}

    def check_invariants(self) -> None:
        for lv in self.levels:
            for s in lv.sets:
                assert len(s) <= lv.ways and len(set(s)) == len(s), f"{lv.name} set corrupted"
        for upper, lower in zip(self.levels, self.levels[1:]):
            missing = upper.lines() - lower.lines()
            assert not missing, f"inclusion broken: {upper.name} lines missing from {lower.name}"


class Prediction(NamedTuple):
    taken: bool
    target: int | None


class BranchPredictor:
    """Direct-mapped table of 2-bit saturating counters plus a direct-mapped BTB."""

    def __init__(self, cfg: PredictorConfig | None = None):
        cfg = cfg or PredictorConfig()
        self.cfg = cfg
        self.counters = [cfg.init] * cfg.entries
        self._mask = cfg.entries - 1
        self._btb_mask = cfg.btb_entries - 1
        self.btb: list[tuple[int, int] | None] = [None] * cfg.btb_entries

    def index(self, pc: int) -> int:
        return (pc >> 2) & self._mask

    def predict(self, pc: int) -> Prediction:
        taken = self.counters[(pc >> 2) & self._mask] >= 2
        entry = self.btb[(pc >> 2) & self._btb_mask]
        target = entry[1] if entry is not None and entry[0] == pc else None
        return Prediction(taken, target)

    def train(self, pc: int, taken: bool, target: int | None = None) -> None:
        i = (pc >> 2) & self._mask
        c = self.counters[i]
        self.counters[i] = min(c + 1, 3) if taken else max(c - 1, 0)
        if taken and target is not None:
            self.btb[(pc >> 2) & self._btb_mask] = (pc, target)


class Trigger(enum.Enum):
    PREDICTED_BRANCH = "PredictedBranch"
    FAULTING_LOAD = "FaultingLoad"


class Outcome(enum.Enum):
    COMMITTED = "Committed"
    SQUASHED = "Squashed"


@dataclass
class Checkpoint:
    pc: int
    regs: list[int]
    caps: list
    mode: object
    csrs: dict[int, int]


@dataclass
class PendingFault:
    """A deferred fault met inside a branch shadow; raised only if the shadow commits."""

    checkpoint: Checkpoint
    trap: object
    buffered: int
    retired: int


@dataclass
class StoreEntry:
    addr: int
    data: bytes
    cap: object = None  # Capability for capability stores, None for plain data


@dataclass
class Resolution:
    outcome: Outcome
    trigger: Trigger
    checkpoint: Checkpoint
    stores: list[StoreEntry]
    retired: int
    fault: PendingFault | None = None


@dataclass
class SpeculationEngine:
    """State of the one transient window the core may have open.

    The engine only book-keeps. The core decides when a window opens, feeds it
    speculative stores, and applies the :class:`Resolution` it returns.
    """

    window: int = 64
    resolve_delay: int = 20
    active: bool = False
    trigger: Trigger | None = None
    checkpoint: Checkpoint | None = None
    window_remaining: int = 0
    resolve_at_cycle: int = 0
    correct_pc: int = 0
    mispredicted: bool = False
    store_buffer: list[StoreEntry] = field(default_factory=list)
    retired: int = 0
    fault: PendingFault | None = None

    def begin(self, trigger: Trigger, checkpoint: Checkpoint, issue_cycle: int,
              correct_pc: int, mispredicted: bool) -> None:
        if self.active:
            raise RuntimeError("nested speculation is not modelled")
        self.active = True
        self.trigger = trigger
        self.checkpoint = checkpoint
        self.window_remaining = self.window
        self.resolve_at_cycle = issue_cycle + self.resolve_delay
        self.correct_pc = correct_pc
        self.mispredicted = mispredicted
        self.store_buffer = []
        self.retired = 0
        self.fault = None

    def buffer_store(self, addr: int, data: bytes, cap=None) -> None:
        self.store_buffer.append(StoreEntry(addr, bytes(data), cap))

    def forward(self, addr: int, data: bytearray) -> bytearray:
        """Overlay buffered stores onto ``data`` read from memory at ``addr``."""
        end = addr + len(data)
        for e in self.store_buffer:
            lo, hi = max(addr, e.addr), min(end, e.addr + len(e.data))
            if lo < hi:
                data[lo - addr:hi - addr] = e.data[lo - e.addr:hi - e.addr]
        return data

    def forwarded_cap(self, granule_addr: int):
        """Latest buffered write to a granule: a Capability, False for plain data, None if untouched."""
        result = None
        for e in self.store_buffer:
            if e.cap is not None and e.addr == granule_addr:
                result = e.cap
            elif e.addr < granule_addr + 16 and granule_addr < e.addr + len(e.data):
                result = False
        return result

    def resolve(self) -> Resolution:
        if not self.active:
            raise RuntimeError("no active speculation to resolve")
        if self.trigger is Trigger.FAULTING_LOAD or self.mispredicted:
            outcome = Outcome.SQUASHED
        else:
            outcome = Outcome.COMMITTED
        res = Resolution(outcome, self.trigger, self.checkpoint, self.store_buffer, self.retired, self.fault)
        self.active = False
        self.trigger = None
        self.checkpoint = None
        self.store_buffer = []
        self.retired = 0
        self.fault = None
        return res
