"""Brute-force reference for the inclusive LRU cache hierarchy.

Deliberately naive: each level is a flat dict of line -> last-use time, a
set's members are found by scanning the whole level, and the victim is the
member with the oldest timestamp. Shares no code with the simulator.
"""
from __future__ import annotations


class ReferenceHierarchy:
    def __init__(self, geometry, latencies, dram_latency, line_bytes):
        # geometry: [(num_sets, ways)] fastest first
        self.geometry = list(geometry)
        self.latencies = list(latencies)
        self.dram_latency = dram_latency
        self.line_bytes = line_bytes
        self.levels = [dict() for _ in geometry]
        self.clock = 0

    def _members(self, level, line):
        sets, _ = self.geometry[level]
        return [ln for ln in self.levels[level] if ln % sets == line % sets]

    def _insert(self, level, line):
        _, ways = self.geometry[level]
        self.levels[level][line] = self.clock
        members = self._members(level, line)
        if len(members) > ways:
            victim = min(members, key=lambda ln: self.levels[level][ln])
            del self.levels[level][victim]
            for upper in range(level):  # keep faster levels inside slower ones
                self.levels[upper].pop(victim, None)

    def access(self, addr):
        """Returns the latency of one access: hit level's latency or DRAM."""
        self.clock += 1
        line = addr // self.line_bytes
        hit = next((i for i, lv in enumerate(self.levels) if line in lv), None)
        if hit is not None:
            self.levels[hit][line] = self.clock
        start = len(self.levels) if hit is None else hit
        for level in reversed(range(start)):  # fill from the slowest missing level up
            self._insert(level, line)
        return self.dram_latency if hit is None else self.latencies[hit]

    def flush(self, addr):
        line = addr // self.line_bytes
        for lv in self.levels:
            lv.pop(line, None)

    def resident(self):
        return [set(lv) for lv in self.levels]
