"""Simulator configuration.

All parameters live in plain dataclasses with documented defaults. JSON
documents are merged over the defaults; unknown keys are an error so a typo
never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

ENV_CONFIG = "TRISA_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CacheLevelConfig:
    size_bytes: int
    line_bytes: int
    associativity: int
    hit_latency: int
    shared: bool = False

    @property
    def num_sets(self) -> int:
        return self.size_bytes // (self.line_bytes * self.associativity)

    def validate(self, name: str) -> None:
        if self.line_bytes <= 0 or self.line_bytes & (self.line_bytes - 1):
            raise ConfigError(f"{name}.line_bytes must be a power of two")
        if self.associativity <= 0 or self.size_bytes <= 0:
            raise ConfigError(f"{name}: size and associativity must be positive")
        if self.size_bytes % (self.line_bytes * self.associativity):
            raise ConfigError(f"{name}.size_bytes must be divisible by line_bytes * associativity")
        if self.hit_latency < 0:
            raise ConfigError(f"{name}.hit_latency must be non-negative")


@dataclass(frozen=True)
class DramConfig:
    latency: int = 200


@dataclass(frozen=True)
class CacheConfig:
    l1: CacheLevelConfig = CacheLevelConfig(32 * 1024, 64, 8, 4)
    l2: CacheLevelConfig = CacheLevelConfig(256 * 1024, 64, 8, 12)
    l3: CacheLevelConfig = CacheLevelConfig(8 * 1024 * 1024, 64, 16, 40, shared=True)
    dram: DramConfig = DramConfig()

    @property
    def levels(self) -> tuple[CacheLevelConfig, ...]:
        return (self.l1, self.l2, self.l3)


@dataclass(frozen=True)
class PredictorConfig:
    entries: int = 512
    init: int = 1
    btb_entries: int = 128


@dataclass(frozen=True)
class SpeculationConfig:
    enabled: bool = True
    window: int = 64
    resolve_delay: int = 20
    # test hook: predict the opposite of every branch outcome
    force_mispredict: bool = False


@dataclass(frozen=True)
class ZoneRange:
    start: int
    end: int  # exclusive

    def __contains__(self, addr: int) -> bool:
        return self.start <= addr < self.end

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ZonesConfig:
    kernel: ZoneRange = ZoneRange(0x0000_1000, 0x0001_0000)
    green: ZoneRange = ZoneRange(0x0001_0000, 0x0010_0000)
    dmz: ZoneRange = ZoneRange(0x0010_0000, 0x0020_0000)
    tpm_mmio: ZoneRange = ZoneRange(0x0020_0000, 0x0020_1000)
    external_io: ZoneRange = ZoneRange(0x0030_0000, 0x0030_1000)


@dataclass(frozen=True)
class TimingConfig:
    issue_cycles: int = 1
    mmio_latency: int = 200
    tpm_command_cycles: int = 1000


MITIGATION_NAMES = (
    "flush_disabled",
    "speculation_barriers",
    "kpti",
    "immediate_check",
    "cap_enforce_transient",
    "branch_avoidance",
    "integrity_check",
)


@dataclass(frozen=True)
class MitigationSet:
    """Runtime mitigation toggles. All off is the vulnerable baseline."""

    flush_disabled: bool = False
    speculation_barriers: bool = False
    kpti: bool = False
    immediate_check: bool = False
    cap_enforce_transient: bool = False
    branch_avoidance: bool = False
    integrity_check: bool = False

    @classmethod
    def none(cls) -> MitigationSet:
        return cls()

    @classmethod
    def all(cls) -> MitigationSet:
        return cls(**{name: True for name in MITIGATION_NAMES})

    @classmethod
    def parse(cls, spec: str | typing.Iterable[str] | None) -> MitigationSet:
        """Build from ``"all"``, ``"none"``, a comma list, or an iterable of names."""
        if spec is None:
            return cls()
        if isinstance(spec, str):
            spec = spec.strip()
            if spec in ("", "none"):
                return cls()
            if spec == "all":
                return cls.all()
            spec = [s.strip() for s in spec.split(",") if s.strip()]
        names = list(spec)
        unknown = [n for n in names if n not in MITIGATION_NAMES]
        if unknown:
            raise ConfigError(f"unknown mitigation(s): {', '.join(unknown)}")
        return cls(**{n: True for n in names})

    def enabled(self) -> tuple[str, ...]:
        return tuple(n for n in MITIGATION_NAMES if getattr(self, n))

    def label(self) -> str:
        on = self.enabled()
        if not on:
            return "none"
        if len(on) == len(MITIGATION_NAMES):
            return "all"
        return "+".join(on)

    def with_(self, *names: str) -> MitigationSet:
        return dataclasses.replace(self, **{n: True for n in names})


@dataclass(frozen=True)
class Config:
    cache: CacheConfig = field(default_factory=CacheConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    speculation: SpeculationConfig = field(default_factory=SpeculationConfig)
    zones: ZonesConfig = field(default_factory=ZonesConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    mitigations: MitigationSet = field(default_factory=MitigationSet)
    seed: int = 0
    latency_threshold: int | None = None

    def validate(self) -> Config:
        lines = {lvl.line_bytes for lvl in self.cache.levels}
        if len(lines) != 1:
            raise ConfigError("all cache levels must share one line size")
        for name, lvl in zip(("l1", "l2", "l3"), self.cache.levels):
            lvl.validate(f"cache.{name}")
        p = self.predictor
        for n in (p.entries, p.btb_entries):
            if n <= 0 or n & (n - 1):
                raise ConfigError("predictor table sizes must be powers of two")
        if not 0 <= p.init <= 3:
            raise ConfigError("predictor.init must be a 2-bit counter value")
        if self.speculation.window < 0 or self.speculation.resolve_delay < 0:
            raise ConfigError("speculation window and delay must be non-negative")
        ranges = sorted(((getattr(self.zones, f.name), f.name) for f in dataclasses.fields(ZonesConfig)),
                        key=lambda item: (item[0].start, item[0].end))
        for (r, name) in ranges:
            if r.start >= r.end:
                raise ConfigError(f"zone {name} is empty")
        for (a, an), (b, bn) in zip(ranges, ranges[1:]):
            if a.end > b.start:
                raise ConfigError(f"zones {an} and {bn} overlap")
        return self

    @property
    def hit_threshold(self) -> int:
        """Latencies below this count as cache hits when decoding a probe."""
        if self.latency_threshold is not None:
            return self.latency_threshold
        return (self.cache.l3.hit_latency + self.cache.dram.latency) // 2

    @classmethod
    def flat(cls) -> Config:
        """Every memory access costs one cycle and nothing speculates."""
        one = lambda lvl: dataclasses.replace(lvl, hit_latency=1)  # noqa: E731
        c = cls()
        return dataclasses.replace(
            c,
            cache=CacheConfig(one(c.cache.l1), one(c.cache.l2), one(c.cache.l3), DramConfig(1)),
            speculation=SpeculationConfig(enabled=False),
            timing=TimingConfig(mmio_latency=1, tpm_command_cycles=1),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> Config:
        return _build(cls, cls(), data, "config").validate()

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> Config:
        """Load a JSON config, falling back to ``$TRISA_CONFIG`` and then defaults."""
        path = path or os.environ.get(ENV_CONFIG)
        if not path:
            return cls().validate()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)


def _build(tp, default, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(tp)
    names = {f.name for f in dataclasses.fields(tp)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    values = {}
    for name in names:
        current = getattr(default, name)
        if name not in data:
            values[name] = current
            continue
        value = data[name]
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            values[name] = _build(hint, current, value, f"{where}.{name}")
        elif hint is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{name}: expected true/false")
            values[name] = value
        elif hint is int or hint == (int | None):
            if value is None and hint != int:
                values[name] = None
            elif isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}.{name}: expected an integer")
            else:
                values[name] = value
        else:  # pragma: no cover - every field is covered above
            values[name] = value
    return tp(**values)
