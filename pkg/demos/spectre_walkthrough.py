"""Spectre-v1 step by step: train, flush, mistrain, reload.

Runs the bounds-check-bypass harness on a short secret, prints the reload
latencies around the leaked probe line, then repeats the attack with each
mitigation that targets it.

    python3 demos/spectre_walkthrough.py [SECRET]
"""
import sys

from trisa.attacks import AttackConfig, SpectreV1
from trisa.config import MitigationSet

secret = (sys.argv[1] if len(sys.argv) > 1 else "key").encode()

h = SpectreV1(AttackConfig(secret=secret, seed=1))
report = h.run()
print(f"secret {secret!r} -> recovered {report.recovered_bytes!r} ({report.verdict})")
print(f"hit threshold: {report.threshold} cycles\n")

first = secret[0]
print(f"reload latencies for byte 0 (expected probe {first}):")
for _b, _t, probe, lat in report.probe_latencies[:256]:
    if abs(probe - first) <= 2:
        mark = "  <- below threshold" if lat < report.threshold else ""
        print(f"  probe[{probe:3d}] {lat:4d} cycles{mark}")

print(f"\nspeculation: {report.stats['windows']} windows, {report.stats['mispredictions']} mispredicted, "
      f"{len(h.sim.trace.transient())} transient memory accesses\n")

for name in ("speculation_barriers", "branch_avoidance", "cap_enforce_transient"):
    guarded = SpectreV1(AttackConfig(secret=secret, seed=1, mitigations=MitigationSet.parse(name)))
    r = guarded.run()
    print(f"{name:<22} -> {r.verdict:<7} recovered {r.to_dict()['recovered']!r}, "
          f"transient accesses {len(guarded.sim.trace.transient())}, "
          f"transient capability faults {r.stats.get('transient_cap_faults', 0)}")
