"""Throughput of the Flush+Reload channel as the message grows.

    python3 demos/covert_channel.py
"""
from trisa.attacks import covert_channel_bench
from trisa.config import MitigationSet

print(f"{'bytes':>6} {'bits ok':>12} {'cycles':>10} {'bits/kcycle':>12}")
for n in (1, 8, 32, 128):
    r = covert_channel_bench(n, seed=n)
    print(f"{n:>6} {r.bits_correct:>5}/{r.bits_sent:<6} {r.cycles:>10} {r.bandwidth_bits_per_kcycle:>12.3f}")

r = covert_channel_bench(128, seed=128, mitigations=MitigationSet(flush_disabled=True))
print(f"\nwith cflush disabled: {r.bits_correct}/{r.bits_sent} bits correct "
      f"({r.bits_correct / r.bits_sent:.2%}, i.e. guessing)")
