"""Stealing TPM output from kernel memory, and what stops it.

The kernel asks the TPM for random bytes (for example a session key) and
stages them in kernel memory. A user program in the DMZ then reads them
through a deferred permission check. The TPM's own key slots stay out of
reach: sweeping every mapped address from green and DMZ code never shows a
single key fragment.

    python3 demos/tpm_meltdown.py
"""
from trisa.attacks import AttackConfig, run_meltdown
from trisa.config import MitigationSet

for label, ms in [("deferred check", MitigationSet()),
                  ("kpti", MitigationSet(kpti=True)),
                  ("immediate check", MitigationSet(immediate_check=True))]:
    r = run_meltdown(AttackConfig(secret=bytes(8), secret_source="tpm", seed=42, mitigations=ms))
    print(f"{label:<16} staged {r.secret.hex()}  recovered {r.to_dict()['recovered_hex']}  {r.verdict}")
