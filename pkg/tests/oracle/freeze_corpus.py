"""Compute expected final states for tests/corpus/*.trs with clang + unicorn.

Run from the tests directory:  python3 -m oracle.freeze_corpus
Writes tests/corpus/expected.json. Each program must start with ``.org BASE``;
that line is stripped and BASE becomes the link address.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

from .reference import clang_assemble, unicorn_run

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
_ORG = re.compile(r"^\s*\.org\s+(0x[0-9a-fA-F]+|\d+)\s*$")


def split_base(text: str) -> tuple[int, str]:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.strip():
            m = _ORG.match(line)
            if not m:
                raise ValueError("first statement must be .org")
            return int(m.group(1), 0), "\n".join(lines[:i] + lines[i + 1:]) + "\n"
    raise ValueError("empty program")


def freeze() -> dict:
    out = {}
    for path in sorted(CORPUS.glob("*.trs")):
        base, body = split_base(path.read_text(encoding="utf-8"))
        blob = clang_assemble(body, base)
        regs, mem = unicorn_run(blob, base)
        out[path.stem] = {
            "base": base,
            "size": len(blob),
            "regs": [f"0x{r:016x}" for r in regs],
            "memory": mem.hex(),
        }
    return out


if __name__ == "__main__":
    data = freeze()
    (CORPUS / "expected.json").write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"froze {len(data)} programs")
