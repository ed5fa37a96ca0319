"""Command-line front end.

Exit codes: 0 success (a Blocked verdict is a result, not a failure),
2 config error, 3 assembly or image error, 4 unrecovered trap in ``run``,
5 internal harness error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .asm import AsmError, assemble
from .attacks import AttackConfig, HarnessError, covert_channel_bench, mitigation_matrix, run_attack
from .config import Config, ConfigError, MitigationSet
from .cpu import Simulator
from .image import ImageFormatError, ProgramImage
from .platform import ImageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASM = 3
EXIT_TRAP = 4
EXIT_INTERNAL = 5

ATTACK_CHOICES = {"flush-reload": "flush_reload", "spectre": "spectre_v1", "meltdown": "meltdown",
                  "integrity": "integrity"}


class CliError(Exception):
    def __init__(self, code: int, message: str, kind: str = "error"):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _err(msg: str) -> None:
    print(f"trisa: {msg}", file=sys.stderr)


def _write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def error_report(kind: str, message: str, command: str) -> dict:
    return {"report": "error", "command": command, "error": kind, "message": message}


def _load_config(path) -> Config:
    try:
        return Config.load(path)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc), "ConfigError") from exc


def _mitigations(text, cfg: Config) -> MitigationSet:
    if text is None:
        return cfg.mitigations
    try:
        return MitigationSet.parse(text)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc), "ConfigError") from exc


# -- subcommands --------------------------------------------------------------

def cmd_asm(args) -> int:
    src = Path(args.source)
    try:
        text = src.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_ASM, f"{src}: cannot read source: {exc}", "AsmError") from exc
    cfg = _load_config(args.config)
    try:
        image = assemble(text, cfg.zones)
    except AsmError as exc:
        raise CliError(EXIT_ASM, f"{src}:{exc.line}: {exc.kind}: {exc.message}", "AsmError") from exc
    out = Path(args.output) if args.output else src.with_suffix(".img")
    sym = image.save(out, args.symbols)
    print(f"wrote {out} ({sum(len(s.data) for s in image.sections)} bytes, "
          f"{len(image.sections)} sections) and {sym}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    try:
        image = ProgramImage.load(args.image)
    except OSError as exc:
        raise CliError(EXIT_ASM, f"{args.image}: cannot read image: {exc}", "ImageError") from exc
    except (ImageFormatError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_ASM, f"{args.image}: {exc}", "ImageError") from exc
    if args.max_steps <= 0:
        raise CliError(EXIT_CONFIG, "--max-steps must be positive", "ConfigError")
    if args.mitigations is not None:
        cfg = dataclasses.replace(cfg, mitigations=_mitigations(args.mitigations, cfg))
    try:
        sim = Simulator(cfg, image=image, record_trace=bool(args.trace), trace_fetch=args.trace_fetch)
    except ImageError as exc:
        raise CliError(EXIT_ASM, f"{args.image}: {exc}", "ImageError") from exc
    report = sim.run(args.max_steps)
    if args.trace:
        sim.trace.write_csv(args.trace)
    payload = report.to_dict()
    _write_json(args.json, payload)
    if report.status == "trapped":
        t = report.traps[-1]
        _err(f"unrecovered trap {t['cause']} at pc 0x{t['faulting_pc']:x}")
        return EXIT_TRAP
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _load_config(args.config)
    ms = _mitigations(args.mitigations, cfg)
    secret = bytes.fromhex(args.secret_hex) if args.secret_hex else args.secret.encode("utf-8")
    try:
        acfg = AttackConfig(secret=secret, secret_zone=args.zone or "", trials=args.trials,
                            seed=cfg.seed if args.seed is None else args.seed, mitigations=ms,
                            probe_stride=args.stride, secret_source=args.source, sim_config=cfg)
        report = run_attack(ATTACK_CHOICES[args.name], acfg)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc), "ConfigError") from exc
    if args.latency_csv:
        report.write_latency_csv(args.latency_csv)
    if args.json:
        _write_json(args.json, report.to_dict())
        print(f"{report.attack}: {report.verdict} (accuracy {report.accuracy:.3f}, "
              f"recovered {report.to_dict()['recovered']!r})")
    else:
        _write_json(None, report.to_dict())
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    ms = _mitigations(args.mitigations, cfg)
    try:
        report = covert_channel_bench(args.bytes, seed=cfg.seed if args.seed is None else args.seed,
                                      mitigations=ms, sim_config=cfg)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc), "ConfigError") from exc
    _write_json(args.json, report.to_dict())
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = _load_config(args.config)
    if args.trials < 1:
        raise CliError(EXIT_CONFIG, "--trials must be >= 1", "ConfigError")
    report = mitigation_matrix(trials=args.trials, seed=cfg.seed if args.seed is None else args.seed,
                               secret=args.secret.encode("utf-8"), sim_config=cfg, workers=args.workers)
    print(report.table())
    if args.json:
        _write_json(args.json, report.to_dict())
    return EXIT_OK


def cmd_config(args) -> int:
    if args.check:
        cfg = _load_config(args.check)
        print(f"{args.check}: ok")
        return EXIT_OK
    if args.print_defaults:
        sys.stdout.write(Config().to_json() + "\n")
        return EXIT_OK
    sys.stdout.write(_load_config(None).to_json() + "\n")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trisa", description="TRISA simulator, assembler and attack harnesses")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("asm", help="assemble a .trs file into an image plus symbol map")
    a.add_argument("source")
    a.add_argument("-o", "--output")
    a.add_argument("--symbols", help="symbol map path (default <output>.syms.json)")
    a.add_argument("--config")
    a.set_defaults(func=cmd_asm)

    r = sub.add_parser("run", help="run an image until it halts, traps or hits the step limit")
    r.add_argument("image")
    r.add_argument("--config")
    r.add_argument("--trace", help="write the memory access trace as CSV")
    r.add_argument("--trace-fetch", action="store_true", help="include instruction fetches in the trace")
    r.add_argument("--max-steps", type=int, default=1_000_000)
    r.add_argument("--mitigations")
    r.add_argument("--json", help="write the run report here instead of standard output")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("attack", help="run one attack harness")
    t.add_argument("name", choices=sorted(ATTACK_CHOICES))
    t.add_argument("--secret", default="TRISA")
    t.add_argument("--secret-hex")
    t.add_argument("--mitigations", help="comma list, 'all' or 'none'")
    t.add_argument("--json")
    t.add_argument("--latency-csv", help="dump every probe reload latency as CSV")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--trials", type=int, default=1)
    t.add_argument("--stride", type=int, default=4096)
    t.add_argument("--zone", choices=("green", "dmz", "kernel"))
    t.add_argument("--source", choices=("memory", "tpm"), default="memory",
                   help="meltdown only: 'tpm' leaks TPM output staged in kernel memory")
    t.set_defaults(func=cmd_attack)

    b = sub.add_parser("bench", help="benchmarks")
    b.add_argument("which", choices=("covert-channel",))
    b.add_argument("--bytes", type=int, default=128)
    b.add_argument("--mitigations")
    b.add_argument("--seed", type=int)
    b.add_argument("--config")
    b.add_argument("--json")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("matrix", help="every attack under every mitigation row")
    m.add_argument("--json")
    m.add_argument("--trials", type=int, default=1)
    m.add_argument("--seed", type=int)
    m.add_argument("--secret", default="TRISA")
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--config")
    m.set_defaults(func=cmd_matrix)

    c = sub.add_parser("config", help="print or check configuration")
    c.add_argument("--print-defaults", action="store_true")
    c.add_argument("--check", metavar="FILE")
    c.set_defaults(func=cmd_config)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    json_path = getattr(args, "json", None)
    try:
        return args.func(args)
    except CliError as exc:
        _err(str(exc))
        if json_path:
            _write_json(json_path, error_report(exc.kind, str(exc), args.command))
        return exc.code
    except HarnessError as exc:
        _err(f"harness error: {exc}")
        if json_path:
            _write_json(json_path, error_report("HarnessError", str(exc), args.command))
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        _err(f"internal error: {type(exc).__name__}: {exc}")
        if json_path:
            _write_json(json_path, error_report("InternalError", f"{type(exc).__name__}: {exc}", args.command))
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(cli_main())
