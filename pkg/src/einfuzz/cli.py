"""``einfuzz`` command line.

Exit codes: 0 clean, 1 bugs found or input invalid, 2 operational error,
64 usage error. Machine-readable output goes to stdout, prose to stderr.

Option values are resolved as: command-line flag, then ``EINFUZZ_<NAME>``
environment variable (e.g. ``EINFUZZ_SEED``), then the JSON file given by
``--config``, then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from einfuzz import backends, grammar, harness
from einfuzz.emit import DIALECTS, UnsupportedConstruct, emit_source
from einfuzz.gen import GenConfig, generate_case, iteration_rng
from einfuzz.ir import SchemaError, ShapeMismatchError, dumps, from_json, kernel_from_json, to_json, validate

EXIT_OK, EXIT_FOUND, EXIT_ERROR, EXIT_USAGE = 0, 1, 2, 64
ENV_PREFIX = "EINFUZZ_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_duration(text: str) -> float:
    """``"10s"``, ``"500ms"``, ``"2m"``, ``"1h"`` or plain seconds."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*(ms|s|m|h)?\s*", str(text))
    if not m:
        raise ValueError(f"bad duration {text!r}")
    scale = {"ms": 0.001, "s": 1, "m": 60, "h": 3600, None: 1}[m.group(2)]
    return float(m.group(1)) * scale


@dataclass
class _Opt:
    dest: str
    convert: Callable[[Any], Any]
    default: Any


class _Options:
    """Tracks declared options so unset ones can fall back to env/config."""

    def __init__(self):
        self.by_command: dict[str, list[_Opt]] = {}

    def add(self, command: str, parser, *flags, type=str, default=None, flag=False, **kw):
        if flag:
            action = parser.add_argument(*flags, action="store_const", const=True, default=None, **kw)
            convert = _bool
        else:
            action = parser.add_argument(*flags, type=type, default=None, **kw)
            convert = type
        self.by_command.setdefault(command, []).append(_Opt(action.dest, convert, default))

    def resolve(self, command: str, args: argparse.Namespace, config: dict) -> None:
        section = config.get(command, {}) if isinstance(config.get(command), dict) else {}
        for opt in self.by_command.get(command, []):
            if getattr(args, opt.dest) is not None:
                continue
            env = os.environ.get(ENV_PREFIX + opt.dest.upper())
            if env is not None:
                value, where = env, f"${ENV_PREFIX}{opt.dest.upper()}"
            elif opt.dest in section:
                value, where = section[opt.dest], "config file"
            elif opt.dest in config and not isinstance(config[opt.dest], dict):
                value, where = config[opt.dest], "config file"
            else:
                setattr(args, opt.dest, opt.default)
                continue
            try:
                setattr(args, opt.dest, opt.convert(value))
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {opt.dest} from {where}: {exc}") from None


def _gen_flags(opts: _Options, command: str, p) -> None:
    d = GenConfig()
    opts.add(command, p, "--min-inputs", type=int, default=d.min_inputs)
    opts.add(command, p, "--max-inputs", type=int, default=d.max_inputs)
    opts.add(command, p, "--r-max", type=int, default=d.r_max, help="max rank per tensor")
    opts.add(command, p, "--pool-size", type=int, default=d.pool_size, help="number of candidate indices")
    opts.add(command, p, "--min-dim", type=int, default=d.min_dim)
    opts.add(command, p, "--max-dim", type=int, default=d.max_dim)
    opts.add(command, p, "--min-density", type=float, default=d.min_density)
    opts.add(command, p, "--max-density", type=float, default=d.max_density)
    opts.add(command, p, "--dtype", type=str, default=d.dtype, choices=("int", "float"))
    opts.add(command, p, "--int-bound", type=int, default=d.int_bound)
    opts.add(command, p, "--float-bound", type=float, default=d.float_bound)
    opts.add(command, p, "--output-keep-prob", type=float, default=d.output_keep_prob)


def _gen_config(args) -> GenConfig:
    try:
        return GenConfig(
            seed=args.seed,
            min_inputs=args.min_inputs,
            max_inputs=args.max_inputs,
            r_max=args.r_max,
            pool_size=args.pool_size,
            min_dim=args.min_dim,
            max_dim=args.max_dim,
            min_density=args.min_density,
            max_density=args.max_density,
            dtype=args.dtype,
            int_bound=args.int_bound,
            float_bound=args.float_bound,
            output_keep_prob=args.output_keep_prob,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> tuple[argparse.ArgumentParser, _Options]:
    opts = _Options()
    parser = _Parser(prog="einfuzz", description="Metamorphic fuzzer for sparse tensor compilers.")
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate kernel documents")
    opts.add("gen", p, "--count", type=int, default=1)
    opts.add("gen", p, "--seed", type=int, default=0)
    opts.add("gen", p, "--out", type=str, default="-", help="directory, or - for JSON lines on stdout")
    _gen_flags(opts, "gen", p)

    p = sub.add_parser("validate", help="check a kernel document")
    p.add_argument("path", help="document path, or - for stdin")

    p = sub.add_parser("fuzz", help="run a fuzzing campaign")
    opts.add("fuzz", p, "--backend", type=str, default="ref", help="ref | faulty:<fault,...> | cmd:<adapter>")
    opts.add("fuzz", p, "--iterations", type=int)
    opts.add("fuzz", p, "--duration", type=parse_duration, help="e.g. 10s, 5m")
    opts.add("fuzz", p, "--seed", type=int, default=0)
    opts.add("fuzz", p, "--mutants", type=int, default=8)
    opts.add("fuzz", p, "--atol", type=float, default=1e-8)
    opts.add("fuzz", p, "--rtol", type=float, default=1e-6)
    opts.add("fuzz", p, "--workers", type=int, default=1)
    opts.add("fuzz", p, "--timeout-ms", type=int, default=backends.DEFAULT_TIMEOUT_MS)
    opts.add("fuzz", p, "--out", type=str)
    opts.add("fuzz", p, "--report-stc-na", flag=True, default=False, help="also write reports for rejected references")
    _gen_flags(opts, "fuzz", p)

    p = sub.add_parser("baseline", help="measure grammar-fuzzer validity")
    opts.add("baseline", p, "--samples", type=int, default=100_000)
    opts.add("baseline", p, "--seed", type=int, default=0)
    opts.add("baseline", p, "--generator", type=str, default="cfg", choices=("cfg", "constraint"))
    c = grammar.CfgConfig()
    opts.add("baseline", p, "--max-terms", type=int, default=c.max_terms)
    opts.add("baseline", p, "--max-rank", type=int, default=c.max_rank)
    opts.add("baseline", p, "--alphabet-size", type=int, default=c.alphabet_size)
    opts.add("baseline", p, "--min-extent", type=int, default=c.min_extent)
    opts.add("baseline", p, "--max-extent", type=int, default=c.max_extent)

    p = sub.add_parser("replay", help="re-run a bug report")
    p.add_argument("report")
    opts.add("replay", p, "--backend", type=str, default="ref")
    opts.add("replay", p, "--timeout-ms", type=int, default=backends.DEFAULT_TIMEOUT_MS)

    p = sub.add_parser("stats", help="summarize a campaign directory")
    p.add_argument("campaign_dir")

    p = sub.add_parser("emit", help="print a kernel document as a target-DSL program")
    p.add_argument("path", help="document path, or - for stdin")
    opts.add("emit", p, "--dialect", type=str, default="taco-cpp", choices=DIALECTS)

    return parser, opts


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def cmd_gen(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    cfg = _gen_config(args)
    out_dir = None if args.out == "-" else Path(args.out)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    write = sys.stdout.write
    for n in range(args.count):
        kernel, inputs = generate_case(cfg, iteration_rng(args.seed, n))
        text = dumps(to_json(kernel, inputs))
        if out_dir is None:
            write(text + "\n")
        else:
            (out_dir / f"kernel-{n}.json").write_text(text + "\n", encoding="utf-8")
    sys.stdout.flush()
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        doc = json.loads(_read(args.path))
        kernel = kernel_from_json(doc)
    except (json.JSONDecodeError, SchemaError) as exc:
        _err(f"malformed document: {exc}")
        return EXIT_ERROR
    report = validate(kernel)
    violations = [{"rule": v.rule, "symbol": v.symbol, "message": v.message} for v in report.violations]
    if report.ok:
        try:
            from_json(doc)
        except ShapeMismatchError as exc:
            violations.append({"rule": "shape", "symbol": "", "message": str(exc)})
        except SchemaError as exc:
            _err(f"malformed document: {exc}")
            return EXIT_ERROR
    print(json.dumps({"ok": not violations, "violations": violations}))
    for v in violations:
        _err(f"invalid: {v['message']}")
    return EXIT_OK if not violations else EXIT_FOUND


def cmd_fuzz(args) -> int:
    if args.iterations is None and args.duration is None:
        raise UsageError("give --iterations or --duration")
    if args.iterations is not None and args.iterations < 1:
        raise UsageError("--iterations must be at least 1")
    if args.mutants < 1:
        raise UsageError("--mutants must be at least 1")
    gen_cfg = _gen_config(args)
    backend = backends.backend_from_spec(args.backend, args.timeout_ms)
    cfg = harness.CampaignConfig(
        seed=args.seed,
        gen=gen_cfg,
        mutants=args.mutants,
        comparator=harness.ComparatorConfig.for_dtype(args.dtype, args.atol, args.rtol),
        timeout_ms=args.timeout_ms,
        report_stc_na=args.report_stc_na,
    )
    out = args.out or f"einfuzz-{harness.campaign_id(backend.id, args.seed)}"
    stats = harness.run_campaign(
        backend, cfg, out, iterations=args.iterations, duration_s=args.duration, workers=args.workers
    )
    print(json.dumps(stats.to_json()))
    _err(_stats_table(stats.to_json(), backend.id))
    _err(f"campaign directory: {out}")
    bugs = stats.counts["crash"] + stats.counts["wrong_code"]
    return EXIT_FOUND if bugs else EXIT_OK


def cmd_baseline(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    try:
        cfg = grammar.CfgConfig(
            seed=args.seed,
            max_terms=args.max_terms,
            max_rank=args.max_rank,
            alphabet_size=args.alphabet_size,
            min_extent=args.min_extent,
            max_extent=args.max_extent,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stats = grammar.run_validity_experiment(cfg, args.samples, args.generator)
    print(json.dumps(stats.to_json()))
    _err(stats.summary())
    return EXIT_OK


def cmd_replay(args) -> int:
    backend = backends.backend_from_spec(args.backend, args.timeout_ms)
    verdict = harness.replay(args.report, backend, args.timeout_ms)
    print(json.dumps(verdict.to_json()))
    _err(f"verdict on {backend.id}: {verdict.kind.value}")
    return EXIT_FOUND if verdict.is_bug else EXIT_OK


def _stats_table(stats: dict, title: str = "") -> str:
    rows = [
        ("#Iterations", stats.get("iterations", 0)),
        ("Pass", stats.get("pass", 0)),
        ("STC-NA", stats.get("stc_na", 0)),
        ("C-Bugs", stats.get("crash", 0)),
        ("WC-Bugs", stats.get("wrong_code", 0)),
    ]
    lines = [title] if title else []
    lines += [f"{name:<12}{value:>10}" for name, value in rows]
    lat = stats.get("latency_ms") or {}
    if lat:
        lines.append(f"{'latency p50':<12}{lat.get('p50', 0):>10.2f} ms")
    if "wall_clock_s" in stats:
        lines.append(f"{'wall clock':<12}{stats['wall_clock_s']:>10.2f} s")
    return "\n".join(lines)


def cmd_stats(args) -> int:
    path = Path(args.campaign_dir) / "stats.json"
    try:
        stats = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        _err(f"{args.campaign_dir}: no stats.json (not a campaign directory?)")
        return EXIT_ERROR
    except json.JSONDecodeError as exc:
        _err(f"{path}: {exc}")
        return EXIT_ERROR
    title = ""
    campaign = Path(args.campaign_dir) / "campaign.json"
    if campaign.exists():
        title = json.loads(campaign.read_text(encoding="utf-8")).get("backend", "")
    print(_stats_table(stats, title))
    return EXIT_OK


def cmd_emit(args) -> int:
    try:
        doc = json.loads(_read(args.path))
        sys.stdout.write(emit_source(doc, args.dialect))
    except (json.JSONDecodeError, SchemaError, ShapeMismatchError) as exc:
        _err(f"malformed document: {exc}")
        return EXIT_ERROR
    except UnsupportedConstruct as exc:
        _err(f"unsupported: {exc}")
        return EXIT_FOUND
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "validate": cmd_validate,
    "fuzz": cmd_fuzz,
    "baseline": cmd_baseline,
    "replay": cmd_replay,
    "stats": cmd_stats,
    "emit": cmd_emit,
}


def main(argv: list[str] | None = None) -> int:
    parser, opts = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = {}
        if args.config:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(config, dict):
                raise UsageError("--config must hold a JSON object")
        opts.resolve(args.command, args, config)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _err(f"einfuzz {args.command}: {exc}")
        return EXIT_USAGE
    except (OSError, backends.BackendConfigError, harness.ReportError, json.JSONDecodeError) as exc:
        _err(f"einfuzz {args.command}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
