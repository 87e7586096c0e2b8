"""Metamorphic fuzzing loop, output comparator, campaign driver and replay.

One iteration: generate a kernel and inputs, run the reference
configuration, sample equivalent mutants, run each against the same inputs,
and classify:

* ``stc_na``     the reference itself did not succeed (no report by default)
* ``crash``      some mutant crashed or timed out
* ``wrong_code`` some mutant succeeded with an output that differs from the
                 reference; outranks ``crash`` when both occur
* ``pass``       everything agreed

Campaign directory layout::

    campaign.json          config, seed, backend id
    stats.json             CampaignStats
    reports/iter-<n>.json  one self-contained report per bug verdict
"""

from __future__ import annotations

import concurrent.futures
import datetime as _dt
import enum
import json
import logging
import math
import os
import signal
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from einfuzz.backends import (
    DEFAULT_TIMEOUT_MS,
    Crashed,
    ExecutionRequest,
    Outcome,
    Success,
    TimedOut,
    outcome_from_json,
    outcome_to_json,
)
from einfuzz.gen import GenConfig, generate_case, iteration_rng
from einfuzz.ir import EinsumKernel, SchemaError, ShapeMismatchError, from_json, render, to_json
from einfuzz.mutation import Mutant, apply_provenance, sample_mutants
from einfuzz.tensor import TensorData

log = logging.getLogger(__name__)

REPORT_VERSION = 1
MAX_DIFFS = 10


@dataclass(frozen=True)
class ComparatorConfig:
    mode: str = "exact"
    atol: float = 1e-8
    rtol: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("exact", "epsilon"):
            raise ValueError(f"unknown comparator mode {self.mode!r}")
        if self.atol < 0 or self.rtol < 0:
            raise ValueError("tolerances must be non-negative")

    @classmethod
    def for_dtype(cls, dtype: str, atol: float = 1e-8, rtol: float = 1e-6) -> "ComparatorConfig":
        return cls("exact" if dtype == "int" else "epsilon", atol, rtol)


@dataclass(frozen=True)
class Comparison:
    equal: bool
    diffs: tuple[dict, ...] = ()

    def __bool__(self) -> bool:
        return self.equal


def compare(ref: TensorData, cand: TensorData, cfg: ComparatorConfig = ComparatorConfig()) -> Comparison:
    """Compare two outputs; an absent coordinate counts as zero."""
    if tuple(ref.shape) != tuple(cand.shape):
        return Comparison(False, ({"shape": [list(ref.shape), list(cand.shape)]},))
    a, b = ref.to_dict(), cand.to_dict()
    bad = []
    for coord in sorted(a.keys() | b.keys()):
        x, y = a.get(coord, 0), b.get(coord, 0)
        if cfg.mode == "exact":
            ok = x == y
        else:
            ok = abs(x - y) <= cfg.atol + cfg.rtol * max(abs(x), abs(y))
        if not ok:
            bad.append({"coord": list(coord), "reference": x, "candidate": y, "abs_diff": abs(x - y)})
    if not bad:
        return Comparison(True)
    bad.sort(key=lambda d: -d["abs_diff"] if not math.isnan(d["abs_diff"]) else -math.inf)
    return Comparison(False, tuple(bad[:MAX_DIFFS]))


class VerdictKind(str, enum.Enum):
    PASS = "pass"
    STC_NA = "stc_na"
    CRASH = "crash"
    WRONG_CODE = "wrong_code"


@dataclass
class Verdict:
    kind: VerdictKind
    # (mutant number, outcome) for every crashed or timed-out mutant
    crashes: list[tuple[int, Outcome]] = field(default_factory=list)
    # (mutant number, diff summary) for every divergent mutant
    divergences: list[tuple[int, tuple[dict, ...]]] = field(default_factory=list)
    reference: Outcome | None = None

    @property
    def is_bug(self) -> bool:
        return self.kind in (VerdictKind.CRASH, VerdictKind.WRONG_CODE)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "crashes": [{"mutant": n, "outcome": outcome_to_json(o)} for n, o in self.crashes],
            "divergences": [{"mutant": n, "diff": list(d)} for n, d in self.divergences],
        }


def judge(reference: Outcome, mutants: Sequence[Outcome], cmp: ComparatorConfig) -> Verdict:
    if not isinstance(reference, Success):
        return Verdict(VerdictKind.STC_NA, reference=reference)
    verdict = Verdict(VerdictKind.PASS, reference=reference)
    for n, outcome in enumerate(mutants):
        if isinstance(outcome, (Crashed, TimedOut)):
            verdict.crashes.append((n, outcome))
        elif isinstance(outcome, Success):
            result = compare(reference.output, outcome.output, cmp)
            if not result.equal:
                verdict.divergences.append((n, result.diffs))
        # a rejected mutant is an unsupported iteration scheme, not a bug
    if verdict.divergences:
        verdict.kind = VerdictKind.WRONG_CODE
    elif verdict.crashes:
        verdict.kind = VerdictKind.CRASH
    return verdict


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def execute_all(backend, kernel: EinsumKernel, inputs, mutants: Sequence[Mutant], timeout_ms: int):
    ref_doc = to_json(kernel, inputs)
    reference = backend.execute(ExecutionRequest(ref_doc, timeout_ms))
    if not isinstance(reference, Success):
        return ref_doc, reference, []
    outcomes = [backend.execute(ExecutionRequest(to_json(m.kernel, inputs), timeout_ms)) for m in mutants]
    return ref_doc, reference, outcomes


def build_report(
    verdict: Verdict,
    backend_id: str,
    ref_doc: dict,
    kernel: EinsumKernel,
    mutants: Sequence[Mutant],
    outcomes: Sequence[Outcome],
    cmp: ComparatorConfig,
    seed_material: Mapping[str, Any],
    started: str,
) -> dict:
    return {
        "version": REPORT_VERSION,
        "campaign_id": seed_material.get("campaign_id", ""),
        "iteration": seed_material.get("iteration"),
        "seed": dict(seed_material),
        "backend": backend_id,
        "verdict": verdict.to_json(),
        "rendered": render(kernel),
        "kernel": ref_doc,
        "mutants": [m.provenance() for m in mutants],
        "reference_output": outcome_to_json(verdict.reference) if verdict.reference is not None else None,
        "mutant_outcomes": [outcome_to_json(o) for o in outcomes],
        "comparator": asdict(cmp),
        "timestamps": {"started": started, "finished": _now()},
    }


def run_iteration(
    backend,
    gen_cfg: GenConfig,
    budget: int,
    cmp: ComparatorConfig,
    rng,
    *,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    seed_material: Mapping[str, Any] | None = None,
    report_stc_na: bool = False,
) -> tuple[Verdict, dict | None]:
    """Run one generate/execute/mutate/compare cycle.

    Returns the verdict and, for bug verdicts (and ``stc_na`` when
    ``report_stc_na`` is set), a self-contained report dict.
    """
    started = _now()
    kernel, inputs = generate_case(gen_cfg, rng)
    mutants = sample_mutants(kernel, budget, rng)
    ref_doc, reference, outcomes = execute_all(backend, kernel, inputs, mutants, timeout_ms)
    verdict = judge(reference, outcomes, cmp)
    report = None
    if verdict.is_bug or (report_stc_na and verdict.kind is VerdictKind.STC_NA):
        report = build_report(
            verdict, backend.id, ref_doc, kernel, mutants, outcomes, cmp, seed_material or {}, started
        )
    return verdict, report


class ReportError(SchemaError):
    pass


def load_report(path: str | os.PathLike) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(report, dict):
        raise ReportError(f"{path}: report must be a JSON object")
    for key, kind in (("version", int), ("kernel", dict), ("mutants", list), ("comparator", dict), ("backend", str)):
        if not isinstance(report.get(key), kind):
            raise ReportError(f"{path}: missing or ill-typed field {key!r}")
    return report


def replay(report_path: str | os.PathLike, backend, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> Verdict:
    """Re-run exactly the recorded reference and mutants and re-judge."""
    report = load_report(report_path)
    if report["backend"] != backend.id:
        log.warning("report was recorded on %s, replaying on %s", report["backend"], backend.id)
    try:
        kernel, inputs = from_json(report["kernel"])
        cmp = ComparatorConfig(**report["comparator"])
        mutants = [apply_provenance(kernel, m["permutation"], m["formats"]) for m in report["mutants"]]
    except (SchemaError, ShapeMismatchError, KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"{report_path}: {exc}") from None
    _, reference, outcomes = execute_all(backend, kernel, inputs, mutants, timeout_ms)
    return judge(reference, outcomes, cmp)


# -- campaigns ---------------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    seed: int = 0
    gen: GenConfig = field(default_factory=GenConfig)
    mutants: int = 8
    comparator: ComparatorConfig = field(default_factory=ComparatorConfig)
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    report_stc_na: bool = False

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "gen": self.gen.to_json(),
            "mutants": self.mutants,
            "comparator": asdict(self.comparator),
            "timeout_ms": self.timeout_ms,
            "report_stc_na": self.report_stc_na,
        }


@dataclass
class CampaignStats:
    iterations: int = 0
    counts: dict[str, int] = field(default_factory=lambda: {k.value: 0 for k in VerdictKind})
    wall_clock_s: float = 0.0
    latencies_ms: list[float] = field(default_factory=list, repr=False)
    # iteration number -> verdict kind, in iteration order
    verdicts: dict[int, str] = field(default_factory=dict, repr=False)

    def record(self, iteration: int, kind: VerdictKind, latency_ms: float) -> None:
        self.iterations += 1
        self.counts[kind.value] += 1
        self.latencies_ms.append(latency_ms)
        self.verdicts[iteration] = kind.value

    def quantiles(self) -> dict[str, float]:
        if not self.latencies_ms:
            return {}
        data = self.latencies_ms
        # "inclusive" interpolates linearly between order statistics
        qs = statistics.quantiles(data, n=100, method="inclusive") if len(data) > 1 else data * 99
        return {"p50": qs[49], "p90": qs[89], "p99": qs[98], "max": max(data)}

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            **self.counts,
            "wall_clock_s": round(self.wall_clock_s, 3),
            "latency_ms": {k: round(v, 3) for k, v in self.quantiles().items()},
        }


def campaign_id(backend_id: str, seed: int) -> str:
    return f"seed{seed}-{backend_id.replace(':', '-').replace(',', '+').replace(' ', '_').replace('/', '_')}"


def _one(backend, cfg: CampaignConfig, iteration: int, cid: str):
    t0 = time.perf_counter()
    material = {"campaign_id": cid, "campaign_seed": cfg.seed, "iteration": iteration}
    verdict, report = run_iteration(
        backend,
        cfg.gen,
        cfg.mutants,
        cfg.comparator,
        iteration_rng(cfg.seed, iteration),
        timeout_ms=cfg.timeout_ms,
        seed_material=material,
        report_stc_na=cfg.report_stc_na,
    )
    return iteration, verdict.kind, report, (time.perf_counter() - t0) * 1000


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    tmp.replace(path)


def run_campaign(
    backend,
    cfg: CampaignConfig,
    out_dir: str | os.PathLike,
    *,
    iterations: int | None = None,
    duration_s: float | None = None,
    workers: int = 1,
) -> CampaignStats:
    """Run iterations 0, 1, 2, ... until the iteration or time budget is spent.

    Iteration ``n`` always draws from ``iteration_rng(seed, n)``, so its
    verdict does not depend on the number of workers. SIGINT/SIGTERM stop
    the campaign after the in-flight work and stats are still written.
    """
    if iterations is None and duration_s is None:
        raise ValueError("give an iteration count or a duration")
    out = Path(out_dir)
    reports = out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    cid = campaign_id(backend.id, cfg.seed)
    _write_json(out / "campaign.json", {"campaign_id": cid, "backend": backend.id, "config": cfg.to_json(),
                                        "iterations": iterations, "duration_s": duration_s, "started": _now()})
    stats = CampaignStats()
    start = time.monotonic()
    deadline = None if duration_s is None else start + duration_s
    limit = math.inf if iterations is None else iterations

    stop = threading.Event()

    def more(n: int) -> bool:
        return n < limit and not stop.is_set() and (deadline is None or time.monotonic() < deadline)

    def collect(result) -> None:
        n, kind, report, latency = result
        stats.record(n, kind, latency)
        if report is not None:
            _write_json(reports / f"iter-{n}.json", report)

    restore = _trap_sigterm(stop)
    try:
        if workers <= 1:
            n = 0
            while more(n):
                collect(_one(backend, cfg, n, cid))
                n += 1
        else:
            with concurrent.futures.ProcessPoolExecutor(workers) as pool:
                n = 0
                wave = workers * 4
                while more(n):
                    batch = [pool.submit(_one, backend, cfg, k, cid) for k in range(n, int(min(n + wave, limit)))]
                    n += len(batch)
                    for fut in batch:
                        collect(fut.result())
    except KeyboardInterrupt:
        stop.set()
    finally:
        restore()
        if stop.is_set():
            log.warning("campaign interrupted after %d iterations", stats.iterations)
        stats.wall_clock_s = time.monotonic() - start
        _write_json(out / "stats.json", stats.to_json())
    return stats


def _trap_sigterm(stop: threading.Event):
    """Turn SIGTERM into a request to stop after the in-flight iteration."""
    if threading.current_thread() is not threading.main_thread():
        return lambda: None

    def handler(signum, frame):
        stop.set()

    previous = signal.signal(signal.SIGTERM, handler)
    return lambda: signal.signal(signal.SIGTERM, previous)


def load_stats(campaign_dir: str | os.PathLike) -> dict:
    path = Path(campaign_dir) / "stats.json"
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def report_outcomes(report: dict) -> tuple[Outcome | None, list[Outcome]]:
    """Decode the outcomes stored in a report."""
    kernel, _ = from_json(report["kernel"])
    shape = kernel.shape_of(kernel.output)
    ref = report.get("reference_output")
    reference = outcome_from_json(ref, shape, kernel.dtype) if ref else None
    return reference, [outcome_from_json(o, shape, kernel.dtype) for o in report.get("mutant_outcomes", [])]
