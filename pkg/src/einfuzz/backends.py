"""Execution targets behind one interface: ``backend.execute(request)``.

* ``RefBackend``        in-process, format-aware evaluator; the correct STC
* ``FaultyBackend``     the same engine with opt-in injected defects
* ``SubprocessBackend`` speaks the JSON adapter protocol to an external tool

Adapter protocol: the request document is written to the adapter's stdin as
one JSON object. The adapter prints exactly one JSON object on stdout and
exits 0::

    {"status": "ok", "output": {"coords": [[...], ...], "values": [...]}}
    {"status": "rejected", "message": "..."}

Any other exit status or unparsable stdout is a crash.
"""

from __future__ import annotations

import json
import os
import shlex
import signal
import subprocess
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from einfuzz.ir import (
    EinsumKernel,
    Format,
    SchemaError,
    ShapeMismatchError,
    dumps,
    from_json,
    kernel_from_json,
    tensor_from_json,
    tensor_to_json,
    validate,
)
from einfuzz.tensor import TensorData, eval_formatted, iter_contributions, materialize, store, store_inputs

DEFAULT_TIMEOUT_MS = 30_000


class BackendConfigError(RuntimeError):
    """The backend itself is unusable (e.g. the adapter cannot be spawned)."""


@dataclass(frozen=True)
class ExecutionRequest:
    document: dict
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    # advisory only; passed to adapters in EINFUZZ_MEMORY_MB
    memory_mb: int | None = None


@dataclass(frozen=True)
class Success:
    output: TensorData
    status = "ok"


@dataclass(frozen=True)
class Rejected:
    message: str
    status = "rejected"


@dataclass(frozen=True)
class Crashed:
    detail: str
    status = "crashed"


@dataclass(frozen=True)
class TimedOut:
    limit_ms: int
    status = "timed_out"


Outcome = Success | Rejected | Crashed | TimedOut


def outcome_to_json(outcome: Outcome) -> dict:
    if isinstance(outcome, Success):
        return {"status": "ok", "output": tensor_to_json(outcome.output)}
    if isinstance(outcome, Rejected):
        return {"status": "rejected", "message": outcome.message}
    if isinstance(outcome, Crashed):
        return {"status": "crashed", "detail": outcome.detail}
    return {"status": "timed_out", "limit_ms": outcome.limit_ms}


def outcome_from_json(obj: Mapping, shape: tuple[int, ...], dtype: str) -> Outcome:
    status = obj.get("status")
    if status == "ok":
        return Success(tensor_from_json(obj.get("output"), shape, dtype, "output"))
    if status == "rejected":
        return Rejected(str(obj.get("message", "")))
    if status == "crashed":
        return Crashed(str(obj.get("detail", "")))
    if status == "timed_out":
        return TimedOut(int(obj.get("limit_ms", 0)))
    raise SchemaError(f"unknown outcome status {status!r}")


def _load(req: ExecutionRequest) -> tuple[EinsumKernel, dict[str, TensorData]] | Rejected:
    try:
        kernel, inputs = from_json(req.document)
    except (SchemaError, ShapeMismatchError) as exc:
        return Rejected(str(exc))
    report = validate(kernel)
    if not report.ok:
        return Rejected("; ".join(v.message for v in report.violations))
    return kernel, inputs


class RefBackend:
    """Correct reference: evaluates on the requested storage formats."""

    id = "ref"

    def execute(self, req: ExecutionRequest) -> Outcome:
        loaded = _load(req)
        if isinstance(loaded, Rejected):
            return loaded
        kernel, inputs = loaded
        result = eval_formatted(kernel, store_inputs(kernel, inputs))
        # round-trip through the output's own storage format
        return Success(materialize(store(result, kernel.output.format)))


FAULTS = ("stale-output-cursor", "crash-on-rank3", "crash-on-coo")


class FaultyBackend:
    """Reference engine with seeded defects.

    ``stale-output-cursor``: when the output is stored compressed, results are
    inserted through a cursor into the output's coordinate array that is
    never rewound. A contribution to a coordinate behind the cursor is
    missed and appended again, and the later copy wins when the output is
    read back. Dense output uses direct addressing and is unaffected.

    ``crash-on-rank3``: abort when a tensor of rank 3 or more is stored in
    a compressed format.

    ``crash-on-coo``: abort when any tensor is stored as COO.
    """

    def __init__(self, faults: Sequence[str] = ()):
        unknown = set(faults) - set(FAULTS)
        if unknown:
            raise BackendConfigError(f"unknown fault(s): {', '.join(sorted(unknown))}")
        self.faults = frozenset(faults)

    @property
    def id(self) -> str:
        return "faulty:" + ",".join(sorted(self.faults))

    def execute(self, req: ExecutionRequest) -> Outcome:
        loaded = _load(req)
        if isinstance(loaded, Rejected):
            return loaded
        kernel, inputs = loaded
        if "crash-on-rank3" in self.faults:
            for term in kernel.terms:
                if term.rank >= 3 and term.format is not Format.DENSE:
                    return Crashed(f"abort: rank-{term.rank} {term.format.value} tensor {term.name}")
        if "crash-on-coo" in self.faults:
            for term in kernel.terms:
                if term.format is Format.COO:
                    return Crashed(f"abort: coo tensor {term.name}")
        stored = store_inputs(kernel, inputs)
        if "stale-output-cursor" in self.faults and kernel.output.format is not Format.DENSE:
            return Success(_stale_cursor_assemble(kernel, stored))
        result = eval_formatted(kernel, stored)
        return Success(materialize(store(result, kernel.output.format)))


def _stale_cursor_assemble(kernel: EinsumKernel, stored) -> TensorData:
    crd: list[tuple[int, ...]] = []
    vals: list = []
    cursor = 0
    for coord, value in iter_contributions(kernel, stored):
        q = cursor
        while q < len(crd) and crd[q] != coord:
            q += 1
        if q == len(crd):
            crd.append(coord)
            vals.append(value)
        else:
            vals[q] += value
        # the defect: the cursor only ever moves forward
        cursor = q
    return TensorData.from_dict(kernel.shape_of(kernel.output), dict(zip(crd, vals)))


class SubprocessBackend:
    """Runs an external adapter once per request."""

    def __init__(self, command: str | Sequence[str], timeout_ms: int | None = None):
        self.command = command
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise BackendConfigError("empty adapter command")
        self.timeout_ms = timeout_ms

    @property
    def id(self) -> str:
        return "cmd:" + (self.command if isinstance(self.command, str) else shlex.join(self.command))

    def execute(self, req: ExecutionRequest) -> Outcome:
        try:
            kernel = kernel_from_json(req.document)
        except SchemaError as exc:
            return Rejected(str(exc))
        timeout_ms = self.timeout_ms if self.timeout_ms is not None else req.timeout_ms
        env = dict(os.environ)
        if req.memory_mb is not None:
            env["EINFUZZ_MEMORY_MB"] = str(req.memory_mb)
        try:
            proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
                env=env,
            )
        except OSError as exc:
            raise BackendConfigError(f"cannot spawn adapter {self.argv[0]!r}: {exc}") from exc
        try:
            out, err = proc.communicate(dumps(req.document).encode(), timeout=timeout_ms / 1000)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            return TimedOut(timeout_ms)
        finally:
            if proc.poll() is None:
                _kill_group(proc)
        if proc.returncode != 0:
            if proc.returncode < 0:
                detail = f"killed by signal {-proc.returncode}"
            else:
                detail = f"exit status {proc.returncode}"
            tail = err.decode(errors="replace").strip().splitlines()[-1:]
            return Crashed(detail + (f": {tail[0]}" if tail else ""))
        return _parse_response(out, kernel)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass
    proc.communicate()


def _parse_response(raw: bytes, kernel: EinsumKernel) -> Outcome:
    try:
        obj: Any = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        return Crashed(f"malformed adapter output: {exc}")
    if not isinstance(obj, dict):
        return Crashed("malformed adapter output: not a JSON object")
    status = obj.get("status")
    if status == "rejected":
        return Rejected(str(obj.get("message", "")))
    if status != "ok":
        return Crashed(f"malformed adapter output: status {status!r}")
    try:
        shape = kernel.shape_of(kernel.output)
        return Success(tensor_from_json(obj.get("output"), shape, kernel.dtype, "output"))
    except (SchemaError, ShapeMismatchError, KeyError) as exc:
        return Crashed(f"malformed adapter output: {exc}")


def backend_from_spec(spec: str, timeout_ms: int | None = None):
    """Parse ``ref``, ``faulty:<fault,...>`` or ``cmd:<adapter command>``."""
    if spec == "ref":
        return RefBackend()
    if spec.startswith("faulty:") or spec == "faulty":
        faults = [f for f in spec.partition(":")[2].split(",") if f]
        return FaultyBackend(faults)
    if spec.startswith("cmd:"):
        return SubprocessBackend(spec[4:], timeout_ms)
    raise BackendConfigError(f"unknown backend {spec!r}; expected ref, faulty:<faults> or cmd:<command>")
