"""Kernel IR: tensor terms, einsum kernels, validity rules, text syntax and JSON.

A kernel is written ``A(i,j) = B(i,k) * C(k,j)``. The text form carries only
structure; storage formats, index extents and dtype travel in the JSON
document, which is what every backend consumes.
"""

from __future__ import annotations

import enum
import json
import string
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping

if TYPE_CHECKING:
    from einfuzz.tensor import TensorData

INDEX_ALPHABET = string.ascii_lowercase
DTYPES = ("int", "float")
JSON_VERSION = 1
# Largest integer magnitude a JSON double carries exactly.
MAX_SAFE_INT = 2**53 - 1


class Format(str, enum.Enum):
    DENSE = "dense"
    COO = "coo"
    CSR = "csr"
    CSC = "csc"

    def __str__(self) -> str:
        return self.value


def applicable_formats(rank: int) -> tuple[Format, ...]:
    """Storage formats a tensor of the given rank may take."""
    if rank == 0:
        return (Format.DENSE,)
    if rank == 2:
        return (Format.DENSE, Format.COO, Format.CSR, Format.CSC)
    return (Format.DENSE, Format.COO)


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class SchemaError(ValueError):
    """A JSON document is missing a field or has a field of the wrong type."""


class ShapeMismatchError(ValueError):
    """Tensor data does not fit the extents declared by the kernel."""


@dataclass(frozen=True)
class TensorTerm:
    name: str
    indices: tuple[str, ...]
    format: Format = Format.DENSE

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "format", Format(self.format))

    @property
    def rank(self) -> int:
        return len(self.indices)

    def render(self) -> str:
        return f"{self.name}({','.join(self.indices)})"


@dataclass(frozen=True)
class EinsumKernel:
    output: TensorTerm
    inputs: tuple[TensorTerm, ...]
    dims: dict[str, int] = field(default_factory=dict)
    dtype: str = "int"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "dims", dict(self.dims))

    @property
    def terms(self) -> tuple[TensorTerm, ...]:
        return (self.output, *self.inputs)

    def used_indices(self) -> list[str]:
        """Indices of all input terms, in order of first appearance."""
        seen: dict[str, None] = {}
        for term in self.inputs:
            for idx in term.indices:
                seen.setdefault(idx, None)
        return list(seen)

    def contraction_indices(self) -> list[str]:
        out = set(self.output.indices)
        return [idx for idx in self.used_indices() if idx not in out]

    def shape_of(self, term: TensorTerm) -> tuple[int, ...]:
        return tuple(self.dims[idx] for idx in term.indices)

    def input(self, name: str) -> TensorTerm:
        for term in self.inputs:
            if term.name == name:
                return term
        raise KeyError(name)

    def term(self, name: str) -> TensorTerm:
        if self.output.name == name:
            return self.output
        return self.input(name)

    def with_formats(self, formats: Mapping[str, Format]) -> "EinsumKernel":
        def retag(t: TensorTerm) -> TensorTerm:
            return TensorTerm(t.name, t.indices, Format(formats.get(t.name, t.format)))

        return EinsumKernel(retag(self.output), tuple(retag(t) for t in self.inputs), self.dims, self.dtype)

    def formats(self) -> dict[str, Format]:
        return {t.name: t.format for t in self.terms}

    def render(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Violation:
    rule: str
    symbol: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]


def _is_name(name: str) -> bool:
    return (
        len(name) >= 1
        and name[0] in string.ascii_uppercase
        and all(c in string.digits for c in name[1:])
    )


def validate(kernel: EinsumKernel) -> ValidationReport:
    """Decide whether a kernel is a well-formed einsum program.

    Never raises; every broken rule is reported with the offending symbol.
    Rule names: ``name``, ``index``, ``duplicate-index``, ``empty-inputs``,
    ``output-index``, ``connectivity``, ``dimension``, ``format``, ``dtype``.
    """
    out: list[Violation] = []

    def flag(rule: str, symbol: str, message: str) -> None:
        out.append(Violation(rule, symbol, message))

    if kernel.dtype not in DTYPES:
        flag("dtype", str(kernel.dtype), f"unknown dtype {kernel.dtype!r}")
    if not kernel.inputs:
        flag("empty-inputs", "", "inputs must be non-empty")

    names = [t.name for t in kernel.terms]
    seen_names: set[str] = set()
    for name in names:
        if not _is_name(name):
            flag("name", name, f"invalid tensor name {name!r}")
        if name in seen_names:
            flag("name", name, f"tensor name {name} used more than once")
        seen_names.add(name)

    for term in kernel.terms:
        seen: set[str] = set()
        for idx in term.indices:
            if len(idx) != 1 or idx not in INDEX_ALPHABET:
                flag("index", idx, f"invalid index {idx!r} in {term.name}")
            if idx in seen:
                flag("duplicate-index", idx, f"index {idx} repeated in {term.name}")
            seen.add(idx)

    used = kernel.used_indices()
    used_set = set(used)
    for idx in kernel.output.indices:
        if idx not in used_set:
            flag("output-index", idx, f"output index {idx} not in inputs")

    if len(kernel.inputs) >= 2:
        counts = {idx: 0 for idx in used}
        for term in kernel.inputs:
            for idx in set(term.indices):
                counts[idx] += 1
        for idx in kernel.contraction_indices():
            if counts[idx] < 2:
                flag("connectivity", idx, f"contraction index {idx} appears in fewer than two inputs")

    all_indices = used_set | set(kernel.output.indices)
    for idx in sorted(all_indices):
        if idx not in kernel.dims:
            flag("dimension", idx, f"index {idx} has no extent")
    for idx, extent in sorted(kernel.dims.items()):
        if idx not in all_indices:
            flag("dimension", idx, f"extent given for unused index {idx}")
        elif not isinstance(extent, int) or isinstance(extent, bool) or extent < 1:
            flag("dimension", idx, f"extent of {idx} must be a positive integer")

    for term in kernel.terms:
        if term.format not in applicable_formats(term.rank):
            flag("format", term.name, f"{term.format.value} is not applicable to rank-{term.rank} tensor {term.name}")

    return ValidationReport(not out, tuple(out))


# -- text syntax -------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.data = text.encode("utf-8")
        self.pos = 0

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.pos)

    def skip(self) -> None:
        while self.pos < len(self.data) and self.data[self.pos] in b" \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        if self.pos >= len(self.data):
            return ""
        return chr(self.data[self.pos])

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            found = self.peek() or "end of input"
            raise self.error(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def name(self) -> str:
        self.skip()
        start = self.pos
        if self.pos < len(self.data) and chr(self.data[self.pos]) in string.ascii_uppercase:
            self.pos += 1
            while self.pos < len(self.data) and chr(self.data[self.pos]) in string.digits:
                self.pos += 1
            return self.data[start:self.pos].decode()
        raise self.error("expected tensor name")

    def index(self) -> str:
        self.skip()
        if self.pos < len(self.data) and chr(self.data[self.pos]) in INDEX_ALPHABET:
            self.pos += 1
            return chr(self.data[self.pos - 1])
        raise self.error("expected index")

    def term(self) -> TensorTerm:
        name = self.name()
        self.expect("(")
        indices = []
        if self.peek() != ")":
            indices.append(self.index())
            while self.peek() == ",":
                self.pos += 1
                indices.append(self.index())
        self.expect(")")
        return TensorTerm(name, tuple(indices))

    def kernel(self) -> EinsumKernel:
        output = self.term()
        self.expect("=")
        inputs = [self.term()]
        while self.peek() == "*":
            self.pos += 1
            inputs.append(self.term())
        if self.peek():
            raise self.error(f"unexpected {self.peek()!r}")
        return EinsumKernel(output, tuple(inputs))


def parse(text: str) -> EinsumKernel:
    """Parse ``Name(idx,...) = Term * Term ...`` into a kernel with no dims.

    All formats default to dense. Raises ParseError carrying the byte offset
    of the first unexpected token.
    """
    return _Parser(text).kernel()


def render(kernel: EinsumKernel) -> str:
    rhs = " * ".join(t.render() for t in kernel.inputs)
    return f"{kernel.output.render()} = {rhs}"


# -- JSON --------------------------------------------------------------------


def _term_to_json(term: TensorTerm) -> dict:
    return {"name": term.name, "indices": list(term.indices), "format": term.format.value}


def _require(obj: Mapping, key: str, kind: type | tuple[type, ...], where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _term_from_json(obj: Any, where: str) -> TensorTerm:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    name = _require(obj, "name", str, where)
    indices = _require(obj, "indices", list, where)
    if not all(isinstance(i, str) for i in indices):
        raise SchemaError(f"{where}: indices must be strings")
    fmt = _require(obj, "format", str, where)
    try:
        fmt = Format(fmt)
    except ValueError:
        raise SchemaError(f"{where}: unknown format {fmt!r}") from None
    return TensorTerm(name, tuple(indices), fmt)


def tensor_to_json(t: "TensorData") -> dict:
    return {"coords": [list(c) for c in t.coords], "values": list(t.values)}


def tensor_from_json(obj: Any, shape: tuple[int, ...], dtype: str, where: str) -> "TensorData":
    from einfuzz.tensor import TensorData

    coords = _require(obj, "coords", list, where)
    values = _require(obj, "values", list, where)
    if len(coords) != len(values):
        raise SchemaError(f"{where}: coords and values differ in length")
    number = (int,) if dtype == "int" else (int, float)
    if not all(type(v) in number for v in values):
        bad = next(v for v in values if type(v) not in number)
        raise SchemaError(f"{where}: value {bad!r} is not a {dtype}")
    if dtype == "int" and any(abs(v) > MAX_SAFE_INT for v in values):
        raise SchemaError(f"{where}: integer value beyond 53-bit range")
    rank = len(shape)
    if not all(type(c) is list and all(type(x) is int for x in c) for c in coords):
        raise SchemaError(f"{where}: coordinates must be lists of integers")
    if any(len(c) != rank for c in coords):
        raise ShapeMismatchError(f"{where}: coordinate rank differs from tensor rank {rank}")
    for d, n in enumerate(shape):
        column = [c[d] for c in coords]
        if column and (min(column) < 0 or max(column) >= n):
            bad = next(c for c in coords if not 0 <= c[d] < n)
            raise ShapeMismatchError(f"{where}: coordinate {tuple(bad)} outside shape {shape}")
    parsed = [tuple(c) for c in coords]
    if dtype == "float":
        values = [float(v) for v in values]
    try:
        return TensorData(shape, tuple(parsed), tuple(values))
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def to_json(kernel: EinsumKernel, inputs: Mapping[str, "TensorData"]) -> dict:
    """Build the JSON kernel document (as a dict) for a kernel and its input data."""
    tensors = {}
    for term in kernel.inputs:
        if term.name not in inputs:
            raise SchemaError(f"no tensor data for input {term.name}")
        data = inputs[term.name]
        if tuple(data.shape) != kernel.shape_of(term):
            raise ShapeMismatchError(f"{term.name}: data shape {data.shape} != {kernel.shape_of(term)}")
        tensors[term.name] = tensor_to_json(data)
    return {
        "version": JSON_VERSION,
        "dtype": kernel.dtype,
        "kernel": {
            "output": _term_to_json(kernel.output),
            "inputs": [_term_to_json(t) for t in kernel.inputs],
        },
        "dims": {idx: kernel.dims[idx] for idx in sorted(kernel.dims)},
        "tensors": tensors,
    }


def kernel_from_json(doc: Any) -> EinsumKernel:
    """Read only the kernel structure, dims and dtype from a document."""
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    version = _require(doc, "version", int, "document")
    if version != JSON_VERSION:
        raise SchemaError(f"unsupported document version {version}")
    dtype = _require(doc, "dtype", str, "document")
    if dtype not in DTYPES:
        raise SchemaError(f"document: dtype must be one of {DTYPES}")
    body = _require(doc, "kernel", dict, "document")
    output = _term_from_json(_require(body, "output", dict, "kernel"), "kernel.output")
    raw_inputs = _require(body, "inputs", list, "kernel")
    if not raw_inputs:
        raise SchemaError("inputs must be non-empty")
    inputs = tuple(_term_from_json(t, f"kernel.inputs[{n}]") for n, t in enumerate(raw_inputs))
    dims = _require(doc, "dims", dict, "document")
    for idx, extent in dims.items():
        if not isinstance(extent, int) or isinstance(extent, bool):
            raise SchemaError(f"dims: extent of {idx!r} must be an integer")
    return EinsumKernel(output, inputs, dict(dims), dtype)


def from_json(doc: Any) -> tuple[EinsumKernel, dict[str, "TensorData"]]:
    """Inverse of to_json. Accepts a dict or a JSON string."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed JSON: {exc}") from None
    kernel = kernel_from_json(doc)
    tensors = _require(doc, "tensors", dict, "document")
    data = {}
    for term in kernel.inputs:
        if term.name not in tensors:
            raise SchemaError(f"tensors: missing data for input {term.name}")
        missing = [idx for idx in term.indices if idx not in kernel.dims]
        if missing:
            raise ShapeMismatchError(f"tensors.{term.name}: no extent for index {missing[0]}")
        data[term.name] = tensor_from_json(
            tensors[term.name], kernel.shape_of(term), kernel.dtype, f"tensors.{term.name}"
        )
    return kernel, data


def dumps(doc: Mapping) -> str:
    """Single-line, deterministic serialization used on the wire and on disk."""
    return json.dumps(doc, separators=(",", ":"))

