"""Concrete tensors, compressed storage, and two einsum evaluators.

``eval_dense`` is the trusted oracle: it walks the whole index space and
never looks at storage. ``eval_formatted`` works on stored operands and
takes a different traversal per format, so format mutants really do run
different code:

* dense  - direct addressing, free dimensions enumerated row-major
* coo    - binary search on the sorted coordinate list when a leading
           prefix is bound, otherwise a hash index keyed by the bound modes
* csr    - row segments through ``pos``/``crd``; bisect inside a segment
           when the column is bound
* csc    - the same over columns, so unbound traversal is column-major
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence


from einfuzz.ir import EinsumKernel, Format, ShapeMismatchError, applicable_formats

Coord = tuple[int, ...]


class FormatError(ValueError):
    """The requested storage format does not apply to the tensor's rank."""


class CorruptPayloadError(ValueError):
    """A stored payload violates its format invariants."""


@dataclass(frozen=True)
class TensorData:
    """A tensor as sorted (coordinate, nonzero value) pairs."""

    shape: tuple[int, ...]
    coords: tuple[Coord, ...] = ()
    values: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "coords", tuple(tuple(c) for c in self.coords))
        object.__setattr__(self, "values", tuple(self.values))
        if any(n < 1 for n in self.shape):
            raise ValueError(f"extents must be positive, got {self.shape}")
        coords, values = self.coords, self.values
        if len(coords) != len(values):
            raise ValueError("coords and values differ in length")
        if not coords:
            return
        rank = len(self.shape)
        if any(len(c) != rank for c in coords):
            raise ValueError(f"coordinates do not match rank {rank}")
        for d, n in enumerate(self.shape):
            column = [c[d] for c in coords]
            if min(column) < 0 or max(column) >= n:
                raise ValueError(f"coordinate outside shape {self.shape} in mode {d}")
        if not all(a < b for a, b in zip(coords, coords[1:])):
            raise ValueError("coordinates not strictly increasing")
        if 0 in values:
            raise ValueError("explicit zero stored")

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_dict(cls, shape: Sequence[int], entries: Mapping[Coord, object]) -> "TensorData":
        """Build from an unordered coordinate map; zeros are dropped."""
        items = sorted((tuple(c), v) for c, v in entries.items() if v != 0)
        return cls(tuple(shape), tuple(c for c, _ in items), tuple(v for _, v in items))

    @classmethod
    def from_dense(cls, array) -> "TensorData":
        import numpy as np

        a = np.asarray(array)
        nz = np.argwhere(a != 0)
        coords = tuple(tuple(int(x) for x in c) for c in nz)
        values = tuple(a[c].item() for c in coords)
        return cls(a.shape, coords, values)

    def to_dict(self) -> dict[Coord, object]:
        return dict(zip(self.coords, self.values))

    def to_dense(self, dtype=None):
        """numpy array view of the tensor (numpy is imported on first use)."""
        import numpy as np

        if dtype is None:
            dtype = float if any(isinstance(v, float) for v in self.values) else np.int64
        a = np.zeros(self.shape, dtype=dtype)
        for c, v in zip(self.coords, self.values):
            a[c] = v
        return a

    def scaled(self, factor) -> "TensorData":
        return TensorData.from_dict(self.shape, {c: v * factor for c, v in zip(self.coords, self.values)})


@dataclass(frozen=True)
class StoredTensor:
    """A tensor laid out in one storage format.

    Payload keys: dense ``vals`` (flat, row-major); coo ``crd`` (one list per
    mode) and ``vals``; csr/csc ``pos``, ``crd`` and ``vals``.
    """

    format: Format
    shape: tuple[int, ...]
    payload: dict = field(default_factory=dict)

    @property
    def nnz(self) -> int:
        if self.format is Format.DENSE:
            return sum(1 for v in self.payload["vals"] if v != 0)
        return len(self.payload["vals"])


def _strides(shape: Sequence[int]) -> list[int]:
    strides = [1] * len(shape)
    for d in range(len(shape) - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    return strides


def store(t: TensorData, fmt: Format) -> StoredTensor:
    """Lay ``t`` out in ``fmt``. Lossless; raises FormatError if inapplicable."""
    fmt = Format(fmt)
    if fmt not in applicable_formats(t.rank):
        raise FormatError(f"{fmt.value} is not applicable to a rank-{t.rank} tensor")
    if fmt is Format.DENSE:
        size = math.prod(t.shape)
        zero = 0.0 if any(isinstance(v, float) for v in t.values) else 0
        vals = [zero] * size
        strides = _strides(t.shape)
        for c, v in zip(t.coords, t.values):
            vals[sum(x * s for x, s in zip(c, strides))] = v
        return StoredTensor(fmt, t.shape, {"vals": vals})
    if fmt is Format.COO:
        crd = [[c[d] for c in t.coords] for d in range(t.rank)]
        return StoredTensor(fmt, t.shape, {"crd": crd, "vals": list(t.values)})
    # csr keys on mode 0, csc on mode 1
    outer = 0 if fmt is Format.CSR else 1
    inner = 1 - outer
    order = sorted(range(t.nnz), key=lambda n: (t.coords[n][outer], t.coords[n][inner]))
    pos = [0] * (t.shape[outer] + 1)
    for n in order:
        pos[t.coords[n][outer] + 1] += 1
    for r in range(t.shape[outer]):
        pos[r + 1] += pos[r]
    crd = [t.coords[n][inner] for n in order]
    vals = [t.values[n] for n in order]
    return StoredTensor(fmt, t.shape, {"pos": pos, "crd": crd, "vals": vals})


def _check_compressed(s: StoredTensor, outer: int, inner: int) -> None:
    pos, crd, vals = s.payload["pos"], s.payload["crd"], s.payload["vals"]
    if len(pos) != s.shape[outer] + 1:
        raise CorruptPayloadError(f"pos has length {len(pos)}, expected {s.shape[outer] + 1}")
    if pos[0] != 0 or pos[-1] != len(crd) or len(crd) != len(vals):
        raise CorruptPayloadError("pos does not span crd/vals")
    for r in range(s.shape[outer]):
        lo, hi = pos[r], pos[r + 1]
        if hi < lo:
            raise CorruptPayloadError(f"pos is not monotone at {r}")
        seg = crd[lo:hi]
        if any(x < 0 or x >= s.shape[inner] for x in seg):
            raise CorruptPayloadError(f"crd out of bounds in segment {r}")
        if any(a >= b for a, b in zip(seg, seg[1:])):
            raise CorruptPayloadError(f"crd not strictly increasing in segment {r}")


def materialize(s: StoredTensor) -> TensorData:
    """Inverse of store. Raises CorruptPayloadError on a broken payload."""
    try:
        return _materialize(s)
    except (KeyError, TypeError, IndexError) as exc:
        raise CorruptPayloadError(f"malformed {s.format.value} payload: {exc}") from None


def _materialize(s: StoredTensor) -> TensorData:
    p = s.payload
    if s.format is Format.DENSE:
        vals = p["vals"]
        if len(vals) != math.prod(s.shape):
            raise CorruptPayloadError("dense payload size does not match shape")
        cells = itertools.product(*map(range, s.shape))
        return TensorData.from_dict(s.shape, {c: v for c, v in zip(cells, vals) if v != 0})
    if s.format is Format.COO:
        crd, vals = p["crd"], p["vals"]
        if len(crd) != len(s.shape) or any(len(col) != len(vals) for col in crd):
            raise CorruptPayloadError("coo coordinate arrays do not match values")
        coords = list(zip(*crd)) if crd else [()] * len(vals)
        try:
            return TensorData(s.shape, coords, vals)
        except ValueError as exc:
            raise CorruptPayloadError(str(exc)) from None
    outer = 0 if s.format is Format.CSR else 1
    inner = 1 - outer
    _check_compressed(s, outer, inner)
    entries = {}
    pos, crd, vals = p["pos"], p["crd"], p["vals"]
    for r in range(s.shape[outer]):
        for q in range(pos[r], pos[r + 1]):
            c = [0, 0]
            c[outer], c[inner] = r, crd[q]
            if vals[q] == 0:
                raise CorruptPayloadError(f"explicit zero stored at {tuple(c)}")
            entries[tuple(c)] = vals[q]
    return TensorData.from_dict(s.shape, entries)


def _check_inputs(kernel: EinsumKernel, shapes: Mapping[str, tuple[int, ...]]) -> None:
    for term in kernel.inputs:
        if term.name not in shapes:
            raise ShapeMismatchError(f"no data bound for input {term.name}")
        want = kernel.shape_of(term)
        if tuple(shapes[term.name]) != want:
            raise ShapeMismatchError(f"{term.name}: shape {tuple(shapes[term.name])} does not match {want}")


def _zero(kernel: EinsumKernel):
    return 0.0 if kernel.dtype == "float" else 0


def eval_dense(kernel: EinsumKernel, inputs: Mapping[str, TensorData]) -> TensorData:
    """Brute-force oracle: sum operand products over every index assignment.

    Indices are enumerated row-major in alphabetical order, so the float
    accumulation order depends only on the index set, not on operand order.
    """
    _check_inputs(kernel, {n: t.shape for n, t in inputs.items()})
    order = sorted(set(kernel.used_indices()) | set(kernel.output.indices))
    where = {idx: n for n, idx in enumerate(order)}
    lookups = [(inputs[t.name].to_dict(), [where[i] for i in t.indices]) for t in kernel.inputs]
    out_pos = [where[i] for i in kernel.output.indices]
    zero = _zero(kernel)
    acc: dict[Coord, object] = {}
    for point in itertools.product(*(range(kernel.dims[i]) for i in order)):
        prod = None
        for table, positions in lookups:
            v = table.get(tuple(point[p] for p in positions), 0)
            prod = v if prod is None else prod * v
        key = tuple(point[p] for p in out_pos)
        acc[key] = acc.get(key, zero) + prod
    return TensorData.from_dict(kernel.shape_of(kernel.output), acc)


# -- format-aware evaluation -------------------------------------------------


class _Access:
    """Enumerate a stored operand's nonzeros consistent with a partial binding.

    ``scan(bound)`` takes the operand's own coordinate tuple with ``None`` in
    unbound modes and yields ``(coord, value)`` for every matching nonzero.
    """

    def __init__(self, s: StoredTensor):
        self.s = s

    def scan(self, bound: list) -> Iterator[tuple[Coord, object]]:
        raise NotImplementedError


class _DenseAccess(_Access):
    def __init__(self, s: StoredTensor):
        super().__init__(s)
        self.strides = _strides(s.shape)

    def scan(self, bound):
        vals = self.s.payload["vals"]
        ranges = [range(n) if b is None else (b,) for b, n in zip(bound, self.s.shape)]
        strides = self.strides
        for c in itertools.product(*ranges):
            v = vals[sum(x * s for x, s in zip(c, strides))]
            if v != 0:
                yield c, v


class _CooAccess(_Access):
    def __init__(self, s: StoredTensor):
        super().__init__(s)
        crd = s.payload["crd"]
        self.coords = list(zip(*crd)) if crd else [()] * len(s.payload["vals"])
        self.vals = s.payload["vals"]
        self.hashed: dict[tuple[int, ...], dict] = {}

    def _hash(self, modes: tuple[int, ...]) -> dict:
        table = self.hashed.get(modes)
        if table is None:
            table = {}
            for n, c in enumerate(self.coords):
                table.setdefault(tuple(c[m] for m in modes), []).append(n)
            self.hashed[modes] = table
        return table

    def scan(self, bound):
        prefix = 0
        while prefix < len(bound) and bound[prefix] is not None:
            prefix += 1
        rest = [m for m in range(prefix, len(bound)) if bound[m] is not None]
        coords, vals = self.coords, self.vals
        if prefix == 0 and rest:
            modes = tuple(rest)
            for n in self._hash(modes).get(tuple(bound[m] for m in modes), ()):
                yield coords[n], vals[n]
            return
        if prefix:
            key = tuple(bound[:prefix])
            lo = bisect.bisect_left(coords, key)
            hi = bisect.bisect_left(coords, key[:-1] + (key[-1] + 1,))
        else:
            lo, hi = 0, len(coords)
        for n in range(lo, hi):
            c = coords[n]
            if all(c[m] == bound[m] for m in rest):
                yield c, vals[n]


class _CompressedAccess(_Access):
    def __init__(self, s: StoredTensor, outer: int):
        super().__init__(s)
        self.outer = outer
        self.inner = 1 - outer

    def _coord(self, r: int, k: int) -> Coord:
        return (r, k) if self.outer == 0 else (k, r)

    def scan(self, bound):
        pos, crd, vals = self.s.payload["pos"], self.s.payload["crd"], self.s.payload["vals"]
        fixed_outer, fixed_inner = bound[self.outer], bound[self.inner]
        rows = range(self.s.shape[self.outer]) if fixed_outer is None else (fixed_outer,)
        for r in rows:
            lo, hi = pos[r], pos[r + 1]
            if fixed_inner is None:
                for q in range(lo, hi):
                    yield self._coord(r, crd[q]), vals[q]
            else:
                q = bisect.bisect_left(crd, fixed_inner, lo, hi)
                if q < hi and crd[q] == fixed_inner:
                    yield self._coord(r, fixed_inner), vals[q]


def _access(s: StoredTensor) -> _Access:
    if s.format is Format.DENSE:
        return _DenseAccess(s)
    if s.format is Format.COO:
        return _CooAccess(s)
    return _CompressedAccess(s, 0 if s.format is Format.CSR else 1)


def walk_contributions(kernel: EinsumKernel, stored: Mapping[str, StoredTensor], emit: Callable[[Coord, object], None]) -> None:
    """Call ``emit(output coordinate, product)`` in loop-nest order.

    Operands are visited in kernel input order: the first operand drives the
    outermost loop over its nonzeros, later operands are probed with the
    indices bound so far. Commuting operands therefore changes the loop nest.
    """
    _check_inputs(kernel, {n: s.shape for n, s in stored.items()})
    for term in kernel.inputs:
        if stored[term.name].format is not term.format:
            raise ShapeMismatchError(
                f"{term.name} is stored as {stored[term.name].format.value}, kernel says {term.format.value}"
            )
    order = kernel.used_indices()
    where = {idx: n for n, idx in enumerate(order)}
    plan = [(_access(stored[t.name]), [where[i] for i in t.indices]) for t in kernel.inputs]
    out_pos = [where[i] for i in kernel.output.indices]
    binding: list = [None] * len(order)
    last = len(plan) - 1

    def walk(level: int, acc) -> None:
        access, positions = plan[level]
        newly = [p for p in positions if binding[p] is None]
        for coord, value in access.scan([binding[p] for p in positions]):
            for p, x in zip(positions, coord):
                binding[p] = x
            prod = value if acc is None else acc * value
            if level == last:
                emit(tuple([binding[p] for p in out_pos]), prod)
            else:
                walk(level + 1, prod)
        for p in newly:
            binding[p] = None

    walk(0, None)


def iter_contributions(kernel: EinsumKernel, stored: Mapping[str, StoredTensor]) -> list[tuple[Coord, object]]:
    """All ``(output coordinate, product)`` pairs, in loop-nest order."""
    out: list[tuple[Coord, object]] = []
    walk_contributions(kernel, stored, lambda key, prod: out.append((key, prod)))
    return out


def eval_formatted(kernel: EinsumKernel, stored: Mapping[str, StoredTensor]) -> TensorData:
    """Evaluate on stored operands; accumulates contributions per output cell."""
    zero = _zero(kernel)
    acc: dict[Coord, object] = {}

    def emit(key, prod):
        acc[key] = acc.get(key, zero) + prod

    walk_contributions(kernel, stored, emit)
    return TensorData.from_dict(kernel.shape_of(kernel.output), acc)


def store_inputs(kernel: EinsumKernel, inputs: Mapping[str, TensorData]) -> dict[str, StoredTensor]:
    """Store every input in the format its term is tagged with."""
    return {t.name: store(inputs[t.name], t.format) for t in kernel.inputs}
