"""Semantics-preserving kernel mutations: operand order and storage formats."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from einfuzz.ir import EinsumKernel, Format, applicable_formats


class MutationError(ValueError):
    pass


@dataclass(frozen=True)
class Mutant:
    kernel: EinsumKernel
    permutation: tuple[int, ...]
    formats: dict[str, Format] = field(default_factory=dict)
    parent_id: str = ""

    def provenance(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "formats": {name: fmt.value for name, fmt in self.formats.items()},
        }


def _check_perm(perm: Sequence[int], n: int) -> tuple[int, ...]:
    perm = tuple(perm)
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise MutationError(f"{list(perm)} is not a permutation of 0..{n - 1}")
    return perm


def mutate_commute(kernel: EinsumKernel, perm: Sequence[int], parent_id: str = "") -> Mutant:
    """Reorder the inputs: new input ``n`` is old input ``perm[n]``."""
    perm = _check_perm(perm, len(kernel.inputs))
    inputs = tuple(kernel.inputs[p] for p in perm)
    mutated = EinsumKernel(kernel.output, inputs, kernel.dims, kernel.dtype)
    return Mutant(mutated, perm, kernel.formats(), parent_id)


def mutate_formats(kernel: EinsumKernel, assignment: Mapping[str, Format], parent_id: str = "") -> Mutant:
    """Retag storage formats; names missing from ``assignment`` keep theirs."""
    names = {t.name: t for t in kernel.terms}
    for name, fmt in assignment.items():
        if name not in names:
            raise MutationError(f"no tensor named {name}")
        if Format(fmt) not in applicable_formats(names[name].rank):
            raise MutationError(f"{Format(fmt).value} is not applicable to rank-{names[name].rank} tensor {name}")
    mutated = kernel.with_formats(assignment)
    return Mutant(mutated, tuple(range(len(kernel.inputs))), mutated.formats(), parent_id)


def apply_provenance(kernel: EinsumKernel, permutation: Sequence[int], formats: Mapping[str, Format], parent_id: str = "") -> Mutant:
    """Rebuild a mutant of ``kernel`` from recorded provenance."""
    retagged = mutate_formats(kernel, {n: Format(f) for n, f in formats.items()}).kernel
    m = mutate_commute(retagged, permutation)
    return Mutant(m.kernel, m.permutation, retagged.formats(), parent_id)


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for n, p in enumerate(perm):
        inv[p] = n
    return tuple(inv)


def _nth_permutation(items: list[int], rank: int) -> tuple[int, ...]:
    """Permutation number ``rank`` in lexicographic order."""
    items = list(items)
    out = []
    for k in range(len(items), 0, -1):
        f = math.factorial(k - 1)
        q, rank = divmod(rank, f)
        out.append(items.pop(q))
    return tuple(out)


def mutant_space_size(kernel: EinsumKernel) -> int:
    size = math.factorial(len(kernel.inputs))
    for term in kernel.terms:
        size *= len(applicable_formats(term.rank))
    return size


def _decode(kernel: EinsumKernel, point: int) -> tuple[tuple[int, ...], dict[str, Format]]:
    formats = {}
    for term in reversed(kernel.terms):
        choices = applicable_formats(term.rank)
        point, k = divmod(point, len(choices))
        formats[term.name] = choices[k]
    perm = _nth_permutation(list(range(len(kernel.inputs))), point)
    return perm, {t.name: formats[t.name] for t in kernel.terms}


def _encode(kernel: EinsumKernel, perm: tuple[int, ...], formats: Mapping[str, Format]) -> int:
    items = list(range(len(kernel.inputs)))
    point = 0
    for k, p in zip(range(len(items), 0, -1), perm):
        q = items.index(p)
        items.pop(q)
        point += q * math.factorial(k - 1)
    for term in kernel.terms:
        choices = applicable_formats(term.rank)
        point = point * len(choices) + choices.index(formats[term.name])
    return point


def sample_mutants(kernel: EinsumKernel, budget: int, rng: random.Random, parent_id: str = "") -> list[Mutant]:
    """Up to ``budget`` distinct mutants, uniform over the composed space.

    The space is every operand permutation crossed with every applicable
    format assignment; the parent's own point is never returned. Formats in
    a mutant are assigned per tensor name, so they follow the tensor through
    the permutation.
    """
    if budget < 1:
        raise MutationError("budget must be at least 1")
    total = mutant_space_size(kernel)
    parent = _encode(kernel, tuple(range(len(kernel.inputs))), kernel.formats())
    picks = rng.sample(range(total - 1), min(budget, total - 1))
    out = []
    for pick in picks:
        point = pick + 1 if pick >= parent else pick
        perm, formats = _decode(kernel, point)
        out.append(apply_provenance(kernel, perm, formats, parent_id))
    return out

