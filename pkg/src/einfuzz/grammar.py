"""Context-free einsum generator used as a validity baseline.

Grammar (EBNF), with every choice drawn independently and uniformly::

    kernel  ::= term "=" term { "*" term }     (1 to max_terms input terms)
    term    ::= NAME "(" [ IDX { "," IDX } ] ")"   (0 to max_rank indices)
    NAME    ::= "A" for the output, then "B", "C", ... positionally
    IDX     ::= one of the first alphabet_size letters from "i"

Each term also gets a shape of matching arity whose extents are drawn
independently from ``shape_range``. Nothing ties an index in one term to the
same index elsewhere, which is exactly what the context-free setting cannot
express.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from einfuzz.gen import GenConfig, generate_kernel
from einfuzz.ir import INDEX_ALPHABET, ParseError, parse, render, validate


@dataclass(frozen=True)
class CfgConfig:
    seed: int = 0
    max_terms: int = 4
    max_rank: int = 3
    alphabet_size: int = 8
    min_extent: int = 2
    max_extent: int = 5

    def __post_init__(self):
        if min(self.max_terms, self.max_rank, self.alphabet_size, self.min_extent) < 1:
            raise ValueError("all grammar parameters must be positive")
        if self.alphabet_size > 18:
            raise ValueError("alphabet_size is limited to 18 letters (i..z)")
        if self.max_extent < self.min_extent:
            raise ValueError("empty shape range")


class Outcome(str, enum.Enum):
    VALID = "valid"
    PARSE_ERROR = "parse_error"
    OUTPUT_INDEX = "output_index"
    CONNECTIVITY = "connectivity"
    DIMENSION = "dimension"


def cfg_generate(cfg: CfgConfig, rng: random.Random) -> tuple[str, list[tuple[int, ...]]]:
    """One random derivation: the kernel text and a shape per term (output first)."""
    letters = INDEX_ALPHABET[8 : 8 + cfg.alphabet_size]
    n_inputs = rng.randint(1, cfg.max_terms)
    terms = []
    shapes = []
    for name in "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[: n_inputs + 1]:
        rank = rng.randint(0, cfg.max_rank)
        idx = [rng.choice(letters) for _ in range(rank)]
        terms.append(f"{name}({','.join(idx)})")
        shapes.append(tuple(rng.randint(cfg.min_extent, cfg.max_extent) for _ in range(rank)))
    return f"{terms[0]} = {' * '.join(terms[1:])}", shapes


def semantic_check(text: str, shapes: list[tuple[int, ...]]) -> Outcome:
    """Classify a kernel string by the first rule it breaks.

    Order: parse, output-index, connectivity, dimensions. The dimension rule
    covers arity mismatches, one index bound to two extents, and an index
    repeated inside one term.
    """
    try:
        kernel = parse(text)
    except ParseError:
        return Outcome.PARSE_ERROR
    rules = set(validate(kernel).rules())
    if "output-index" in rules:
        return Outcome.OUTPUT_INDEX
    if "connectivity" in rules:
        return Outcome.CONNECTIVITY
    if "duplicate-index" in rules or len(shapes) != len(kernel.terms):
        return Outcome.DIMENSION
    extents: dict[str, int] = {}
    for term, shape in zip(kernel.terms, shapes):
        if len(shape) != term.rank:
            return Outcome.DIMENSION
        for idx, n in zip(term.indices, shape):
            if extents.setdefault(idx, n) != n:
                return Outcome.DIMENSION
    return Outcome.VALID


@dataclass
class ValidityStats:
    n: int = 0
    counts: dict[str, int] = field(default_factory=lambda: {o.value: 0 for o in Outcome})
    generator: str = "cfg"

    @property
    def validity_rate(self) -> float:
        return self.counts[Outcome.VALID.value] / self.n if self.n else 0.0

    def to_json(self) -> dict:
        return {"n": self.n, **self.counts, "validity_rate": self.validity_rate, "generator": self.generator}

    def summary(self) -> str:
        lines = [f"{self.generator} generator, {self.n} samples"]
        for key, count in self.counts.items():
            lines.append(f"  {key:<13}{count:>10}  {count / self.n:8.2%}")
        lines.append(f"  validity rate {self.validity_rate:.4%}")
        return "\n".join(lines)


def _constraint_sample(gen_cfg, rng: random.Random) -> tuple[str, list[tuple[int, ...]]]:
    kernel = generate_kernel(gen_cfg, rng)
    return render(kernel), [kernel.shape_of(t) for t in kernel.terms]


def run_validity_experiment(cfg: CfgConfig, n: int, generator: str = "cfg", gen_cfg=None) -> ValidityStats:
    """Generate ``n`` kernels and histogram their semantic_check outcomes.

    ``generator="constraint"`` pipes the constraint-based generator through
    the same checker instead of the grammar.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if generator not in ("cfg", "constraint"):
        raise ValueError(f"unknown generator {generator!r}")
    if generator == "constraint" and gen_cfg is None:
        gen_cfg = GenConfig(seed=cfg.seed)
    rng = random.Random(f"einfuzz:baseline:{generator}:{cfg.seed}")
    stats = ValidityStats(generator=generator)
    for _ in range(n):
        if generator == "cfg":
            text, shapes = cfg_generate(cfg, rng)
        else:
            text, shapes = _constraint_sample(gen_cfg, rng)
        stats.counts[semantic_check(text, shapes).value] += 1
        stats.n += 1
    return stats

