"""Constraint-based random kernel generation and input synthesis.

All randomness is drawn from ``random.Random`` (MT19937, the stdlib
generator), passed in explicitly. ``iteration_rng(seed, n)`` derives the
stream for iteration ``n`` of a campaign seeded with ``seed``; Python seeds a
string through SHA-512, so streams are stable across runs and platforms.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import asdict, dataclass

from einfuzz.ir import INDEX_ALPHABET, EinsumKernel, TensorTerm, applicable_formats
from einfuzz.tensor import TensorData


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    min_inputs: int = 2
    max_inputs: int = 4
    r_max: int = 3
    pool_size: int = 5
    min_dim: int = 2
    max_dim: int = 5
    min_density: float = 0.3
    max_density: float = 0.8
    dtype: str = "int"
    int_bound: int = 3
    float_bound: float = 1.0
    output_keep_prob: float = 0.5
    # None means "same as r_max"
    max_output_rank: int | None = None

    def __post_init__(self):
        if not 1 <= self.min_inputs <= self.max_inputs:
            raise ValueError("num_inputs range must be non-empty and start at 1 or more")
        if not 1 <= self.r_max <= self.pool_size <= len(INDEX_ALPHABET):
            raise ValueError("need 1 <= r_max <= pool_size <= 26")
        if not 1 <= self.min_dim <= self.max_dim:
            raise ValueError("dim range must be non-empty and positive")
        if not 0 < self.min_density <= self.max_density <= 1:
            raise ValueError("density range must lie within (0, 1]")
        if self.dtype not in ("int", "float"):
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.int_bound < 1 or self.float_bound <= 0:
            raise ValueError("value bounds must be positive")
        if not 0 <= self.output_keep_prob <= 1:
            raise ValueError("output_keep_prob must be a probability")
        if self.max_output_rank is not None and self.max_output_rank < 0:
            raise ValueError("max_output_rank must be >= 0")

    @property
    def output_rank_cap(self) -> int:
        return self.r_max if self.max_output_rank is None else self.max_output_rank

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "GenConfig":
        return cls(**obj)


def iteration_rng(seed: int, iteration: int, stream: str = "gen") -> random.Random:
    """Independent, reproducible stream for one iteration of one campaign."""
    return random.Random(f"einfuzz:{stream}:{seed}:{iteration}")


_NAMES = "BCDEFGHIJKLMNOPQRSTUVWXYZ"


def generate_kernel(cfg: GenConfig, rng: random.Random) -> EinsumKernel:
    """Draw a kernel that satisfies every validity rule by construction."""
    # pool starts at "i" so small kernels read like textbook einsums
    pool = [INDEX_ALPHABET[(8 + n) % 26] for n in range(cfg.pool_size)]
    n_inputs = rng.randint(cfg.min_inputs, cfg.max_inputs)
    operands = [rng.sample(pool, rng.randint(1, cfg.r_max)) for _ in range(n_inputs)]

    used: list[str] = []
    for ops in operands:
        for idx in ops:
            if idx not in used:
                used.append(idx)

    cap = cfg.output_rank_cap
    for _ in range(100):
        kept = [idx for idx in used if rng.random() < cfg.output_keep_prob]
        if len(kept) <= cap:
            break
    else:
        kept = rng.sample(kept, cap)
    output = set(kept)

    if n_inputs >= 2:
        _repair(operands, output, used, cfg, rng)

    out_indices = [idx for idx in used if idx in output]
    rng.shuffle(out_indices)
    used = [idx for idx in used if any(idx in ops for ops in operands)]
    dims = {idx: rng.randint(cfg.min_dim, cfg.max_dim) for idx in used}

    inputs = []
    for name, ops in zip(_NAMES, operands):
        inputs.append(TensorTerm(name, tuple(ops), rng.choice(applicable_formats(len(ops)))))
    out_term = TensorTerm("A", tuple(out_indices), rng.choice(applicable_formats(len(out_indices))))
    return EinsumKernel(out_term, tuple(inputs), dims, cfg.dtype)


def _repair(operands: list[list[str]], output: set[str], used: list[str], cfg: GenConfig, rng: random.Random) -> None:
    """Make every contraction index occur in at least two operands.

    Preferred fix is to inject the index into another operand with spare
    rank. When none has room the index joins the output if the output cap
    allows; otherwise it is dropped from its operand, or, if that operand
    holds nothing else, replaced by an index borrowed from another operand.
    """
    for s in [idx for idx in used if idx not in output]:
        holders = [n for n, ops in enumerate(operands) if s in ops]
        if len(holders) != 1:
            continue
        owner = holders[0]
        room = [n for n, ops in enumerate(operands) if s not in ops and len(ops) < cfg.r_max]
        if room:
            target = operands[rng.choice(room)]
            target.insert(rng.randint(0, len(target)), s)
        elif len(output) < cfg.output_rank_cap:
            output.add(s)
        elif len(operands[owner]) >= 2:
            operands[owner].remove(s)
        else:
            donor = operands[rng.choice([n for n in range(len(operands)) if n != owner])]
            operands[owner][0] = rng.choice(donor)


def generate_inputs(kernel: EinsumKernel, cfg: GenConfig, rng: random.Random) -> dict[str, TensorData]:
    """Random sparse data for every input, shaped by the kernel's dims."""
    if kernel.dtype == "int":
        table = [v for v in range(-cfg.int_bound, cfg.int_bound + 1) if v != 0]
        draw = lambda: table[rng.randrange(len(table))]  # noqa: E731
    else:
        bound = cfg.float_bound

        def draw():
            v = rng.uniform(-bound, bound)
            while v == 0.0:
                v = rng.uniform(-bound, bound)
            return v

    out = {}
    for term in kernel.inputs:
        shape = kernel.shape_of(term)
        density = rng.uniform(cfg.min_density, cfg.max_density)
        coords = []
        values = []
        # product() walks row-major, so coords come out sorted
        for c in itertools.product(*map(range, shape)):
            if rng.random() < density:
                coords.append(c)
                values.append(draw())
        out[term.name] = TensorData(shape, tuple(coords), tuple(values))
    return out

def generate_case(cfg: GenConfig, rng: random.Random) -> tuple[EinsumKernel, dict[str, TensorData]]:
    kernel = generate_kernel(cfg, rng)
    return kernel, generate_inputs(kernel, cfg, rng)
