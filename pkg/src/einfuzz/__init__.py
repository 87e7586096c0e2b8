"""Metamorphic fuzzing for sparse tensor compilers.

Generates valid einsum kernels, derives equivalent mutants by commuting
operands and changing storage formats, runs them on a backend and flags
crashes and output divergences.
"""

from einfuzz.backends import (
    Crashed,
    ExecutionRequest,
    FaultyBackend,
    Rejected,
    RefBackend,
    SubprocessBackend,
    Success,
    TimedOut,
    backend_from_spec,
)
from einfuzz.gen import GenConfig, generate_case, generate_inputs, generate_kernel, iteration_rng
from einfuzz.harness import (
    CampaignConfig,
    ComparatorConfig,
    VerdictKind,
    compare,
    replay,
    run_campaign,
    run_iteration,
)
from einfuzz.ir import EinsumKernel, Format, TensorTerm, from_json, parse, render, to_json, validate
from einfuzz.mutation import mutate_commute, mutate_formats, sample_mutants
from einfuzz.tensor import StoredTensor, TensorData, eval_dense, eval_formatted, materialize, store

__version__ = "0.1.0"
